#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "chord/corpus.hpp"
#include "chord/rewards.hpp"

using namespace chord;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("vocab layout and hash") {
  const Vocab v = Vocab::with_base(6);
  CHECK(v.size() == 16);
  CHECK(v.bos() == 0);
  CHECK(v.eos() == 1);
  CHECK(v.digit_value(v.digit(3)) == 3);
  CHECK(v.id("<ans>") == v.ans_open());
  CHECK(v.hash() == Vocab::with_base(6).hash());
  CHECK(v.hash() != Vocab::with_base(7).hash());
  CHECK_THROWS_AS(v.id("nope"), ConfigError);
}

TEST_CASE("reverse difficulty-3 answer is the reversed payload") {
  const Vocab v = Vocab::with_base(6);
  const auto tasks = generate_tasks(v, TaskKind::reverse, 1, 3, 7);
  REQUIRE(tasks.size() == 1);
  const TaskInstance& t = tasks[0];
  CHECK(t.prompt.front() == v.bos());
  CHECK(t.prompt[1] == v.kind_reverse());
  CHECK(t.prompt.back() == v.sep());
  const TokenSeq payload = prompt_payload(t);
  REQUIRE(payload.size() == 3);
  CHECK(t.answer == TokenSeq{payload[2], payload[1], payload[0]});
}

TEST_CASE("copy difficulty-1 answer equals the payload symbol") {
  const Vocab v = Vocab::with_base(6);
  const auto tasks = generate_tasks(v, TaskKind::copy, 1, 1, 0);
  REQUIRE(tasks.size() == 1);
  CHECK(tasks[0].answer == prompt_payload(tasks[0]));
}

TEST_CASE("modular-sum answers and determinism") {
  const Vocab v = Vocab::with_base(6);
  const auto a = generate_tasks(v, TaskKind::modular_sum, 100, 4, 3);
  const auto b = generate_tasks(v, TaskKind::modular_sum, 100, 4, 3);
  CHECK(a == b);
  for (const TaskInstance& t : a) {
    long sum = 0;
    for (Token tok : prompt_payload(t)) {
      sum += v.digit_value(tok);
    }
    CHECK(t.answer == TokenSeq{v.digit(static_cast<int>(sum % v.base()))});
  }
}

TEST_CASE("generate_tasks rejects impossible requests") {
  const Vocab v = Vocab::with_base(6);
  CHECK_THROWS_AS(generate_tasks(v, TaskKind::copy, 1, 40, 0, 32), ConfigError);  // prompt too long
  CHECK_THROWS_AS(generate_tasks(v, TaskKind::copy, 7, 1, 0), ConfigError);  // only 6 payloads
  CHECK_THROWS_AS(generate_tasks(v, TaskKind::copy, 0, 1, 0), ConfigError);
}

TEST_CASE("expert responses: terse form and verbose length gap") {
  const Vocab v = Vocab::with_base(6);
  const auto tasks = generate_tasks(v, TaskKind::reverse, 20, 3, 11);
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const ExpertExample terse = expert_response(v, tasks[i], ExpertStyle::terse, i);
    TokenSeq want = {v.ans_open()};
    want.insert(want.end(), tasks[i].answer.begin(), tasks[i].answer.end());
    want.push_back(v.ans_close());
    want.push_back(v.eos());
    CHECK(terse.response == want);

    const ExpertExample verbose = expert_response(v, tasks[i], ExpertStyle::verbose_verify, i);
    CHECK(verbose.response.size() >= 2 * terse.response.size());
    CHECK(verbose.response.front() == v.say());
    CHECK(verbose.response.back() == v.eos());
  }
}

TEST_CASE("every expert response earns the correct reward") {
  const Vocab v = Vocab::with_base(6);
  RewardRule rule;
  rule.length_limit = 64;
  for (TaskKind kind : {TaskKind::copy, TaskKind::reverse, TaskKind::modular_sum}) {
    const auto tasks = generate_tasks(v, kind, 25, 3, 5);
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      for (ExpertStyle style : {ExpertStyle::terse, ExpertStyle::verbose_verify}) {
        const ExpertExample ex = expert_response(v, tasks[i], style, i * 2 + 1);
        CHECK(score(v, rule, tasks[i], ex.response) == rule.correct);
      }
    }
  }
}

TEST_CASE("split partitions are disjoint and sized") {
  const Vocab v = Vocab::with_base(6);
  const auto tasks = generate_tasks(v, TaskKind::reverse, 300, 4, 5);
  std::vector<ExpertExample> expert;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    expert.push_back(expert_response(v, tasks[i], ExpertStyle::terse, i));
  }
  const DatasetSplit split = split_dataset(tasks, expert, {50, 200, 50}, 9);
  CHECK(split.sft.size() == 50);
  CHECK(split.rl.size() == 200);
  CHECK(split.eval.size() == 50);

  CHECK_THROWS_AS(split_dataset(tasks, expert, {200, 200, 50}, 9), ConfigError);
}

TEST_CASE("split disjointness holds across many seeds") {
  const Vocab v = Vocab::with_base(6);
  const auto tasks = generate_tasks(v, TaskKind::modular_sum, 60, 3, 77);
  std::vector<ExpertExample> expert;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    expert.push_back(expert_response(v, tasks[i], ExpertStyle::verbose_verify, i));
  }
  for (std::uint64_t seed = 0; seed < 120; ++seed) {
    const DatasetSplit split = split_dataset(tasks, expert, {20, 25, 10}, seed);
    std::set<TokenSeq> prompts;
    for (const ExpertExample& ex : split.sft) {
      CHECK(prompts.insert(ex.prompt).second);
    }
    for (const TaskInstance& t : split.rl) {
      CHECK(prompts.insert(t.prompt).second);
    }
    for (const TaskInstance& t : split.eval) {
      CHECK(prompts.insert(t.prompt).second);
    }
  }
}

TEST_CASE("dataset save/load round trip") {
  const Vocab v = Vocab::with_base(6);
  const auto tasks = generate_tasks(v, TaskKind::reverse, 40, 3, 6);
  std::vector<ExpertExample> expert;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    expert.push_back(expert_response(v, tasks[i], ExpertStyle::verbose_verify, i));
  }
  const DatasetSplit split = split_dataset(tasks, expert, {10, 20, 10}, 3);
  const std::string path = temp_path("chord_split_roundtrip.txt");
  save_split(v, split, path);
  CHECK(load_split(v, path) == split);

  // byte-identical on re-save
  const std::string bytes = slurp(path);
  save_split(v, split, path);
  CHECK(slurp(path) == bytes);

  auto [v2, split2] = load_split_file(path);
  CHECK(v2.hash() == v.hash());
  CHECK(split2 == split);
}

TEST_CASE("dataset load rejects truncation and overlap") {
  const Vocab v = Vocab::with_base(6);
  const auto tasks = generate_tasks(v, TaskKind::copy, 30, 2, 5);
  std::vector<ExpertExample> expert;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    expert.push_back(expert_response(v, tasks[i], ExpertStyle::terse, i));
  }
  const DatasetSplit split = split_dataset(tasks, expert, {8, 15, 7}, 3);
  const std::string path = temp_path("chord_split_badfile.txt");
  save_split(v, split, path);

  // drop the last line: header counts no longer match
  {
    std::string bytes = slurp(path);
    bytes.erase(bytes.rfind('E'));
    std::ofstream(path, std::ios::binary) << bytes;
    CHECK_THROWS_AS(load_split(v, path), ParseError);
  }

  // duplicate an sft prompt into the rl section
  save_split(v, split, path);
  {
    std::string bytes = slurp(path);
    const std::size_t s_at = bytes.find("\nS ");
    const std::size_t s_end = bytes.find('\n', s_at + 1);
    std::string s_line = bytes.substr(s_at + 1, s_end - s_at - 1);
    // rebuild the S record as an R record with the same prompt
    const std::size_t bar1 = s_line.find('|');
    const std::size_t bar2 = s_line.find('|', bar1 + 1);
    const std::size_t bar3 = s_line.find('|', bar2 + 1);
    std::string head = s_line.substr(1, bar1 - 1);  // " kind diff style "
    const std::size_t style_at = head.rfind(' ', head.size() - 2);
    head = head.substr(0, style_at + 1) + "- ";
    const std::string r_line =
        "R" + head + s_line.substr(bar1, bar3 - bar1 - 1);  // keep prompt | answer
    bytes += r_line + "\n";
    // bump the rl count in the header
    const std::size_t rl_at = bytes.find("rl=");
    const std::size_t rl_end = bytes.find(' ', rl_at);
    bytes.replace(rl_at, rl_end - rl_at, "rl=16");
    std::ofstream(path, std::ios::binary) << bytes;
    CHECK_THROWS_AS(load_split(v, path), ParseError);
  }
}

TEST_CASE("parse errors carry line numbers") {
  const std::string path = temp_path("chord_split_parse_error.txt");
  const Vocab v = Vocab::with_base(6);
  char hash_hex[17];
  std::snprintf(hash_hex, sizeof(hash_hex), "%016llx",
                static_cast<unsigned long long>(v.hash()));
  std::ofstream(path) << "#chord-split v=1 vocab=" << hash_hex
                      << " base=6 sft=0 rl=1 eval=0\nR copy 2 - | 0 7 99 10 4 | 10\n";
  try {
    load_split(v, path);
    CHECK(false);
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
}

TEST_CASE("load rejects a vocab hash mismatch") {
  const Vocab v6 = Vocab::with_base(6);
  const Vocab v7 = Vocab::with_base(7);
  const auto tasks = generate_tasks(v6, TaskKind::copy, 10, 2, 5);
  std::vector<ExpertExample> expert;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    expert.push_back(expert_response(v6, tasks[i], ExpertStyle::terse, i));
  }
  const std::string path = temp_path("chord_split_hash.txt");
  save_split(v6, split_dataset(tasks, expert, {3, 4, 3}, 1), path);
  CHECK_THROWS_AS(load_split(v7, path), ParseError);
}
