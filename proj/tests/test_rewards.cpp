#include <doctest.h>

#include <regex>

#include "chord/corpus.hpp"
#include "chord/rewards.hpp"

using namespace chord;

namespace {

Vocab test_vocab() { return Vocab::with_base(4); }

TaskInstance simple_task(const Vocab& v) {
  TaskInstance t;
  t.kind = TaskKind::copy;
  t.difficulty = 1;
  t.prompt = {v.bos(), v.kind_copy(), v.digit(2), v.sep()};
  t.answer = {v.digit(2)};
  return t;
}

// Independent format oracle: classify tokens as o/c/e/x and run a regex.
bool regex_well_formed(const Vocab& v, const TokenSeq& response) {
  std::string s;
  for (Token t : response) {
    if (t == v.ans_open()) {
      s += 'o';
    } else if (t == v.ans_close()) {
      s += 'c';
    } else if (t == v.eos()) {
      s += 'e';
    } else {
      s += 'x';
    }
  }
  static const std::regex grammar("^x*ox+cx*e$");
  return std::regex_match(s, grammar);
}

}  // namespace

TEST_CASE("reward hierarchy values") {
  const Vocab v = test_vocab();
  const TaskInstance t = simple_task(v);
  RewardRule rule;
  rule.length_limit = 8;

  const TokenSeq correct = {v.ans_open(), v.digit(2), v.ans_close(), v.eos()};
  CHECK(score(v, rule, t, correct) == 1.0);

  const TokenSeq wrong = {v.ans_open(), v.digit(3), v.ans_close(), v.eos()};
  CHECK(score(v, rule, t, wrong) == 0.0);

  const TokenSeq no_delims = {v.digit(2), v.digit(1), v.eos()};
  CHECK(score(v, rule, t, no_delims) == -0.1);

  TokenSeq overlong(12, v.digit(0));
  overlong.push_back(v.eos());
  CHECK(score(v, rule, t, overlong) == -1.0);
}

TEST_CASE("over-length dominates a correct answer") {
  const Vocab v = test_vocab();
  const TaskInstance t = simple_task(v);
  RewardRule rule;
  rule.length_limit = 4;
  TokenSeq padded = {v.digit(0), v.digit(0), v.ans_open(), v.digit(2), v.ans_close(), v.eos()};
  REQUIRE(extract_answer(v, padded).has_value());
  CHECK(score(v, rule, t, padded) == rule.over_length);

  rule.over_length_dominates = false;
  CHECK(score(v, rule, t, padded) == rule.correct);
}

TEST_CASE("is_well_formed matches the regex oracle on enumerated variants") {
  const Vocab v = test_vocab();
  // all token strings of length <= 4 over a representative alphabet
  const std::vector<Token> alphabet = {v.eos(), v.ans_open(), v.ans_close(), v.digit(0)};
  std::vector<TokenSeq> pool = {{}};
  long checked = 0;
  for (int len = 1; len <= 4; ++len) {
    std::vector<TokenSeq> next;
    for (const TokenSeq& prefix : pool) {
      for (Token t : alphabet) {
        TokenSeq seq = prefix;
        seq.push_back(t);
        next.push_back(seq);
        CHECK(is_well_formed(v, seq) == regex_well_formed(v, seq));
        ++checked;
      }
    }
    pool = std::move(next);
  }
  CHECK(checked == 4 + 16 + 64 + 256);

  // canonical positive and two canonical negatives
  CHECK(is_well_formed(v, {v.ans_open(), v.digit(1), v.ans_close(), v.eos()}));
  CHECK_FALSE(is_well_formed(v, {v.ans_open(), v.digit(1), v.eos()}));
  CHECK_FALSE(is_well_formed(v, {v.ans_open(), v.digit(1), v.ans_close(), v.ans_open(),
                                 v.digit(1), v.ans_close(), v.eos()}));
}

TEST_CASE("longer well-formed sequences agree with the oracle") {
  const Vocab v = test_vocab();
  // deterministic pseudo-random sequences over the full vocab
  std::uint64_t s = 12345;
  auto next = [&s]() {
    s = s * 6364136223846793005ULL + 1442695040888963407ULL;
    return s >> 33;
  };
  for (int i = 0; i < 2000; ++i) {
    TokenSeq seq;
    const int len = 1 + static_cast<int>(next() % 12);
    for (int k = 0; k < len; ++k) {
      seq.push_back(static_cast<Token>(next() % static_cast<std::uint64_t>(v.size())));
    }
    CHECK(is_well_formed(v, seq) == regex_well_formed(v, seq));
  }
}

TEST_CASE("reward rule validation") {
  RewardRule rule;
  CHECK_NOTHROW(rule.validate());
  rule.format_only = 2.0;  // breaks correct > format_only
  CHECK_THROWS_AS(rule.validate(), ConfigError);
}

TEST_CASE("extract_answer returns the delimited span") {
  const Vocab v = test_vocab();
  const TokenSeq seq = {v.digit(0), v.ans_open(), v.digit(1), v.digit(3), v.ans_close(), v.eos()};
  const auto ans = extract_answer(v, seq);
  REQUIRE(ans.has_value());
  CHECK(*ans == TokenSeq{v.digit(1), v.digit(3)});
  CHECK_FALSE(extract_answer(v, {v.digit(0), v.eos()}).has_value());
}
