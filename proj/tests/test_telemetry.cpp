#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "chord/telemetry.hpp"

using namespace chord;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

MetricsRecord record_at(long step) {
  MetricsRecord r;
  r.step = step;
  r.mu = 0.1 * static_cast<double>(step);
  r.mean_reward = -0.1 + 0.07 * static_cast<double>(step);
  r.entropy = 2.3 - 0.001 * static_cast<double>(step);
  r.mean_len = 14.25;
  r.trunc_rate = 0.0625;
  r.loss = 0.1 + 0.2;  // deliberately not exactly 0.3
  r.loss_grpo = -0.25;
  r.loss_sft = 1e-17;
  r.clip_frac = 0.0;
  r.wall_ms = 3.25;
  return r;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  std::vector<std::string> lines;
  std::string s;
  while (std::getline(in, s)) {
    lines.push_back(s);
  }
  return lines;
}

}  // namespace

TEST_CASE("emit appends in order and round-trips every field exactly") {
  const std::string path = temp_path("chord_metrics_roundtrip.jsonl");
  std::filesystem::remove(path);
  {
    MetricsWriter writer(path);
    for (long t = 0; t < 3; ++t) {
      MetricsRecord r = record_at(t);
      if (t == 1) {
        r.mean_phi = 0.2375;
      }
      if (t == 2) {
        r.eval_acc = 0.625;
      }
      writer.emit(r);
    }
  }
  const std::vector<std::string> lines = read_lines(path);
  CHECK(lines.size() == 4);  // header + 3 records

  const std::vector<MetricsRecord> records = read_metrics(path);
  REQUIRE(records.size() == 3);
  for (long t = 0; t < 3; ++t) {
    MetricsRecord want = record_at(t);
    if (t == 1) {
      want.mean_phi = 0.2375;
    }
    if (t == 2) {
      want.eval_acc = 0.625;
    }
    CHECK(records[static_cast<std::size_t>(t)] == want);
  }
}

TEST_CASE("out-of-order and duplicate steps are rejected, resume recovers the cursor") {
  const std::string path = temp_path("chord_metrics_order.jsonl");
  std::filesystem::remove(path);
  {
    MetricsWriter writer(path);
    writer.emit(record_at(0));
    writer.emit(record_at(1));
    CHECK_THROWS_AS(writer.emit(record_at(1)), std::invalid_argument);
    CHECK_THROWS_AS(writer.emit(record_at(0)), std::invalid_argument);
  }
  // a fresh writer on the same file appends after the recovered last step
  MetricsWriter resumed(path);
  CHECK(resumed.last_step() == 1);
  CHECK_THROWS_AS(resumed.emit(record_at(1)), std::invalid_argument);
  resumed.emit(record_at(2));
}

TEST_CASE("export_csv selects columns and leaves absent optionals empty") {
  const std::string path = temp_path("chord_metrics_export.jsonl");
  std::filesystem::remove(path);
  {
    MetricsWriter writer(path);
    MetricsRecord a = record_at(0);
    MetricsRecord b = record_at(1);
    b.eval_acc = 0.5;
    writer.emit(a);
    writer.emit(b);
  }
  const std::string out = temp_path("chord_metrics_export.csv");
  export_csv(path, {"step", "mean_reward", "eval_acc"}, out);
  const std::vector<std::string> lines = read_lines(out);
  REQUIRE(lines.size() == 3);
  CHECK(lines[0] == "step,mean_reward,eval_acc");
  CHECK(lines[1].find("0,") == 0);
  CHECK(lines[1].back() == ',');  // eval_acc empty on the first row
  CHECK(lines[2].find("0.5") != std::string::npos);

  CHECK_THROWS_WITH_AS(export_csv(path, {"step", "bogus"}, out),
                       doctest::Contains("valid:"), ConfigError);
}

TEST_CASE("export of an empty stream is header-only") {
  const std::string path = temp_path("chord_metrics_empty.jsonl");
  std::filesystem::remove(path);
  { MetricsWriter writer(path); }
  const std::string out = temp_path("chord_metrics_empty.csv");
  export_csv(path, {"step", "entropy"}, out);
  const std::vector<std::string> lines = read_lines(out);
  REQUIRE(lines.size() == 1);
  CHECK(lines[0] == "step,entropy");
}

TEST_CASE("summarize: constants, window one, and hand-computed window three") {
  const std::string path = temp_path("chord_metrics_summary.jsonl");
  std::filesystem::remove(path);
  {
    MetricsWriter writer(path);
    for (long t = 0; t < 5; ++t) {
      MetricsRecord r = record_at(t);
      r.mean_reward = static_cast<double>(t);  // 0 1 2 3 4
      r.entropy = 10.0 - static_cast<double>(t);
      r.mean_len = 2.0 * static_cast<double>(t);
      if (t == 3) {
        r.eval_acc = 0.75;
      }
      writer.emit(r);
    }
  }
  const MetricsSummary w1 = summarize(path, 1);
  CHECK(w1.mean_reward == 4.0);
  CHECK(w1.window_used == 1);
  CHECK_FALSE(w1.clamped);
  CHECK_FALSE(w1.mean_eval_acc.has_value());

  const MetricsSummary w3 = summarize(path, 3);
  CHECK(w3.mean_reward == doctest::Approx(3.0).epsilon(1e-15));   // (2+3+4)/3
  CHECK(w3.mean_entropy == doctest::Approx(7.0).epsilon(1e-15));  // (8+7+6)/3
  CHECK(w3.mean_len == doctest::Approx(6.0).epsilon(1e-15));
  REQUIRE(w3.mean_eval_acc.has_value());
  CHECK(*w3.mean_eval_acc == 0.75);

  const MetricsSummary wide = summarize(path, 100);
  CHECK(wide.clamped);
  CHECK(wide.window_used == 5);
  CHECK(wide.mean_reward == doctest::Approx(2.0).epsilon(1e-15));

  CHECK_THROWS_AS(summarize(path, 0), std::invalid_argument);
  CHECK(summary_to_json(w3).find("mean_eval_acc") != std::string::npos);
}

TEST_CASE("summarize over the stream equals recomputation from its CSV export") {
  const std::string path = temp_path("chord_metrics_fidelity.jsonl");
  std::filesystem::remove(path);
  {
    MetricsWriter writer(path);
    for (long t = 0; t < 7; ++t) {
      MetricsRecord r = record_at(t);
      r.mean_reward = 0.1 * static_cast<double>(t) + 1e-13;  // awkward decimals
      writer.emit(r);
    }
  }
  const std::string out = temp_path("chord_metrics_fidelity.csv");
  export_csv(path, {"step", "mean_reward", "entropy", "mean_len"}, out);

  const std::vector<std::string> lines = read_lines(out);
  double reward_sum = 0.0, entropy_sum = 0.0, len_sum = 0.0;
  const std::size_t window = 4;
  for (std::size_t i = lines.size() - window; i < lines.size(); ++i) {
    double step = 0, reward = 0, entropy = 0, len = 0;
    REQUIRE(std::sscanf(lines[i].c_str(), "%lf,%lf,%lf,%lf", &step, &reward, &entropy, &len) == 4);
    reward_sum += reward;
    entropy_sum += entropy;
    len_sum += len;
  }
  const MetricsSummary s = summarize(path, static_cast<long>(window));
  CHECK(s.mean_reward == reward_sum / static_cast<double>(window));
  CHECK(s.mean_entropy == entropy_sum / static_cast<double>(window));
  CHECK(s.mean_len == len_sum / static_cast<double>(window));
}

TEST_CASE("malformed metrics lines report their line number") {
  const std::string path = temp_path("chord_metrics_badline.jsonl");
  std::ofstream(path) << R"({"schema":"chord.metrics","version":1})" << "\n"
                      << "{not json}\n";
  try {
    read_metrics(path);
    CHECK(false);
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
}
