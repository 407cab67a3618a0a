#pragma once

#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "chord/types.hpp"

namespace chord {

// One training step's telemetry row. Optional fields are present only when
// they were measured (mean_phi for the phi variant, eval_acc on eval steps).
struct MetricsRecord {
  long step = 0;
  double mu = 0.0;
  double mean_reward = 0.0;
  double entropy = 0.0;
  double mean_len = 0.0;
  double trunc_rate = 0.0;
  double loss = 0.0;
  double loss_grpo = 0.0;
  double loss_sft = 0.0;
  double clip_frac = 0.0;
  std::optional<double> mean_phi;
  std::optional<double> eval_acc;
  double wall_ms = 0.0;

  bool operator==(const MetricsRecord&) const = default;
};

// Append-only JSONL stream with a schema header line. Steps must arrive in
// strictly increasing order.
class MetricsWriter {
 public:
  // Creates the file with a header, or appends to an existing stream (the
  // last recorded step is recovered so the ordering check survives resume).
  explicit MetricsWriter(const std::string& path);

  void emit(const MetricsRecord& record);
  void flush();
  long last_step() const { return last_step_; }

 private:
  std::ofstream out_;
  long last_step_ = -1;
};

std::vector<MetricsRecord> read_metrics(const std::string& path);

const std::vector<std::string>& metric_columns();

// Selected columns to CSV; optional cells that are absent stay empty.
void export_csv(const std::string& metrics_path, const std::vector<std::string>& columns,
                const std::string& out_path);

// Trailing-window means. eval accuracy averages only the records that carry
// one; clamped flags a window larger than the stream.
struct MetricsSummary {
  long window_requested = 0;
  long window_used = 0;
  bool clamped = false;
  long records = 0;
  double mean_reward = 0.0;
  double mean_entropy = 0.0;
  double mean_len = 0.0;
  std::optional<double> mean_eval_acc;
};
MetricsSummary summarize(const std::string& metrics_path, long window);
std::string summary_to_json(const MetricsSummary& summary);

}  // namespace chord
