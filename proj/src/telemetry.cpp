#include "chord/telemetry.hpp"

#include <json.hpp>

#include <filesystem>

namespace chord {
namespace {

using Json = nlohmann::ordered_json;

constexpr const char* kSchemaLine = R"({"schema":"chord.metrics","version":1})";

Json record_to_json(const MetricsRecord& r) {
  Json j;
  j["step"] = r.step;
  j["mu"] = r.mu;
  j["mean_reward"] = r.mean_reward;
  j["entropy"] = r.entropy;
  j["mean_len"] = r.mean_len;
  j["trunc_rate"] = r.trunc_rate;
  j["loss"] = r.loss;
  j["loss_grpo"] = r.loss_grpo;
  j["loss_sft"] = r.loss_sft;
  j["clip_frac"] = r.clip_frac;
  if (r.mean_phi) {
    j["mean_phi"] = *r.mean_phi;
  }
  if (r.eval_acc) {
    j["eval_acc"] = *r.eval_acc;
  }
  j["wall_ms"] = r.wall_ms;
  return j;
}

MetricsRecord record_from_json(const Json& j, long line) {
  try {
    MetricsRecord r;
    r.step = j.at("step").get<long>();
    r.mu = j.at("mu").get<double>();
    r.mean_reward = j.at("mean_reward").get<double>();
    r.entropy = j.at("entropy").get<double>();
    r.mean_len = j.at("mean_len").get<double>();
    r.trunc_rate = j.at("trunc_rate").get<double>();
    r.loss = j.at("loss").get<double>();
    r.loss_grpo = j.at("loss_grpo").get<double>();
    r.loss_sft = j.at("loss_sft").get<double>();
    r.clip_frac = j.at("clip_frac").get<double>();
    if (j.contains("mean_phi")) {
      r.mean_phi = j.at("mean_phi").get<double>();
    }
    if (j.contains("eval_acc")) {
      r.eval_acc = j.at("eval_acc").get<double>();
    }
    r.wall_ms = j.at("wall_ms").get<double>();
    return r;
  } catch (const Json::exception& e) {
    throw ParseError(std::string("bad metrics record: ") + e.what(), line);
  }
}

}  // namespace

MetricsWriter::MetricsWriter(const std::string& path) {
  bool resume = false;
  if (std::filesystem::exists(path) && std::filesystem::file_size(path) > 0) {
    const std::vector<MetricsRecord> existing = read_metrics(path);
    if (!existing.empty()) {
      last_step_ = existing.back().step;
    }
    resume = true;
  }
  out_.open(path, resume ? std::ios::app : std::ios::trunc);
  if (!out_) {
    throw ConfigError("cannot open metrics stream: " + path);
  }
  if (!resume) {
    out_ << kSchemaLine << "\n";
  }
}

void MetricsWriter::emit(const MetricsRecord& record) {
  if (record.step <= last_step_) {
    throw std::invalid_argument("metrics steps must be strictly increasing: got " +
                                std::to_string(record.step) + " after " +
                                std::to_string(last_step_));
  }
  out_ << record_to_json(record).dump() << "\n";
  if (!out_) {
    throw ConfigError("metrics write failed");
  }
  last_step_ = record.step;
  if (record.eval_acc) {
    flush();
  }
}

void MetricsWriter::flush() { out_.flush(); }

std::vector<MetricsRecord> read_metrics(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open metrics stream: " + path);
  }
  std::vector<MetricsRecord> records;
  std::string text;
  long line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.empty()) {
      continue;
    }
    Json j;
    try {
      j = Json::parse(text);
    } catch (const Json::exception& e) {
      throw ParseError(std::string("bad metrics line: ") + e.what(), line);
    }
    if (line == 1) {
      if (!j.contains("schema") || j["schema"] != "chord.metrics") {
        throw ParseError("missing chord.metrics schema header", 1);
      }
      continue;
    }
    records.push_back(record_from_json(j, line));
  }
  if (line == 0) {
    throw ParseError("empty metrics stream", 1);
  }
  return records;
}

const std::vector<std::string>& metric_columns() {
  static const std::vector<std::string> columns = {
      "step",   "mu",        "mean_reward", "entropy",   "mean_len", "trunc_rate", "loss",
      "loss_grpo", "loss_sft", "clip_frac",  "mean_phi", "eval_acc", "wall_ms"};
  return columns;
}

namespace {

std::optional<double> field_value(const MetricsRecord& r, const std::string& column) {
  if (column == "step") return static_cast<double>(r.step);
  if (column == "mu") return r.mu;
  if (column == "mean_reward") return r.mean_reward;
  if (column == "entropy") return r.entropy;
  if (column == "mean_len") return r.mean_len;
  if (column == "trunc_rate") return r.trunc_rate;
  if (column == "loss") return r.loss;
  if (column == "loss_grpo") return r.loss_grpo;
  if (column == "loss_sft") return r.loss_sft;
  if (column == "clip_frac") return r.clip_frac;
  if (column == "mean_phi") return r.mean_phi;
  if (column == "eval_acc") return r.eval_acc;
  if (column == "wall_ms") return r.wall_ms;
  std::string valid;
  for (const std::string& c : metric_columns()) {
    valid += valid.empty() ? c : ", " + c;
  }
  throw ConfigError("unknown metrics column '" + column + "' (valid: " + valid + ")");
}

// json-formatted doubles round-trip exactly, which keeps the CSV export
// faithful to the stream.
std::string cell(std::optional<double> v, const std::string& column) {
  if (!v) {
    return "";
  }
  if (column == "step") {
    return std::to_string(static_cast<long>(*v));
  }
  return Json(*v).dump();
}

}  // namespace

void export_csv(const std::string& metrics_path, const std::vector<std::string>& columns,
                const std::string& out_path) {
  if (columns.empty()) {
    throw ConfigError("export needs at least one column");
  }
  for (const std::string& c : columns) {
    MetricsRecord probe;
    field_value(probe, c);  // validates the name
  }
  const std::vector<MetricsRecord> records = read_metrics(metrics_path);
  std::ofstream out(out_path);
  if (!out) {
    throw ConfigError("cannot open for writing: " + out_path);
  }
  for (std::size_t i = 0; i < columns.size(); ++i) {
    out << (i ? "," : "") << columns[i];
  }
  out << "\n";
  for (const MetricsRecord& r : records) {
    for (std::size_t i = 0; i < columns.size(); ++i) {
      out << (i ? "," : "") << cell(field_value(r, columns[i]), columns[i]);
    }
    out << "\n";
  }
  if (!out) {
    throw ConfigError("csv write failed: " + out_path);
  }
}

MetricsSummary summarize(const std::string& metrics_path, long window) {
  if (window < 1) {
    throw std::invalid_argument("summary window must be >= 1");
  }
  const std::vector<MetricsRecord> records = read_metrics(metrics_path);
  MetricsSummary s;
  s.window_requested = window;
  s.records = static_cast<long>(records.size());
  if (records.empty()) {
    s.clamped = true;
    return s;
  }
  s.clamped = window > s.records;
  s.window_used = std::min(window, s.records);
  double acc_sum = 0.0;
  long acc_n = 0;
  for (std::size_t i = records.size() - static_cast<std::size_t>(s.window_used);
       i < records.size(); ++i) {
    const MetricsRecord& r = records[i];
    s.mean_reward += r.mean_reward;
    s.mean_entropy += r.entropy;
    s.mean_len += r.mean_len;
    if (r.eval_acc) {
      acc_sum += *r.eval_acc;
      ++acc_n;
    }
  }
  const double n = static_cast<double>(s.window_used);
  s.mean_reward /= n;
  s.mean_entropy /= n;
  s.mean_len /= n;
  if (acc_n > 0) {
    s.mean_eval_acc = acc_sum / static_cast<double>(acc_n);
  }
  return s;
}

std::string summary_to_json(const MetricsSummary& s) {
  Json j;
  j["window_requested"] = s.window_requested;
  j["window_used"] = s.window_used;
  j["clamped"] = s.clamped;
  j["records"] = s.records;
  j["mean_reward"] = s.mean_reward;
  j["mean_entropy"] = s.mean_entropy;
  j["mean_len"] = s.mean_len;
  if (s.mean_eval_acc) {
    j["mean_eval_acc"] = *s.mean_eval_acc;
  }
  return j.dump(2);
}

}  // namespace chord
