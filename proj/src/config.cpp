#include "chord/config.hpp"

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>

namespace chord {
namespace {

using Json = nlohmann::ordered_json;

Json reward_to_json(const RewardRule& r) {
  Json j;
  j["correct"] = r.correct;
  j["format_only"] = r.format_only;
  j["malformed"] = r.malformed;
  j["over_length"] = r.over_length;
  j["length_limit"] = r.length_limit;
  j["over_length_dominates"] = r.over_length_dominates;
  return j;
}

template <class T>
void take(const Json& j, const char* key, T& out) {
  if (j.contains(key)) {
    out = j.at(key).get<T>();
  }
}

RewardRule reward_from_json(const Json& j) {
  RewardRule r;
  for (const auto& item : j.items()) {
    const std::string& key = item.key();
    if (key != "correct" && key != "format_only" && key != "malformed" && key != "over_length" &&
        key != "length_limit" && key != "over_length_dominates") {
      throw ConfigError("unknown reward key: " + key);
    }
  }
  take(j, "correct", r.correct);
  take(j, "format_only", r.format_only);
  take(j, "malformed", r.malformed);
  take(j, "over_length", r.over_length);
  take(j, "length_limit", r.length_limit);
  take(j, "over_length_dominates", r.over_length_dominates);
  return r;
}

Json to_json(const RunConfig& c) {
  Json j;
  j["backend"] = backend_name(c.backend);
  j["context_order"] = c.context_order;
  j["embed_dim"] = c.embed_dim;
  j["hidden_dim"] = c.hidden_dim;
  j["init_scale"] = c.init_scale;
  j["batch_prompts"] = c.batch_prompts;
  j["rollouts_per_prompt"] = c.rollouts_per_prompt;
  j["sft_batch"] = c.sft_batch;
  j["max_response_len"] = c.max_response_len;
  j["temperature"] = c.temperature;
  j["optimizer"] = optimizer_name(c.optimizer);
  j["lr"] = c.lr;
  j["adam_beta1"] = c.adam_beta1;
  j["adam_beta2"] = c.adam_beta2;
  j["adam_eps"] = c.adam_eps;
  j["clip_eps"] = c.clip_eps;
  j["eps_z"] = c.eps_z;
  j["sft_variant"] = sft_variant_name(c.sft_variant);
  j["detach_phi"] = c.detach_phi;
  j["sft_norm"] = sft_norm_name(c.sft_norm);
  j["mu"] = c.mu;
  j["total_steps"] = c.total_steps;
  j["eval_interval"] = c.eval_interval;
  j["eval_samples"] = c.eval_samples;
  j["checkpoint_interval"] = c.checkpoint_interval;
  j["seed"] = c.seed;
  j["reward"] = reward_to_json(c.reward);
  j["init_checkpoint"] = c.init_checkpoint;
  return j;
}

RunConfig from_json(const Json& j) {
  static const std::vector<std::string> known = {
      "backend",       "context_order", "embed_dim",      "hidden_dim",
      "init_scale",    "batch_prompts", "rollouts_per_prompt", "sft_batch",
      "max_response_len", "temperature", "optimizer",     "lr",
      "adam_beta1",    "adam_beta2",    "adam_eps",       "clip_eps",
      "eps_z",         "sft_variant",   "detach_phi",     "sft_norm",
      "mu",            "total_steps",   "eval_interval",  "eval_samples",
      "checkpoint_interval", "seed",    "reward",         "init_checkpoint"};
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const std::string& k : known) {
      if (item.key() == k) {
        ok = true;
        break;
      }
    }
    if (!ok) {
      throw ConfigError("unknown config key: " + item.key());
    }
  }
  RunConfig c = desk_defaults();
  try {
    if (j.contains("backend")) c.backend = parse_backend(j.at("backend").get<std::string>());
    take(j, "context_order", c.context_order);
    take(j, "embed_dim", c.embed_dim);
    take(j, "hidden_dim", c.hidden_dim);
    take(j, "init_scale", c.init_scale);
    take(j, "batch_prompts", c.batch_prompts);
    take(j, "rollouts_per_prompt", c.rollouts_per_prompt);
    take(j, "sft_batch", c.sft_batch);
    take(j, "max_response_len", c.max_response_len);
    take(j, "temperature", c.temperature);
    if (j.contains("optimizer")) c.optimizer = parse_optimizer(j.at("optimizer").get<std::string>());
    take(j, "lr", c.lr);
    take(j, "adam_beta1", c.adam_beta1);
    take(j, "adam_beta2", c.adam_beta2);
    take(j, "adam_eps", c.adam_eps);
    take(j, "clip_eps", c.clip_eps);
    take(j, "eps_z", c.eps_z);
    if (j.contains("sft_variant")) {
      c.sft_variant = parse_sft_variant(j.at("sft_variant").get<std::string>());
    }
    take(j, "detach_phi", c.detach_phi);
    if (j.contains("sft_norm")) c.sft_norm = parse_sft_norm(j.at("sft_norm").get<std::string>());
    take(j, "mu", c.mu);
    take(j, "total_steps", c.total_steps);
    take(j, "eval_interval", c.eval_interval);
    take(j, "eval_samples", c.eval_samples);
    take(j, "checkpoint_interval", c.checkpoint_interval);
    take(j, "seed", c.seed);
    if (j.contains("reward")) c.reward = reward_from_json(j.at("reward"));
    take(j, "init_checkpoint", c.init_checkpoint);
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  return c;
}

}  // namespace

const char* optimizer_name(OptimizerKind k) { return k == OptimizerKind::sgd ? "sgd" : "adam"; }

OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "adam") return OptimizerKind::adam;
  throw ConfigError("unknown optimizer: " + s + " (expected sgd|adam)");
}

void RunConfig::validate() const {
  if (batch_prompts < 1) {
    throw ConfigError("batch_prompts must be >= 1");
  }
  if (rollouts_per_prompt < 2) {
    throw ConfigError("rollouts_per_prompt must be >= 2 (group advantages need K >= 2)");
  }
  if (!(temperature > 0.0)) {
    throw ConfigError("temperature must be > 0");
  }
  if (max_response_len < 1) {
    throw ConfigError("max_response_len must be >= 1");
  }
  if (!(lr > 0.0)) {
    throw ConfigError("lr must be > 0");
  }
  if (!(clip_eps > 0.0)) {
    throw ConfigError("clip_eps must be > 0");
  }
  if (!(eps_z > 0.0)) {
    throw ConfigError("eps_z must be > 0");
  }
  if (total_steps < 0) {
    throw ConfigError("total_steps must be >= 0");
  }
  if (eval_interval < 1) {
    throw ConfigError("eval_interval must be >= 1");
  }
  if (eval_samples < 1) {
    throw ConfigError("eval_samples must be >= 1");
  }
  if (checkpoint_interval < 1) {
    throw ConfigError("checkpoint_interval must be >= 1");
  }
  const MuSchedule s = parse_schedule(mu);
  s.validate();
  if (s.max_value() > 0.0 && sft_batch < 1) {
    throw ConfigError("sft_batch must be >= 1 when the mu schedule can exceed 0");
  }
  reward.validate();
  if (backend == Backend::tabular) {
    if (context_order < 0 || context_order > 2) {
      throw ConfigError("context_order must be in [0, 2]");
    }
  } else {
    if (embed_dim < 1 || embed_dim > 64 || hidden_dim < 1 || hidden_dim > 64) {
      throw ConfigError("neural dims must be in [1, 64]");
    }
  }
}

RunConfig desk_defaults() { return RunConfig{}; }

RunConfig paper_defaults() {
  RunConfig c;
  c.batch_prompts = 32;
  c.rollouts_per_prompt = 8;
  c.sft_batch = 64;
  c.temperature = 1.0;
  c.total_steps = 1500;
  c.lr = 1e-5;
  c.max_response_len = 64;
  c.reward.length_limit = 64;
  return c;
}

const char* preset_name(Preset p) {
  switch (p) {
    case Preset::pure_rl:
      return "pure-rl";
    case Preset::sft_then_rl:
      return "sft-then-rl";
    case Preset::chord_mu:
      return "chord-mu";
    case Preset::chord_phi:
      return "chord-phi";
    case Preset::sft_is_mix:
      return "sft-is-mix";
    case Preset::unweighted_mix:
      return "unweighted-mix";
  }
  return "?";
}

Preset parse_preset(const std::string& s) {
  for (Preset p : {Preset::pure_rl, Preset::sft_then_rl, Preset::chord_mu, Preset::chord_phi,
                   Preset::sft_is_mix, Preset::unweighted_mix}) {
    if (s == preset_name(p)) {
      return p;
    }
  }
  throw ConfigError("unknown preset: " + s);
}

std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  for (Preset p : {Preset::pure_rl, Preset::sft_then_rl, Preset::chord_mu, Preset::chord_phi,
                   Preset::sft_is_mix, Preset::unweighted_mix}) {
    names.emplace_back(preset_name(p));
  }
  return names;
}

RunConfig preset_config(Preset p, RunConfig base) {
  switch (p) {
    case Preset::pure_rl:
      base.mu = "constant:0";
      break;
    case Preset::sft_then_rl:
      base.mu = "binary:400:1:0";
      base.sft_variant = SftVariant::plain;
      break;
    case Preset::chord_mu:
      base.mu = "decay:0.9:0.05:200:linear";
      base.sft_variant = SftVariant::plain;
      break;
    case Preset::chord_phi:
      base.mu = "constant:0.1";
      base.sft_variant = SftVariant::phi;
      break;
    case Preset::sft_is_mix:
      base.mu = "constant:0.1";
      base.sft_variant = SftVariant::is;
      break;
    case Preset::unweighted_mix:
      base.mu = "constant:0.1";
      base.sft_variant = SftVariant::plain;
      break;
  }
  base.validate();
  return base;
}

std::string config_to_json(const RunConfig& config) { return to_json(config).dump(2) + "\n"; }

RunConfig config_from_json(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("bad config json: ") + e.what());
  }
  return from_json(j);
}

void apply_override(RunConfig& config, const std::string& entry) {
  const std::size_t eq = entry.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override must be key=value, got '" + entry + "'");
  }
  const std::string key = entry.substr(0, eq);
  const std::string value = entry.substr(eq + 1);

  Json j = to_json(config);
  // dotted path into nested objects
  Json* node = &j;
  std::size_t start = 0;
  std::string leaf;
  while (true) {
    const std::size_t dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? dot : dot - start);
    if (dot == std::string::npos) {
      leaf = part;
      break;
    }
    if (!node->contains(part) || !(*node)[part].is_object()) {
      throw ConfigError("unknown config key: " + key);
    }
    node = &(*node)[part];
    start = dot + 1;
  }
  if (!node->contains(leaf)) {
    throw ConfigError("unknown config key: " + key);
  }
  Json parsed;
  try {
    parsed = Json::parse(value);
  } catch (const Json::exception&) {
    parsed = value;  // unquoted strings (schedule specs, names) pass through
  }
  if (parsed.is_object() != (*node)[leaf].is_object()) {
    throw ConfigError("override for " + key + " has the wrong shape");
  }
  (*node)[leaf] = parsed;
  config = from_json(j);
}

RunConfig load_config(const std::string& name_or_path) {
  if (name_or_path.empty() || name_or_path == "desk-defaults") {
    return desk_defaults();
  }
  if (name_or_path == "paper-defaults") {
    return paper_defaults();
  }
  for (const std::string& p : preset_names()) {
    if (name_or_path == p) {
      return preset_config(parse_preset(name_or_path), desk_defaults());
    }
  }
  std::filesystem::path path(name_or_path);
  if (!std::filesystem::exists(path)) {
    if (const char* dir = std::getenv("CHORD_CONFIG_DIR")) {
      const std::filesystem::path alt = std::filesystem::path(dir) / name_or_path;
      if (std::filesystem::exists(alt)) {
        path = alt;
      } else if (std::filesystem::exists(alt.string() + ".json")) {
        path = alt.string() + ".json";
      }
    }
  }
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("config not found: " + name_or_path);
  }
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return config_from_json(text);
}

}  // namespace chord
