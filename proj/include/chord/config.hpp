#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "chord/objectives.hpp"
#include "chord/policy.hpp"
#include "chord/rewards.hpp"
#include "chord/schedules.hpp"

namespace chord {

enum class OptimizerKind { sgd, adam };

const char* optimizer_name(OptimizerKind k);
OptimizerKind parse_optimizer(const std::string& s);

// Full run configuration. The JSON file mirrors these fields one-to-one;
// CLI --override key=value entries are applied on top and unknown keys are
// rejected rather than ignored.
struct RunConfig {
  // policy
  Backend backend = Backend::tabular;
  int context_order = 2;
  int embed_dim = 24;
  int hidden_dim = 24;
  double init_scale = 0.5;

  // batching
  int batch_prompts = 8;        // prompts per RL batch (B)
  int rollouts_per_prompt = 8;  // K
  int sft_batch = 64;
  int max_response_len = 48;
  double temperature = 1.0;

  // optimizer
  OptimizerKind optimizer = OptimizerKind::adam;
  double lr = 0.02;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  // objective
  double clip_eps = 0.2;
  double eps_z = 1e-6;
  SftVariant sft_variant = SftVariant::plain;
  bool detach_phi = true;
  SftNorm sft_norm = SftNorm::token_mean;
  std::string mu = "constant:0";

  // loop
  long total_steps = 2000;
  long eval_interval = 100;
  int eval_samples = 4;
  long checkpoint_interval = 500;
  std::uint64_t seed = 1;

  RewardRule reward;
  std::string init_checkpoint;  // optional starting policy

  MuSchedule schedule() const { return parse_schedule(mu); }
  void validate() const;
};

// Desk-scale defaults finish in minutes; the paper-scale profile keeps the
// published batch geometry (B=32, K=8, SFT batch 64, 1500 steps).
RunConfig desk_defaults();
RunConfig paper_defaults();

enum class Preset { pure_rl, sft_then_rl, chord_mu, chord_phi, sft_is_mix, unweighted_mix };

const char* preset_name(Preset p);
Preset parse_preset(const std::string& s);
std::vector<std::string> preset_names();

// The experiment arms, applied over a base configuration.
RunConfig preset_config(Preset p, RunConfig base);

std::string config_to_json(const RunConfig& config);
RunConfig config_from_json(const std::string& text);  // rejects unknown keys

// "key=value" with dotted paths into nested objects (e.g. reward.correct=2).
void apply_override(RunConfig& config, const std::string& entry);

// Accepts a builtin name (desk-defaults, paper-defaults, or a preset name) or
// a path; bare names also resolve against $CHORD_CONFIG_DIR.
RunConfig load_config(const std::string& name_or_path);

}  // namespace chord
