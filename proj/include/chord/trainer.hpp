#pragma once

#include <span>
#include <string>
#include <vector>

#include "chord/config.hpp"
#include "chord/corpus.hpp"
#include "chord/objectives.hpp"
#include "chord/policy.hpp"
#include "chord/telemetry.hpp"

namespace chord {

struct OptState {
  long t = 0;
  std::vector<double> m;
  std::vector<double> v;
};

struct TrainState {
  long step = 0;
  PolicyParams params;
  OptState opt;
  long sft_epoch = 0;
  long sft_pos = 0;
  long rollout_batches = 0;
  long updates_applied = 0;
  // context captured for abort snapshots
  std::vector<std::size_t> last_prompt_indices;
  std::vector<std::size_t> last_sft_indices;
};

TrainState init_train_state(const RunConfig& config, const Vocab& vocab);

// One strict on-policy step: K rollouts for each of B prompts drawn from the
// RL set, verifiable rewards, per-group advantage standardization, the next
// SFT minibatch when mu > 0, and exactly one optimizer update. Throws
// TrainAbort on a non-finite loss or gradient. eval_acc is left unset; run()
// fills it on eval steps.
MetricsRecord train_step(TrainState& state, const DatasetSplit& split, const Vocab& vocab,
                         const RunConfig& config);

// avg@n accuracy: the fraction of n sampled responses per instance that earn
// the correct reward, averaged over instances. greedy replaces sampling with
// argmax decoding.
double evaluate(const PolicyParams& params, const Vocab& vocab,
                std::span<const TaskInstance> eval_set, const RunConfig& config, int n_samples,
                std::uint64_t eval_seed, bool greedy = false);

// A single avg@1 pass; evaluate(n) is the mean of n passes with seeds derived
// from (eval_seed, pass index).
double evaluate_pass(const PolicyParams& params, const Vocab& vocab,
                     std::span<const TaskInstance> eval_set, const RunConfig& config,
                     std::uint64_t pass_seed, bool greedy = false);

// Epoch visiting order of the SFT set (deterministic per epoch).
std::vector<std::size_t> sft_epoch_order(std::size_t n, std::uint64_t seed, long epoch);

// Full training loop. Writes config echo, metrics stream, periodic
// checkpoints, and a final summary under out_dir; resumes from
// out_dir/latest.ckpt when present (the config echo must match).
// session_step_limit > 0 stops this invocation after that many steps with a
// checkpoint, leaving the run resumable — an orderly interrupt.
TrainState run(const RunConfig& config, const Vocab& vocab, const DatasetSplit& split,
               const std::string& out_dir, long session_step_limit = -1);

// Trainer checkpoint (policy + optimizer + data cursor), little-endian binary.
void save_train_state(const TrainState& state, std::uint64_t vocab_hash, const std::string& path);
TrainState load_train_state(const std::string& path, std::uint64_t expect_vocab_hash);

}  // namespace chord
