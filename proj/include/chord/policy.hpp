#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "chord/rng.hpp"
#include "chord/types.hpp"

namespace chord {

enum class Backend { tabular, neural };

const char* backend_name(Backend b);
Backend parse_backend(const std::string& s);

// Layout metadata for the flat parameter vector.
//
// tabular: one softmax row of logits per conditioning context; the context is
// the last `context_order` tokens of the prefix (left-padded with EOS), so the
// table has vocab_size^context_order rows.
//
// neural: token embedding -> single GRU cell -> output projection, all in
// double precision. Small enough that exact finite-difference checks stay fast.
struct ShapeDesc {
  Backend backend = Backend::tabular;
  int vocab_size = 0;
  Token eos_id = 1;
  int context_order = 1;  // tabular only, in [0, 2]
  int embed_dim = 0;      // neural only
  int hidden_dim = 0;     // neural only

  std::int64_t param_count() const;
  std::int64_t context_rows() const;  // tabular: vocab_size^context_order
  void validate() const;

  bool operator==(const ShapeDesc&) const = default;
};

struct PolicyParams {
  ShapeDesc shape;
  std::vector<double> values;

  void validate() const;  // length matches shape, entries finite
};

PolicyParams init_params(const ShapeDesc& shape, std::uint64_t seed, double init_scale);

// Next-token log-probabilities; exp sums to 1, entries clamped at kMinLogProb.
struct TokenDistribution {
  std::vector<double> logp;

  double entropy() const;  // Shannon entropy in nats
};

inline constexpr double kMinLogProb = -745.0;

struct Trajectory {
  TokenSeq prompt;
  TokenSeq response;                // includes the terminal EOS unless truncated
  std::vector<double> sample_logp;  // temperature-1 log-probs at sampling-time params
  double reward = 0.0;
  bool truncated = false;
};

// log pi(response[t] | prompt, response[<t]) for every t. Throws on
// out-of-vocab tokens or an empty response.
std::vector<double> logprobs(const PolicyParams& params, const TokenSeq& prompt,
                             const TokenSeq& response);

// Single forward pass over prompt+response. dists[t] predicts response[t]
// and is only filled when want_dists is set.
struct SeqForward {
  std::vector<double> realized_logp;
  std::vector<TokenDistribution> dists;
};
SeqForward forward_response(const PolicyParams& params, const TokenSeq& prompt,
                            const TokenSeq& response, bool want_dists);

// Ancestral sampling. Temperature reshapes the sampling distribution only; the
// recorded sample_logp entries are the temperature-1 log-probs of the realized
// tokens, so recomputing logprobs() at the sampling-time parameters reproduces
// them exactly and the on-policy importance ratio is identically 1.
Trajectory sample(const PolicyParams& params, const TokenSeq& prompt, int max_len,
                  double temperature, Rng& rng);

// Deterministic argmax decoding (ties break toward the lowest token id).
Trajectory greedy_decode(const PolicyParams& params, const TokenSeq& prompt, int max_len);

// Mean next-token Shannon entropy over the given (prompt, response prefix)
// contexts. Value lies in [0, ln vocab_size].
struct EntropyContext {
  TokenSeq prompt;
  TokenSeq prefix;
};
double mean_token_entropy(const PolicyParams& params, std::span<const EntropyContext> contexts);

// Token-mean entropy over every position of every trajectory's response, in
// one forward pass per trajectory. Equals mean_token_entropy over the
// corresponding per-position contexts.
double mean_token_entropy_over_rollouts(const PolicyParams& params,
                                        std::span<const Trajectory> rollouts);

// Exhaustive trajectory enumeration (tabular only). Every returned response
// ends in EOS or has length max_len; probabilities sum to 1.
struct EnumeratedTrajectory {
  TokenSeq response;
  double prob = 0.0;
};
std::vector<EnumeratedTrajectory> enumerate_trajectories(const PolicyParams& params,
                                                         const TokenSeq& prompt, int max_len,
                                                         std::int64_t node_cap = 2'000'000);

// A differentiable scalar objective over policy parameters. Implementations
// provide the analytic gradient; the oracle module checks it against central
// finite differences of value().
class ParamLoss {
 public:
  virtual ~ParamLoss() = default;
  virtual double value(const PolicyParams& params) const = 0;
  virtual void add_gradient(const PolicyParams& params, std::span<double> grad) const = 0;
};

// Gradient of a scalar loss; throws TrainAbort on a non-finite loss value and
// checks the returned gradient for finiteness.
std::vector<double> grad(const PolicyParams& params, const ParamLoss& loss);

// Core gradient primitive shared by every loss: accumulates
//   sum_t coef[t] * d/dtheta log pi(response[t] | prompt, response[<t])
// into grad. coef entries are treated as constants.
struct WeightedSeq {
  const TokenSeq* prompt = nullptr;
  const TokenSeq* response = nullptr;
  std::vector<double> coef;
};
void add_weighted_logprob_gradient(const PolicyParams& params, std::span<const WeightedSeq> items,
                                   std::span<double> grad);

// ---- checkpoint io (little-endian binary, see README) ----

void save_policy(const PolicyParams& params, std::uint64_t vocab_hash, std::uint64_t step,
                 const std::string& path);

struct LoadedPolicy {
  PolicyParams params;
  std::uint64_t vocab_hash = 0;
  std::uint64_t step = 0;
};
// expect_vocab_hash, when set, must match the stored hash.
LoadedPolicy load_policy(const std::string& path, std::optional<std::uint64_t> expect_vocab_hash);

}  // namespace chord
