#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "chord/corpus.hpp"
#include "chord/policy.hpp"
#include "chord/types.hpp"

namespace chord {

// K rollouts for one prompt plus their standardized advantages.
struct RolloutGroup {
  TokenSeq prompt;
  std::vector<Trajectory> rollouts;
  std::vector<double> advantages;
};

enum class SftVariant { plain, is, phi };

const char* sft_variant_name(SftVariant v);
SftVariant parse_sft_variant(const std::string& s);

enum class SftNorm { token_mean, seq_mean };

const char* sft_norm_name(SftNorm n);
SftNorm parse_sft_norm(const std::string& s);

struct LossReport {
  double total = 0.0;
  double grpo = 0.0;
  double sft = 0.0;
  double mu = 0.0;
  double clip_fraction = 0.0;
  std::int64_t rl_tokens = 0;
  std::int64_t sft_tokens = 0;
  double mean_phi = 0.0;  // populated for the phi variant only
};

// A_k = (R_k - mean) / (pop std + eps_z). All-equal groups map to all zeros.
std::vector<double> group_advantages(std::span<const double> rewards, double eps_z);
void fill_advantages(RolloutGroup& group, double eps_z);

// Clipped token-level surrogate, normalized by the total token count of the
// batch. Importance ratios come from the trajectories' recorded sample_logp.
struct GrpoEval {
  double loss = 0.0;
  double clip_fraction = 0.0;
  std::int64_t tokens = 0;
};
GrpoEval grpo_loss_eval(const std::vector<RolloutGroup>& groups, const PolicyParams& params,
                        double clip_eps);
double grpo_loss(const std::vector<RolloutGroup>& groups, const PolicyParams& params,
                 double clip_eps);

// Expert-token negative log-likelihood; token_mean divides by the total token
// count of the minibatch, seq_mean averages per-sequence sums.
double sft_loss(const std::vector<ExpertExample>& batch, const PolicyParams& params,
                SftNorm norm = SftNorm::token_mean);

// Self-importance-weighted NLL with a stop-gradient on the weight (the
// behavior-policy probability of expert data is taken as 1).
double sft_is_loss(const std::vector<ExpertExample>& batch, const PolicyParams& params,
                   SftNorm norm = SftNorm::token_mean);

// p(1-p): peaks at 0.5 and vanishes at both ends of the probability spectrum.
double phi_weight(double p);

// NLL modulated per token by phi(p_t). With detach_weight the weight carries
// no gradient (the default); the through-weight variant is kept behind the
// flag because its fixed points differ.
double sft_phi_loss(const std::vector<ExpertExample>& batch, const PolicyParams& params,
                    bool detach_weight = true, SftNorm norm = SftNorm::token_mean,
                    double* mean_phi_out = nullptr);

struct ObjectiveConfig {
  SftVariant sft_variant = SftVariant::plain;
  double clip_eps = 0.2;
  bool detach_phi = true;
  SftNorm sft_norm = SftNorm::token_mean;
};

LossReport hybrid_loss(double mu, const std::vector<RolloutGroup>& groups,
                       const std::vector<ExpertExample>& sft_batch, const PolicyParams& params,
                       const ObjectiveConfig& cfg);

// ---- analytic gradients ----
// Each accumulates scale * dL/dtheta into grad.

void add_grpo_gradient(const std::vector<RolloutGroup>& groups, const PolicyParams& params,
                       double clip_eps, double scale, std::span<double> grad);

void add_sft_gradient(const std::vector<ExpertExample>& batch, const PolicyParams& params,
                      SftVariant variant, bool detach_weight, SftNorm norm, double scale,
                      std::span<double> grad);

std::vector<double> hybrid_gradient(double mu, const std::vector<RolloutGroup>& groups,
                                    const std::vector<ExpertExample>& sft_batch,
                                    const PolicyParams& params, const ObjectiveConfig& cfg);

// ParamLoss adapter over the full hybrid objective (mu = 0 or 1 reduce to the
// pure GRPO / pure SFT objectives bit-for-bit). Holds references; callers keep
// the batches alive.
class HybridObjective : public ParamLoss {
 public:
  HybridObjective(double mu, const std::vector<RolloutGroup>* groups,
                  const std::vector<ExpertExample>* sft_batch, ObjectiveConfig cfg);

  double value(const PolicyParams& params) const override;
  void add_gradient(const PolicyParams& params, std::span<double> grad) const override;
  LossReport report(const PolicyParams& params) const;

  // Value closure for central differencing: any stop-gradient weights are
  // frozen at `freeze` across both sides of the difference.
  std::function<double(const PolicyParams&)> frozen_value_fn(const PolicyParams& freeze) const;

 private:
  double mu_;
  const std::vector<RolloutGroup>* groups_;
  const std::vector<ExpertExample>* sft_batch_;
  ObjectiveConfig cfg_;
};

}  // namespace chord
