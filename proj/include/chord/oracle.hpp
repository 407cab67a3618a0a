#pragma once

#include <functional>
#include <string>
#include <vector>

#include "chord/objectives.hpp"
#include "chord/policy.hpp"
#include "chord/rewards.hpp"

namespace chord {

// Central finite differences of an arbitrary scalar over the parameter vector.
// Losses with stop-gradient internals must be passed as a frozen-value closure
// (HybridObjective::frozen_value_fn) so the detached weights stay constant
// across both sides of the difference.
std::vector<double> fd_gradient(const std::function<double(const PolicyParams&)>& value_fn,
                                const PolicyParams& params, double h);

// Exact d/dtheta E[R] by exhaustive trajectory enumeration (tabular backend).
std::vector<double> exact_expected_reward_gradient(
    const PolicyParams& params, const TokenSeq& prompt,
    const std::function<double(const TokenSeq&)>& reward_of_response, int max_len,
    std::int64_t node_cap = 2'000'000);

// Convenience wrapper scoring with the rewards module.
std::vector<double> exact_policy_gradient(const PolicyParams& params, const Vocab& vocab,
                                          const TaskInstance& instance, const RewardRule& rule,
                                          int max_len, std::int64_t node_cap = 2'000'000);

struct GradCheckReport {
  std::string loss_name;
  double max_rel_error = 0.0;
  std::int64_t worst_index = -1;
  double step_size = 0.0;
  bool pass = false;
};

// max_i |a_i - fd_i| / (1 + max_i |fd_i|), the worst index being the argmax of
// the numerator.
GradCheckReport compare_gradients(const std::string& name, std::span<const double> analytic,
                                  std::span<const double> fd, double h, double tol);

// Shipped tabular fixtures covering every loss variant and both stop-gradient
// settings. The rollout fixtures carry synthetic off-policy sample_logp so both
// clip branches are exercised.
struct GradcheckFixtures {
  PolicyParams params;
  std::vector<ExpertExample> sft_batch;
  std::vector<RolloutGroup> groups;
  double clip_eps = 0.2;
};
GradcheckFixtures make_gradcheck_fixtures();

std::vector<GradCheckReport> gradcheck_all(const GradcheckFixtures& fixtures, double tol,
                                           double h = 1e-5);

}  // namespace chord
