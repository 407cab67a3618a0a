#include "chord/oracle.hpp"

#include <cmath>
#include <stdexcept>

namespace chord {

std::vector<double> fd_gradient(const std::function<double(const PolicyParams&)>& value_fn,
                                const PolicyParams& params, double h) {
  if (!(h > 0.0)) {
    throw std::invalid_argument("fd step size must be > 0");
  }
  PolicyParams probe = params;
  std::vector<double> grad(params.values.size(), 0.0);
  for (std::size_t i = 0; i < params.values.size(); ++i) {
    const double saved = probe.values[i];
    probe.values[i] = saved + h;
    const double plus = value_fn(probe);
    probe.values[i] = saved - h;
    const double minus = value_fn(probe);
    probe.values[i] = saved;
    if (!std::isfinite(plus) || !std::isfinite(minus)) {
      throw TrainAbort("non-finite loss while differencing parameter " + std::to_string(i));
    }
    grad[i] = (plus - minus) / (2.0 * h);
  }
  return grad;
}

std::vector<double> exact_expected_reward_gradient(
    const PolicyParams& params, const TokenSeq& prompt,
    const std::function<double(const TokenSeq&)>& reward_of_response, int max_len,
    std::int64_t node_cap) {
  const std::vector<EnumeratedTrajectory> all =
      enumerate_trajectories(params, prompt, max_len, node_cap);
  std::vector<double> grad(params.values.size(), 0.0);
  std::vector<WeightedSeq> items;
  items.reserve(all.size());
  for (const EnumeratedTrajectory& traj : all) {
    WeightedSeq item;
    item.prompt = &prompt;
    item.response = &traj.response;
    // grad E[R] = sum_tau R(tau) P(tau) grad log P(tau)
    item.coef.assign(traj.response.size(), reward_of_response(traj.response) * traj.prob);
    items.push_back(std::move(item));
  }
  add_weighted_logprob_gradient(params, items, grad);
  return grad;
}

std::vector<double> exact_policy_gradient(const PolicyParams& params, const Vocab& vocab,
                                          const TaskInstance& instance, const RewardRule& rule,
                                          int max_len, std::int64_t node_cap) {
  return exact_expected_reward_gradient(
      params, instance.prompt,
      [&](const TokenSeq& response) { return score(vocab, rule, instance, response); }, max_len,
      node_cap);
}

GradCheckReport compare_gradients(const std::string& name, std::span<const double> analytic,
                                  std::span<const double> fd, double h, double tol) {
  if (analytic.size() != fd.size()) {
    throw std::invalid_argument("gradient size mismatch in compare_gradients");
  }
  double fd_max = 0.0;
  for (double v : fd) {
    fd_max = std::max(fd_max, std::abs(v));
  }
  GradCheckReport report;
  report.loss_name = name;
  report.step_size = h;
  double worst_abs = -1.0;
  for (std::size_t i = 0; i < fd.size(); ++i) {
    const double diff = std::abs(analytic[i] - fd[i]);
    if (diff > worst_abs) {
      worst_abs = diff;
      report.worst_index = static_cast<std::int64_t>(i);
    }
  }
  report.max_rel_error = worst_abs / (1.0 + fd_max);
  report.pass = report.max_rel_error < tol;
  return report;
}

GradcheckFixtures make_gradcheck_fixtures() {
  GradcheckFixtures fx;
  ShapeDesc shape;
  shape.backend = Backend::tabular;
  shape.vocab_size = 6;
  shape.eos_id = 1;
  shape.context_order = 1;
  fx.params = init_params(shape, 20240517, 0.8);

  // Expert-style sequences over the fixture vocab (ids only; no corpus needed).
  auto example = [](TokenSeq prompt, TokenSeq response) {
    ExpertExample ex;
    ex.prompt = std::move(prompt);
    ex.response = std::move(response);
    return ex;
  };
  fx.sft_batch = {
      example({0, 4}, {2, 5, 3, 1}),
      example({0, 2, 4}, {5, 5, 1}),
      example({0, 5}, {4, 2, 3, 5, 1}),
  };

  // Two rollout groups with mixed rewards. sample_logp entries are shifted off
  // the current log-probs so the importance ratio leaves 1 and both sides of
  // the clip become reachable.
  const double shifts[] = {0.0, 0.3, -0.35, 0.15, -0.1};
  int shift_at = 0;
  auto rollout = [&](TokenSeq prompt, TokenSeq response, double reward) {
    Trajectory traj;
    traj.prompt = std::move(prompt);
    traj.response = std::move(response);
    traj.sample_logp = logprobs(fx.params, traj.prompt, traj.response);
    for (double& lp : traj.sample_logp) {
      lp = std::min(lp + shifts[shift_at % 5], -1e-3);
      shift_at++;
    }
    traj.reward = reward;
    return traj;
  };
  RolloutGroup g1;
  g1.prompt = {0, 4};
  g1.rollouts = {rollout({0, 4}, {2, 5, 1}, 1.0), rollout({0, 4}, {3, 1}, 0.0),
                 rollout({0, 4}, {5, 5, 4, 1}, -0.1)};
  fill_advantages(g1, 1e-6);
  RolloutGroup g2;
  g2.prompt = {0, 3};
  g2.rollouts = {rollout({0, 3}, {4, 1}, 1.0), rollout({0, 3}, {4, 2, 1}, 1.0),
                 rollout({0, 3}, {2, 2, 5, 1}, -1.0)};
  fill_advantages(g2, 1e-6);
  fx.groups = {g1, g2};
  return fx;
}

std::vector<GradCheckReport> gradcheck_all(const GradcheckFixtures& fixtures, double tol,
                                           double h) {
  struct Case {
    std::string name;
    double mu;
    ObjectiveConfig cfg;
  };
  std::vector<Case> cases;
  {
    ObjectiveConfig cfg;
    cfg.clip_eps = fixtures.clip_eps;
    Case c{"sft_token_mean", 1.0, cfg};
    cases.push_back(c);
    c.name = "sft_seq_mean";
    c.cfg.sft_norm = SftNorm::seq_mean;
    cases.push_back(c);
    c = {"sft_is", 1.0, cfg};
    c.cfg.sft_variant = SftVariant::is;
    cases.push_back(c);
    c = {"sft_phi_detached", 1.0, cfg};
    c.cfg.sft_variant = SftVariant::phi;
    cases.push_back(c);
    c = {"sft_phi_through", 1.0, cfg};
    c.cfg.sft_variant = SftVariant::phi;
    c.cfg.detach_phi = false;
    cases.push_back(c);
    c = {"grpo_clipped", 0.0, cfg};
    cases.push_back(c);
    c = {"hybrid_plain_mu0.3", 0.3, cfg};
    cases.push_back(c);
    c = {"hybrid_is_mu0.5", 0.5, cfg};
    c.cfg.sft_variant = SftVariant::is;
    cases.push_back(c);
    c = {"hybrid_phi_mu0.1", 0.1, cfg};
    c.cfg.sft_variant = SftVariant::phi;
    cases.push_back(c);
  }

  std::vector<GradCheckReport> reports;
  for (const Case& c : cases) {
    const HybridObjective objective(c.mu, &fixtures.groups, &fixtures.sft_batch, c.cfg);
    const std::vector<double> analytic = grad(fixtures.params, objective);
    const std::vector<double> fd =
        fd_gradient(objective.frozen_value_fn(fixtures.params), fixtures.params, h);
    reports.push_back(compare_gradients(c.name, analytic, fd, h, tol));
  }
  return reports;
}

}  // namespace chord
