#include "chord/trainer.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "chord/detail/binio.hpp"
#include "chord/rewards.hpp"

namespace chord {
namespace {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

ShapeDesc shape_from_config(const RunConfig& config, const Vocab& vocab) {
  ShapeDesc shape;
  shape.backend = config.backend;
  shape.vocab_size = vocab.size();
  shape.eos_id = vocab.eos();
  if (config.backend == Backend::tabular) {
    shape.context_order = config.context_order;
  } else {
    shape.embed_dim = config.embed_dim;
    shape.hidden_dim = config.hidden_dim;
  }
  return shape;
}

void apply_update(TrainState& state, std::span<const double> g, const RunConfig& config) {
  std::vector<double>& theta = state.params.values;
  if (config.optimizer == OptimizerKind::sgd) {
    for (std::size_t i = 0; i < theta.size(); ++i) {
      theta[i] -= config.lr * g[i];
    }
    return;
  }
  OptState& opt = state.opt;
  opt.t += 1;
  const double b1 = config.adam_beta1;
  const double b2 = config.adam_beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(opt.t));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(opt.t));
  for (std::size_t i = 0; i < theta.size(); ++i) {
    opt.m[i] = b1 * opt.m[i] + (1.0 - b1) * g[i];
    opt.v[i] = b2 * opt.v[i] + (1.0 - b2) * g[i] * g[i];
    const double m_hat = opt.m[i] / bc1;
    const double v_hat = opt.v[i] / bc2;
    theta[i] -= config.lr * m_hat / (std::sqrt(v_hat) + config.adam_eps);
  }
}

std::vector<ExpertExample> next_sft_batch(TrainState& state, const std::vector<ExpertExample>& sft,
                                          const RunConfig& config) {
  const std::size_t n = sft.size();
  std::vector<ExpertExample> out;
  out.reserve(static_cast<std::size_t>(config.sft_batch));
  std::vector<std::size_t> order = sft_epoch_order(n, config.seed, state.sft_epoch);
  state.last_sft_indices.clear();
  while (out.size() < static_cast<std::size_t>(config.sft_batch)) {
    if (state.sft_pos == static_cast<long>(n)) {
      state.sft_epoch += 1;
      state.sft_pos = 0;
      order = sft_epoch_order(n, config.seed, state.sft_epoch);
    }
    const std::size_t idx = order[static_cast<std::size_t>(state.sft_pos++)];
    state.last_sft_indices.push_back(idx);
    out.push_back(sft[idx]);
  }
  return out;
}

}  // namespace

std::vector<std::size_t> sft_epoch_order(std::size_t n, std::uint64_t seed, long epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, {kStreamSftShuffle, static_cast<std::uint64_t>(epoch)}));
  rng.shuffle(order);
  return order;
}

TrainState init_train_state(const RunConfig& config, const Vocab& vocab) {
  config.validate();
  TrainState state;
  const ShapeDesc shape = shape_from_config(config, vocab);
  if (config.init_checkpoint.empty()) {
    state.params = init_params(shape, config.seed, config.init_scale);
  } else {
    LoadedPolicy loaded = load_policy(config.init_checkpoint, vocab.hash());
    if (!(loaded.params.shape == shape)) {
      throw ConfigError("init_checkpoint shape does not match the configured policy");
    }
    loaded.params.validate();  // training must start from finite parameters
    state.params = std::move(loaded.params);
  }
  state.opt.m.assign(state.params.values.size(), 0.0);
  state.opt.v.assign(state.params.values.size(), 0.0);
  return state;
}

MetricsRecord train_step(TrainState& state, const DatasetSplit& split, const Vocab& vocab,
                         const RunConfig& config) {
  const auto t0 = std::chrono::steady_clock::now();
  if (split.rl.empty()) {
    throw std::invalid_argument("train_step needs a nonempty rl set");
  }
  const long step = state.step;
  const double mu = mu_at(config.schedule(), step);

  // draw B prompts (distinct while the pool allows it)
  Rng draw(derive_seed(config.seed, {kStreamRlDraw, static_cast<std::uint64_t>(step)}));
  const std::size_t pool = split.rl.size();
  std::vector<std::size_t> prompt_idx;
  if (static_cast<std::size_t>(config.batch_prompts) <= pool) {
    std::set<std::size_t> used;
    while (prompt_idx.size() < static_cast<std::size_t>(config.batch_prompts)) {
      const std::size_t i = draw.next_below(pool);
      if (used.insert(i).second) {
        prompt_idx.push_back(i);
      }
    }
  } else {
    for (int i = 0; i < config.batch_prompts; ++i) {
      prompt_idx.push_back(draw.next_below(pool));
    }
  }
  state.last_prompt_indices = prompt_idx;

  // rollouts + rewards + advantages
  std::vector<RolloutGroup> groups;
  groups.reserve(prompt_idx.size());
  double reward_sum = 0.0;
  double len_sum = 0.0;
  long truncated = 0;
  long n_rollouts = 0;
  for (std::size_t i = 0; i < prompt_idx.size(); ++i) {
    const TaskInstance& instance = split.rl[prompt_idx[i]];
    RolloutGroup group;
    group.prompt = instance.prompt;
    group.rollouts.reserve(static_cast<std::size_t>(config.rollouts_per_prompt));
    for (int k = 0; k < config.rollouts_per_prompt; ++k) {
      Rng rng(derive_seed(config.seed, {kStreamRollout, static_cast<std::uint64_t>(step),
                                        static_cast<std::uint64_t>(i),
                                        static_cast<std::uint64_t>(k)}));
      Trajectory traj =
          sample(state.params, instance.prompt, config.max_response_len, config.temperature, rng);
      traj.reward = score(vocab, config.reward, instance, traj.response);
      reward_sum += traj.reward;
      len_sum += static_cast<double>(traj.response.size());
      truncated += traj.truncated ? 1 : 0;
      ++n_rollouts;
      group.rollouts.push_back(std::move(traj));
    }
    fill_advantages(group, config.eps_z);
    groups.push_back(std::move(group));
  }

  // token-mean next-token entropy over the step's own rollout contexts,
  // measured at the sampling-time parameters
  double entropy_sum = 0.0;
  std::int64_t entropy_tokens = 0;
  for (const RolloutGroup& group : groups) {
    for (const Trajectory& traj : group.rollouts) {
      const SeqForward fw = forward_response(state.params, traj.prompt, traj.response, true);
      for (const TokenDistribution& dist : fw.dists) {
        entropy_sum += dist.entropy();
      }
      entropy_tokens += static_cast<std::int64_t>(traj.response.size());
    }
  }

  // SFT minibatch (skipped entirely at mu == 0)
  std::vector<ExpertExample> batch;
  state.last_sft_indices.clear();
  if (mu > 0.0 && config.sft_batch > 0 && !split.sft.empty()) {
    batch = next_sft_batch(state, split.sft, config);
  }

  ObjectiveConfig obj_cfg;
  obj_cfg.sft_variant = config.sft_variant;
  obj_cfg.clip_eps = config.clip_eps;
  obj_cfg.detach_phi = config.detach_phi;
  obj_cfg.sft_norm = config.sft_norm;
  const HybridObjective objective(mu, &groups, &batch, obj_cfg);
  const LossReport report = objective.report(state.params);
  if (!std::isfinite(report.total)) {
    throw TrainAbort("non-finite loss at step " + std::to_string(step));
  }
  std::vector<double> g(state.params.values.size(), 0.0);
  objective.add_gradient(state.params, g);
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!std::isfinite(g[i])) {
      throw TrainAbort("non-finite gradient at step " + std::to_string(step) + ", parameter " +
                       std::to_string(i));
    }
  }

  apply_update(state, g, config);
  state.step += 1;
  state.rollout_batches += 1;
  state.updates_applied += 1;

  MetricsRecord rec;
  rec.step = step;
  rec.mu = mu;
  rec.mean_reward = reward_sum / static_cast<double>(n_rollouts);
  rec.entropy = entropy_sum / static_cast<double>(entropy_tokens);
  rec.mean_len = len_sum / static_cast<double>(n_rollouts);
  rec.trunc_rate = static_cast<double>(truncated) / static_cast<double>(n_rollouts);
  rec.loss = report.total;
  rec.loss_grpo = report.grpo;
  rec.loss_sft = report.sft;
  rec.clip_frac = report.clip_fraction;
  if (config.sft_variant == SftVariant::phi && !batch.empty()) {
    rec.mean_phi = report.mean_phi;
  }
  rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                    .count();
  return rec;
}

double evaluate_pass(const PolicyParams& params, const Vocab& vocab,
                     std::span<const TaskInstance> eval_set, const RunConfig& config,
                     std::uint64_t pass_seed, bool greedy) {
  if (eval_set.empty()) {
    throw std::invalid_argument("evaluate needs a nonempty eval set");
  }
  double correct = 0.0;
  for (std::size_t idx = 0; idx < eval_set.size(); ++idx) {
    const TaskInstance& instance = eval_set[idx];
    Trajectory traj;
    if (greedy) {
      traj = greedy_decode(params, instance.prompt, config.max_response_len);
    } else {
      Rng rng(derive_seed(pass_seed, {static_cast<std::uint64_t>(idx)}));
      traj = sample(params, instance.prompt, config.max_response_len, config.temperature, rng);
    }
    if (score(vocab, config.reward, instance, traj.response) == config.reward.correct) {
      correct += 1.0;
    }
  }
  return correct / static_cast<double>(eval_set.size());
}

double evaluate(const PolicyParams& params, const Vocab& vocab,
                std::span<const TaskInstance> eval_set, const RunConfig& config, int n_samples,
                std::uint64_t eval_seed, bool greedy) {
  if (n_samples < 1) {
    throw std::invalid_argument("evaluate needs n_samples >= 1");
  }
  double acc = 0.0;
  for (int s = 0; s < n_samples; ++s) {
    acc += evaluate_pass(params, vocab, eval_set, config,
                         derive_seed(eval_seed, {kStreamEval, static_cast<std::uint64_t>(s)}),
                         greedy);
  }
  return acc / static_cast<double>(n_samples);
}

// ---- trainer checkpoints ----

namespace {
constexpr std::uint64_t kTrainMagic = 0x3152544452484f43ULL;  // "CHORDTR1"

void put_vec(std::ostream& out, const std::vector<double>& v) {
  detail::put_u64(out, v.size());
  for (double x : v) {
    detail::put_f64(out, x);
  }
}

std::vector<double> get_vec(std::istream& in) {
  const std::uint64_t n = detail::get_u64(in);
  std::vector<double> v(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    v[i] = detail::get_f64(in);
  }
  return v;
}

}  // namespace

void save_train_state(const TrainState& state, std::uint64_t vocab_hash, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw ConfigError("cannot open for writing: " + path);
  }
  detail::put_u64(out, kTrainMagic);
  detail::put_u32(out, 1);
  detail::put_u64(out, vocab_hash);
  detail::put_u64(out, static_cast<std::uint64_t>(state.step));
  detail::put_u64(out, static_cast<std::uint64_t>(state.sft_epoch));
  detail::put_u64(out, static_cast<std::uint64_t>(state.sft_pos));
  detail::put_u64(out, static_cast<std::uint64_t>(state.rollout_batches));
  detail::put_u64(out, static_cast<std::uint64_t>(state.updates_applied));
  detail::put_u64(out, static_cast<std::uint64_t>(state.opt.t));
  const ShapeDesc& s = state.params.shape;
  detail::put_u32(out, s.backend == Backend::tabular ? 0u : 1u);
  detail::put_i32(out, s.vocab_size);
  detail::put_i32(out, s.eos_id);
  detail::put_i32(out, s.context_order);
  detail::put_i32(out, s.embed_dim);
  detail::put_i32(out, s.hidden_dim);
  put_vec(out, state.params.values);
  put_vec(out, state.opt.m);
  put_vec(out, state.opt.v);
  if (!out) {
    throw ConfigError("write failed: " + path);
  }
}

TrainState load_train_state(const std::string& path, std::uint64_t expect_vocab_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ConfigError("cannot open checkpoint: " + path);
  }
  if (detail::get_u64(in) != kTrainMagic) {
    throw ConfigError("not a trainer checkpoint: " + path);
  }
  if (detail::get_u32(in) != 1) {
    throw ConfigError("unsupported trainer checkpoint version");
  }
  if (detail::get_u64(in) != expect_vocab_hash) {
    throw ConfigError("checkpoint vocab hash mismatch");
  }
  TrainState state;
  state.step = static_cast<long>(detail::get_u64(in));
  state.sft_epoch = static_cast<long>(detail::get_u64(in));
  state.sft_pos = static_cast<long>(detail::get_u64(in));
  state.rollout_batches = static_cast<long>(detail::get_u64(in));
  state.updates_applied = static_cast<long>(detail::get_u64(in));
  state.opt.t = static_cast<long>(detail::get_u64(in));
  state.params.shape.backend = detail::get_u32(in) == 0 ? Backend::tabular : Backend::neural;
  state.params.shape.vocab_size = detail::get_i32(in);
  state.params.shape.eos_id = detail::get_i32(in);
  state.params.shape.context_order = detail::get_i32(in);
  state.params.shape.embed_dim = detail::get_i32(in);
  state.params.shape.hidden_dim = detail::get_i32(in);
  state.params.values = get_vec(in);
  state.opt.m = get_vec(in);
  state.opt.v = get_vec(in);
  state.params.validate();
  if (state.opt.m.size() != state.params.values.size() ||
      state.opt.v.size() != state.params.values.size()) {
    throw ConfigError("optimizer state size mismatch in checkpoint");
  }
  return state;
}

// ---- full run ----

namespace {

std::string step_checkpoint_name(long step) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "step_%06ld.ckpt", step);
  return buf;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_abort_snapshot(const std::string& out_dir, const TrainState& state,
                          const RunConfig& config, std::uint64_t vocab_hash,
                          const std::string& message) {
  Json j;
  j["step"] = state.step;
  j["seed"] = config.seed;
  j["message"] = message;
  j["prompt_indices"] = state.last_prompt_indices;
  j["sft_indices"] = state.last_sft_indices;
  std::ofstream(out_dir + "/abort_snapshot.json") << j.dump(2) << "\n";
  save_policy(state.params, vocab_hash, static_cast<std::uint64_t>(state.step),
              out_dir + "/abort_params.ckpt");
}

}  // namespace

TrainState run(const RunConfig& config, const Vocab& vocab, const DatasetSplit& split,
               const std::string& out_dir, long session_step_limit) {
  config.validate();
  if (split.rl.empty()) {
    throw ConfigError("dataset has no RL instances");
  }
  if (config.schedule().max_value() > 0.0 && split.sft.empty()) {
    throw ConfigError("mu schedule can exceed 0 but the dataset has no SFT examples");
  }
  fs::create_directories(out_dir);
  fs::create_directories(out_dir + "/checkpoints");

  const std::string config_echo = config_to_json(config);
  const fs::path config_path = fs::path(out_dir) / "config.json";
  const std::string latest = out_dir + "/latest.ckpt";
  const std::string metrics_path = out_dir + "/metrics.jsonl";

  TrainState state;
  bool resumed = false;
  if (fs::exists(latest)) {
    if (read_file(config_path) != config_echo) {
      throw ConfigError("out_dir holds a different run (config echo mismatch): " + out_dir);
    }
    state = load_train_state(latest, vocab.hash());
    resumed = true;
    // drop metric rows past the checkpoint so an interrupted run lines up
    if (fs::exists(metrics_path)) {
      const std::vector<MetricsRecord> rows = read_metrics(metrics_path);
      fs::remove(metrics_path);
      MetricsWriter rewriter(metrics_path);
      for (const MetricsRecord& r : rows) {
        if (r.step < state.step) {
          rewriter.emit(r);
        }
      }
    }
  } else {
    state = init_train_state(config, vocab);
    std::ofstream(config_path) << config_echo;
  }

  MetricsWriter writer(metrics_path);
  if (writer.last_step() != state.step - 1) {
    throw ConfigError("metrics stream does not line up with the checkpoint step");
  }

  Json summary;
  if (resumed && fs::exists(fs::path(out_dir) / "summary.json")) {
    try {
      summary = Json::parse(read_file(fs::path(out_dir) / "summary.json"));
    } catch (const Json::exception&) {
      summary = Json::object();
    }
  }
  if (!resumed && !split.eval.empty()) {
    summary["initial_eval_acc"] =
        evaluate(state.params, vocab, split.eval, config, config.eval_samples,
                 derive_seed(config.seed, {kStreamEval, 0}));
  }

  long session_steps = 0;
  bool interrupted = false;
  try {
    while (state.step < config.total_steps) {
      if (session_step_limit > 0 && session_steps == session_step_limit) {
        interrupted = true;
        break;
      }
      MetricsRecord rec = train_step(state, split, vocab, config);
      ++session_steps;
      const bool eval_step =
          !split.eval.empty() &&
          (state.step % config.eval_interval == 0 || state.step == config.total_steps);
      if (eval_step) {
        rec.eval_acc =
            evaluate(state.params, vocab, split.eval, config, config.eval_samples,
                     derive_seed(config.seed, {kStreamEval, static_cast<std::uint64_t>(state.step)}));
      }
      writer.emit(rec);
      if (state.step % config.checkpoint_interval == 0 || state.step == config.total_steps) {
        save_train_state(state, vocab.hash(), out_dir + "/checkpoints/" +
                                                  step_checkpoint_name(state.step));
        save_train_state(state, vocab.hash(), latest);
      }
    }
  } catch (const TrainAbort& e) {
    writer.flush();
    write_abort_snapshot(out_dir, state, config, vocab.hash(), e.what());
    throw;
  }
  writer.flush();

  if (interrupted) {
    save_train_state(state, vocab.hash(), latest);
    std::ofstream(fs::path(out_dir) / "summary.json") << summary.dump(2) << "\n";
    return state;
  }

  if (config.total_steps > 0) {
    save_train_state(state, vocab.hash(), latest);
    save_train_state(state, vocab.hash(), out_dir + "/final.ckpt");
  }
  save_policy(state.params, vocab.hash(), static_cast<std::uint64_t>(state.step),
              out_dir + "/policy.ckpt");

  summary["steps"] = state.step;
  if (!split.eval.empty()) {
    summary["final_eval_acc"] =
        evaluate(state.params, vocab, split.eval, config, config.eval_samples,
                 derive_seed(config.seed, {kStreamEval, static_cast<std::uint64_t>(state.step),
                                           /*final*/ 1}));
  }
  if (state.step > 0) {
    const MetricsSummary trailing = summarize(metrics_path, std::min<long>(500, state.step));
    summary["trailing_window"] = trailing.window_used;
    summary["trailing_mean_reward"] = trailing.mean_reward;
    summary["trailing_mean_entropy"] = trailing.mean_entropy;
    summary["trailing_mean_len"] = trailing.mean_len;
  }
  std::ofstream(fs::path(out_dir) / "summary.json") << summary.dump(2) << "\n";
  return state;
}

}  // namespace chord
