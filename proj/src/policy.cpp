#include "chord/policy.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "chord/detail/binio.hpp"

namespace chord {
namespace {

void log_softmax(std::span<const double> logits, std::vector<double>& out) {
  out.resize(logits.size());
  double m = logits[0];
  for (double z : logits) {
    m = std::max(m, z);
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    sum += std::exp(logits[i] - m);
  }
  const double lse = m + std::log(sum);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::max(logits[i] - lse, kMinLogProb);
  }
}

void check_token(const ShapeDesc& shape, Token t) {
  if (t < 0 || t >= shape.vocab_size) {
    throw std::invalid_argument("token id " + std::to_string(t) + " outside vocab of size " +
                                std::to_string(shape.vocab_size));
  }
}

// ---- tabular backend ----

// Rolling conditioning window over the last `context_order` tokens, left-padded
// with EOS. One softmax row of logits per window value.
class TabularStepper {
 public:
  explicit TabularStepper(const PolicyParams& params)
      : params_(params), order_(params.shape.context_order) {
    reset();
  }

  void reset() { window_.fill(params_.shape.eos_id); }

  void feed(Token t) {
    check_token(params_.shape, t);
    if (order_ >= 2) {
      window_[1] = window_[0];
    }
    if (order_ >= 1) {
      window_[0] = t;
    }
  }

  std::int64_t row() const {
    std::int64_t idx = 0;
    for (int j = order_ - 1; j >= 0; --j) {
      idx = idx * params_.shape.vocab_size + window_[static_cast<std::size_t>(j)];
    }
    return idx;
  }

  std::span<const double> logits() const {
    const int v = params_.shape.vocab_size;
    return {params_.values.data() + row() * v, static_cast<std::size_t>(v)};
  }

  void next_logp(std::vector<double>& out) const { log_softmax(logits(), out); }

 private:
  const PolicyParams& params_;
  int order_;
  std::array<Token, 2> window_{};
};

// ---- neural backend (token embedding -> GRU cell -> output projection) ----

struct GruOffsets {
  std::int64_t embed, wz, uz, bz, wr, ur, br, wc, uc, bc, wout, bout, total;
};

GruOffsets gru_offsets(const ShapeDesc& s) {
  const std::int64_t v = s.vocab_size;
  const std::int64_t d = s.embed_dim;
  const std::int64_t h = s.hidden_dim;
  GruOffsets o{};
  std::int64_t at = 0;
  o.embed = at;
  at += v * d;
  o.wz = at;
  at += h * d;
  o.uz = at;
  at += h * h;
  o.bz = at;
  at += h;
  o.wr = at;
  at += h * d;
  o.ur = at;
  at += h * h;
  o.br = at;
  at += h;
  o.wc = at;
  at += h * d;
  o.uc = at;
  at += h * h;
  o.bc = at;
  at += h;
  o.wout = at;
  at += v * h;
  o.bout = at;
  at += v;
  o.total = at;
  return o;
}

inline void matvec(const double* w, int rows, int cols, const double* x, double* y) {
  for (int i = 0; i < rows; ++i) {
    double acc = 0.0;
    const double* row = w + static_cast<std::int64_t>(i) * cols;
    for (int j = 0; j < cols; ++j) {
      acc += row[j] * x[j];
    }
    y[i] += acc;
  }
}

// y += W^T x  (x has `rows` entries, y has `cols`)
inline void matvec_t(const double* w, int rows, int cols, const double* x, double* y) {
  for (int i = 0; i < rows; ++i) {
    const double* row = w + static_cast<std::int64_t>(i) * cols;
    const double xi = x[i];
    for (int j = 0; j < cols; ++j) {
      y[j] += row[j] * xi;
    }
  }
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

class NeuralStepper {
 public:
  NeuralStepper(const PolicyParams& params, bool record_trace)
      : params_(params),
        off_(gru_offsets(params.shape)),
        record_(record_trace),
        h_(static_cast<std::size_t>(params.shape.hidden_dim), 0.0) {}

  void reset() {
    std::fill(h_.begin(), h_.end(), 0.0);
    inputs_.clear();
    h_hist_.assign(1, h_);
    z_hist_.clear();
    r_hist_.clear();
    c_hist_.clear();
  }

  void feed(Token t) {
    check_token(params_.shape, t);
    const int d = params_.shape.embed_dim;
    const int hd = params_.shape.hidden_dim;
    const double* w = params_.values.data();
    const double* x = w + off_.embed + static_cast<std::int64_t>(t) * d;

    std::vector<double> z(static_cast<std::size_t>(hd));
    std::vector<double> r(static_cast<std::size_t>(hd));
    std::vector<double> c(static_cast<std::size_t>(hd));
    std::vector<double> rh(static_cast<std::size_t>(hd));

    for (int i = 0; i < hd; ++i) {
      z[static_cast<std::size_t>(i)] = w[off_.bz + i];
      r[static_cast<std::size_t>(i)] = w[off_.br + i];
      c[static_cast<std::size_t>(i)] = w[off_.bc + i];
    }
    matvec(w + off_.wz, hd, d, x, z.data());
    matvec(w + off_.uz, hd, hd, h_.data(), z.data());
    matvec(w + off_.wr, hd, d, x, r.data());
    matvec(w + off_.ur, hd, hd, h_.data(), r.data());
    for (int i = 0; i < hd; ++i) {
      z[static_cast<std::size_t>(i)] = sigmoid(z[static_cast<std::size_t>(i)]);
      r[static_cast<std::size_t>(i)] = sigmoid(r[static_cast<std::size_t>(i)]);
      rh[static_cast<std::size_t>(i)] = r[static_cast<std::size_t>(i)] * h_[static_cast<std::size_t>(i)];
    }
    matvec(w + off_.wc, hd, d, x, c.data());
    matvec(w + off_.uc, hd, hd, rh.data(), c.data());
    for (int i = 0; i < hd; ++i) {
      c[static_cast<std::size_t>(i)] = std::tanh(c[static_cast<std::size_t>(i)]);
      h_[static_cast<std::size_t>(i)] = (1.0 - z[static_cast<std::size_t>(i)]) * h_[static_cast<std::size_t>(i)] +
                                        z[static_cast<std::size_t>(i)] * c[static_cast<std::size_t>(i)];
    }
    if (record_) {
      inputs_.push_back(t);
      h_hist_.push_back(h_);
      z_hist_.push_back(std::move(z));
      r_hist_.push_back(std::move(r));
      c_hist_.push_back(std::move(c));
    }
  }

  void next_logits(std::vector<double>& out) const {
    const int v = params_.shape.vocab_size;
    const int hd = params_.shape.hidden_dim;
    const double* w = params_.values.data();
    out.assign(static_cast<std::size_t>(v), 0.0);
    for (int i = 0; i < v; ++i) {
      out[static_cast<std::size_t>(i)] = w[off_.bout + i];
    }
    matvec(w + off_.wout, v, hd, h_.data(), out.data());
  }

  void next_logp(std::vector<double>& out) const {
    std::vector<double> logits;
    next_logits(logits);
    log_softmax(logits, out);
  }

  const std::vector<double>& hidden() const { return h_; }

  // trace accessors (valid only when record_trace was set)
  const std::vector<Token>& inputs() const { return inputs_; }
  const std::vector<std::vector<double>>& h_hist() const { return h_hist_; }
  const std::vector<std::vector<double>>& z_hist() const { return z_hist_; }
  const std::vector<std::vector<double>>& r_hist() const { return r_hist_; }
  const std::vector<std::vector<double>>& c_hist() const { return c_hist_; }

 private:
  const PolicyParams& params_;
  GruOffsets off_;
  bool record_;
  std::vector<double> h_;
  std::vector<Token> inputs_;
  std::vector<std::vector<double>> h_hist_, z_hist_, r_hist_, c_hist_;
};

// Dispatch helper: run fn over per-position temperature-1 log distributions of
// a (prompt, response) pair. fn(t, logp) is called for t in [0, |response|).
template <class Fn>
void walk_response(const PolicyParams& params, const TokenSeq& prompt, const TokenSeq& response,
                   Fn&& fn) {
  if (response.empty()) {
    throw std::invalid_argument("response must be nonempty");
  }
  std::vector<double> logp;
  if (params.shape.backend == Backend::tabular) {
    TabularStepper st(params);
    for (Token t : prompt) {
      st.feed(t);
    }
    for (std::size_t t = 0; t < response.size(); ++t) {
      check_token(params.shape, response[t]);
      st.next_logp(logp);
      fn(t, logp);
      if (t + 1 < response.size()) {
        st.feed(response[t]);
      }
    }
  } else {
    NeuralStepper st(params, /*record_trace=*/false);
    st.reset();
    for (Token t : prompt) {
      st.feed(t);
    }
    for (std::size_t t = 0; t < response.size(); ++t) {
      check_token(params.shape, response[t]);
      st.next_logp(logp);
      fn(t, logp);
      if (t + 1 < response.size()) {
        st.feed(response[t]);
      }
    }
  }
}

}  // namespace

const char* backend_name(Backend b) { return b == Backend::tabular ? "tabular" : "neural"; }

Backend parse_backend(const std::string& s) {
  if (s == "tabular") return Backend::tabular;
  if (s == "neural") return Backend::neural;
  throw ConfigError("unknown backend: " + s + " (expected tabular|neural)");
}

std::int64_t ShapeDesc::context_rows() const {
  std::int64_t rows = 1;
  for (int i = 0; i < context_order; ++i) {
    rows *= vocab_size;
  }
  return rows;
}

std::int64_t ShapeDesc::param_count() const {
  if (backend == Backend::tabular) {
    return context_rows() * vocab_size;
  }
  return gru_offsets(*this).total;
}

void ShapeDesc::validate() const {
  if (vocab_size < 2) {
    throw ConfigError("vocab_size must be >= 2");
  }
  if (eos_id < 0 || eos_id >= vocab_size) {
    throw ConfigError("eos_id outside vocab");
  }
  if (backend == Backend::tabular) {
    if (context_order < 0 || context_order > 2) {
      throw ConfigError("tabular context_order must be in [0, 2]");
    }
  } else {
    if (embed_dim < 1 || hidden_dim < 1) {
      throw ConfigError("neural backend needs embed_dim and hidden_dim >= 1");
    }
  }
  if (param_count() > (std::int64_t{1} << 31)) {
    throw ConfigError("parameter vector too large");
  }
}

void PolicyParams::validate() const {
  shape.validate();
  if (static_cast<std::int64_t>(values.size()) != shape.param_count()) {
    throw ConfigError("parameter vector length " + std::to_string(values.size()) +
                      " does not match shape (" + std::to_string(shape.param_count()) + ")");
  }
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw ConfigError("non-finite policy parameter");
    }
  }
}

PolicyParams init_params(const ShapeDesc& shape, std::uint64_t seed, double init_scale) {
  shape.validate();
  PolicyParams p;
  p.shape = shape;
  p.values.assign(static_cast<std::size_t>(shape.param_count()), 0.0);
  Rng rng(derive_seed(seed, {kStreamInit}));
  if (shape.backend == Backend::tabular) {
    for (double& v : p.values) {
      v = rng.normal(0.0, init_scale);
    }
  } else {
    const GruOffsets off = gru_offsets(shape);
    // weights gaussian, biases zero
    auto fill = [&](std::int64_t from, std::int64_t to) {
      for (std::int64_t i = from; i < to; ++i) {
        p.values[static_cast<std::size_t>(i)] = rng.normal(0.0, init_scale);
      }
    };
    fill(off.embed, off.bz);
    fill(off.wr, off.br);
    fill(off.wc, off.bc);
    fill(off.wout, off.bout);
  }
  return p;
}

double TokenDistribution::entropy() const {
  double h = 0.0;
  for (double lp : logp) {
    h -= std::exp(lp) * lp;
  }
  return h;
}

std::vector<double> logprobs(const PolicyParams& params, const TokenSeq& prompt,
                             const TokenSeq& response) {
  std::vector<double> out(response.size(), 0.0);
  walk_response(params, prompt, response, [&](std::size_t t, const std::vector<double>& logp) {
    out[t] = logp[static_cast<std::size_t>(response[t])];
  });
  return out;
}

SeqForward forward_response(const PolicyParams& params, const TokenSeq& prompt,
                            const TokenSeq& response, bool want_dists) {
  SeqForward fw;
  fw.realized_logp.resize(response.size());
  if (want_dists) {
    fw.dists.resize(response.size());
  }
  walk_response(params, prompt, response, [&](std::size_t t, const std::vector<double>& logp) {
    fw.realized_logp[t] = logp[static_cast<std::size_t>(response[t])];
    if (want_dists) {
      fw.dists[t].logp = logp;
    }
  });
  return fw;
}

namespace {

template <class Stepper>
Trajectory sample_impl(Stepper& st, const PolicyParams& params, const TokenSeq& prompt,
                       int max_len, double temperature, Rng& rng) {
  Trajectory traj;
  traj.prompt = prompt;
  for (Token t : prompt) {
    st.feed(t);
  }
  std::vector<double> logits, logp1, logp_t;
  while (static_cast<int>(traj.response.size()) < max_len) {
    st.next_logits(logits);
    log_softmax(logits, logp1);
    const std::vector<double>* sampling = &logp1;
    if (temperature != 1.0) {
      std::vector<double> scaled(logits.size());
      for (std::size_t i = 0; i < logits.size(); ++i) {
        scaled[i] = logits[i] / temperature;
      }
      log_softmax(scaled, logp_t);
      sampling = &logp_t;
    }
    const Token tok = static_cast<Token>(rng.categorical_from_logprobs(*sampling));
    traj.response.push_back(tok);
    traj.sample_logp.push_back(logp1[static_cast<std::size_t>(tok)]);
    if (tok == params.shape.eos_id) {
      break;
    }
    st.feed(tok);
  }
  traj.truncated = traj.response.back() != params.shape.eos_id;
  return traj;
}

}  // namespace

Trajectory sample(const PolicyParams& params, const TokenSeq& prompt, int max_len,
                  double temperature, Rng& rng) {
  if (temperature <= 0.0) {
    throw std::invalid_argument("temperature must be > 0");
  }
  if (max_len < 1) {
    throw std::invalid_argument("max_len must be >= 1");
  }
  if (params.shape.backend == Backend::tabular) {
    // TabularStepper has no next_logits; adapt via a small shim.
    struct Shim {
      TabularStepper st;
      explicit Shim(const PolicyParams& p) : st(p) {}
      void feed(Token t) { st.feed(t); }
      void next_logits(std::vector<double>& out) const {
        const auto row = st.logits();
        out.assign(row.begin(), row.end());
      }
    } shim(params);
    return sample_impl(shim, params, prompt, max_len, temperature, rng);
  }
  NeuralStepper st(params, /*record_trace=*/false);
  st.reset();
  return sample_impl(st, params, prompt, max_len, temperature, rng);
}

namespace {

template <class Stepper>
Trajectory greedy_impl(Stepper& st, const PolicyParams& params, const TokenSeq& prompt,
                       int max_len) {
  Trajectory traj;
  traj.prompt = prompt;
  for (Token t : prompt) {
    st.feed(t);
  }
  std::vector<double> logits, logp;
  while (static_cast<int>(traj.response.size()) < max_len) {
    st.next_logits(logits);
    log_softmax(logits, logp);
    Token best = 0;
    for (Token v = 1; v < params.shape.vocab_size; ++v) {
      if (logp[static_cast<std::size_t>(v)] > logp[static_cast<std::size_t>(best)]) {
        best = v;
      }
    }
    traj.response.push_back(best);
    traj.sample_logp.push_back(logp[static_cast<std::size_t>(best)]);
    if (best == params.shape.eos_id) {
      break;
    }
    st.feed(best);
  }
  traj.truncated = traj.response.back() != params.shape.eos_id;
  return traj;
}

}  // namespace

Trajectory greedy_decode(const PolicyParams& params, const TokenSeq& prompt, int max_len) {
  if (max_len < 1) {
    throw std::invalid_argument("max_len must be >= 1");
  }
  if (params.shape.backend == Backend::tabular) {
    struct Shim {
      TabularStepper st;
      explicit Shim(const PolicyParams& p) : st(p) {}
      void feed(Token t) { st.feed(t); }
      void next_logits(std::vector<double>& out) const {
        const auto row = st.logits();
        out.assign(row.begin(), row.end());
      }
    } shim(params);
    return greedy_impl(shim, params, prompt, max_len);
  }
  NeuralStepper st(params, false);
  st.reset();
  return greedy_impl(st, params, prompt, max_len);
}

double mean_token_entropy(const PolicyParams& params, std::span<const EntropyContext> contexts) {
  if (contexts.empty()) {
    throw std::invalid_argument("mean_token_entropy needs at least one context");
  }
  double total = 0.0;
  std::vector<double> logp;
  for (const EntropyContext& ctx : contexts) {
    if (params.shape.backend == Backend::tabular) {
      TabularStepper st(params);
      for (Token t : ctx.prompt) {
        st.feed(t);
      }
      for (Token t : ctx.prefix) {
        st.feed(t);
      }
      st.next_logp(logp);
    } else {
      NeuralStepper st(params, false);
      st.reset();
      for (Token t : ctx.prompt) {
        st.feed(t);
      }
      for (Token t : ctx.prefix) {
        st.feed(t);
      }
      st.next_logp(logp);
    }
    TokenDistribution dist;
    dist.logp = logp;
    total += dist.entropy();
  }
  return total / static_cast<double>(contexts.size());
}

double mean_token_entropy_over_rollouts(const PolicyParams& params,
                                        std::span<const Trajectory> rollouts) {
  double total = 0.0;
  std::int64_t tokens = 0;
  for (const Trajectory& traj : rollouts) {
    if (traj.response.empty()) {
      continue;
    }
    const SeqForward fw = forward_response(params, traj.prompt, traj.response, true);
    for (const TokenDistribution& dist : fw.dists) {
      total += dist.entropy();
    }
    tokens += static_cast<std::int64_t>(traj.response.size());
  }
  if (tokens == 0) {
    throw std::invalid_argument("no rollout tokens to average entropy over");
  }
  return total / static_cast<double>(tokens);
}

namespace {

void enumerate_rec(const PolicyParams& params, TabularStepper& st, TokenSeq& prefix, double prob,
                   int max_len, std::int64_t node_cap, std::int64_t& nodes,
                   std::vector<EnumeratedTrajectory>& out) {
  if (++nodes > node_cap) {
    throw ConfigError("enumeration cap exceeded");
  }
  std::vector<double> logp;
  st.next_logp(logp);
  for (Token v = 0; v < params.shape.vocab_size; ++v) {
    const double p = prob * std::exp(logp[static_cast<std::size_t>(v)]);
    prefix.push_back(v);
    if (v == params.shape.eos_id || static_cast<int>(prefix.size()) == max_len) {
      out.push_back({prefix, p});
    } else {
      TabularStepper child = st;  // copy rolling window
      child.feed(v);
      enumerate_rec(params, child, prefix, p, max_len, node_cap, nodes, out);
    }
    prefix.pop_back();
  }
}

}  // namespace

std::vector<EnumeratedTrajectory> enumerate_trajectories(const PolicyParams& params,
                                                         const TokenSeq& prompt, int max_len,
                                                         std::int64_t node_cap) {
  if (params.shape.backend != Backend::tabular) {
    throw std::invalid_argument("enumerate_trajectories requires the tabular backend");
  }
  if (max_len < 1) {
    throw std::invalid_argument("max_len must be >= 1");
  }
  double tree = 1.0;
  for (int i = 0; i < max_len; ++i) {
    tree *= params.shape.vocab_size;
    if (tree > static_cast<double>(node_cap)) {
      throw ConfigError("vocab^max_len exceeds enumeration cap");
    }
  }
  TabularStepper st(params);
  for (Token t : prompt) {
    st.feed(t);
  }
  std::vector<EnumeratedTrajectory> out;
  TokenSeq prefix;
  std::int64_t nodes = 0;
  enumerate_rec(params, st, prefix, 1.0, max_len, node_cap, nodes, out);
  return out;
}

std::vector<double> grad(const PolicyParams& params, const ParamLoss& loss) {
  const double value = loss.value(params);
  if (!std::isfinite(value)) {
    throw TrainAbort("non-finite loss value");
  }
  std::vector<double> g(params.values.size(), 0.0);
  loss.add_gradient(params, g);
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!std::isfinite(g[i])) {
      throw TrainAbort("non-finite gradient at parameter " + std::to_string(i));
    }
  }
  return g;
}

namespace {

void add_gradient_tabular(const PolicyParams& params, const WeightedSeq& item,
                          std::span<double> grad) {
  const int v = params.shape.vocab_size;
  TabularStepper st(params);
  for (Token t : *item.prompt) {
    st.feed(t);
  }
  std::vector<double> logp;
  const TokenSeq& response = *item.response;
  for (std::size_t t = 0; t < response.size(); ++t) {
    check_token(params.shape, response[t]);
    const double coef = item.coef[t];
    if (coef != 0.0) {
      st.next_logp(logp);
      const std::int64_t base = st.row() * v;
      for (int k = 0; k < v; ++k) {
        grad[static_cast<std::size_t>(base + k)] -= coef * std::exp(logp[static_cast<std::size_t>(k)]);
      }
      grad[static_cast<std::size_t>(base + response[t])] += coef;
    }
    if (t + 1 < response.size()) {
      st.feed(response[t]);
    }
  }
}

void add_gradient_neural(const PolicyParams& params, const WeightedSeq& item,
                         std::span<double> grad) {
  const ShapeDesc& shape = params.shape;
  const GruOffsets off = gru_offsets(shape);
  const int d = shape.embed_dim;
  const int hd = shape.hidden_dim;
  const int v = shape.vocab_size;
  const double* w = params.values.data();

  const TokenSeq& prompt = *item.prompt;
  const TokenSeq& response = *item.response;
  const std::size_t plen = prompt.size();
  const std::size_t rlen = response.size();

  // Inputs that influence some prediction: prompt then all but the last
  // response token. Prediction k = plen + t reads h_k and scores response[t].
  NeuralStepper st(params, /*record_trace=*/true);
  st.reset();
  for (Token t : prompt) {
    st.feed(t);
  }
  for (std::size_t t = 0; t + 1 < rlen; ++t) {
    check_token(shape, response[t]);
    st.feed(response[t]);
  }
  check_token(shape, response[rlen - 1]);

  const auto& h_hist = st.h_hist();
  const std::size_t steps = st.inputs().size();  // == plen + rlen - 1

  // Per-prediction softmax probabilities (only where the coefficient is live).
  std::vector<std::vector<double>> probs(rlen);
  std::vector<double> logits(static_cast<std::size_t>(v));
  std::vector<double> logp;
  for (std::size_t t = 0; t < rlen; ++t) {
    if (item.coef[t] == 0.0) {
      continue;
    }
    const std::vector<double>& h = h_hist[plen + t];
    for (int i = 0; i < v; ++i) {
      logits[static_cast<std::size_t>(i)] = w[off.bout + i];
    }
    matvec(w + off.wout, v, hd, h.data(), logits.data());
    log_softmax(logits, logp);
    probs[t].resize(static_cast<std::size_t>(v));
    for (int i = 0; i < v; ++i) {
      probs[t][static_cast<std::size_t>(i)] = std::exp(logp[static_cast<std::size_t>(i)]);
    }
  }

  std::vector<double> dh(static_cast<std::size_t>(hd), 0.0);
  std::vector<double> dlogit(static_cast<std::size_t>(v));
  std::vector<double> da_z(static_cast<std::size_t>(hd)), da_r(static_cast<std::size_t>(hd)),
      da_c(static_cast<std::size_t>(hd)), t1(static_cast<std::size_t>(hd)),
      dhprev(static_cast<std::size_t>(hd)), rh(static_cast<std::size_t>(hd));

  for (std::size_t k = steps + 1; k-- > 0;) {
    // output-layer contribution at prediction positions
    if (k >= plen && k - plen < rlen) {
      const std::size_t t = k - plen;
      const double coef = item.coef[t];
      if (coef != 0.0) {
        const std::vector<double>& h = h_hist[k];
        for (int i = 0; i < v; ++i) {
          dlogit[static_cast<std::size_t>(i)] = -coef * probs[t][static_cast<std::size_t>(i)];
        }
        dlogit[static_cast<std::size_t>(response[t])] += coef;
        for (int i = 0; i < v; ++i) {
          const double dl = dlogit[static_cast<std::size_t>(i)];
          grad[static_cast<std::size_t>(off.bout + i)] += dl;
          double* grow = grad.data() + off.wout + static_cast<std::int64_t>(i) * hd;
          for (int j = 0; j < hd; ++j) {
            grow[j] += dl * h[static_cast<std::size_t>(j)];
          }
        }
        matvec_t(w + off.wout, v, hd, dlogit.data(), dh.data());
      }
    }
    if (k == 0) {
      break;
    }
    // backprop through the GRU step that produced h_k
    const std::size_t j = k - 1;
    const Token tok = st.inputs()[j];
    const std::vector<double>& hprev = h_hist[j];
    const std::vector<double>& z = st.z_hist()[j];
    const std::vector<double>& r = st.r_hist()[j];
    const std::vector<double>& c = st.c_hist()[j];
    const double* x = w + off.embed + static_cast<std::int64_t>(tok) * d;

    std::fill(dhprev.begin(), dhprev.end(), 0.0);
    for (int i = 0; i < hd; ++i) {
      const std::size_t ii = static_cast<std::size_t>(i);
      const double dz = dh[ii] * (c[ii] - hprev[ii]);
      const double dc = dh[ii] * z[ii];
      dhprev[ii] += dh[ii] * (1.0 - z[ii]);
      da_c[ii] = dc * (1.0 - c[ii] * c[ii]);
      da_z[ii] = dz * z[ii] * (1.0 - z[ii]);
      rh[ii] = r[ii] * hprev[ii];
    }
    // candidate gate
    std::fill(t1.begin(), t1.end(), 0.0);
    matvec_t(w + off.uc, hd, hd, da_c.data(), t1.data());
    for (int i = 0; i < hd; ++i) {
      const std::size_t ii = static_cast<std::size_t>(i);
      da_r[ii] = t1[ii] * hprev[ii] * r[ii] * (1.0 - r[ii]);
      dhprev[ii] += t1[ii] * r[ii];
    }
    for (int i = 0; i < hd; ++i) {
      const std::size_t ii = static_cast<std::size_t>(i);
      grad[static_cast<std::size_t>(off.bz + i)] += da_z[ii];
      grad[static_cast<std::size_t>(off.br + i)] += da_r[ii];
      grad[static_cast<std::size_t>(off.bc + i)] += da_c[ii];
      double* gwz = grad.data() + off.wz + static_cast<std::int64_t>(i) * d;
      double* gwr = grad.data() + off.wr + static_cast<std::int64_t>(i) * d;
      double* gwc = grad.data() + off.wc + static_cast<std::int64_t>(i) * d;
      for (int jx = 0; jx < d; ++jx) {
        gwz[jx] += da_z[ii] * x[jx];
        gwr[jx] += da_r[ii] * x[jx];
        gwc[jx] += da_c[ii] * x[jx];
      }
      double* guz = grad.data() + off.uz + static_cast<std::int64_t>(i) * hd;
      double* gur = grad.data() + off.ur + static_cast<std::int64_t>(i) * hd;
      double* guc = grad.data() + off.uc + static_cast<std::int64_t>(i) * hd;
      for (int jh = 0; jh < hd; ++jh) {
        const std::size_t jj = static_cast<std::size_t>(jh);
        guz[jh] += da_z[ii] * hprev[jj];
        gur[jh] += da_r[ii] * hprev[jj];
        guc[jh] += da_c[ii] * rh[jj];
      }
    }
    matvec_t(w + off.uz, hd, hd, da_z.data(), dhprev.data());
    matvec_t(w + off.ur, hd, hd, da_r.data(), dhprev.data());
    // embedding gradient
    double* gx = grad.data() + off.embed + static_cast<std::int64_t>(tok) * d;
    for (int i = 0; i < hd; ++i) {
      const std::size_t ii = static_cast<std::size_t>(i);
      const double* wz_row = w + off.wz + static_cast<std::int64_t>(i) * d;
      const double* wr_row = w + off.wr + static_cast<std::int64_t>(i) * d;
      const double* wc_row = w + off.wc + static_cast<std::int64_t>(i) * d;
      for (int jx = 0; jx < d; ++jx) {
        gx[jx] += wz_row[jx] * da_z[ii] + wr_row[jx] * da_r[ii] + wc_row[jx] * da_c[ii];
      }
    }
    dh = dhprev;
  }
}

}  // namespace

void add_weighted_logprob_gradient(const PolicyParams& params, std::span<const WeightedSeq> items,
                                   std::span<double> grad) {
  if (grad.size() != params.values.size()) {
    throw std::invalid_argument("gradient buffer size mismatch");
  }
  for (const WeightedSeq& item : items) {
    if (item.prompt == nullptr || item.response == nullptr) {
      throw std::invalid_argument("WeightedSeq with null sequence");
    }
    if (item.coef.size() != item.response->size()) {
      throw std::invalid_argument("coefficient count does not match response length");
    }
    if (item.response->empty()) {
      continue;
    }
    if (params.shape.backend == Backend::tabular) {
      add_gradient_tabular(params, item, grad);
    } else {
      add_gradient_neural(params, item, grad);
    }
  }
}

// ---- checkpoint io ----

namespace {
constexpr std::uint64_t kPolicyMagic = 0x31524f4843594c4fULL;  // "OLYCHOR1"
}

void save_policy(const PolicyParams& params, std::uint64_t vocab_hash, std::uint64_t step,
                 const std::string& path) {
  // shape check only: abort snapshots must be able to carry non-finite values
  params.shape.validate();
  if (static_cast<std::int64_t>(params.values.size()) != params.shape.param_count()) {
    throw ConfigError("parameter vector length does not match shape");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw ConfigError("cannot open for writing: " + path);
  }
  detail::put_u64(out, kPolicyMagic);
  detail::put_u32(out, 1);  // version
  detail::put_u32(out, params.shape.backend == Backend::tabular ? 0u : 1u);
  detail::put_i32(out, params.shape.vocab_size);
  detail::put_i32(out, params.shape.eos_id);
  detail::put_i32(out, params.shape.context_order);
  detail::put_i32(out, params.shape.embed_dim);
  detail::put_i32(out, params.shape.hidden_dim);
  detail::put_u64(out, vocab_hash);
  detail::put_u64(out, step);
  detail::put_u64(out, static_cast<std::uint64_t>(params.values.size()));
  for (double v : params.values) {
    detail::put_f64(out, v);
  }
  if (!out) {
    throw ConfigError("write failed: " + path);
  }
}

LoadedPolicy load_policy(const std::string& path, std::optional<std::uint64_t> expect_vocab_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ConfigError("cannot open checkpoint: " + path);
  }
  if (detail::get_u64(in) != kPolicyMagic) {
    throw ConfigError("not a policy checkpoint: " + path);
  }
  if (detail::get_u32(in) != 1) {
    throw ConfigError("unsupported checkpoint version");
  }
  LoadedPolicy loaded;
  loaded.params.shape.backend = detail::get_u32(in) == 0 ? Backend::tabular : Backend::neural;
  loaded.params.shape.vocab_size = detail::get_i32(in);
  loaded.params.shape.eos_id = detail::get_i32(in);
  loaded.params.shape.context_order = detail::get_i32(in);
  loaded.params.shape.embed_dim = detail::get_i32(in);
  loaded.params.shape.hidden_dim = detail::get_i32(in);
  loaded.vocab_hash = detail::get_u64(in);
  loaded.step = detail::get_u64(in);
  const std::uint64_t n = detail::get_u64(in);
  if (expect_vocab_hash && *expect_vocab_hash != loaded.vocab_hash) {
    throw ConfigError("checkpoint vocab hash mismatch");
  }
  loaded.params.values.resize(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    loaded.params.values[i] = detail::get_f64(in);
  }
  loaded.params.shape.validate();
  if (static_cast<std::int64_t>(n) != loaded.params.shape.param_count()) {
    throw ConfigError("checkpoint parameter count does not match its shape");
  }
  return loaded;
}

}  // namespace chord
