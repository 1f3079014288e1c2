#pragma once

#include <Eigen/Dense>
#include <span>
#include <string>
#include <vector>

#include "epitransport/common.hpp"
#include "epitransport/graph.hpp"
#include "epitransport/odeint.hpp"
#include "epitransport/tape.hpp"

namespace epitransport::model {

struct ModelConfig {
  int hidden = 16;          // GRU / latent channel count H
  int window = 7;           // observation window w
  int latent_samples = 5;   // K reparameterized draws
  bool conservative_advection = false;

  void validate() const {
    if (hidden < 1) throw_config("model hidden dimension must be >= 1");
    if (window < 1) throw_config("model window must be >= 1");
    if (latent_samples < 1) throw_config("model latent_samples must be >= 1");
  }
};

/// Which transport branches are active. The full model keeps all three; the
/// ablation harness hard-zeroes disabled branches and pins mu so a surviving
/// inter-regional branch keeps full weight.
struct AblationMask {
  bool diffusion = true;
  bool advection = true;
  bool reaction = true;

  static AblationMask full() { return {}; }

  std::string name() const {
    if (diffusion && advection && reaction) return "full";
    std::string parts;
    auto append = [&parts](const char* p) {
      if (!parts.empty()) parts += "-";
      parts += p;
    };
    if (diffusion) append("dif");
    if (advection) append("adv");
    if (reaction) append("rea");
    if (parts.empty()) throw_config("ablation mask must keep at least one branch");
    if (parts == "dif" || parts == "adv" || parts == "rea") parts += "-only";
    return parts;
  }

  static AblationMask from_name(const std::string& s) {
    if (s == "full") return full();
    AblationMask m{false, false, false};
    if (s.find("dif") != std::string::npos) m.diffusion = true;
    if (s.find("adv") != std::string::npos) m.advection = true;
    if (s.find("rea") != std::string::npos) m.reaction = true;
    if (!m.diffusion && !m.advection && !m.reaction)
      throw_config("unknown ablation mask '" + s + "'");
    return m;
  }

  /// The seven masks of the ablation study: full + six variants.
  static std::vector<AblationMask> all_variants() {
    return {full(),
            {true, false, false},
            {false, true, false},
            {false, false, true},
            {true, true, false},
            {true, false, true},
            {false, true, true}};
  }
};

/// All learnable parameters. Iteration order of for_each is the canonical
/// parameter order used by the optimizer, gradient checks and checkpoints.
struct ModelParams {
  // GRU gates (input dim 1, hidden H): r = reset, z = update, n = candidate.
  Eigen::MatrixXd gru_w_r, gru_u_r, gru_b_r;
  Eigen::MatrixXd gru_w_z, gru_u_z, gru_b_z;
  Eigen::MatrixXd gru_w_n, gru_u_n, gru_b_n;
  // Linear heads from the final hidden state to latent mean / log-variance.
  Eigen::MatrixXd head_mean_w, head_mean_b;
  Eigen::MatrixXd head_logvar_w, head_logvar_b;
  // Coefficient nets: softplus(k_raw) >= 0, sigmoid(gamma_raw) in (0,1),
  // and the fusion layer producing mu from the two branch representations.
  Eigen::MatrixXd k_raw;      // 1 x 1
  Eigen::MatrixXd gamma_raw;  // N x 1
  Eigen::MatrixXd mu_w;       // 2H x H
  Eigen::MatrixXd mu_b;       // 1 x H

  template <class F>
  void for_each(F&& f) {
    f("gru.w_r", gru_w_r); f("gru.u_r", gru_u_r); f("gru.b_r", gru_b_r);
    f("gru.w_z", gru_w_z); f("gru.u_z", gru_u_z); f("gru.b_z", gru_b_z);
    f("gru.w_n", gru_w_n); f("gru.u_n", gru_u_n); f("gru.b_n", gru_b_n);
    f("head.mean.w", head_mean_w); f("head.mean.b", head_mean_b);
    f("head.logvar.w", head_logvar_w); f("head.logvar.b", head_logvar_b);
    f("ode.k_raw", k_raw); f("ode.gamma_raw", gamma_raw);
    f("ode.mu.w", mu_w); f("ode.mu.b", mu_b);
  }

  template <class F>
  void for_each(F&& f) const {
    const_cast<ModelParams*>(this)->for_each(
        [&f](const char* name, Eigen::MatrixXd& m) { f(name, static_cast<const Eigen::MatrixXd&>(m)); });
  }

  int regions() const { return static_cast<int>(gamma_raw.rows()); }
  int hidden() const { return static_cast<int>(gru_u_r.rows()); }

  int total_scalars() const {
    int n = 0;
    for_each([&n](const char*, const Eigen::MatrixXd& m) { n += static_cast<int>(m.size()); });
    return n;
  }

  /// Weights uniform in +-1/sqrt(fan_in), biases zero, raw coefficients zero
  /// (k ~ 0.693 after softplus, gamma = mu = 0.5 after sigmoid).
  static ModelParams init(int n_regions, int hidden, uint64_t seed) {
    if (n_regions < 1 || hidden < 1) throw_config("invalid model dimensions");
    Rng rng(derive_seed(seed, "param-init"));
    auto uniform_fan = [&rng](int rows, int cols, int fan_in) {
      Eigen::MatrixXd m(rows, cols);
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = rng.uniform(-bound, bound);
      return m;
    };
    const int h = hidden;
    ModelParams p;
    p.gru_w_r = uniform_fan(1, h, 1);
    p.gru_u_r = uniform_fan(h, h, h);
    p.gru_b_r = Eigen::MatrixXd::Zero(1, h);
    p.gru_w_z = uniform_fan(1, h, 1);
    p.gru_u_z = uniform_fan(h, h, h);
    p.gru_b_z = Eigen::MatrixXd::Zero(1, h);
    p.gru_w_n = uniform_fan(1, h, 1);
    p.gru_u_n = uniform_fan(h, h, h);
    p.gru_b_n = Eigen::MatrixXd::Zero(1, h);
    p.head_mean_w = uniform_fan(h, h, h);
    p.head_mean_b = Eigen::MatrixXd::Zero(1, h);
    p.head_logvar_w = uniform_fan(h, h, h);
    // The objective has no KL term, so latent noise is pure nuisance at the
    // optimum; starting the log-variance low (std ~ 0.14) shortens the long
    // slow descent from unit noise.
    p.head_logvar_b = Eigen::MatrixXd::Constant(1, h, -4.0);
    p.k_raw = Eigen::MatrixXd::Constant(1, 1, -2.0);
    p.gamma_raw = Eigen::MatrixXd::Constant(n_regions, 1, -2.0);
    p.mu_w = Eigen::MatrixXd::Zero(2 * h, h);
    p.mu_b = Eigen::MatrixXd::Zero(1, h);
    return p;
  }

  Eigen::VectorXd gamma() const {
    return (1.0 / (1.0 + (-gamma_raw.col(0).array()).exp())).matrix();
  }
  double k() const {
    const double x = k_raw(0, 0);
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
  }
};

/// Tape leaves for one forward/backward pass.
struct TapeParams {
  tape::Value gru_w_r, gru_u_r, gru_b_r;
  tape::Value gru_w_z, gru_u_z, gru_b_z;
  tape::Value gru_w_n, gru_u_n, gru_b_n;
  tape::Value head_mean_w, head_mean_b;
  tape::Value head_logvar_w, head_logvar_b;
  tape::Value k_raw, gamma_raw, mu_w, mu_b;

  static TapeParams put(tape::Tape& t, const ModelParams& p) {
    TapeParams tp;
    tp.gru_w_r = t.leaf(p.gru_w_r); tp.gru_u_r = t.leaf(p.gru_u_r); tp.gru_b_r = t.leaf(p.gru_b_r);
    tp.gru_w_z = t.leaf(p.gru_w_z); tp.gru_u_z = t.leaf(p.gru_u_z); tp.gru_b_z = t.leaf(p.gru_b_z);
    tp.gru_w_n = t.leaf(p.gru_w_n); tp.gru_u_n = t.leaf(p.gru_u_n); tp.gru_b_n = t.leaf(p.gru_b_n);
    tp.head_mean_w = t.leaf(p.head_mean_w); tp.head_mean_b = t.leaf(p.head_mean_b);
    tp.head_logvar_w = t.leaf(p.head_logvar_w); tp.head_logvar_b = t.leaf(p.head_logvar_b);
    tp.k_raw = t.leaf(p.k_raw); tp.gamma_raw = t.leaf(p.gamma_raw);
    tp.mu_w = t.leaf(p.mu_w); tp.mu_b = t.leaf(p.mu_b);
    return tp;
  }

  template <class F>
  void for_each(F&& f) const {
    f("gru.w_r", gru_w_r); f("gru.u_r", gru_u_r); f("gru.b_r", gru_b_r);
    f("gru.w_z", gru_w_z); f("gru.u_z", gru_u_z); f("gru.b_z", gru_b_z);
    f("gru.w_n", gru_w_n); f("gru.u_n", gru_u_n); f("gru.b_n", gru_b_n);
    f("head.mean.w", head_mean_w); f("head.mean.b", head_mean_b);
    f("head.logvar.w", head_logvar_w); f("head.logvar.b", head_logvar_b);
    f("ode.k_raw", k_raw); f("ode.gamma_raw", gamma_raw);
    f("ode.mu.w", mu_w); f("ode.mu.b", mu_b);
  }
};

// ---------------------------------------------------------------------------
// Encoder
// ---------------------------------------------------------------------------

struct EncoderNodes {
  tape::Value mean;
  tape::Value logvar;
};

/// Runs the GRU over the w window columns (each region one scalar sequence,
/// weights shared across regions) and applies the two latent heads.
inline EncoderNodes encode_on_tape(tape::Tape& t, const TapeParams& p, const Eigen::MatrixXd& window,
                                   int expected_window) {
  if (static_cast<int>(window.cols()) != expected_window)
    throw_shape("encoder window has " + std::to_string(window.cols()) + " steps, expected " +
                std::to_string(expected_window));
  if (!window.allFinite()) throw_data("encoder window contains non-finite values");
  const Eigen::Index n = window.rows();
  const Eigen::Index h = p.gru_u_r.value().rows();

  tape::Value hidden = t.constant(Eigen::MatrixXd::Zero(n, h));
  for (Eigen::Index step = 0; step < window.cols(); ++step) {
    tape::Value x = t.constant(window.col(step));  // N x 1
    tape::Value r = tape::sigmoid(tape::add_rowvec(
        tape::add(tape::matmul(x, p.gru_w_r), tape::matmul(hidden, p.gru_u_r)), p.gru_b_r));
    tape::Value z = tape::sigmoid(tape::add_rowvec(
        tape::add(tape::matmul(x, p.gru_w_z), tape::matmul(hidden, p.gru_u_z)), p.gru_b_z));
    tape::Value cand = tape::tanh_op(tape::add_rowvec(
        tape::add(tape::matmul(x, p.gru_w_n), tape::mul(r, tape::matmul(hidden, p.gru_u_n))),
        p.gru_b_n));
    // h' = (1 - z) .* n + z .* h
    tape::Value one_minus_z = tape::add_const(tape::neg(z), Eigen::MatrixXd::Ones(n, h));
    hidden = tape::add(tape::mul(one_minus_z, cand), tape::mul(z, hidden));
  }
  EncoderNodes out;
  out.mean = tape::add_rowvec(tape::matmul(hidden, p.head_mean_w), p.head_mean_b);
  out.logvar = tape::add_rowvec(tape::matmul(hidden, p.head_logvar_w), p.head_logvar_b);
  return out;
}

/// Per-region latent mean/log-variance plus K reparameterized draws, with the
/// recorded noise. Plain-value view of the tape encoder.
struct LatentState {
  Eigen::MatrixXd mean;
  Eigen::MatrixXd logvar;
  std::vector<Eigen::MatrixXd> samples;
  std::vector<Eigen::MatrixXd> eps;
};

inline std::vector<Eigen::MatrixXd> draw_eps(Eigen::Index n, Eigen::Index h, int k, uint64_t seed) {
  std::vector<Eigen::MatrixXd> eps;
  eps.reserve(static_cast<size_t>(k));
  Rng rng(seed);
  for (int s = 0; s < k; ++s) {
    Eigen::MatrixXd e(n, h);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < h; ++j) e(i, j) = rng.normal();
    eps.push_back(std::move(e));
  }
  return eps;
}

inline LatentState encode(const ModelParams& params, const Eigen::MatrixXd& window, int window_len,
                          int latent_samples, uint64_t rng_seed) {
  tape::Tape t;
  TapeParams tp = TapeParams::put(t, params);
  EncoderNodes enc = encode_on_tape(t, tp, window, window_len);
  LatentState out;
  out.mean = enc.mean.value();
  out.logvar = enc.logvar.value();
  out.eps = draw_eps(window.rows(), enc.mean.cols(), latent_samples, rng_seed);
  for (const auto& e : out.eps) {
    out.samples.push_back(out.mean +
                          ((0.5 * out.logvar.array()).exp() * e.array()).matrix());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Neural ODE vector field
// ---------------------------------------------------------------------------

/// mu = sigmoid(linear(concat(dif_repr, adv_repr))).
inline tape::Value fuse_mu(const TapeParams& p, tape::Value dif_repr, tape::Value adv_repr) {
  tape::Value cat = tape::concat_cols(dif_repr, adv_repr);
  return tape::sigmoid(tape::add_rowvec(tape::matmul(cat, p.mu_w), p.mu_b));
}

/// Precomputed per-day operators for the field: the caller owns these for the
/// lifetime of any tape that references them.
struct FieldOperators {
  const Eigen::MatrixXd* laplacian = nullptr;       // N x N
  std::vector<Eigen::MatrixXd> mobility_t;          // per day, transposed scaled mobility
  std::vector<Eigen::VectorXd> mobility_out_rate;   // per day, row sums (conservative variant)
  bool conservative = false;

  /// Mobility snapshots are daily; inside [t0, t0+h] the most recent observed
  /// snapshot applies on each unit interval.
  Eigen::Index day_index(double local_t) const {
    auto last = static_cast<Eigen::Index>(mobility_t.size()) - 1;
    auto idx = static_cast<Eigen::Index>(std::floor(local_t));
    if (idx < 0) idx = 0;
    if (idx > last) idx = last;
    return idx;
  }
};

/// Fused vector field on the latent state (Hadamard fusion of the diffusion
/// and advection branches plus the per-region reaction term).
inline tape::Value latent_field(const TapeParams& p, const FieldOperators& ops, double local_t,
                                tape::Value z, const AblationMask& mask = AblationMask::full()) {
  tape::Tape& t = *z.tape();
  tape::Value out;
  bool has_out = false;

  tape::Value dif_repr, adv_repr;
  if (mask.diffusion) {
    tape::Value k = tape::softplus(p.k_raw);
    dif_repr = tape::neg(tape::scale_by(k, tape::matmul_const_left(ops.laplacian, z)));
  }
  if (mask.advection) {
    const Eigen::Index d = ops.day_index(local_t);
    adv_repr = tape::matmul_const_left(&ops.mobility_t[static_cast<size_t>(d)], z);
    if (ops.conservative)
      adv_repr = tape::sub(adv_repr,
                           tape::mul_colvec_const(z, ops.mobility_out_rate[static_cast<size_t>(d)]));
  }

  if (mask.diffusion && mask.advection) {
    tape::Value mu = fuse_mu(p, dif_repr, adv_repr);
    tape::Value one_minus_mu =
        tape::add_const(tape::neg(mu), Eigen::MatrixXd::Ones(mu.rows(), mu.cols()));
    out = tape::sub(tape::mul(mu, dif_repr), tape::mul(one_minus_mu, adv_repr));
    has_out = true;
  } else if (mask.diffusion) {
    out = dif_repr;  // mu pinned to 1
    has_out = true;
  } else if (mask.advection) {
    out = tape::neg(adv_repr);  // mu pinned to 0
    has_out = true;
  }

  if (mask.reaction) {
    tape::Value gamma = tape::sigmoid(p.gamma_raw);
    tape::Value rea = tape::mul_colvec(z, gamma);
    out = has_out ? tape::add(out, rea) : rea;
    has_out = true;
  }
  if (!has_out) out = t.constant(Eigen::MatrixXd::Zero(z.rows(), z.cols()));
  return out;
}

// ---------------------------------------------------------------------------
// Decoder
// ---------------------------------------------------------------------------

/// Average over K samples, sum the latent channels per region, de-normalize
/// with the train statistics, clamp at zero.
inline tape::Value decode_step(std::span<const tape::Value> samples, const Eigen::VectorXd& norm_mean,
                               const Eigen::VectorXd& norm_std) {
  if (samples.empty()) throw_shape("decode: empty sample list");
  std::vector<double> coef(samples.size(), 1.0 / static_cast<double>(samples.size()));
  std::vector<const tape::Value*> terms;
  terms.reserve(samples.size());
  for (const auto& s : samples) terms.push_back(&s);
  tape::Value avg = tape::linear_comb(coef, terms);
  tape::Value per_region = tape::sum_cols(avg);  // N x 1
  tape::Value denorm = tape::add_colvec_const(tape::mul_colvec_const(per_region, norm_std), norm_mean);
  return tape::relu(denorm);
}

/// Plain-value decode of a full horizon trajectory: traj[step][k] is N x H.
inline Eigen::MatrixXd decode(const std::vector<std::vector<Eigen::MatrixXd>>& traj,
                              const Eigen::VectorXd& norm_mean, const Eigen::VectorXd& norm_std) {
  if (traj.empty()) throw_shape("decode: empty trajectory");
  const Eigen::Index n = traj[0][0].rows();
  Eigen::MatrixXd out(n, static_cast<Eigen::Index>(traj.size()));
  for (size_t step = 0; step < traj.size(); ++step) {
    if (traj[step].empty()) throw_shape("decode: empty sample list");
    Eigen::MatrixXd avg = Eigen::MatrixXd::Zero(n, traj[step][0].cols());
    for (const auto& s : traj[step]) avg += s;
    avg /= static_cast<double>(traj[step].size());
    Eigen::VectorXd sums = avg.rowwise().sum();
    out.col(static_cast<Eigen::Index>(step)) =
        (sums.array() * norm_std.array() + norm_mean.array()).max(0.0);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Full forward pass for one window sample
// ---------------------------------------------------------------------------

struct ForwardOutput {
  Eigen::MatrixXd predictions;  // N x h, raw case scale
  tape::Value loss;             // valid only when a target was supplied
};

/// Encodes the window, integrates K latent draws over [0, h] and decodes each
/// horizon step; when target_raw is non-null also builds the RMSE loss node
/// sqrt((1/h) sum_k ||X_k - Xhat_k||^2).
inline ForwardOutput forward_sample(tape::Tape& t, const TapeParams& p, const FieldOperators& ops,
                                    const odeint::SolverConfig& solver, const AblationMask& mask,
                                    const Eigen::MatrixXd& window_norm, int window_len, int horizon,
                                    std::span<const Eigen::MatrixXd> eps,
                                    const Eigen::VectorXd& norm_mean, const Eigen::VectorXd& norm_std,
                                    const Eigen::MatrixXd* target_raw) {
  if (horizon < 1) throw_shape("forward: horizon must be >= 1");
  if (eps.empty()) throw_shape("forward: need at least one latent sample");

  EncoderNodes enc = encode_on_tape(t, p, window_norm, window_len);

  std::vector<double> grid(static_cast<size_t>(horizon) + 1);
  for (int i = 0; i <= horizon; ++i) grid[static_cast<size_t>(i)] = static_cast<double>(i);

  auto field = [&](double local_t, const tape::Value& z) {
    return latent_field(p, ops, local_t, z, mask);
  };

  // trajectories[k][step] for step in 1..h
  std::vector<std::vector<tape::Value>> trajectories;
  trajectories.reserve(eps.size());
  for (const auto& e : eps) {
    tape::Value z0 = tape::reparameterize(enc.mean, enc.logvar, e);
    trajectories.push_back(odeint::integrate(field, z0, grid, solver));
  }

  ForwardOutput out;
  out.predictions.resize(window_norm.rows(), horizon);
  std::vector<tape::Value> step_sq;
  for (int step = 1; step <= horizon; ++step) {
    std::vector<tape::Value> at_step;
    at_step.reserve(eps.size());
    for (const auto& traj : trajectories) at_step.push_back(traj[static_cast<size_t>(step)]);
    tape::Value pred = decode_step(at_step, norm_mean, norm_std);
    out.predictions.col(step - 1) = pred.value().col(0);
    if (target_raw != nullptr) {
      tape::Value diff = tape::add_const(pred, -target_raw->col(step - 1));
      step_sq.push_back(tape::sum(tape::mul(diff, diff)));
    }
  }
  if (target_raw != nullptr) {
    std::vector<double> coef(step_sq.size(), 1.0 / static_cast<double>(horizon));
    std::vector<const tape::Value*> terms;
    for (const auto& s : step_sq) terms.push_back(&s);
    out.loss = tape::sqrt_op(tape::linear_comb(coef, terms));
  }
  return out;
}

}  // namespace epitransport::model
