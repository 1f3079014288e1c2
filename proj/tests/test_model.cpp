#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "epitransport/checkpoint.hpp"
#include "epitransport/model.hpp"
#include "epitransport/transport.hpp"

using namespace epitransport;
using tape::Tape;
using tape::Value;
using Catch::Approx;

namespace {

Eigen::MatrixXd rand_mat(Rng& rng, int r, int c, double lo = -1, double hi = 1) {
  Eigen::MatrixXd m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = rng.uniform(lo, hi);
  return m;
}

// Central finite differences over every parameter group of a ModelParams.
// forward must be a pure function of the parameters.
template <class Forward>
void model_gradcheck(model::ModelParams params, Forward forward,
                     const std::vector<Eigen::MatrixXd>& tape_grads, double rel_tol,
                     double fd_step = 1e-5) {
  size_t group = 0;
  params.for_each([&](const char* name, Eigen::MatrixXd& p) {
    Eigen::MatrixXd fd(p.rows(), p.cols());
    for (Eigen::Index i = 0; i < p.rows(); ++i)
      for (Eigen::Index j = 0; j < p.cols(); ++j) {
        const double saved = p(i, j);
        p(i, j) = saved + fd_step;
        const double fp = forward(params);
        p(i, j) = saved - fd_step;
        const double fm = forward(params);
        p(i, j) = saved;
        fd(i, j) = (fp - fm) / (2.0 * fd_step);
      }
    const double denom = std::max(tape_grads[group].norm(), 1e-8);
    const double rel = (fd - tape_grads[group]).norm() / denom;
    INFO("group " << name << " rel err " << rel);
    CHECK(rel <= rel_tol);
    ++group;
  });
}

std::vector<Eigen::MatrixXd> collect_grads(const Tape& t, const model::TapeParams& tp) {
  std::vector<Eigen::MatrixXd> g;
  tp.for_each([&](const char*, const Value& v) { g.push_back(t.grad(v)); });
  return g;
}

}  // namespace

TEST_CASE("model: parameter count matches the closed form") {
  auto check = [](int n, int h) {
    auto p = model::ModelParams::init(n, h, 1);
    const int expected = 7 * h * h + 9 * h + n + 1;
    CHECK(p.total_scalars() == expected);
  };
  check(129, 16);
  check(4, 8);
  check(2, 3);
}

TEST_CASE("model: mapped coefficient ranges hold for arbitrary raw values") {
  // Sigmoid saturates to exactly 1.0 in f64 beyond |raw| ~ 36, so the open
  // interval is probed over the representable regime.
  Rng rng(55);
  for (int it = 0; it < 50; ++it) {
    auto p = model::ModelParams::init(6, 4, static_cast<uint64_t>(it));
    p.k_raw(0, 0) = rng.uniform(-50, 50);
    for (int i = 0; i < 6; ++i) p.gamma_raw(i, 0) = rng.uniform(-30, 30);
    CHECK(p.k() >= 0.0);
    Eigen::VectorXd g = p.gamma();
    CHECK((g.array() > 0.0).all());
    CHECK((g.array() < 1.0).all());
  }
}

TEST_CASE("encoder: all-zero window with zero heads gives zero mean/logvar and samples = eps") {
  auto p = model::ModelParams::init(3, 4, 2);
  p.head_mean_w.setZero();
  p.head_logvar_w.setZero();
  Eigen::MatrixXd window = Eigen::MatrixXd::Zero(3, 7);
  auto latent = model::encode(p, window, 7, 3, 99);
  CHECK(latent.mean.cwiseAbs().maxCoeff() == 0.0);
  CHECK(latent.logvar.cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(latent.samples.size() == 3);
  for (size_t k = 0; k < 3; ++k)
    CHECK((latent.samples[k] - latent.eps[k]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("encoder: deterministic for fixed seed, params and window") {
  auto p = model::ModelParams::init(3, 4, 5);
  Rng rng(7);
  Eigen::MatrixXd window = rand_mat(rng, 3, 7);
  auto a = model::encode(p, window, 7, 2, 42);
  auto b = model::encode(p, window, 7, 2, 42);
  CHECK((a.mean - b.mean).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.logvar - b.logvar).cwiseAbs().maxCoeff() == 0.0);
  for (size_t k = 0; k < 2; ++k)
    CHECK((a.samples[k] - b.samples[k]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("encoder: window length mismatch and NaN input raise") {
  auto p = model::ModelParams::init(3, 4, 5);
  Tape t;
  auto tp = model::TapeParams::put(t, p);
  CHECK_THROWS_AS(model::encode_on_tape(t, tp, Eigen::MatrixXd::Zero(3, 5), 7), Error);
  Eigen::MatrixXd bad = Eigen::MatrixXd::Zero(3, 7);
  bad(1, 2) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(model::encode_on_tape(t, tp, bad, 7), Error);
}

TEST_CASE("encoder: gradient of a scalar of the heads matches finite differences") {
  auto params = model::ModelParams::init(3, 4, 11);
  Rng rng(12);
  params.gamma_raw = rand_mat(rng, 3, 1, -0.3, 0.3);
  params.k_raw(0, 0) = 0.2;
  Eigen::MatrixXd window = rand_mat(rng, 3, 7);

  auto forward = [&](const model::ModelParams& p) {
    Tape t;
    auto tp = model::TapeParams::put(t, p);
    auto enc = model::encode_on_tape(t, tp, window, 7);
    return tape::sum(tape::mul(enc.mean, tape::sigmoid(enc.logvar))).scalar();
  };

  Tape t;
  auto tp = model::TapeParams::put(t, params);
  auto enc = model::encode_on_tape(t, tp, window, 7);
  Value loss = tape::sum(tape::mul(enc.mean, tape::sigmoid(enc.logvar)));
  t.backward(loss);
  model_gradcheck(params, forward, collect_grads(t, tp), 1e-4);
}

TEST_CASE("fuse_mu: zero layer gives 0.5, saturated bias approaches 1") {
  auto p = model::ModelParams::init(3, 4, 1);
  Tape t;
  auto tp = model::TapeParams::put(t, p);
  Rng rng(9);
  Value dif = t.constant(rand_mat(rng, 3, 4));
  Value adv = t.constant(rand_mat(rng, 3, 4));
  Value mu = model::fuse_mu(tp, dif, adv);
  CHECK((mu.value().array() - 0.5).abs().maxCoeff() == 0.0);

  p.mu_b.setConstant(20.0);
  Tape t2;
  auto tp2 = model::TapeParams::put(t2, p);
  Value mu2 = model::fuse_mu(tp2, t2.constant(dif.value()), t2.constant(adv.value()));
  CHECK(mu2.value().minCoeff() > 0.999);
}

TEST_CASE("fuse_mu: matches a straight-line reimplementation") {
  auto p = model::ModelParams::init(2, 3, 4);
  Rng rng(21);
  p.mu_w = rand_mat(rng, 6, 3);
  p.mu_b = rand_mat(rng, 1, 3);
  Eigen::MatrixXd dif = rand_mat(rng, 2, 3);
  Eigen::MatrixXd adv = rand_mat(rng, 2, 3);

  Tape t;
  auto tp = model::TapeParams::put(t, p);
  Value mu = model::fuse_mu(tp, t.constant(dif), t.constant(adv));

  Eigen::MatrixXd cat(2, 6);
  cat << dif, adv;
  Eigen::MatrixXd lin = (cat * p.mu_w).rowwise() + Eigen::RowVectorXd(p.mu_b.row(0));
  Eigen::MatrixXd expect = (1.0 / (1.0 + (-lin.array()).exp())).matrix();
  CHECK((mu.value() - expect).cwiseAbs().maxCoeff() < 1e-14);
}

namespace {

struct FieldFixture {
  Eigen::MatrixXd laplacian;
  Eigen::MatrixXd mobility;  // original orientation (row = from)
  model::FieldOperators ops;
  Eigen::MatrixXd z0;

  FieldFixture(int n, int h, uint64_t seed) {
    Rng rng(seed);
    laplacian = rand_mat(rng, n, n);
    laplacian = (laplacian + laplacian.transpose()).eval();
    mobility = rand_mat(rng, n, n, 0.0, 0.4);
    mobility.diagonal().setZero();
    ops.laplacian = &laplacian;
    ops.mobility_t.push_back(mobility.transpose());
    z0 = rand_mat(rng, n, h, -1.0, 1.0);
  }
};

}  // namespace

TEST_CASE("latent_field: vanishing coefficients give a (numerically) zero field") {
  auto p = model::ModelParams::init(3, 4, 3);
  p.k_raw.setConstant(-40.0);      // softplus -> ~4e-18
  p.gamma_raw.setConstant(-40.0);  // sigmoid -> ~4e-18
  FieldFixture fx(3, 4, 77);
  Tape t;
  auto tp = model::TapeParams::put(t, p);
  model::AblationMask mask{true, false, true};  // mu pinned to 1 + reaction
  Value rate = model::latent_field(tp, fx.ops, 0.0, t.constant(fx.z0), mask);
  CHECK(rate.value().cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("latent_field: matches transport::dar_rate with mu held at the fuse_mu output") {
  auto p = model::ModelParams::init(3, 4, 6);
  Rng rng(31);
  p.mu_w = rand_mat(rng, 8, 4, -0.5, 0.5);
  p.mu_b = rand_mat(rng, 1, 4, -0.5, 0.5);
  p.k_raw(0, 0) = 0.3;
  p.gamma_raw = rand_mat(rng, 3, 1, -1.0, 1.0);
  FieldFixture fx(3, 4, 78);

  Tape t;
  auto tp = model::TapeParams::put(t, p);
  Value rate = model::latent_field(tp, fx.ops, 0.0, t.constant(fx.z0));

  const double k = p.k();
  Eigen::MatrixXd dif = transport::diffusion_rate(fx.laplacian, fx.z0, k);
  Eigen::MatrixXd adv = transport::advection_rate(fx.mobility, fx.z0, false);
  Eigen::MatrixXd cat(3, 8);
  cat << dif, adv;
  Eigen::MatrixXd lin = (cat * p.mu_w).rowwise() + Eigen::RowVectorXd(p.mu_b.row(0));
  transport::TransportCoefficients coeffs;
  coeffs.k = k;
  coeffs.gamma = p.gamma();
  coeffs.mu = (1.0 / (1.0 + (-lin.array()).exp())).matrix();
  Eigen::MatrixXd expect = transport::dar_rate(fx.laplacian, fx.mobility, fx.z0, coeffs);
  CHECK((rate.value() - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("latent_field: gradients w.r.t. coefficient-net parameters match finite differences") {
  auto params = model::ModelParams::init(3, 4, 8);
  Rng rng(41);
  params.mu_w = rand_mat(rng, 8, 4, -0.4, 0.4);
  params.mu_b = rand_mat(rng, 1, 4, -0.4, 0.4);
  params.k_raw(0, 0) = 0.1;
  params.gamma_raw = rand_mat(rng, 3, 1, -0.5, 0.5);
  FieldFixture fx(3, 4, 79);

  auto forward = [&](const model::ModelParams& p) {
    Tape t;
    auto tp = model::TapeParams::put(t, p);
    Value rate = model::latent_field(tp, fx.ops, 0.0, t.constant(fx.z0));
    return tape::sum(tape::mul(rate, rate)).scalar();
  };
  Tape t;
  auto tp = model::TapeParams::put(t, params);
  Value rate = model::latent_field(tp, fx.ops, 0.0, t.constant(fx.z0));
  t.backward(tape::sum(tape::mul(rate, rate)));
  model_gradcheck(params, forward, collect_grads(t, tp), 1e-4);
}

TEST_CASE("latent_field: disabled diffusion is bit-independent of k_raw and the Laplacian") {
  auto p = model::ModelParams::init(3, 4, 9);
  FieldFixture fx(3, 4, 80);
  model::AblationMask mask{false, true, true};

  auto run = [&](const model::ModelParams& pp, const Eigen::MatrixXd& lap) {
    Eigen::MatrixXd lap_copy = lap;
    model::FieldOperators ops;
    ops.laplacian = &lap_copy;
    ops.mobility_t = fx.ops.mobility_t;
    Tape t;
    auto tp = model::TapeParams::put(t, pp);
    return Eigen::MatrixXd(model::latent_field(tp, ops, 0.0, t.constant(fx.z0), mask).value());
  };
  Eigen::MatrixXd base = run(p, fx.laplacian);
  p.k_raw(0, 0) = 1234.5;
  Eigen::MatrixXd perturbed_k = run(p, fx.laplacian);
  Eigen::MatrixXd perturbed_l = run(p, Eigen::MatrixXd(10.0 * fx.laplacian));
  CHECK((base - perturbed_k).cwiseAbs().maxCoeff() == 0.0);
  CHECK((base - perturbed_l).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("decode: identity on positive values for K=1, H=1, identity normalization") {
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(3);
  Eigen::VectorXd std1 = Eigen::VectorXd::Ones(3);
  std::vector<std::vector<Eigen::MatrixXd>> traj(2);
  Eigen::MatrixXd a(3, 1);
  a << 1.5, 2.5, 0.25;
  Eigen::MatrixXd b(3, 1);
  b << 4, 5, 6;
  traj[0] = {a};
  traj[1] = {b};
  Eigen::MatrixXd out = model::decode(traj, mean, std1);
  CHECK((out.col(0) - a.col(0)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((out.col(1) - b.col(0)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("decode: averages samples and clamps negative sums at zero") {
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(2);
  Eigen::VectorXd std1 = Eigen::VectorXd::Ones(2);
  Eigen::MatrixXd a(2, 1), b(2, 1);
  a << 2, -3;
  b << 4, -5;
  std::vector<std::vector<Eigen::MatrixXd>> traj{{a, b}};
  Eigen::MatrixXd out = model::decode(traj, mean, std1);
  CHECK(out(0, 0) == Approx(3.0));  // (2+4)/2
  CHECK(out(1, 0) == 0.0);          // clamped
  CHECK_THROWS_AS(model::decode({}, mean, std1), Error);
}

TEST_CASE("full model: loss gradient matches central finite differences on a tiny instance") {
  const int n = 4, w = 7, h = 3, hidden = 4, k_samples = 2;
  auto params = model::ModelParams::init(n, hidden, 13);
  Rng rng(71);
  params.mu_w = rand_mat(rng, 2 * hidden, hidden, -0.3, 0.3);
  params.gamma_raw = rand_mat(rng, n, 1, -0.5, 0.5);

  FieldFixture fx(n, hidden, 81);
  std::vector<Eigen::MatrixXd> eps;
  for (int k = 0; k < k_samples; ++k) eps.push_back(rand_mat(rng, n, hidden));
  Eigen::MatrixXd window = rand_mat(rng, n, w);
  Eigen::MatrixXd target = rand_mat(rng, n, h, 0.0, 8.0);
  Eigen::VectorXd nmean = Eigen::VectorXd::Constant(n, 2.0);
  Eigen::VectorXd nstd = Eigen::VectorXd::Constant(n, 1.5);
  odeint::SolverConfig solver;
  solver.method = odeint::Method::rk4;
  solver.fixed_dt = 0.5;

  auto forward = [&](const model::ModelParams& p) {
    Tape t;
    auto tp = model::TapeParams::put(t, p);
    auto out = model::forward_sample(t, tp, fx.ops, solver, model::AblationMask::full(), window, w, h,
                                     eps, nmean, nstd, &target);
    return out.loss.scalar();
  };

  Tape t;
  auto tp = model::TapeParams::put(t, params);
  auto out = model::forward_sample(t, tp, fx.ops, solver, model::AblationMask::full(), window, w, h,
                                   eps, nmean, nstd, &target);
  t.backward(out.loss);
  model_gradcheck(params, forward, collect_grads(t, tp), 1e-4);
}

TEST_CASE("checkpoint: JSON round-trip restores parameters bit-exactly") {
  auto params = model::ModelParams::init(5, 4, 21);
  Rng rng(90);
  params.for_each([&rng](const char*, Eigen::MatrixXd& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.uniform(-2, 2);
  });
  checkpoint::json meta{{"regions", 5}, {"hidden", 4}, {"window", 7}, {"latent_samples", 2}};
  checkpoint::json doc = checkpoint::to_json(params, meta, checkpoint::json::object(), "deadbeef");
  auto restored = checkpoint::from_json(doc);
  bool identical = true;
  size_t gi = 0;
  std::vector<const Eigen::MatrixXd*> orig;
  params.for_each([&orig](const char*, const Eigen::MatrixXd& m) { orig.push_back(&m); });
  restored.params.for_each([&](const char*, const Eigen::MatrixXd& m) {
    if ((m - *orig[gi]).cwiseAbs().maxCoeff() != 0.0) identical = false;
    ++gi;
  });
  CHECK(identical);
  CHECK(restored.regions() == 5);
  CHECK(restored.hidden() == 4);
}
