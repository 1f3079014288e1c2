#include <catch2/catch_amalgamated.hpp>

#include "epitransport/graph.hpp"
#include "epitransport/odeint.hpp"
#include "epitransport/transport.hpp"

using namespace epitransport;
using Catch::Approx;

namespace {

Eigen::MatrixXd random_matrix(Rng& rng, int r, int c, double lo = -1, double hi = 1) {
  Eigen::MatrixXd m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = rng.uniform(lo, hi);
  return m;
}

}  // namespace

TEST_CASE("diffusion_rate: constant state under the combinatorial Laplacian is exactly zero") {
  Eigen::MatrixXd d(3, 3);
  d << 0, 1, 2, 1, 0, 4, 2, 4, 0;
  auto g = graph::build_region_graph_from_distances({"a", "b", "c"}, d);
  Eigen::MatrixXd x = Eigen::MatrixXd::Constant(3, 2, 3.7);
  Eigen::MatrixXd rate = transport::diffusion_rate(g.laplacian_comb, x, 1.3);
  CHECK(rate.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("diffusion_rate: k = 0 gives zero rate") {
  Rng rng(3);
  Eigen::MatrixXd l = random_matrix(rng, 4, 4);
  Eigen::MatrixXd x = random_matrix(rng, 4, 2);
  CHECK(transport::diffusion_rate(l, x, 0.0).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("diffusion_rate: 2-region hand evaluation of -k (D - W) X") {
  Eigen::MatrixXd w(2, 2);
  w << 0, 0.5, 0.5, 0;
  Eigen::MatrixXd lcomb = Eigen::MatrixXd(w.rowwise().sum().asDiagonal()) - w;
  Eigen::MatrixXd x(2, 1);
  x << 4, 0;
  Eigen::MatrixXd rate = transport::diffusion_rate(lcomb, x, 1.0);
  CHECK(rate(0, 0) == Approx(-2.0));
  CHECK(rate(1, 0) == Approx(2.0));
}

TEST_CASE("diffusion_rate: shape mismatch raises") {
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(3, 3);
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(4, 1);
  CHECK_THROWS_AS(transport::diffusion_rate(l, x, 1.0), Error);
}

TEST_CASE("advection_rate: zero mobility gives zero rate") {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(3, 3);
  Rng rng(4);
  Eigen::MatrixXd x = random_matrix(rng, 3, 2);
  CHECK(transport::advection_rate(m, x, false).cwiseAbs().maxCoeff() == 0.0);
  CHECK(transport::advection_rate(m, x, true).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("advection_rate: conservative variant sums to zero over regions") {
  Rng rng(8);
  Eigen::MatrixXd m = random_matrix(rng, 5, 5, 0.0, 2.0);
  m.diagonal().setZero();
  Eigen::MatrixXd x = random_matrix(rng, 5, 3, 0.0, 10.0);
  Eigen::MatrixXd rate = transport::advection_rate(m, x, true);
  for (int c = 0; c < 3; ++c) CHECK(std::abs(rate.col(c).sum()) < 1e-10);
}

TEST_CASE("advection_rate: 2-region hand evaluation of inflow - outflow") {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(2, 2);
  m(0, 1) = 3.0;  // flow 3 from region 0 to region 1
  Eigen::MatrixXd x(2, 1);
  x << 5, 1;
  Eigen::MatrixXd rate = transport::advection_rate(m, x, true);
  CHECK(rate(0, 0) == Approx(-15.0));
  CHECK(rate(1, 0) == Approx(15.0));
  // Non-conservative (inflow only) keeps the inflow row.
  Eigen::MatrixXd inflow = transport::advection_rate(m, x, false);
  CHECK(inflow(0, 0) == Approx(0.0));
  CHECK(inflow(1, 0) == Approx(15.0));
}

TEST_CASE("advection_rate: negative mobility entry raises a validation error") {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(2, 2);
  m(0, 1) = -0.5;
  Eigen::MatrixXd x = Eigen::MatrixXd::Ones(2, 1);
  try {
    transport::advection_rate(m, x, false);
    FAIL("expected validation error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::data);
  }
}

TEST_CASE("reaction_rate: zero gamma or zero state gives zero") {
  Rng rng(5);
  Eigen::MatrixXd x = random_matrix(rng, 3, 2);
  CHECK(transport::reaction_rate(x, Eigen::VectorXd::Zero(3)).cwiseAbs().maxCoeff() == 0.0);
  Eigen::VectorXd gam(3);
  gam << 0.2, 0.4, 0.9;
  CHECK(transport::reaction_rate(Eigen::MatrixXd::Zero(3, 2), gam).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("reaction_rate: hand evaluation with gamma (0.5, 0.25)") {
  Eigen::VectorXd gam(2);
  gam << 0.5, 0.25;
  Eigen::MatrixXd x(2, 1);
  x << 2, 8;
  Eigen::MatrixXd rate = transport::reaction_rate(x, gam);
  CHECK(rate(0, 0) == Approx(1.0));
  CHECK(rate(1, 0) == Approx(2.0));
}

TEST_CASE("reaction_rate: gamma length mismatch raises") {
  CHECK_THROWS_AS(transport::reaction_rate(Eigen::MatrixXd::Zero(3, 1), Eigen::VectorXd::Zero(2)), Error);
}

TEST_CASE("dar_rate: mu = 1, gamma = 0 isolates the diffusion branch") {
  Rng rng(11);
  Eigen::MatrixXd d(3, 3);
  d << 0, 1, 2, 1, 0, 4, 2, 4, 0;
  auto g = graph::build_region_graph_from_distances({"a", "b", "c"}, d);
  Eigen::MatrixXd m = random_matrix(rng, 3, 3, 0.0, 1.0);
  m.diagonal().setZero();
  Eigen::MatrixXd x = random_matrix(rng, 3, 2);

  transport::TransportCoefficients coeffs;
  coeffs.k = 0.7;
  coeffs.gamma = Eigen::VectorXd::Zero(3);
  coeffs.mu = Eigen::MatrixXd::Ones(3, 1);
  Eigen::MatrixXd rate = transport::dar_rate(g.laplacian_norm, m, x, coeffs);
  Eigen::MatrixXd dif = transport::diffusion_rate(g.laplacian_norm, x, coeffs.k);
  CHECK((rate - dif).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("dar_rate: mu = 0 removes the diffusion contribution entirely") {
  Rng rng(12);
  Eigen::MatrixXd l = random_matrix(rng, 3, 3);
  Eigen::MatrixXd m = random_matrix(rng, 3, 3, 0.0, 1.0);
  Eigen::MatrixXd x = random_matrix(rng, 3, 2);
  transport::TransportCoefficients coeffs;
  coeffs.gamma = Eigen::VectorXd::Zero(3);
  coeffs.mu = Eigen::MatrixXd::Zero(3, 1);
  coeffs.k = 0.9;
  Eigen::MatrixXd r1 = transport::dar_rate(l, m, x, coeffs);
  coeffs.k = 123.0;
  Eigen::MatrixXd r2 = transport::dar_rate(l, m, x, coeffs);
  CHECK((r1 - r2).cwiseAbs().maxCoeff() == 0.0);
  Eigen::MatrixXd adv = transport::advection_rate(m, x, false);
  CHECK((r1 + adv).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("dar_rate: equals the manual sum of the three branch calls") {
  Rng rng(13);
  Eigen::MatrixXd l = random_matrix(rng, 3, 3);
  Eigen::MatrixXd m = random_matrix(rng, 3, 3, 0.0, 1.0);
  Eigen::MatrixXd x = random_matrix(rng, 3, 2);
  transport::TransportCoefficients coeffs;
  coeffs.k = 0.8;
  coeffs.gamma = Eigen::VectorXd(3);
  coeffs.gamma << 0.2, 0.5, 0.7;
  coeffs.mu = random_matrix(rng, 3, 2, 0.05, 0.95);

  Eigen::MatrixXd expected =
      coeffs.mu.array() * transport::diffusion_rate(l, x, coeffs.k).array() -
      (1.0 - coeffs.mu.array()) * transport::advection_rate(m, x, false).array() +
      transport::reaction_rate(x, coeffs.gamma).array();
  Eigen::MatrixXd rate = transport::dar_rate(l, m, x, coeffs);
  CHECK((rate - expected).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("dar_rate: field is linear in the state") {
  Rng rng(14);
  Eigen::MatrixXd l = random_matrix(rng, 4, 4);
  Eigen::MatrixXd m = random_matrix(rng, 4, 4, 0.0, 1.0);
  Eigen::MatrixXd x = random_matrix(rng, 4, 2);
  Eigen::MatrixXd y = random_matrix(rng, 4, 2);
  transport::TransportCoefficients coeffs;
  coeffs.k = 0.4;
  coeffs.gamma = Eigen::VectorXd::Constant(4, 0.3);
  coeffs.mu = random_matrix(rng, 4, 1, 0.1, 0.9);
  const double a = 1.7, b = -0.6;
  Eigen::MatrixXd lhs = transport::dar_rate(l, m, a * x + b * y, coeffs);
  Eigen::MatrixXd rhs =
      a * transport::dar_rate(l, m, x, coeffs) + b * transport::dar_rate(l, m, y, coeffs);
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("mass conservation: 100 RK4 steps of pure diffusion and conservative advection") {
  Rng rng(15);
  std::vector<std::string> ids;
  std::vector<std::array<double, 2>> cents;
  for (int i = 0; i < 6; ++i) {
    ids.push_back("r" + std::to_string(i));
    cents.push_back({rng.uniform(42, 52), rng.uniform(-2, 8)});
  }
  auto g = graph::build_region_graph(ids, cents);
  Eigen::MatrixXd m = random_matrix(rng, 6, 6, 0.0, 0.3);
  m.diagonal().setZero();
  Eigen::MatrixXd x0 = random_matrix(rng, 6, 1, 1.0, 10.0);
  const double total0 = x0.sum();

  std::vector<double> grid(101);
  for (int i = 0; i <= 100; ++i) grid[static_cast<size_t>(i)] = 0.05 * i;

  auto dif_field = [&](double, const Eigen::MatrixXd& x) {
    return transport::diffusion_rate(g.laplacian_comb, x, 0.9);
  };
  auto traj = odeint::integrate_fixed(dif_field, x0, grid, odeint::Method::rk4, 0.05);
  CHECK(std::abs(traj.back().sum() - total0) < 1e-8);

  auto adv_field = [&](double, const Eigen::MatrixXd& x) {
    return transport::advection_rate(m, x, true);
  };
  auto traj2 = odeint::integrate_fixed(adv_field, x0, grid, odeint::Method::rk4, 0.05);
  CHECK(std::abs(traj2.back().sum() - total0) < 1e-8);
}
