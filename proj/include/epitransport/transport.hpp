#pragma once

#include <Eigen/Dense>

#include "epitransport/common.hpp"

namespace epitransport::transport {

/// Coefficients of the fused transport field. gamma is per-region; mu is
/// per-region (N x 1) or per-region-per-channel (N x C).
struct TransportCoefficients {
  double k = 0.0;
  Eigen::VectorXd gamma;
  Eigen::MatrixXd mu;

  // The coefficient networks produce the open interval (0,1) by construction;
  // the pure operator accepts the closed interval so single branches can be
  // isolated exactly (mu = 1 or 0, gamma = 0).
  void validate(Eigen::Index n, Eigen::Index c) const {
    if (!(k >= 0.0)) throw_data("diffusion coefficient k must be >= 0");
    if (gamma.size() != n) throw_shape("gamma length does not match region count");
    if ((gamma.array() < 0.0).any() || (gamma.array() > 1.0).any())
      throw_data("gamma components must lie in [0, 1]");
    if (mu.rows() != n || (mu.cols() != 1 && mu.cols() != c))
      throw_shape("mu must be N x 1 or N x C");
    if ((mu.array() < 0.0).any() || (mu.array() > 1.0).any())
      throw_data("mu components must lie in [0, 1]");
  }
};

/// Diffusion rate -k * L * X. With the combinatorial Laplacian a state that is
/// constant across regions produces an exactly zero rate.
inline Eigen::MatrixXd diffusion_rate(const Eigen::MatrixXd& laplacian, const Eigen::MatrixXd& state,
                                      double k) {
  if (laplacian.rows() != laplacian.cols()) throw_shape("Laplacian must be square");
  if (state.rows() != laplacian.rows()) throw_shape("state row count does not match Laplacian");
  return -k * (laplacian * state);
}

/// Advection rate driven by the mobility flow field. mobility(i, j) is the
/// flow from region i to j, so row i of the result accumulates inflow via the
/// transposed product. The conservative variant subtracts outflow so the total
/// over regions is exactly preserved.
inline Eigen::MatrixXd advection_rate(const Eigen::MatrixXd& mobility, const Eigen::MatrixXd& state,
                                      bool conservative = false) {
  if (mobility.rows() != mobility.cols()) throw_shape("mobility matrix must be square");
  if (state.rows() != mobility.rows()) throw_shape("state row count does not match mobility matrix");
  if ((mobility.array() < 0.0).any()) throw_data("mobility entries must be non-negative");
  Eigen::MatrixXd inflow = mobility.transpose() * state;
  if (!conservative) return inflow;
  Eigen::VectorXd out_rate = mobility.rowwise().sum();
  return inflow - (state.array().colwise() * out_rate.array()).matrix();
}

/// Reaction rate gamma[i] * X[i][c], gamma broadcast across channels.
inline Eigen::MatrixXd reaction_rate(const Eigen::MatrixXd& state, const Eigen::VectorXd& gamma) {
  if (gamma.size() != state.rows()) throw_shape("gamma length does not match state row count");
  return state.array().colwise() * gamma.array();
}

/// Fused diffusion-advection-reaction rate:
///   mu .* (-k L X) - (1 - mu) .* (M^T X) + gamma .* X
inline Eigen::MatrixXd dar_rate(const Eigen::MatrixXd& laplacian, const Eigen::MatrixXd& mobility,
                                const Eigen::MatrixXd& state, const TransportCoefficients& coeffs) {
  coeffs.validate(state.rows(), state.cols());
  Eigen::MatrixXd dif = diffusion_rate(laplacian, state, coeffs.k);
  Eigen::MatrixXd adv = advection_rate(mobility, state, false);
  Eigen::MatrixXd mu = coeffs.mu.cols() == state.cols()
                           ? coeffs.mu
                           : Eigen::MatrixXd(coeffs.mu.col(0).replicate(1, state.cols()));
  return mu.array() * dif.array() - (1.0 - mu.array()) * adv.array() +
         (state.array().colwise() * coeffs.gamma.array());
}

}  // namespace epitransport::transport
