#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "epitransport/common.hpp"

namespace epitransport::graph {

constexpr double kEarthRadiusKm = 6371.0;

/// Great-circle distance in km between two (lat, lon) points in degrees.
inline double haversine_km(double lat1, double lon1, double lat2, double lon2) {
  if (!(lat1 >= -90.0 && lat1 <= 90.0 && lat2 >= -90.0 && lat2 <= 90.0))
    throw_data("latitude out of range [-90, 90]");
  if (!(lon1 >= -180.0 && lon1 <= 180.0 && lon2 >= -180.0 && lon2 <= 180.0))
    throw_data("longitude out of range [-180, 180]");
  constexpr double deg2rad = 3.14159265358979323846 / 180.0;
  const double p1 = lat1 * deg2rad, p2 = lat2 * deg2rad;
  const double dphi = (lat2 - lat1) * deg2rad;
  const double dlam = (lon2 - lon1) * deg2rad;
  const double sp = std::sin(dphi / 2.0), sl = std::sin(dlam / 2.0);
  double a = sp * sp + std::cos(p1) * std::cos(p2) * sl * sl;
  if (a > 1.0) a = 1.0;  // guard asin against roundoff
  return 2.0 * kEarthRadiusKm * std::asin(std::sqrt(a));
}

/// Static geospatial diffusion graph: distances, reciprocal-distance weights,
/// and the two Laplacians. Immutable after construction.
struct RegionGraph {
  std::vector<std::string> region_ids;
  std::vector<std::array<double, 2>> centroids;  // (lat, lon), may be empty if built from distances
  Eigen::MatrixXd dist_km;
  Eigen::MatrixXd weights;         // w_ij = 1/d_ij off-diagonal, 0 on the diagonal
  Eigen::MatrixXd laplacian_norm;  // I - D^{-1/2} W D^{-1/2}
  Eigen::MatrixXd laplacian_comb;  // D - W

  Eigen::Index size() const { return weights.rows(); }
};

/// Builds the graph from a precomputed symmetric distance matrix (km).
inline RegionGraph build_region_graph_from_distances(std::vector<std::string> region_ids,
                                                     const Eigen::MatrixXd& dist_km) {
  const Eigen::Index n = dist_km.rows();
  if (n < 2) throw_data("region graph needs at least 2 regions");
  if (dist_km.cols() != n) throw_shape("distance matrix must be square");
  if (static_cast<Eigen::Index>(region_ids.size()) != n)
    throw_shape("region id count does not match distance matrix size");

  RegionGraph g;
  g.region_ids = std::move(region_ids);
  g.dist_km = dist_km;
  g.weights = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      const double d = dist_km(i, j);
      if (!(d > 0.0))
        throw_data("degenerate graph: regions '" + g.region_ids[i] + "' and '" + g.region_ids[j] +
                   "' are at zero distance");
      g.weights(i, j) = 1.0 / d;
    }
  }

  Eigen::VectorXd degree = g.weights.rowwise().sum();
  g.laplacian_comb = Eigen::MatrixXd(degree.asDiagonal()) - g.weights;
  Eigen::VectorXd dinv_sqrt = degree.array().rsqrt();
  g.laplacian_norm = Eigen::MatrixXd::Identity(n, n) -
                     dinv_sqrt.asDiagonal() * g.weights * dinv_sqrt.asDiagonal();
  return g;
}

/// Builds the graph from region centroids via pairwise haversine distances.
inline RegionGraph build_region_graph(std::vector<std::string> region_ids,
                                      const std::vector<std::array<double, 2>>& centroids) {
  const Eigen::Index n = static_cast<Eigen::Index>(centroids.size());
  if (n < 2) throw_data("region graph needs at least 2 regions");
  if (region_ids.size() != centroids.size()) throw_shape("region id count does not match centroid count");

  Eigen::MatrixXd dist = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double d = haversine_km(centroids[i][0], centroids[i][1], centroids[j][0], centroids[j][1]);
      if (d == 0.0)
        throw_data("degenerate graph: regions '" + region_ids[i] + "' and '" + region_ids[j] +
                   "' share a centroid");
      dist(i, j) = d;
      dist(j, i) = d;
    }
  }
  RegionGraph g = build_region_graph_from_distances(std::move(region_ids), dist);
  g.centroids = centroids;
  return g;
}

}  // namespace epitransport::graph
