#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "epitransport/data.hpp"
#include "epitransport/model.hpp"

namespace epitransport::forecast {

/// Wires a dataset into the model forward pass: builds the per-day field
/// operators (scaled, transposed mobility + the graph Laplacian) for a sample
/// and runs the encoder -> ODE -> decoder chain.
struct Engine {
  const data::EpidemicDataset* dataset = nullptr;
  const data::NormStats* stats = nullptr;
  model::ModelConfig model_cfg;
  odeint::SolverConfig solver;
  model::AblationMask mask = model::AblationMask::full();

  /// Mobility operators for horizon days [anchor, anchor + h); days past the
  /// end of the observation period reuse the most recent snapshot.
  model::FieldOperators operators_for(int anchor_t, int horizon) const {
    model::FieldOperators ops;
    ops.laplacian = &dataset->graph.laplacian_norm;
    ops.conservative = model_cfg.conservative_advection;
    const int last = static_cast<int>(dataset->days()) - 1;
    ops.mobility_t.reserve(static_cast<size_t>(horizon));
    for (int j = 0; j < horizon; ++j) {
      const int day = std::min(anchor_t + j, last);
      Eigen::MatrixXd scaled = dataset->mobility[static_cast<size_t>(day)] / stats->mobility_max;
      if (ops.conservative) ops.mobility_out_rate.push_back(scaled.rowwise().sum());
      ops.mobility_t.push_back(scaled.transpose());
    }
    return ops;
  }

  /// One forward pass. ops must come from operators_for with the same anchor
  /// and horizon and must outlive the tape.
  model::ForwardOutput run(tape::Tape& tape, const model::TapeParams& params,
                           const model::FieldOperators& ops, const data::WindowSample& sample,
                           int horizon, std::span<const Eigen::MatrixXd> eps,
                           const Eigen::MatrixXd* target) const {
    return model::forward_sample(tape, params, ops, solver, mask, sample.input_window,
                                 model_cfg.window, horizon, eps, stats->mean, stats->stddev, target);
  }

  /// Value-only prediction for a sample with frozen per-anchor noise.
  Eigen::MatrixXd predict(const model::ModelParams& params, const data::WindowSample& sample,
                          int horizon, uint64_t run_seed) const {
    tape::Tape tape;
    model::TapeParams tp = model::TapeParams::put(tape, params);
    auto eps = model::draw_eps(dataset->regions(), model_cfg.hidden, model_cfg.latent_samples,
                               derive_seed(run_seed, "eval-eps", static_cast<uint64_t>(sample.anchor_t)));
    model::FieldOperators ops = operators_for(sample.anchor_t, horizon);
    return run(tape, tp, ops, sample, horizon, eps, nullptr).predictions;
  }
};

}  // namespace epitransport::forecast
