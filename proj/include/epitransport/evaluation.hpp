#pragma once

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <map>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "epitransport/common.hpp"
#include "epitransport/data.hpp"
#include "epitransport/forecast.hpp"
#include "epitransport/training.hpp"

namespace epitransport::evaluation {

using json = nlohmann::ordered_json;

inline double mae(std::span<const double> x, std::span<const double> xhat) {
  if (x.empty() || x.size() != xhat.size()) throw_shape("mae: inputs must be non-empty and equal length");
  double acc = 0.0;
  for (size_t i = 0; i < x.size(); ++i) acc += std::abs(x[i] - xhat[i]);
  return acc / static_cast<double>(x.size());
}

inline double rmse(std::span<const double> x, std::span<const double> xhat) {
  if (x.empty() || x.size() != xhat.size()) throw_shape("rmse: inputs must be non-empty and equal length");
  double acc = 0.0;
  for (size_t i = 0; i < x.size(); ++i) acc += (x[i] - xhat[i]) * (x[i] - xhat[i]);
  return std::sqrt(acc / static_cast<double>(x.size()));
}

/// How Table-1-style numbers aggregate: flatten all residuals (default), or
/// compute per-region metrics first and average them.
enum class Aggregation { flat, per_region_mean };

struct HorizonMetrics {
  double mae = 0.0;
  double rmse = 0.0;
};

struct RegionMetrics {
  std::string region_id;
  double mae = 0.0;
  double rmse = 0.0;
};

struct EvalReport {
  std::map<int, HorizonMetrics> horizons;
  std::vector<RegionMetrics> per_region;  // pooled over all requested horizons
  double runtime_seconds = 0.0;
  std::string mask_name = "full";

  void check_invariants() const {
    for (const auto& [h, m] : horizons)
      if (m.mae > m.rmse + 1e-9) throw_divergence("metric invariant violated: MAE > RMSE");
  }
};

/// Timing is reported only where it is the point (solver benchmark); the
/// metrics document itself stays byte-stable for identical config + seed.
inline json report_to_json(const EvalReport& r, bool include_timing) {
  json doc;
  doc["mask"] = r.mask_name;
  json horizons = json::object();
  for (const auto& [h, m] : r.horizons)
    horizons[std::to_string(h)] = json{{"mae", m.mae}, {"rmse", m.rmse}};
  doc["horizons"] = horizons;
  json regions = json::array();
  for (const auto& rm : r.per_region)
    regions.push_back(json{{"region_id", rm.region_id}, {"mae", rm.mae}, {"rmse", rm.rmse}});
  doc["per_region"] = regions;
  if (include_timing) doc["runtime_seconds"] = r.runtime_seconds;
  return doc;
}

// ---------------------------------------------------------------------------
// Baselines
// ---------------------------------------------------------------------------

/// Historical Average: every future step is the mean of the observed window.
inline Eigen::MatrixXd baseline_ha(const Eigen::MatrixXd& raw_window, int horizon) {
  if (raw_window.cols() < 1) throw_shape("baseline_ha: empty window");
  Eigen::VectorXd mean = raw_window.rowwise().mean();
  return mean.replicate(1, horizon);
}

/// Persistence: repeat the last observed value.
inline Eigen::MatrixXd baseline_persistence(const Eigen::MatrixXd& raw_window, int horizon) {
  if (raw_window.cols() < 1) throw_shape("baseline_persistence: empty window");
  return raw_window.rightCols(1).replicate(1, horizon);
}

// ---------------------------------------------------------------------------
// Model / baseline evaluation over the test span
// ---------------------------------------------------------------------------

namespace detail {

struct ResidualPool {
  std::vector<double> truth, pred;                       // flattened
  std::vector<std::vector<double>> region_truth, region_pred;  // per region

  void init(size_t regions) {
    region_truth.assign(regions, {});
    region_pred.assign(regions, {});
  }
  void add(const Eigen::MatrixXd& target, const Eigen::MatrixXd& prediction) {
    for (Eigen::Index i = 0; i < target.rows(); ++i)
      for (Eigen::Index j = 0; j < target.cols(); ++j) {
        truth.push_back(target(i, j));
        pred.push_back(prediction(i, j));
        region_truth[static_cast<size_t>(i)].push_back(target(i, j));
        region_pred[static_cast<size_t>(i)].push_back(prediction(i, j));
      }
  }
  HorizonMetrics metrics(Aggregation agg) const {
    HorizonMetrics m;
    if (agg == Aggregation::flat) {
      m.mae = mae(truth, pred);
      m.rmse = rmse(truth, pred);
    } else {
      double mae_sum = 0.0, rmse_sum = 0.0;
      size_t used = 0;
      for (size_t i = 0; i < region_truth.size(); ++i) {
        if (region_truth[i].empty()) continue;
        mae_sum += mae(region_truth[i], region_pred[i]);
        rmse_sum += rmse(region_truth[i], region_pred[i]);
        ++used;
      }
      m.mae = mae_sum / static_cast<double>(used);
      m.rmse = rmse_sum / static_cast<double>(used);
    }
    return m;
  }
};

}  // namespace detail

struct EvalOptions {
  std::vector<int> horizons{3, 5, 7};
  Aggregation aggregation = Aggregation::flat;
  uint64_t seed = 0;
};

/// Evaluates a trained model on the test span, re-windowing per horizon.
/// Metrics are computed on de-normalized (raw case scale) values.
inline EvalReport evaluate_model(const model::ModelParams& params, const data::EpidemicDataset& ds,
                                 const data::SplitResult& split, const forecast::Engine& engine,
                                 const EvalOptions& opt) {
  EvalReport report;
  report.mask_name = engine.mask.name();
  detail::ResidualPool pooled;
  pooled.init(static_cast<size_t>(ds.regions()));
  const auto start = std::chrono::steady_clock::now();
  for (int h : opt.horizons) {
    auto windows = data::make_windows(ds, split.stats, split.spans.val_end,
                                      static_cast<int>(ds.days()), split.window, h);
    if (windows.empty())
      throw_data("test span too short for horizon " + std::to_string(h));
    detail::ResidualPool pool;
    pool.init(static_cast<size_t>(ds.regions()));
    for (const auto& s : windows) {
      Eigen::MatrixXd pred = engine.predict(params, s, h, opt.seed);
      pool.add(s.target, pred);
      pooled.add(s.target, pred);
    }
    report.horizons[h] = pool.metrics(opt.aggregation);
  }
  report.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  for (Eigen::Index i = 0; i < ds.regions(); ++i) {
    const auto idx = static_cast<size_t>(i);
    if (pooled.region_truth[idx].empty()) continue;
    report.per_region.push_back({ds.region_ids[idx], mae(pooled.region_truth[idx], pooled.region_pred[idx]),
                                 rmse(pooled.region_truth[idx], pooled.region_pred[idx])});
  }
  report.check_invariants();
  return report;
}

/// Evaluates a window-based baseline ("ha" or "persistence") on the same spans.
inline EvalReport evaluate_baseline(const std::string& name, const data::EpidemicDataset& ds,
                                    const data::SplitResult& split, const EvalOptions& opt) {
  EvalReport report;
  report.mask_name = name;
  detail::ResidualPool pooled;
  pooled.init(static_cast<size_t>(ds.regions()));
  for (int h : opt.horizons) {
    auto windows = data::make_windows(ds, split.stats, split.spans.val_end,
                                      static_cast<int>(ds.days()), split.window, h);
    if (windows.empty()) throw_data("test span too short for horizon " + std::to_string(h));
    detail::ResidualPool pool;
    pool.init(static_cast<size_t>(ds.regions()));
    for (const auto& s : windows) {
      Eigen::MatrixXd raw_window = ds.cases.middleCols(s.anchor_t - split.window + 1, split.window);
      Eigen::MatrixXd pred;
      if (name == "ha") {
        pred = baseline_ha(raw_window, h);
      } else if (name == "persistence") {
        pred = baseline_persistence(raw_window, h);
      } else {
        throw_config("unknown baseline '" + name + "'");
      }
      pool.add(s.target, pred);
      pooled.add(s.target, pred);
    }
    report.horizons[h] = pool.metrics(opt.aggregation);
  }
  for (Eigen::Index i = 0; i < ds.regions(); ++i) {
    const auto idx = static_cast<size_t>(i);
    report.per_region.push_back({ds.region_ids[idx], mae(pooled.region_truth[idx], pooled.region_pred[idx]),
                                 rmse(pooled.region_truth[idx], pooled.region_pred[idx])});
  }
  report.check_invariants();
  return report;
}

// ---------------------------------------------------------------------------
// Ablation harness
// ---------------------------------------------------------------------------

struct AblationRun {
  model::AblationMask mask;
  training::TrainResult trained;
  EvalReport report;
};

/// Trains one model per mask (same seed and config) and evaluates each on the
/// test span at the training horizon.
inline std::vector<AblationRun> ablate(const data::EpidemicDataset& ds, const data::SplitResult& split,
                                       const training::TrainConfig& cfg,
                                       const std::vector<model::AblationMask>& masks,
                                       Aggregation agg = Aggregation::flat) {
  if (masks.empty()) throw_config("ablation mask list is empty");
  std::vector<AblationRun> runs;
  for (const auto& mask : masks) {
    log_info("ablation: training variant '" + mask.name() + "'");
    AblationRun run;
    run.mask = mask;
    run.trained = training::train(ds, split, cfg, mask);
    forecast::Engine engine{&ds, &split.stats, cfg.model, cfg.solver, mask};
    EvalOptions opt;
    opt.horizons = {cfg.horizon};
    opt.aggregation = agg;
    opt.seed = cfg.seed;
    run.report = evaluate_model(run.trained.params, ds, split, engine, opt);
    runs.push_back(std::move(run));
  }
  return runs;
}

// ---------------------------------------------------------------------------
// Solver benchmark (Table-3-style)
// ---------------------------------------------------------------------------

struct SolverRow {
  std::string method;
  double rmse = 0.0;
  double mae = 0.0;
  double seconds = 0.0;
  double speedup = 1.0;  // euler time / this method's time
};

/// Evaluates one trained checkpoint under each solver over the full test
/// split, reporting accuracy and wall-clock inference time.
inline std::vector<SolverRow> solver_benchmark(const model::ModelParams& params,
                                               const data::EpidemicDataset& ds,
                                               const data::SplitResult& split,
                                               const training::TrainConfig& cfg,
                                               const std::vector<odeint::Method>& methods) {
  std::vector<SolverRow> rows;
  double euler_seconds = -1.0;
  for (auto method : methods) {
    odeint::SolverConfig solver = cfg.solver;
    solver.method = method;
    forecast::Engine engine{&ds, &split.stats, cfg.model, solver, model::AblationMask::full()};
    EvalOptions opt;
    opt.horizons = {cfg.horizon};
    opt.seed = cfg.seed;
    EvalReport rep = evaluate_model(params, ds, split, engine, opt);
    SolverRow row;
    row.method = odeint::method_name(method);
    row.rmse = rep.horizons.at(cfg.horizon).rmse;
    row.mae = rep.horizons.at(cfg.horizon).mae;
    row.seconds = rep.runtime_seconds;
    if (method == odeint::Method::euler) euler_seconds = row.seconds;
    rows.push_back(row);
  }
  if (euler_seconds > 0.0)
    for (auto& r : rows) r.speedup = euler_seconds / r.seconds;
  return rows;
}

// ---------------------------------------------------------------------------
// Interpretability export
// ---------------------------------------------------------------------------

/// Learned per-region reaction coefficients, sigmoid(gamma_raw) in (0,1).
inline std::vector<std::pair<std::string, double>> export_gamma(const model::ModelParams& params,
                                                                const graph::RegionGraph& g) {
  if (params.regions() != static_cast<int>(g.size()))
    throw_shape("export_gamma: parameter region count does not match graph");
  Eigen::VectorXd gamma = params.gamma();
  std::vector<std::pair<std::string, double>> out;
  for (Eigen::Index i = 0; i < gamma.size(); ++i)
    out.emplace_back(g.region_ids[static_cast<size_t>(i)], gamma(i));
  return out;
}

}  // namespace epitransport::evaluation
