#pragma once

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "epitransport/common.hpp"
#include "epitransport/data.hpp"
#include "epitransport/forecast.hpp"
#include "epitransport/model.hpp"

namespace epitransport::training {

/// Eq.-16-style objective for one sample: sqrt of the horizon-averaged squared
/// L2 norm of the residual over regions.
inline double rmse_loss(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw_shape("rmse_loss: prediction and target shapes differ");
  const double h = static_cast<double>(pred.cols());
  return std::sqrt((pred - target).squaredNorm() / h);
}

struct TrainConfig {
  double lr = 5e-2;
  int batch_size = 32;
  int max_epochs = 100;
  int patience = 10;
  std::vector<int> milestones{25, 35, 45, 55};
  double lr_gamma = 0.5;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  uint64_t seed = 0;
  odeint::SolverConfig solver;  // dopri5 with rtol = atol = 1e-5
  model::ModelConfig model;     // hidden 16, window 7, K = 5
  int horizon = 3;

  void validate() const {
    if (!(lr > 0.0)) throw_config("learning rate must be > 0");
    if (!(lr_gamma > 0.0 && lr_gamma <= 1.0)) throw_config("lr_gamma must lie in (0, 1]");
    if (batch_size < 1) throw_config("batch_size must be >= 1");
    if (max_epochs < 1) throw_config("max_epochs must be >= 1");
    if (patience < 1) throw_config("patience must be >= 1");
    for (size_t i = 1; i < milestones.size(); ++i)
      if (milestones[i] <= milestones[i - 1]) throw_config("milestones must be strictly increasing");
    if (horizon < 1) throw_config("horizon must be >= 1");
    model.validate();
    solver.validate();
  }
};

/// MultiStep schedule: lr * lr_gamma^(#milestones <= epoch), epoch 0-based.
inline double lr_at(int epoch, const TrainConfig& cfg) {
  int passed = 0;
  for (int m : cfg.milestones)
    if (m <= epoch) ++passed;
  return cfg.lr * std::pow(cfg.lr_gamma, passed);
}

struct AdamState {
  Eigen::MatrixXd m;
  Eigen::MatrixXd v;
};

/// One Adam update with bias correction. step is the 1-based step counter
/// after increment.
inline void adam_step(Eigen::MatrixXd& param, const Eigen::MatrixXd& grad, AdamState& state, int step,
                      double lr, double beta1, double beta2, double eps, const char* name = "param") {
  if (!grad.allFinite())
    throw_divergence(std::string("non-finite gradient for parameter '") + name + "'");
  if (state.m.size() == 0) {
    state.m = Eigen::MatrixXd::Zero(param.rows(), param.cols());
    state.v = Eigen::MatrixXd::Zero(param.rows(), param.cols());
  }
  state.m = beta1 * state.m + (1.0 - beta1) * grad;
  state.v = beta2 * state.v + (1.0 - beta2) * grad.cwiseProduct(grad);
  const double bc1 = 1.0 - std::pow(beta1, step);
  const double bc2 = 1.0 - std::pow(beta2, step);
  Eigen::ArrayXXd m_hat = state.m.array() / bc1;
  Eigen::ArrayXXd v_hat = state.v.array() / bc2;
  param.array() -= lr * m_hat / (v_hat.sqrt() + eps);
}

struct EpochRecord {
  int epoch;          // 1-based
  double train_loss;  // mean per-sample Eq.-16 loss
  double val_rmse;    // flattened raw-scale RMSE on the validation windows
  double lr;
  double seconds;
};

struct TrainResult {
  model::ModelParams params;  // best-validation parameters
  std::vector<EpochRecord> history;
  int best_epoch = -1;
  double best_val_rmse = std::numeric_limits<double>::infinity();
};

/// Thrown when the loss or a gradient goes non-finite; carries the best
/// checkpoint reached before the divergence.
class TrainingDivergedError : public Error {
 public:
  TrainingDivergedError(const std::string& msg, std::shared_ptr<TrainResult> partial)
      : Error(ErrorKind::divergence, msg), partial_(std::move(partial)) {}
  const TrainResult* partial() const { return partial_.get(); }

 private:
  std::shared_ptr<TrainResult> partial_;
};

namespace detail {

struct GradAccumulator {
  std::vector<Eigen::MatrixXd> sums;
  int count = 0;

  void add(const tape::Tape& tape, const model::TapeParams& tp) {
    std::vector<Eigen::MatrixXd> grads;
    tp.for_each([&](const char*, const tape::Value& v) { grads.push_back(tape.grad(v)); });
    if (sums.empty()) {
      sums = std::move(grads);
    } else {
      for (size_t i = 0; i < sums.size(); ++i) sums[i] += grads[i];
    }
    ++count;
  }
};

inline double flattened_rmse(const forecast::Engine& engine, const model::ModelParams& params,
                             const std::vector<data::WindowSample>& samples, int horizon,
                             uint64_t run_seed) {
  double sq_sum = 0.0;
  long count = 0;
  for (const auto& s : samples) {
    Eigen::MatrixXd pred = engine.predict(params, s, horizon, run_seed);
    sq_sum += (pred - s.target).squaredNorm();
    count += pred.size();
  }
  return count > 0 ? std::sqrt(sq_sum / static_cast<double>(count)) : 0.0;
}

}  // namespace detail

/// Full optimization loop: shuffled mini-batches, Adam with the MultiStep
/// schedule, per-epoch validation RMSE with frozen noise, early stopping on
/// the validation metric, best-checkpoint restore.
inline TrainResult train(const data::EpidemicDataset& dataset, const data::SplitResult& split,
                         const TrainConfig& cfg,
                         model::AblationMask mask = model::AblationMask::full()) {
  cfg.validate();
  if (split.train.empty()) throw_data("training split is empty");
  if (split.val.empty()) throw_data("validation split is empty");
  if (split.horizon != cfg.horizon)
    throw_config("split horizon does not match training horizon");

  forecast::Engine engine{&dataset, &split.stats, cfg.model, cfg.solver, mask};
  const auto n = dataset.regions();

  auto result = std::make_shared<TrainResult>();
  model::ModelParams params = model::ModelParams::init(static_cast<int>(n), cfg.model.hidden, cfg.seed);
  model::ModelParams best = params;

  int n_groups = 0;
  params.for_each([&n_groups](const char*, const Eigen::MatrixXd&) { ++n_groups; });
  std::vector<AdamState> adam(static_cast<size_t>(n_groups));
  int adam_steps = 0;
  int since_improvement = 0;

  auto diverged = [&](const std::string& msg) {
    result->params = best;  // keep the last good checkpoint reachable
    return TrainingDivergedError(msg, result);
  };

  std::vector<size_t> order(split.train.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  tape::Tape tape;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto epoch_start = std::chrono::steady_clock::now();
    const double lr = lr_at(epoch - 1, cfg);

    Rng shuffle_rng(derive_seed(cfg.seed, "shuffle", static_cast<uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    size_t pos = 0;
    while (pos < order.size()) {
      const size_t batch_end = std::min(pos + static_cast<size_t>(cfg.batch_size), order.size());
      detail::GradAccumulator acc;
      for (size_t bi = pos; bi < batch_end; ++bi) {
        const data::WindowSample& sample = split.train[order[bi]];
        tape.clear();
        model::TapeParams tp = model::TapeParams::put(tape, params);
        auto eps = model::draw_eps(n, cfg.model.hidden, cfg.model.latent_samples,
                                   derive_seed(cfg.seed, "train-eps", static_cast<uint64_t>(epoch),
                                               static_cast<uint64_t>(sample.anchor_t)));
        model::FieldOperators ops = engine.operators_for(sample.anchor_t, cfg.horizon);
        model::ForwardOutput out =
            engine.run(tape, tp, ops, sample, cfg.horizon, eps, &sample.target);
        const double loss = out.loss.scalar();
        if (!std::isfinite(loss))
          throw diverged("training loss became non-finite at epoch " + std::to_string(epoch));
        loss_sum += loss;
        tape.backward(out.loss);
        acc.add(tape, tp);
      }
      ++adam_steps;
      const double inv = 1.0 / static_cast<double>(acc.count);
      size_t pi = 0;
      try {
        params.for_each([&](const char* name, Eigen::MatrixXd& p) {
          Eigen::MatrixXd g = acc.sums[pi] * inv;
          adam_step(p, g, adam[pi], adam_steps, lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, name);
          ++pi;
        });
      } catch (const Error& e) {
        if (e.kind() == ErrorKind::divergence) throw diverged(e.what());
        throw;
      }
      pos = batch_end;
    }

    const double train_loss = loss_sum / static_cast<double>(split.train.size());
    const double val_rmse = detail::flattened_rmse(engine, params, split.val, cfg.horizon, cfg.seed);
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_start).count();
    result->history.push_back({epoch, train_loss, val_rmse, lr, seconds});
    log_info("epoch " + std::to_string(epoch) + " train_loss " + std::to_string(train_loss) +
             " val_rmse " + std::to_string(val_rmse) + " lr " + std::to_string(lr));

    if (val_rmse < result->best_val_rmse) {
      result->best_val_rmse = val_rmse;
      result->best_epoch = epoch;
      best = params;
      since_improvement = 0;
    } else {
      ++since_improvement;
      if (since_improvement >= cfg.patience) break;
    }
  }

  result->params = best;
  return std::move(*result);
}

}  // namespace epitransport::training
