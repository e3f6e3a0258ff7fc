// Copyright 2026 The slimnet Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef SLIMNET_TRAIN_HPP
#define SLIMNET_TRAIN_HPP

#include <cstdio>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "slimnet/data.hpp"
#include "slimnet/extract.hpp"
#include "slimnet/model.hpp"

namespace slimnet {

enum class OptimizerKind { sgd, adam };
enum class LrSchedule { constant, cosine };
enum class TaskKind { classification, regression };

struct DistillConfig {
  bool enabled = false;
  double coefficient = 0.0;
  double temperature = 1.0;
  bool during_anneal = true;  // distillation is active in both phases by default
};

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::sgd;
  double learning_rate = 0.1;
  LrSchedule lr_schedule = LrSchedule::constant;
  double lambda_max = 0.0;
  std::size_t anneal_steps = 1;    // linear ramp length for lambda
  std::size_t total_steps = 1;     // regularized phase length
  std::size_t finetune_steps = 0;  // lambda is exactly 0 here
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  TaskKind task = TaskKind::classification;
  DistillConfig distill;
  double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_eps = 1e-8;
  double mask_lr_scale = 1.0;  // mask variables step at lr * mask_lr_scale
  std::size_t metrics_every = 1;
};

/// Linear ramp to lambda_max over anneal_steps; exactly 0 in the fine-tune
/// phase (steps at or beyond total_steps).
inline double anneal_lambda(std::size_t step, const TrainConfig& cfg) {
  if (step >= cfg.total_steps) return 0.0;
  if (cfg.anneal_steps == 0) return cfg.lambda_max;
  double frac = double(step) / double(cfg.anneal_steps);
  return cfg.lambda_max * std::min(1.0, frac);
}

inline double learning_rate_at(std::size_t step, const TrainConfig& cfg) {
  if (cfg.lr_schedule == LrSchedule::constant) return cfg.learning_rate;
  std::size_t horizon = cfg.total_steps + cfg.finetune_steps;
  double t = horizon > 1 ? double(step) / double(horizon - 1) : 0.0;
  return cfg.learning_rate * 0.5 * (1.0 + std::cos(M_PI * t));
}

/// Adam/SGD state: per-parameter moment accumulators plus the step counter.
struct OptimizerState {
  std::vector<Tensor> m, v;
  std::size_t step = 0;

  static OptimizerState init(const std::vector<ParamRef>& params) {
    OptimizerState s;
    for (const ParamRef& p : params) {
      s.m.push_back(Tensor::zeros(p.node->value.shape));
      s.v.push_back(Tensor::zeros(p.node->value.shape));
    }
    return s;
  }
};

/// One optimizer step with the positivity projection: weights get the plain
/// update; mask variables get the same update followed by elementwise
/// max(0, .) (bit masks additionally clamp to 1). Non-finite gradients abort
/// the step before touching any parameter.
inline void step_projected(std::vector<ParamRef>& params, OptimizerState& state,
                           double lr, const TrainConfig& cfg) {
  for (const ParamRef& p : params) {
    if (p.node->grad.data.empty()) continue;
    if (!p.node->grad.all_finite())
      throw std::runtime_error("step_projected: non-finite gradient for " + p.name);
  }
  state.step += 1;
  for (std::size_t k = 0; k < params.size(); ++k) {
    ParamRef& p = params[k];
    if (p.node->grad.data.empty()) continue;
    Tensor& x = p.node->value;
    const Tensor& g = p.node->grad;
    double plr = p.projection == MaskProjection::none ? lr : lr * cfg.mask_lr_scale;
    if (cfg.optimizer == OptimizerKind::sgd) {
      for (std::size_t i = 0; i < x.data.size(); ++i) x.data[i] -= plr * g.data[i];
    } else {
      double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
      double bc1 = 1.0 - std::pow(b1, double(state.step));
      double bc2 = 1.0 - std::pow(b2, double(state.step));
      Tensor& m = state.m[k];
      Tensor& v = state.v[k];
      for (std::size_t i = 0; i < x.data.size(); ++i) {
        m.data[i] = b1 * m.data[i] + (1.0 - b1) * g.data[i];
        v.data[i] = b2 * v.data[i] + (1.0 - b2) * g.data[i] * g.data[i];
        double mhat = m.data[i] / bc1;
        double vhat = v.data[i] / bc2;
        x.data[i] -= plr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
      }
    }
    if (p.projection == MaskProjection::nonnegative) {
      for (double& v : x.data) v = std::max(0.0, v);
    } else if (p.projection == MaskProjection::unit_interval) {
      for (double& v : x.data) v = std::min(1.0, std::max(0.0, v));
    }
  }
}

/// Per-step metrics: the mask statistics the design-verification study
/// tracks, plus surrogate/exact-cost values and weight norms.
struct MetricsRow {
  std::size_t step = 0;
  double task_loss = 0.0;
  double surrogate = 0.0;
  double exact_flops = 0.0;
  double lambda = 0.0;
  std::vector<double> mask_mean, mask_var;  // of |alpha| per masked layer
  std::vector<double> weight_frob;          // per layer
};

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_history_csv(const std::vector<MetricsRow>& history,
                              const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_history_csv: cannot open " + path);
  if (history.empty()) {
    out << "step,task_loss,surrogate,exact_flops,lambda\n";
    return;
  }
  out << "step,task_loss,surrogate,exact_flops,lambda";
  for (std::size_t i = 0; i < history.front().mask_mean.size(); ++i)
    out << ",mask" << i << "_mean,mask" << i << "_var";
  for (std::size_t i = 0; i < history.front().weight_frob.size(); ++i)
    out << ",w" << i << "_frob";
  out << "\n";
  for (const MetricsRow& r : history) {
    out << r.step << "," << format_double(r.task_loss) << ","
        << format_double(r.surrogate) << "," << format_double(r.exact_flops) << ","
        << format_double(r.lambda);
    for (std::size_t i = 0; i < r.mask_mean.size(); ++i)
      out << "," << format_double(r.mask_mean[i]) << ","
          << format_double(r.mask_var[i]);
    for (double w : r.weight_frob) out << "," << format_double(w);
    out << "\n";
  }
}

struct TrainResult {
  std::vector<MetricsRow> history;
  bool aborted = false;
  std::string abort_reason;
};

namespace detail {

inline void mask_stats(const Tensor& alpha, double& mean, double& var) {
  double d = double(alpha.numel());
  mean = 0.0;
  for (double v : alpha.data) mean += std::abs(v);
  mean /= d;
  var = 0.0;
  for (double v : alpha.data) {
    double dv = std::abs(v) - mean;
    var += dv * dv;
  }
  var /= d;
}

inline std::vector<Tensor> snapshot_params(const std::vector<ParamRef>& params) {
  std::vector<Tensor> snap;
  snap.reserve(params.size());
  for (const ParamRef& p : params) snap.push_back(p.node->value);
  return snap;
}

inline void restore_params(std::vector<ParamRef>& params,
                           const std::vector<Tensor>& snap) {
  for (std::size_t i = 0; i < params.size(); ++i) params[i].node->value = snap[i];
}

}  // namespace detail

/// Batches cycle through the dataset in a seed-shuffled order, reshuffled at
/// each epoch boundary; identical (seed, data) gives identical batches.
class BatchIterator {
 public:
  BatchIterator(std::size_t n, std::size_t batch, std::uint64_t seed)
      : n_(n), batch_(std::min(batch, n)), rng_(seed), order_(n) {
    for (std::size_t i = 0; i < n; ++i) order_[i] = i;
    rng_.shuffle(order_);
  }

  std::vector<std::size_t> next() {
    std::vector<std::size_t> idx(batch_);
    for (std::size_t i = 0; i < batch_; ++i) {
      if (pos_ == n_) {
        pos_ = 0;
        rng_.shuffle(order_);
      }
      idx[i] = order_[pos_++];
    }
    return idx;
  }

 private:
  std::size_t n_, batch_, pos_ = 0;
  Rng rng_;
  std::vector<std::size_t> order_;
};

inline NodePtr task_loss(const Model& model, const NodePtr& logits,
                         const Dataset& data, const std::vector<std::size_t>& idx,
                         TaskKind task) {
  (void)model;
  if (task == TaskKind::classification) {
    std::vector<std::size_t> yb(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) yb[i] = data.labels[idx[i]];
    return softmax_cross_entropy(logits, yb);
  }
  Tensor yb({idx.size(), 1});
  for (std::size_t i = 0; i < idx.size(); ++i) yb.at(i, 0) = data.targets.at(idx[i], 0);
  return mse_loss(logits, yb);
}

/// The regularized training loop: forward task loss + lambda * surrogate
/// (+ optional distillation against a frozen snapshot of the entry model),
/// backward, projected optimizer step, metrics. The fine-tune phase runs the
/// same loop with lambda pinned to 0. A non-finite loss or gradient aborts
/// with the last good parameter state restored.
inline TrainResult train(Model& model, const Dataset& data, const TrainConfig& cfg,
                         const RegularizerSpec& reg,
                         const LatencyTable* table = nullptr) {
  auto params = collect_params(model);
  auto state = OptimizerState::init(params);
  std::optional<Model> teacher;
  if (cfg.distill.enabled) teacher = clone_model(model);
  BatchIterator batches(data.size(), cfg.batch_size, cfg.seed);
  TrainResult res;
  std::vector<Tensor> last_good = detail::snapshot_params(params);

  const std::size_t horizon = cfg.total_steps + cfg.finetune_steps;
  for (std::size_t step = 0; step < horizon; ++step) {
    auto idx = batches.next();
    Tensor xb = take_feature_rows(data, idx);
    NodePtr logits = forward(model, xb);
    NodePtr task = task_loss(model, logits, data, idx, cfg.task);

    double lambda = anneal_lambda(step, cfg);
    NodePtr surrogate_node = surrogate_total(model, reg, table);
    NodePtr loss = task;
    if (lambda > 0.0) loss = add(loss, scale(surrogate_node, lambda));
    bool distill_active =
        cfg.distill.enabled && (step >= cfg.total_steps || cfg.distill.during_anneal);
    if (distill_active) {
      Tensor teacher_logits = forward(*teacher, xb)->value;
      loss = add(loss, distill_loss(teacher_logits, logits, cfg.distill.temperature,
                                    cfg.distill.coefficient));
    }

    if (!std::isfinite(loss->value.data[0])) {
      detail::restore_params(params, last_good);
      res.aborted = true;
      res.abort_reason = "non-finite loss at step " + std::to_string(step);
      break;
    }

    if (step % cfg.metrics_every == 0 || step + 1 == horizon) {
      MetricsRow row;
      row.step = step;
      row.task_loss = task->value.data[0];
      row.surrogate = surrogate_node->value.data[0];
      row.exact_flops = exact_flops(model);
      row.lambda = lambda;
      for (const CompressibleLayer& l : model.layers) {
        const NodePtr& mask = l.input_mask ? l.input_mask
                              : (l.elem_mask ? l.elem_mask : l.factor_s);
        if (mask) {
          double mean, var;
          detail::mask_stats(mask->value, mean, var);
          row.mask_mean.push_back(mean);
          row.mask_var.push_back(var);
        }
        row.weight_frob.push_back(weight_frobenius(l));
      }
      res.history.push_back(std::move(row));
    }

    last_good = detail::snapshot_params(params);
    backward(loss);
    try {
      step_projected(params, state, learning_rate_at(step, cfg), cfg);
    } catch (const std::runtime_error& e) {
      detail::restore_params(params, last_good);
      res.aborted = true;
      res.abort_reason = e.what();
      break;
    }
  }
  return res;
}

/// Top-1 accuracy over the whole dataset in one forward pass.
inline double accuracy(const Model& model, const Dataset& data) {
  Tensor logits = forward(model, data.features)->value;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < logits.cols(); ++j)
      if (logits.at(i, j) > logits.at(i, best)) best = j;
    if (best == data.labels[i]) ++correct;
  }
  return double(correct) / double(logits.rows());
}

}  // namespace slimnet

#endif  // SLIMNET_TRAIN_HPP
