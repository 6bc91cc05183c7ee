// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "roskd/dataset.hpp"
#include "roskd/loss.hpp"
#include "roskd/metrics.hpp"
#include "roskd/nn.hpp"
#include "roskd/rng.hpp"
#include "roskd/teacher.hpp"

// Stochastically weighted multi-teacher distillation. Per mini-batch the
// teacher weights are redrawn (renormalized exponential variates by
// default), the student minimizes
//
//   sum_i [ alpha * tau^2 * sum_m w_m * KL(q_m^i || p^i)
//           + (1 - alpha) * CE(student(x^i), y^i) ]
//
// with p^i the student's tempered softmax and q_m^i teacher m's, and a
// running arithmetic mean of post-warmup epoch checkpoints produces the
// smoothed student. The classic baselines fall out as configurations:
// alpha = 0 (plain CE), a single designated teacher, equal weights, and
// stochastic weights without averaging.

namespace roskd {

enum class SamplerKind { kExponential, kEqualWeight, kSingleTeacher };

struct SamplerConfig {
  SamplerKind kind = SamplerKind::kExponential;
  double rate = 1.0;     // exponential rate
  int single_index = 0;  // designated teacher in single-teacher mode
};

enum class WeightResample { kPerIteration, kPerExample };

struct DistillConfig {
  double alpha = 0.9;
  double tau = 0.5;
  SamplerConfig sampler;
  bool averaging_enabled = true;
  int warmup_epochs = 10;
  int epochs = 50;
  int batch = 64;
  WeightResample resample = WeightResample::kPerIteration;
  TaskMode mode = TaskMode::kSingleLabel;
  OptimConfig optim;
  std::uint64_t seed = 0;
};

inline void validate_distill(const DistillConfig& cfg) {
  if (cfg.alpha < 0.0 || cfg.alpha > 1.0) {
    throw std::invalid_argument("DistillConfig: alpha must be in [0, 1]");
  }
  if (!(cfg.tau > 0.0)) throw std::invalid_argument("DistillConfig: tau must be > 0");
  if (cfg.warmup_epochs < 0 || cfg.warmup_epochs >= cfg.epochs) {
    throw std::invalid_argument("DistillConfig: warmup_epochs must be < epochs");
  }
  if (cfg.batch < 1) throw std::invalid_argument("DistillConfig: batch must be >= 1");
  if (cfg.sampler.rate <= 0.0) throw std::invalid_argument("DistillConfig: sampler rate must be > 0");
  validate_optim(cfg.optim);
}

// q_j = exp(z_j / tau) / sum_k exp(z_k / tau), max-subtracted.
inline std::vector<double> tempered_softmax(std::span<const double> z, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("tempered_softmax: tau must be > 0");
  std::vector<double> q(z.size());
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : z) {
    if (!std::isfinite(v)) throw std::invalid_argument("tempered_softmax: non-finite logit");
    mx = std::max(mx, v / tau);
  }
  double sum = 0.0;
  for (std::size_t j = 0; j < z.size(); ++j) {
    q[j] = std::exp(z[j] / tau - mx);
    sum += q[j];
  }
  for (double& v : q) v /= sum;
  return q;
}

// KL(q || p) = sum_j q_j ln(q_j / p_j); p is clipped below at 1e-12 before
// the log, zero q_j terms contribute nothing.
inline double kl_div(std::span<const double> q, std::span<const double> p) {
  if (q.size() != p.size()) throw std::invalid_argument("kl_div: length mismatch");
  double kl = 0.0;
  for (std::size_t j = 0; j < q.size(); ++j) {
    if (q[j] > 0.0) kl += q[j] * std::log(q[j] / std::max(p[j], 1e-12));
  }
  return kl;
}

struct TeacherWeights {
  std::vector<double> w;  // nonnegative, sums to 1
  std::uint64_t draw_seed = 0;
};

inline TeacherWeights sample_weights(int teacher_count, const SamplerConfig& sampler,
                                     std::uint64_t draw_seed) {
  if (teacher_count < 1) throw std::invalid_argument("sample_weights: need at least one teacher");
  TeacherWeights weights;
  weights.draw_seed = draw_seed;
  weights.w.assign(teacher_count, 0.0);
  switch (sampler.kind) {
    case SamplerKind::kExponential: {
      Rng rng(derive_seed(draw_seed, "weights.exp"));
      double sum = 0.0;
      for (double& v : weights.w) {
        v = rng.next_exponential(sampler.rate);
        sum += v;
      }
      for (double& v : weights.w) v /= sum;
      break;
    }
    case SamplerKind::kEqualWeight:
      for (double& v : weights.w) v = 1.0 / teacher_count;
      break;
    case SamplerKind::kSingleTeacher:
      if (sampler.single_index < 0 || sampler.single_index >= teacher_count) {
        throw std::invalid_argument("sample_weights: single_index out of range");
      }
      weights.w[sampler.single_index] = 1.0;
      break;
  }
  return weights;
}

inline void require_normalized(const TeacherWeights& weights) {
  double sum = 0.0;
  for (double v : weights.w) {
    if (v < 0.0) throw std::invalid_argument("TeacherWeights: negative weight");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("TeacherWeights: not normalized");
}

struct DistillLossResult {
  double loss = 0.0;       // the mini-batch objective, summed over samples
  Matrix logit_grad;       // gradient of `loss` at the student logits
  double kl_sum = 0.0;     // sum_i sum_m w_m KL_i,m, before alpha * tau^2
  double ce_sum = 0.0;     // sum_i CE_i, before (1 - alpha)
};

// Core evaluation at precomputed student logits. `weights` holds either a
// single draw shared by the batch or one draw per sample.
inline DistillLossResult distill_loss_at_logits(const Matrix& student_logits,
                                                const std::vector<std::uint32_t>& labels,
                                                const std::vector<Matrix>& teachers,
                                                const std::vector<TeacherWeights>& weights,
                                                const DistillConfig& cfg) {
  const std::size_t batch = student_logits.rows;
  const std::size_t classes = student_logits.cols;
  if (teachers.empty()) throw std::invalid_argument("distill_loss: no teacher logits");
  for (const auto& t : teachers) {
    if (t.rows != batch || t.cols != classes) {
      throw std::invalid_argument("distill_loss: teacher logit shape mismatch");
    }
  }
  if (weights.size() != 1 && weights.size() != batch) {
    throw std::invalid_argument("distill_loss: need one weight draw or one per sample");
  }
  for (const auto& w : weights) {
    if (w.w.size() != teachers.size()) {
      throw std::invalid_argument("distill_loss: weight/teacher count mismatch");
    }
    require_normalized(w);
  }

  const double tau = cfg.tau;
  DistillLossResult result;
  result.logit_grad = Matrix(batch, classes);

  const LossAndGrad ce = ce_loss_and_grad(student_logits, labels, cfg.mode);
  result.ce_sum = ce.loss;

  for (std::size_t i = 0; i < batch; ++i) {
    const auto& w = weights[weights.size() == 1 ? 0 : i].w;
    auto grad_row = result.logit_grad.row(i);
    if (cfg.mode == TaskMode::kSingleLabel) {
      const auto p = tempered_softmax(student_logits.row(i), tau);
      for (std::size_t m = 0; m < teachers.size(); ++m) {
        if (w[m] == 0.0) continue;
        const auto q = tempered_softmax(teachers[m].row(i), tau);
        result.kl_sum += w[m] * kl_div(q, p);
        for (std::size_t c = 0; c < classes; ++c) grad_row[c] += w[m] * (p[c] - q[c]);
      }
    } else {
      // per-class tempered Bernoulli distributions
      for (std::size_t c = 0; c < classes; ++c) {
        const double pc = detail::sigmoid(student_logits(i, c) / tau);
        for (std::size_t m = 0; m < teachers.size(); ++m) {
          if (w[m] == 0.0) continue;
          const double qc = detail::sigmoid(teachers[m](i, c) / tau);
          double kl = 0.0;
          if (qc > 0.0) kl += qc * std::log(qc / std::max(pc, 1e-12));
          if (qc < 1.0) kl += (1.0 - qc) * std::log((1.0 - qc) / std::max(1.0 - pc, 1e-12));
          result.kl_sum += w[m] * kl;
          grad_row[c] += w[m] * (pc - qc);
        }
      }
    }
  }

  const double alpha = cfg.alpha;
  result.loss = alpha * tau * tau * result.kl_sum + (1.0 - alpha) * result.ce_sum;
  for (std::size_t i = 0; i < result.logit_grad.size(); ++i) {
    result.logit_grad.data[i] =
        alpha * tau * result.logit_grad.data[i] + (1.0 - alpha) * ce.logit_grad.data[i];
  }
  return result;
}

inline DistillLossResult distill_loss(const ParamVector& student, const Matrix& x,
                                      const std::vector<std::uint32_t>& labels,
                                      const std::vector<Matrix>& teachers,
                                      const TeacherWeights& weights, const DistillConfig& cfg) {
  return distill_loss_at_logits(forward(student, x), labels, teachers, {weights}, cfg);
}

// Running arithmetic mean of checkpoints,
//   smooth <- (smooth * n + current) / (n + 1),
// evaluated in the equivalent incremental form smooth += (current - smooth)
// / (n + 1), which keeps a stream of identical checkpoints exactly fixed.
struct AveragingState {
  long n = 0;
  ParamVector smooth;
};

inline void averaging_update(AveragingState& state, const ParamVector& current) {
  if (state.n == 0) {
    state.smooth = current;
    state.n = 1;
    return;
  }
  state.smooth.require_same_spec(current);
  const double count = static_cast<double>(state.n) + 1.0;
  for (std::size_t i = 0; i < state.smooth.values.size(); ++i) {
    state.smooth.values[i] += (current.values[i] - state.smooth.values[i]) / count;
  }
  ++state.n;
}

struct DistillEpochRecord {
  int epoch = 0;
  double train_loss = 0.0;  // mean per-sample objective
  double val_f1 = 0.0;
  double lr = 0.0;
  std::vector<double> mean_weights;
  bool averaging_active = false;
};

struct DistillResult {
  ParamVector student;  // final raw student M
  ParamVector smooth;   // averaged student; equals `student` when averaging is off
  std::vector<DistillEpochRecord> history;
  std::vector<ParamVector> post_warmup_checkpoints;
};

// The student training loop. Weights are redrawn per iteration (or per
// example), gradients flow through the analytic backward pass, and the
// averaged student is updated at the end of every epoch strictly after the
// warmup; the first post-warmup checkpoint initializes the mean. RNG streams
// for shuffling and weight draws are split from cfg.seed, so one never
// perturbs the other.
inline DistillResult run_distillation(const ModelSpec& student_spec, const LabeledDataset& ds,
                                      const std::vector<int>& train_idx,
                                      const std::vector<int>& val_idx,
                                      const TeacherEnsemble& ensemble, DistillConfig cfg) {
  if (ensemble.size() == 0) throw std::invalid_argument("run_distillation: empty ensemble");
  if (train_idx.empty()) throw std::invalid_argument("run_distillation: empty training split");
  if (student_spec.layer_widths.back() != ds.classes) {
    throw std::invalid_argument("run_distillation: output width must equal the class count");
  }
  cfg.mode = ds.task_mode;
  validate_distill(cfg);
  const int teacher_count = static_cast<int>(ensemble.size());

  DistillResult result;
  result.student = init_model(student_spec);
  OptimState opt = make_optim_state(student_spec, cfg.optim);
  AveragingState averaging;

  std::vector<int> order = train_idx;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(cfg.seed, "distill.shuffle", static_cast<std::uint64_t>(epoch)));
    shuffle(order, shuffle_rng);
    Rng weight_rng(derive_seed(cfg.seed, "distill.weights", static_cast<std::uint64_t>(epoch)));

    double epoch_loss = 0.0;
    std::vector<double> weight_sums(teacher_count, 0.0);
    std::size_t draw_count = 0;

    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
      const std::span<const int> batch_idx(order.data() + start, end - start);
      const Matrix x = gather_rows(ds.features, batch_idx);
      const auto y = gather_labels(ds.noisy_labels, batch_idx);
      const std::vector<Matrix> logits_t = teacher_logits(ensemble, x);

      std::vector<TeacherWeights> weights;
      const std::size_t draws = cfg.resample == WeightResample::kPerIteration ? 1 : x.rows;
      weights.reserve(draws);
      for (std::size_t d = 0; d < draws; ++d) {
        weights.push_back(sample_weights(teacher_count, cfg.sampler, weight_rng.next_u64()));
        for (int m = 0; m < teacher_count; ++m) weight_sums[m] += weights.back().w[m];
        ++draw_count;
      }

      DistillLossResult batch_loss =
          distill_loss_at_logits(forward(result.student, x), y, logits_t, weights, cfg);
      epoch_loss += batch_loss.loss;
      const double inv_b = 1.0 / static_cast<double>(x.rows);
      for (double& g : batch_loss.logit_grad.data) g *= inv_b;  // mini-batch mean
      const ParamVector grads = backward(result.student, x, batch_loss.logit_grad);
      sgd_step(result.student, grads, opt, epoch);
    }

    DistillEpochRecord record;
    record.epoch = epoch;
    record.train_loss = epoch_loss / static_cast<double>(order.size());
    record.lr = lr_at_epoch(opt, epoch);
    record.mean_weights.assign(teacher_count, 0.0);
    if (draw_count > 0) {
      for (int m = 0; m < teacher_count; ++m) {
        record.mean_weights[m] = weight_sums[m] / static_cast<double>(draw_count);
      }
    }
    record.averaging_active = cfg.averaging_enabled && (epoch + 1) > cfg.warmup_epochs;
    if (record.averaging_active) {
      averaging_update(averaging, result.student);
      result.post_warmup_checkpoints.push_back(result.student);
    }
    if (!val_idx.empty()) {
      record.val_f1 = full_report(result.student, ds, val_idx, cfg.mode).f1;
    }
    result.history.push_back(std::move(record));
  }

  result.smooth = (cfg.averaging_enabled && averaging.n > 0) ? averaging.smooth : result.student;
  return result;
}

// Baseline configurations as reductions of the full pipeline. The single
// teacher for the plain-distillation baseline defaults to the ensemble's
// largest model.
enum class Baseline { kI, kII, kIII, kV };

inline int largest_teacher_index(const TeacherEnsemble& ensemble) {
  int best = 0;
  std::size_t best_count = 0;
  for (std::size_t i = 0; i < ensemble.size(); ++i) {
    const std::size_t count = ensemble.teachers[i].values.size();
    if (count > best_count) {
      best_count = count;
      best = static_cast<int>(i);
    }
  }
  return best;
}

inline DistillConfig apply_baseline(DistillConfig cfg, Baseline baseline, int single_teacher = 0) {
  switch (baseline) {
    case Baseline::kI:  // plain student, cross-entropy only
      cfg.alpha = 0.0;
      cfg.sampler.kind = SamplerKind::kEqualWeight;
      cfg.averaging_enabled = false;
      break;
    case Baseline::kII:  // single-teacher distillation
      cfg.sampler.kind = SamplerKind::kSingleTeacher;
      cfg.sampler.single_index = single_teacher;
      cfg.averaging_enabled = false;
      break;
    case Baseline::kIII:  // equal-weight multi-teacher
      cfg.sampler.kind = SamplerKind::kEqualWeight;
      cfg.averaging_enabled = false;
      break;
    case Baseline::kV:  // stochastic weights, no averaging
      cfg.sampler.kind = SamplerKind::kExponential;
      cfg.averaging_enabled = false;
      break;
  }
  return cfg;
}

inline Baseline baseline_from_string(const std::string& name) {
  if (name == "I") return Baseline::kI;
  if (name == "II") return Baseline::kII;
  if (name == "III") return Baseline::kIII;
  if (name == "V") return Baseline::kV;
  throw std::invalid_argument("unknown baseline '" + name + "' (expected I, II, III, or V)");
}

}  // namespace roskd
