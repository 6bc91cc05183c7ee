// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "roskd/dataset.hpp"
#include "roskd/loss.hpp"
#include "roskd/metrics.hpp"
#include "roskd/nn.hpp"
#include "roskd/rng.hpp"

// l2-bounded white-box attacks against a fixed model. FGSM takes one step
// of length epsilon along the normalized input gradient; PGD iterates
// smaller normalized steps with projection back onto the epsilon-ball.
// The attack objective is the same loss the model trains under: softmax
// cross-entropy, or summed per-class binary cross-entropy in multi-label
// mode. Attacks never mutate the model or the dataset.

namespace roskd {

enum class AttackKind { kFgsm, kPgd };

struct AttackConfig {
  AttackKind kind = AttackKind::kPgd;
  double epsilon = 128.0 / 255.0;
  int pgd_steps = 10;
  std::optional<double> pgd_step_size;  // defaults to epsilon / 4
  bool random_start = true;
  std::uint64_t seed = 0;

  double step_size() const { return pgd_step_size.value_or(epsilon / 4.0); }
};

inline void validate_attack(const AttackConfig& cfg) {
  if (!(cfg.epsilon > 0.0)) throw std::invalid_argument("AttackConfig: epsilon must be > 0");
  if (cfg.pgd_steps < 1) throw std::invalid_argument("AttackConfig: pgd_steps must be >= 1");
  if (!(cfg.step_size() > 0.0)) throw std::invalid_argument("AttackConfig: step_size must be > 0");
}

namespace detail {

inline double l2_norm(std::span<const double> v) {
  double sum = 0.0;
  for (double x : v) sum += x * x;
  return std::sqrt(sum);
}

inline void clip_to_bounds(std::span<double> x, const std::optional<std::pair<double, double>>& bounds) {
  if (!bounds) return;
  for (double& v : x) v = std::clamp(v, bounds->first, bounds->second);
}

}  // namespace detail

// x + eps * g / ||g||; x unchanged when ||g|| < 1e-12.
inline void l2_step(std::span<double> x, std::span<const double> g, double eps) {
  if (x.size() != g.size()) throw std::invalid_argument("l2_step: shape mismatch");
  const double norm = detail::l2_norm(g);
  if (norm < 1e-12) return;
  const double scale = eps / norm;
  for (std::size_t j = 0; j < x.size(); ++j) x[j] += scale * g[j];
}

// Projects `x` onto the eps-ball around `origin`. The 1e-12 relative slack
// leaves points that are on the sphere up to rounding untouched, so a single
// full-length step is not perturbed in its last bits.
inline void project_l2(std::span<double> x, std::span<const double> origin, double eps) {
  if (x.size() != origin.size()) throw std::invalid_argument("project_l2: shape mismatch");
  double dist_sq = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double d = x[j] - origin[j];
    dist_sq += d * d;
  }
  const double dist = std::sqrt(dist_sq);
  if (dist <= eps * (1.0 + 1e-12)) return;
  const double scale = eps / dist;
  for (std::size_t j = 0; j < x.size(); ++j) x[j] = origin[j] + scale * (x[j] - origin[j]);
}

namespace detail {

// Per-sample input gradients of the summed classification loss; row i is
// exactly the gradient for sample i since samples are independent.
inline Matrix input_gradients(const ParamVector& params, const Matrix& x,
                              const std::vector<std::uint32_t>& y, TaskMode mode) {
  const Matrix logits = forward(params, x);
  const LossAndGrad lg = ce_loss_and_grad(logits, y, mode);
  return backward_with_input(params, x, lg.logit_grad).input_grad;
}

}  // namespace detail

inline Matrix fgsm_l2(const ParamVector& params, const Matrix& x,
                      const std::vector<std::uint32_t>& y, double eps,
                      TaskMode mode = TaskMode::kSingleLabel,
                      const std::optional<std::pair<double, double>>& bounds = std::nullopt) {
  if (!(eps > 0.0)) throw std::invalid_argument("fgsm_l2: epsilon must be > 0");
  if (x.rows != y.size()) throw std::invalid_argument("fgsm_l2: feature/label length mismatch");
  const Matrix grads = detail::input_gradients(params, x, y, mode);
  Matrix adv = x;
  for (std::size_t i = 0; i < x.rows; ++i) {
    l2_step(adv.row(i), grads.row(i), eps);
    detail::clip_to_bounds(adv.row(i), bounds);
  }
  return adv;
}

inline Matrix pgd_l2(const ParamVector& params, const Matrix& x,
                     const std::vector<std::uint32_t>& y, const AttackConfig& cfg,
                     TaskMode mode = TaskMode::kSingleLabel,
                     const std::optional<std::pair<double, double>>& bounds = std::nullopt) {
  validate_attack(cfg);
  if (x.rows != y.size()) throw std::invalid_argument("pgd_l2: feature/label length mismatch");
  Matrix adv = x;
  if (cfg.random_start) {
    // uniform in the eps-ball: Gaussian direction, radius eps * u^(1/d)
    for (std::size_t i = 0; i < x.rows; ++i) {
      Rng rng(derive_seed(cfg.seed, "pgd.start", static_cast<std::uint64_t>(i)));
      auto row = adv.row(i);
      std::vector<double> dir(row.size());
      double norm_sq = 0.0;
      for (double& v : dir) {
        v = rng.next_normal();
        norm_sq += v * v;
      }
      if (norm_sq > 0.0) {
        const double radius =
            cfg.epsilon * std::pow(rng.next_double(), 1.0 / static_cast<double>(row.size()));
        const double scale = radius / std::sqrt(norm_sq);
        for (std::size_t j = 0; j < row.size(); ++j) row[j] += scale * dir[j];
      }
      detail::clip_to_bounds(row, bounds);
    }
  }
  const double step = cfg.step_size();
  for (int it = 0; it < cfg.pgd_steps; ++it) {
    const Matrix grads = detail::input_gradients(params, adv, y, mode);
    for (std::size_t i = 0; i < x.rows; ++i) {
      auto row = adv.row(i);
      l2_step(row, grads.row(i), step);
      project_l2(row, x.row(i), cfg.epsilon);
      detail::clip_to_bounds(row, bounds);
    }
  }
  return adv;
}

struct RobustnessReport {
  AttackConfig config;
  MetricsReport before;
  MetricsReport after;
};

// Clean metrics, then metrics on adversarial inputs generated against this
// same model (white-box), both against clean labels.
inline RobustnessReport evaluate_robustness(const ParamVector& params, const LabeledDataset& ds,
                                            std::span<const int> test_idx,
                                            const AttackConfig& cfg) {
  validate_attack(cfg);
  const Matrix x = gather_rows(ds.features, test_idx);
  const auto y = gather_labels(ds.clean_labels, test_idx);

  RobustnessReport report;
  report.config = cfg;
  report.before = full_report(params, x, y, ds.task_mode);
  const Matrix adv = cfg.kind == AttackKind::kFgsm
                         ? fgsm_l2(params, x, y, cfg.epsilon, ds.task_mode, ds.bounds)
                         : pgd_l2(params, x, y, cfg, ds.task_mode, ds.bounds);
  report.after = full_report(params, adv, y, ds.task_mode);
  return report;
}

}  // namespace roskd
