// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <tuple>
#include <vector>

#include "roskd/dataset.hpp"
#include "roskd/matrix.hpp"
#include "roskd/nn.hpp"

namespace roskd {

struct PRF1 {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Macro-averaged precision/recall/F1. Per class: P = tp/(tp+fp),
// R = tp/(tp+fn), F1 = 2PR/(P+R); a class with an empty denominator
// contributes 0. Multi-label counts each of the C bits as a binary problem.
inline PRF1 prf1(const std::vector<std::uint32_t>& predictions,
                 const std::vector<std::uint32_t>& labels, TaskMode mode, int classes) {
  if (predictions.size() != labels.size()) {
    throw std::invalid_argument("prf1: prediction/label length mismatch");
  }
  std::vector<long> tp(classes, 0), fp(classes, 0), fn(classes, 0);
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (mode == TaskMode::kSingleLabel) {
      const auto pred = predictions[i], truth = labels[i];
      if (pred == truth) {
        ++tp[pred];
      } else {
        ++fp[pred];
        ++fn[truth];
      }
    } else {
      for (int c = 0; c < classes; ++c) {
        const bool pred = (predictions[i] >> c) & 1u;
        const bool truth = (labels[i] >> c) & 1u;
        if (pred && truth) ++tp[c];
        if (pred && !truth) ++fp[c];
        if (!pred && truth) ++fn[c];
      }
    }
  }
  PRF1 out;
  for (int c = 0; c < classes; ++c) {
    const double p = (tp[c] + fp[c]) > 0 ? static_cast<double>(tp[c]) / (tp[c] + fp[c]) : 0.0;
    const double r = (tp[c] + fn[c]) > 0 ? static_cast<double>(tp[c]) / (tp[c] + fn[c]) : 0.0;
    const double f = (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
    out.precision += p;
    out.recall += r;
    out.f1 += f;
  }
  out.precision /= classes;
  out.recall /= classes;
  out.f1 /= classes;
  return out;
}

// Probability that a random positive outscores a random negative, ties
// counting one half. Rank formulation: assign average ranks, then
// (rank sum of positives - n+(n+ + 1)/2) / (n+ * n-). Returns nullopt when
// only one class is present.
inline std::optional<double> auroc(const std::vector<double>& scores,
                                   const std::vector<int>& binary_labels) {
  if (scores.size() != binary_labels.size()) {
    throw std::invalid_argument("auroc: score/label length mismatch");
  }
  const std::size_t n = scores.size();
  std::size_t n_pos = 0;
  for (int y : binary_labels) n_pos += (y != 0);
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double pos_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j + 1);  // ranks are 1-based
    for (std::size_t t = i; t <= j; ++t) {
      if (binary_labels[order[t]] != 0) pos_rank_sum += avg_rank;
    }
    i = j + 1;
  }
  const double np = static_cast<double>(n_pos);
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

struct MetricsReport {
  TaskMode mode = TaskMode::kSingleLabel;
  int classes = 0;
  std::size_t n_samples = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::vector<std::optional<double>> per_class_auc;
  std::optional<double> mean_auc;
  Matrix confusion;  // single-label: C x C counts, row = true class
  std::vector<std::array<long, 4>> binary_confusion;  // multi-label: per-class {tp, fp, fn, tn}
};

namespace detail {

inline std::vector<double> softmax_row(std::span<const double> z) {
  double mx = z[0];
  for (double v : z) mx = std::max(mx, v);
  std::vector<double> out(z.size());
  double sum = 0.0;
  for (std::size_t j = 0; j < z.size(); ++j) {
    out[j] = std::exp(z[j] - mx);
    sum += out[j];
  }
  for (double& v : out) v /= sum;
  return out;
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace detail

// Evaluation report from raw model outputs on a feature matrix with labels.
// Single-label predicts argmax and scores with softmax probabilities;
// multi-label thresholds per-class sigmoids at 0.5 and scores with the raw
// sigmoid. AUROC is computed one-vs-rest per class; classes missing a
// positive or negative are reported absent and skipped in the mean.
inline MetricsReport full_report(const ParamVector& model, const Matrix& features,
                                 const std::vector<std::uint32_t>& labels, TaskMode mode) {
  if (features.rows == 0) throw std::invalid_argument("full_report: empty evaluation split");
  if (features.rows != labels.size()) {
    throw std::invalid_argument("full_report: feature/label length mismatch");
  }
  const int classes = model.spec.output_dim();
  const Matrix logits = forward(model, features);

  MetricsReport report;
  report.mode = mode;
  report.classes = classes;
  report.n_samples = features.rows;
  report.per_class_auc.resize(classes);

  std::vector<std::uint32_t> predictions(features.rows);
  Matrix scores(features.rows, static_cast<std::size_t>(classes));
  if (mode == TaskMode::kSingleLabel) {
    report.confusion = Matrix(static_cast<std::size_t>(classes), static_cast<std::size_t>(classes));
    for (std::size_t i = 0; i < features.rows; ++i) {
      const auto probs = detail::softmax_row(logits.row(i));
      std::size_t best = 0;
      for (std::size_t j = 0; j < probs.size(); ++j) {
        scores(i, j) = probs[j];
        if (probs[j] > probs[best]) best = j;
      }
      predictions[i] = static_cast<std::uint32_t>(best);
      report.confusion(labels[i], best) += 1.0;
    }
  } else {
    report.binary_confusion.assign(classes, {0, 0, 0, 0});
    for (std::size_t i = 0; i < features.rows; ++i) {
      std::uint32_t mask = 0;
      for (int c = 0; c < classes; ++c) {
        const double s = detail::sigmoid(logits(i, static_cast<std::size_t>(c)));
        scores(i, static_cast<std::size_t>(c)) = s;
        if (s >= 0.5) mask |= (1u << c);
      }
      predictions[i] = mask;
      for (int c = 0; c < classes; ++c) {
        const bool pred = (mask >> c) & 1u;
        const bool truth = (labels[i] >> c) & 1u;
        auto& cell = report.binary_confusion[c];
        if (pred && truth) ++cell[0];
        else if (pred && !truth) ++cell[1];
        else if (!pred && truth) ++cell[2];
        else ++cell[3];
      }
    }
  }

  const PRF1 scores_prf = prf1(predictions, labels, mode, classes);
  report.precision = scores_prf.precision;
  report.recall = scores_prf.recall;
  report.f1 = scores_prf.f1;

  double auc_sum = 0.0;
  int auc_count = 0;
  for (int c = 0; c < classes; ++c) {
    std::vector<double> class_scores(features.rows);
    std::vector<int> class_labels(features.rows);
    for (std::size_t i = 0; i < features.rows; ++i) {
      class_scores[i] = scores(i, static_cast<std::size_t>(c));
      class_labels[i] = mode == TaskMode::kSingleLabel ? (labels[i] == static_cast<std::uint32_t>(c))
                                                       : ((labels[i] >> c) & 1u);
    }
    report.per_class_auc[c] = auroc(class_scores, class_labels);
    if (report.per_class_auc[c]) {
      auc_sum += *report.per_class_auc[c];
      ++auc_count;
    }
  }
  if (auc_count > 0) report.mean_auc = auc_sum / auc_count;
  return report;
}

inline MetricsReport full_report(const ParamVector& model, const LabeledDataset& ds,
                                 std::span<const int> split_indices, TaskMode mode) {
  // evaluation always uses clean labels
  return full_report(model, gather_rows(ds.features, split_indices),
                     gather_labels(ds.clean_labels, split_indices), mode);
}

}  // namespace roskd
