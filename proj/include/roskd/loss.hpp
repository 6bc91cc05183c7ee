// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "roskd/dataset.hpp"
#include "roskd/matrix.hpp"

namespace roskd {

struct LossAndGrad {
  double loss = 0.0;   // summed over samples
  Matrix logit_grad;   // gradient of the sum w.r.t. the logits
};

// Classification loss on raw logits: softmax cross-entropy per sample in
// single-label mode, summed per-class binary cross-entropy with sigmoids in
// multi-label mode. Both paths use the usual log-sum-exp / softplus forms.
inline LossAndGrad ce_loss_and_grad(const Matrix& logits, const std::vector<std::uint32_t>& labels,
                                    TaskMode mode) {
  if (logits.rows != labels.size()) {
    throw std::invalid_argument("ce_loss_and_grad: logit/label length mismatch");
  }
  LossAndGrad out;
  out.logit_grad = Matrix(logits.rows, logits.cols);
  const int classes = static_cast<int>(logits.cols);
  for (std::size_t i = 0; i < logits.rows; ++i) {
    const auto z = logits.row(i);
    auto g = out.logit_grad.row(i);
    if (mode == TaskMode::kSingleLabel) {
      const auto y = labels[i];
      if (y >= logits.cols) throw std::invalid_argument("ce_loss_and_grad: label out of range");
      double mx = z[0];
      for (double v : z) mx = std::max(mx, v);
      double sum = 0.0;
      for (int c = 0; c < classes; ++c) sum += std::exp(z[c] - mx);
      out.loss += mx + std::log(sum) - z[y];
      for (int c = 0; c < classes; ++c) {
        g[c] = std::exp(z[c] - mx) / sum - (static_cast<std::uint32_t>(c) == y ? 1.0 : 0.0);
      }
    } else {
      for (int c = 0; c < classes; ++c) {
        const double zc = z[c];
        const double y = (labels[i] >> c) & 1u ? 1.0 : 0.0;
        out.loss += std::max(zc, 0.0) - zc * y + std::log1p(std::exp(-std::abs(zc)));
        g[c] = 1.0 / (1.0 + std::exp(-zc)) - y;
      }
    }
  }
  return out;
}

inline double mean_ce_loss(const Matrix& logits, const std::vector<std::uint32_t>& labels,
                           TaskMode mode) {
  return ce_loss_and_grad(logits, labels, mode).loss / static_cast<double>(logits.rows);
}

}  // namespace roskd
