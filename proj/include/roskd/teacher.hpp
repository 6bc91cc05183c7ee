// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdint>
#include <future>
#include <stdexcept>
#include <vector>

#include "roskd/dataset.hpp"
#include "roskd/loss.hpp"
#include "roskd/nn.hpp"
#include "roskd/rng.hpp"

// Teacher training: standard mini-batch SGD with cross-entropy on the noisy
// labels of an assigned subset. Teachers are frozen once registered in the
// ensemble; their logits are computed on demand.

namespace roskd {

struct TrainHistory {
  std::vector<double> loss;      // mean per-sample loss per epoch
  std::vector<double> accuracy;  // vs noisy labels (per-bit in multi-label mode)
};

struct TrainedModel {
  ParamVector params;
  TrainHistory history;
};

// One pass of shuffled mini-batches; consumes only rows listed in `subset`.
inline TrainedModel train_teacher(const ModelSpec& spec, const LabeledDataset& ds,
                                  const std::vector<int>& subset, const OptimConfig& opt_cfg,
                                  int epochs, int batch, std::uint64_t seed) {
  if (subset.empty()) throw std::invalid_argument("train_teacher: empty subset");
  if (batch < 1) throw std::invalid_argument("train_teacher: batch must be >= 1");
  if (epochs < 0) throw std::invalid_argument("train_teacher: epochs must be >= 0");
  if (spec.layer_widths.back() != ds.classes) {
    throw std::invalid_argument("train_teacher: output width must equal the class count");
  }

  TrainedModel result{init_model(spec), {}};
  OptimState opt = make_optim_state(spec, opt_cfg);
  const TaskMode mode = ds.task_mode;
  const int classes = ds.classes;

  std::vector<int> order = subset;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(seed, "train.shuffle", static_cast<std::uint64_t>(epoch)));
    shuffle(order, shuffle_rng);

    double epoch_loss = 0.0;
    double correct = 0.0;
    double denom = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(batch));
      const std::span<const int> batch_idx(order.data() + start, end - start);
      const Matrix x = gather_rows(ds.features, batch_idx);
      const auto y = gather_labels(ds.noisy_labels, batch_idx);

      const Matrix logits = forward(result.params, x);
      LossAndGrad lg = ce_loss_and_grad(logits, y, mode);
      epoch_loss += lg.loss;
      const double inv_b = 1.0 / static_cast<double>(x.rows);
      for (double& g : lg.logit_grad.data) g *= inv_b;  // mini-batch mean
      const ParamVector grads = backward(result.params, x, lg.logit_grad);
      sgd_step(result.params, grads, opt, epoch);

      for (std::size_t i = 0; i < x.rows; ++i) {
        if (mode == TaskMode::kSingleLabel) {
          std::size_t best = 0;
          const auto row = logits.row(i);
          for (std::size_t c = 1; c < row.size(); ++c) {
            if (row[c] > row[best]) best = c;
          }
          correct += (static_cast<std::uint32_t>(best) == y[i]);
          denom += 1.0;
        } else {
          for (int c = 0; c < classes; ++c) {
            const bool pred = logits(i, static_cast<std::size_t>(c)) >= 0.0;
            correct += (pred == (((y[i] >> c) & 1u) != 0));
            denom += 1.0;
          }
        }
      }
    }
    result.history.loss.push_back(epoch_loss / static_cast<double>(order.size()));
    result.history.accuracy.push_back(correct / denom);
  }
  return result;
}

struct TeacherEnsemble {
  std::vector<ParamVector> teachers;
  std::vector<int> subset_ids;
  std::vector<TrainHistory> histories;

  std::size_t size() const { return teachers.size(); }
};

// Forward pass of every teacher on the batch; K matrices of L x C logits,
// no softmax. Teachers may be evaluated concurrently by callers since the
// pass is pure.
inline std::vector<Matrix> teacher_logits(const TeacherEnsemble& ensemble, const Matrix& x) {
  if (ensemble.teachers.empty()) throw std::invalid_argument("teacher_logits: empty ensemble");
  std::vector<Matrix> out;
  out.reserve(ensemble.size());
  for (const auto& teacher : ensemble.teachers) out.push_back(forward(teacher, x));
  return out;
}

// Trains one teacher per partition subset. Teachers share no mutable state,
// so training runs `jobs` at a time; results land in subset order, keeping
// the ensemble independent of scheduling.
inline TeacherEnsemble train_ensemble(const std::vector<ModelSpec>& specs, const LabeledDataset& ds,
                                      const std::vector<std::vector<int>>& subsets,
                                      const OptimConfig& opt_cfg, int epochs, int batch,
                                      std::uint64_t root_seed, int jobs = 1) {
  if (specs.size() != subsets.size()) {
    throw std::invalid_argument("train_ensemble: one spec per subset required");
  }
  const std::size_t k = specs.size();
  std::vector<TrainedModel> trained(k);
  if (jobs < 1) jobs = 1;
  for (std::size_t begin = 0; begin < k; begin += static_cast<std::size_t>(jobs)) {
    const std::size_t chunk_end = std::min(k, begin + static_cast<std::size_t>(jobs));
    std::vector<std::future<TrainedModel>> futures;
    for (std::size_t i = begin; i < chunk_end; ++i) {
      futures.push_back(std::async(std::launch::async, [&, i] {
        return train_teacher(specs[i], ds, subsets[i], opt_cfg, epochs, batch,
                             derive_seed(root_seed, "teacher", static_cast<std::uint64_t>(i)));
      }));
    }
    for (std::size_t i = begin; i < chunk_end; ++i) trained[i] = futures[i - begin].get();
  }

  TeacherEnsemble ensemble;
  for (std::size_t i = 0; i < k; ++i) {
    ensemble.teachers.push_back(std::move(trained[i].params));
    ensemble.subset_ids.push_back(static_cast<int>(i));
    ensemble.histories.push_back(std::move(trained[i].history));
  }
  return ensemble;
}

}  // namespace roskd
