// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "roskd/matrix.hpp"
#include "roskd/rng.hpp"

// Synthetic labelled datasets with controllable label noise. Single-label
// datasets store a class index per sample; multi-label datasets store a
// C-bit mask. Clean labels are kept alongside the noisy ones so evaluation
// can always use ground truth.

namespace roskd {

enum class TaskMode { kSingleLabel, kMultiLabel };

struct LabeledDataset {
  Matrix features;  // L x dim
  std::vector<std::uint32_t> clean_labels;
  std::vector<std::uint32_t> noisy_labels;
  TaskMode task_mode = TaskMode::kSingleLabel;
  int classes = 0;
  double noise_rate = 0.0;
  bool asymmetric_noise = false;
  std::uint64_t seed = 0;
  // Generation parameters, kept for the sidecar.
  int per_class = 0;
  double separation = 0.0;
  int modes_per_class = 1;
  double intra_radius = 0.0;
  // Input-domain bounds; unset for unbounded Gaussian data.
  std::optional<std::pair<double, double>> bounds;

  std::size_t size() const { return features.rows; }
  int dim() const { return static_cast<int>(features.cols); }
};

// C Gaussian clusters with unit per-dimension variance. Cluster centers sit
// at `separation` times a random unit direction; clean labels are cluster
// ids. With modes_per_class > 1 each class becomes a mixture of that many
// unit-variance components whose sub-centers are spread `intra_radius`
// around the class center, so a small sample of the class can miss whole
// components. Multi-label masks set bit j for every center within
// 1.25x the nearest-center distance of the sample, so the own cluster bit
// is always set and nearby clusters contribute extra bits.
inline LabeledDataset generate(int classes, int dim, int per_class, double separation,
                               std::uint64_t seed, TaskMode mode = TaskMode::kSingleLabel,
                               int modes_per_class = 1, double intra_radius = 0.0) {
  if (classes < 2) throw std::invalid_argument("generate: classes must be >= 2");
  if (dim < 2) throw std::invalid_argument("generate: dim must be >= 2");
  if (per_class < 1) throw std::invalid_argument("generate: per_class must be >= 1");
  if (separation < 0.0) throw std::invalid_argument("generate: separation must be >= 0");
  if (modes_per_class < 1) throw std::invalid_argument("generate: modes_per_class must be >= 1");
  if (intra_radius < 0.0) throw std::invalid_argument("generate: intra_radius must be >= 0");

  Rng center_rng(derive_seed(seed, "datagen.centers"));
  Matrix centers(static_cast<std::size_t>(classes), static_cast<std::size_t>(dim));
  for (int c = 0; c < classes; ++c) {
    double norm_sq = 0.0;
    for (int j = 0; j < dim; ++j) {
      const double g = center_rng.next_normal();
      centers(c, j) = g;
      norm_sq += g * g;
    }
    const double inv = norm_sq > 0.0 ? separation / std::sqrt(norm_sq) : 0.0;
    for (int j = 0; j < dim; ++j) centers(c, j) *= inv;
  }

  // sub-centers: class center plus intra_radius times a random unit direction
  Rng mode_rng(derive_seed(seed, "datagen.modes"));
  Matrix sub_centers(static_cast<std::size_t>(classes) * modes_per_class,
                     static_cast<std::size_t>(dim));
  for (int c = 0; c < classes; ++c) {
    for (int m = 0; m < modes_per_class; ++m) {
      const std::size_t row = static_cast<std::size_t>(c) * modes_per_class + m;
      double norm_sq = 0.0;
      std::vector<double> dir(dim);
      for (int j = 0; j < dim; ++j) {
        dir[j] = mode_rng.next_normal();
        norm_sq += dir[j] * dir[j];
      }
      const double inv =
          (modes_per_class > 1 && norm_sq > 0.0) ? intra_radius / std::sqrt(norm_sq) : 0.0;
      for (int j = 0; j < dim; ++j) sub_centers(row, j) = centers(c, j) + inv * dir[j];
    }
  }

  const std::size_t total = static_cast<std::size_t>(classes) * per_class;
  LabeledDataset ds;
  ds.features = Matrix(total, static_cast<std::size_t>(dim));
  ds.clean_labels.resize(total);
  ds.task_mode = mode;
  ds.classes = classes;
  ds.seed = seed;
  ds.per_class = per_class;
  ds.separation = separation;
  ds.modes_per_class = modes_per_class;
  ds.intra_radius = intra_radius;

  Rng sample_rng(derive_seed(seed, "datagen.samples"));
  std::size_t row = 0;
  for (int c = 0; c < classes; ++c) {
    for (int s = 0; s < per_class; ++s, ++row) {
      const std::size_t mode_row = static_cast<std::size_t>(c) * modes_per_class +
                                   (modes_per_class > 1 ? sample_rng.next_below(modes_per_class) : 0);
      for (int j = 0; j < dim; ++j) {
        ds.features(row, j) = sub_centers(mode_row, j) + sample_rng.next_normal();
      }
      if (mode == TaskMode::kSingleLabel) {
        ds.clean_labels[row] = static_cast<std::uint32_t>(c);
      } else {
        double best = 0.0;
        std::vector<double> dist(classes);
        for (int m = 0; m < classes; ++m) {
          double d2 = 0.0;
          for (int j = 0; j < dim; ++j) {
            const double diff = ds.features(row, j) - centers(m, j);
            d2 += diff * diff;
          }
          dist[m] = std::sqrt(d2);
          if (m == 0 || dist[m] < best) best = dist[m];
        }
        std::uint32_t mask = 0;
        for (int m = 0; m < classes; ++m) {
          if (dist[m] <= 1.25 * best) mask |= (1u << m);
        }
        ds.clean_labels[row] = mask;
      }
    }
  }
  ds.noisy_labels = ds.clean_labels;
  return ds;
}

// Symmetric label noise: each sample is independently flipped with
// probability eta. Single-label flips choose uniformly among the other C-1
// classes; multi-label flips each of the C bits independently with
// probability eta. The asymmetric variant replaces the uniform choice with
// a class-conditional shift to (c+1) mod C.
inline LabeledDataset inject_noise(const LabeledDataset& input, double eta, std::uint64_t seed,
                                   bool asymmetric = false) {
  if (eta < 0.0 || eta > 1.0) throw std::invalid_argument("inject_noise: eta must be in [0, 1]");
  LabeledDataset ds = input;
  ds.noise_rate = eta;
  ds.asymmetric_noise = asymmetric;
  ds.noisy_labels = ds.clean_labels;
  Rng rng(derive_seed(seed, "datagen.noise"));
  const int classes = ds.classes;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.task_mode == TaskMode::kSingleLabel) {
      if (rng.next_double() < eta) {
        const auto clean = ds.clean_labels[i];
        if (asymmetric) {
          ds.noisy_labels[i] = (clean + 1) % static_cast<std::uint32_t>(classes);
        } else {
          // uniform among the other C-1 classes
          std::uint32_t pick = static_cast<std::uint32_t>(rng.next_below(classes - 1));
          if (pick >= clean) ++pick;
          ds.noisy_labels[i] = pick;
        }
      }
    } else {
      std::uint32_t mask = ds.clean_labels[i];
      for (int b = 0; b < classes; ++b) {
        if (rng.next_double() < eta) mask ^= (1u << b);
      }
      ds.noisy_labels[i] = mask;
    }
  }
  return ds;
}

struct SplitIndices {
  std::vector<int> train;
  std::vector<int> val;
  std::vector<int> test;
};

// 70/10/20 by sample, disjoint, shuffled by seed.
inline SplitIndices split_70_10_20(std::size_t n, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("split_70_10_20: empty dataset");
  std::vector<int> idx = iota_indices(n);
  Rng rng(derive_seed(seed, "datagen.split"));
  shuffle(idx, rng);
  const std::size_t n_train = (n * 7) / 10;
  const std::size_t n_val = n / 10;
  SplitIndices split;
  split.train.assign(idx.begin(), idx.begin() + n_train);
  split.val.assign(idx.begin() + n_train, idx.begin() + n_train + n_val);
  split.test.assign(idx.begin() + n_train + n_val, idx.end());
  return split;
}

// Rows of the feature matrix selected by index.
inline Matrix gather_rows(const Matrix& m, std::span<const int> idx) {
  Matrix out(idx.size(), m.cols);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto src = m.row(static_cast<std::size_t>(idx[i]));
    std::copy(src.begin(), src.end(), out.data.begin() + i * out.cols);
  }
  return out;
}

inline std::vector<std::uint32_t> gather_labels(const std::vector<std::uint32_t>& labels,
                                                std::span<const int> idx) {
  std::vector<std::uint32_t> out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = labels[static_cast<std::size_t>(idx[i])];
  return out;
}

}  // namespace roskd
