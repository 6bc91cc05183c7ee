// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "roskd/matrix.hpp"
#include "roskd/rng.hpp"

// Overlapping training subsets. The training indices are shuffled and split
// into k near-equal disjoint core blocks; subset i is its core plus a
// uniform sample (without replacement, per-subset derived seed) of
// round(p * (L - |core|)) indices from the complement. p = 0 yields the
// disjoint cores, p = 1 yields k copies of the full training set, and the
// union always covers every index.

namespace roskd {

struct PartitionSpec {
  int k = 5;
  double p = 0.4;
  std::uint64_t seed = 0;
};

struct Partition {
  PartitionSpec spec;
  std::size_t train_size = 0;
  std::vector<std::vector<int>> subsets;      // sorted ascending
  std::vector<std::vector<int>> core_blocks;  // pairwise disjoint, sorted
};

inline Partition make_partition(std::size_t train_size, const PartitionSpec& spec) {
  if (spec.k < 1) throw std::invalid_argument("make_partition: k must be >= 1");
  if (spec.p < 0.0 || spec.p > 1.0) throw std::invalid_argument("make_partition: p must be in [0, 1]");
  if (train_size < static_cast<std::size_t>(spec.k)) {
    throw std::invalid_argument("make_partition: train_size must be >= k");
  }

  std::vector<int> order = iota_indices(train_size);
  Rng rng(derive_seed(spec.seed, "partition.shuffle"));
  shuffle(order, rng);

  Partition part;
  part.spec = spec;
  part.train_size = train_size;
  part.core_blocks.resize(spec.k);
  part.subsets.resize(spec.k);

  // near-equal cores: first (train_size % k) blocks get one extra index
  const std::size_t base = train_size / spec.k;
  const std::size_t extra = train_size % spec.k;
  std::size_t cursor = 0;
  for (int i = 0; i < spec.k; ++i) {
    const std::size_t len = base + (static_cast<std::size_t>(i) < extra ? 1 : 0);
    part.core_blocks[i].assign(order.begin() + cursor, order.begin() + cursor + len);
    cursor += len;
  }

  for (int i = 0; i < spec.k; ++i) {
    const auto& core = part.core_blocks[i];
    std::vector<int> complement;
    complement.reserve(train_size - core.size());
    std::vector<char> in_core(train_size, 0);
    for (int idx : core) in_core[static_cast<std::size_t>(idx)] = 1;
    for (std::size_t idx = 0; idx < train_size; ++idx) {
      if (!in_core[idx]) complement.push_back(static_cast<int>(idx));
    }
    const std::size_t want =
        static_cast<std::size_t>(std::llround(spec.p * static_cast<double>(complement.size())));
    Rng pick_rng(derive_seed(spec.seed, "partition.overlap", static_cast<std::uint64_t>(i)));
    std::vector<int> picks = sample_without_replacement(complement.size(), want, pick_rng);

    auto& subset = part.subsets[i];
    subset = core;
    for (int pos : picks) subset.push_back(complement[static_cast<std::size_t>(pos)]);
    std::sort(subset.begin(), subset.end());
    std::sort(part.core_blocks[i].begin(), part.core_blocks[i].end());
  }
  return part;
}

struct OverlapStats {
  Matrix jaccard;             // k x k, diagonal 1
  std::vector<int> coverage;  // per-index count of containing subsets
  double mean_coverage = 0.0;
};

inline OverlapStats overlap_stats(const Partition& part) {
  const int k = part.spec.k;
  OverlapStats stats;
  stats.jaccard = Matrix(static_cast<std::size_t>(k), static_cast<std::size_t>(k));
  stats.coverage.assign(part.train_size, 0);

  std::vector<std::vector<char>> member(k, std::vector<char>(part.train_size, 0));
  for (int i = 0; i < k; ++i) {
    for (int idx : part.subsets[i]) {
      member[i][static_cast<std::size_t>(idx)] = 1;
      ++stats.coverage[static_cast<std::size_t>(idx)];
    }
  }
  for (int a = 0; a < k; ++a) {
    for (int b = a; b < k; ++b) {
      std::size_t inter = 0, uni = 0;
      for (std::size_t idx = 0; idx < part.train_size; ++idx) {
        const bool ia = member[a][idx], ib = member[b][idx];
        inter += (ia && ib);
        uni += (ia || ib);
      }
      const double j = uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
      stats.jaccard(a, b) = j;
      stats.jaccard(b, a) = j;
    }
  }
  double total = 0.0;
  for (int c : stats.coverage) total += c;
  stats.mean_coverage = total / static_cast<double>(part.train_size);
  return stats;
}

}  // namespace roskd
