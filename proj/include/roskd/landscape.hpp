// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "roskd/dataset.hpp"
#include "roskd/loss.hpp"
#include "roskd/matrix.hpp"
#include "roskd/nn.hpp"
#include "roskd/rng.hpp"

// 2D loss-landscape slices around a trained model. Two random Gaussian
// directions are normalized per weight group (the incoming weights of each
// output neuron match the corresponding group norm of the base model; bias
// directions are zeroed), then the classification loss is evaluated on a
// fixed batch over a symmetric grid and clamped for plotting.

namespace roskd {

struct GridSpec {
  int points = 41;      // odd, so the grid has an exact center
  double extent = 1.0;  // coordinates span [-extent, extent]
  double clamp = 8.0;
};

struct LandscapeGrid {
  std::vector<double> alphas;
  std::vector<double> betas;
  Matrix losses;  // alphas x betas, clamped
  double clamp_value = 8.0;
  ParamVector base;
  ParamVector dir1;
  ParamVector dir2;
  std::string eval_batch_id;

  double min_loss() const {
    double mn = losses.data.empty() ? 0.0 : losses.data[0];
    for (double v : losses.data) mn = std::min(mn, v);
    return mn;
  }
};

// Two independent filter-normalized directions, deterministic per seed.
inline std::pair<ParamVector, ParamVector> random_directions(const ParamVector& base,
                                                             std::uint64_t seed) {
  validate_spec(base.spec);
  std::pair<ParamVector, ParamVector> dirs{
      ParamVector{base.spec, std::vector<double>(base.values.size(), 0.0)},
      ParamVector{base.spec, std::vector<double>(base.values.size(), 0.0)}};
  for (int which = 0; which < 2; ++which) {
    ParamVector& dir = which == 0 ? dirs.first : dirs.second;
    Rng rng(derive_seed(seed, "landscape.dir", static_cast<std::uint64_t>(which)));
    for (double& v : dir.values) v = rng.next_normal();
    for (std::size_t l = 0; l < base.spec.layer_count(); ++l) {
      const auto view = detail::layer_view(base.spec, l);
      // group = incoming weights of one output neuron
      for (int j = 0; j < view.out; ++j) {
        double base_sq = 0.0, dir_sq = 0.0;
        for (int k = 0; k < view.in; ++k) {
          const std::size_t idx = view.w_offset + static_cast<std::size_t>(k) * view.out + j;
          base_sq += base.values[idx] * base.values[idx];
          dir_sq += dir.values[idx] * dir.values[idx];
        }
        const double scale = (base_sq > 0.0 && dir_sq > 0.0) ? std::sqrt(base_sq / dir_sq) : 0.0;
        for (int k = 0; k < view.in; ++k) {
          const std::size_t idx = view.w_offset + static_cast<std::size_t>(k) * view.out + j;
          dir.values[idx] *= scale;
        }
      }
      for (int j = 0; j < view.out; ++j) dir.values[view.b_offset + j] = 0.0;
    }
  }
  return dirs;
}

// loss(base + a * d1 + b * d2) on the fixed evaluation batch for every grid
// point, clamped at grid.clamp. The center point is the unperturbed model.
inline LandscapeGrid evaluate_grid(const ParamVector& base, const ParamVector& d1,
                                   const ParamVector& d2, const Matrix& eval_x,
                                   const std::vector<std::uint32_t>& eval_y, TaskMode mode,
                                   const GridSpec& grid, std::string eval_batch_id = {}) {
  base.require_same_spec(d1);
  base.require_same_spec(d2);
  if (grid.points < 3 || grid.points % 2 == 0) {
    throw std::invalid_argument("evaluate_grid: points must be odd and >= 3");
  }
  if (!(grid.clamp > 0.0)) throw std::invalid_argument("evaluate_grid: clamp must be > 0");
  if (eval_x.rows == 0) throw std::invalid_argument("evaluate_grid: empty evaluation batch");

  const int half = (grid.points - 1) / 2;
  LandscapeGrid out;
  out.clamp_value = grid.clamp;
  out.base = base;
  out.dir1 = d1;
  out.dir2 = d2;
  out.eval_batch_id = std::move(eval_batch_id);
  out.alphas.resize(grid.points);
  out.betas.resize(grid.points);
  for (int i = 0; i < grid.points; ++i) {
    out.alphas[i] = grid.extent * static_cast<double>(i - half) / static_cast<double>(half);
    out.betas[i] = out.alphas[i];
  }
  out.losses = Matrix(static_cast<std::size_t>(grid.points), static_cast<std::size_t>(grid.points));

  ParamVector point = base;
  for (int ia = 0; ia < grid.points; ++ia) {
    for (int ib = 0; ib < grid.points; ++ib) {
      for (std::size_t j = 0; j < base.values.size(); ++j) {
        point.values[j] = base.values[j] + out.alphas[ia] * d1.values[j] + out.betas[ib] * d2.values[j];
      }
      const double loss = mean_ce_loss(forward(point, eval_x), eval_y, mode);
      out.losses(static_cast<std::size_t>(ia), static_cast<std::size_t>(ib)) =
          std::min(loss, grid.clamp);
    }
  }
  return out;
}

// Fraction of grid points at or below the threshold; a proxy for basin
// area. Any finite threshold up to the clamp is accepted; thresholds below
// the grid minimum simply yield 0.
inline double basin_width(const LandscapeGrid& grid, double threshold) {
  if (!std::isfinite(threshold) || threshold > grid.clamp_value) {
    throw std::invalid_argument("basin_width: threshold out of range");
  }
  if (grid.losses.data.empty()) throw std::invalid_argument("basin_width: empty grid");
  std::size_t below = 0;
  for (double v : grid.losses.data) below += (v <= threshold);
  return static_cast<double>(below) / static_cast<double>(grid.losses.data.size());
}

}  // namespace roskd
