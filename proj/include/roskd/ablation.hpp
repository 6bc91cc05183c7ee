// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "roskd/pipeline.hpp"

// Sweep harness: (overlap p, sampler, averaging) x seeds, each cell scored
// on the clean test split plus after-attack F1. Teacher ensembles are cached
// per (p, seed) since the distillation variants share them.

namespace roskd {

struct AblationCell {
  double p = 0.4;
  std::string sampler = "exponential";
  bool averaging = true;
};

struct AblationRow {
  AblationCell cell;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::optional<double> mean_auc;
  double robust_f1 = 0.0;
};

inline std::vector<AblationRow> run_ablation(const RunConfig& base, const std::vector<double>& ps,
                                             const std::vector<std::string>& samplers,
                                             const std::vector<bool>& averaging_options,
                                             const std::vector<std::uint64_t>& seeds, int jobs = 1,
                                             std::ostream* progress = nullptr) {
  std::vector<AblationRow> rows;
  for (const std::uint64_t seed : seeds) {
    const LabeledDataset ds = build_dataset(base, seed);
    const SplitIndices split = build_split(ds.size(), seed);

    std::map<long long, TeacherEnsemble> ensembles;  // keyed by round(p * 1e6)
    for (const double p : ps) {
      RunConfig cell_cfg = base;
      cell_cfg.partition.p = p;
      const long long key = std::llround(p * 1e6);
      for (const std::string& sampler : samplers) {
        for (const bool averaging : averaging_options) {
          cell_cfg.distill.sampler = sampler;
          cell_cfg.distill.averaging = averaging;
          AblationRow row;
          row.cell = {p, sampler, averaging};
          row.seed = seed;
          try {
            if (!ensembles.count(key)) {
              const Partition part = build_partition(cell_cfg, split.train.size(), seed);
              ensembles.emplace(key, build_teachers(cell_cfg, ds, split.train, part, seed, jobs));
            }
            const TeacherEnsemble& ensemble = ensembles.at(key);
            const DistillConfig dc = build_distill_config(cell_cfg, ensemble, seed);
            const DistillResult result = run_distillation(student_spec(cell_cfg, seed), ds,
                                                          split.train, split.val, ensemble, dc);
            const MetricsReport report = full_report(result.smooth, ds, split.test, ds.task_mode);
            const RobustnessReport robust = evaluate_robustness(
                result.smooth, ds, split.test, build_attack_config(cell_cfg, seed));
            row.ok = true;
            row.precision = report.precision;
            row.recall = report.recall;
            row.f1 = report.f1;
            row.mean_auc = report.mean_auc;
            row.robust_f1 = robust.after.f1;
          } catch (const std::exception& e) {
            row.ok = false;
            row.error = e.what();
          }
          if (progress) {
            *progress << "ablation p=" << p << " sampler=" << sampler
                      << " averaging=" << (averaging ? "on" : "off") << " seed=" << seed << " -> "
                      << (row.ok ? "f1=" + std::to_string(row.f1) : "failed: " + row.error) << "\n";
          }
          rows.push_back(std::move(row));
        }
      }
    }
  }
  return rows;
}

namespace detail {

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

inline MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd ms;
  if (xs.empty()) return ms;
  for (double x : xs) ms.mean += x;
  ms.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - ms.mean) * (x - ms.mean);
    ms.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return ms;
}

}  // namespace detail

// One row per (cell, seed), then mean/std aggregate rows per cell.
inline std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  out << "p,sampler,averaging,seed,status,precision,recall,f1,mean_auc,robust_f1\n";
  auto cell_tag = [](const AblationCell& c) {
    std::ostringstream tag;
    tag << c.p << "," << c.sampler << "," << (c.averaging ? "on" : "off");
    return tag.str();
  };
  for (const auto& row : rows) {
    out << cell_tag(row.cell) << "," << row.seed << ","
        << (row.ok ? "ok" : "failed: " + row.error) << ",";
    if (row.ok) {
      out << row.precision << "," << row.recall << "," << row.f1 << ","
          << (row.mean_auc ? std::to_string(*row.mean_auc) : "") << "," << row.robust_f1 << "\n";
    } else {
      out << ",,,,\n";
    }
  }

  std::vector<std::string> seen;
  for (const auto& row : rows) {
    const std::string tag = cell_tag(row.cell);
    bool done = false;
    for (const auto& s : seen) done = done || s == tag;
    if (done) continue;
    seen.push_back(tag);
    std::vector<double> precision, recall, f1, auc, robust;
    for (const auto& r : rows) {
      if (cell_tag(r.cell) != tag || !r.ok) continue;
      precision.push_back(r.precision);
      recall.push_back(r.recall);
      f1.push_back(r.f1);
      if (r.mean_auc) auc.push_back(*r.mean_auc);
      robust.push_back(r.robust_f1);
    }
    const auto pm = detail::mean_std(precision), rm = detail::mean_std(recall),
               fm = detail::mean_std(f1), am = detail::mean_std(auc),
               bm = detail::mean_std(robust);
    out << tag << ",mean,aggregate," << pm.mean << "," << rm.mean << "," << fm.mean << ","
        << am.mean << "," << bm.mean << "\n";
    out << tag << ",std,aggregate," << pm.std << "," << rm.std << "," << fm.std << "," << am.std
        << "," << bm.std << "\n";
  }
  return out.str();
}

}  // namespace roskd
