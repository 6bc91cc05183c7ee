// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "roskd/config.hpp"
#include "roskd/storage.hpp"

// Experiment orchestration shared by the CLI and the test suites. Every
// stage derives its randomness from the run's root seed through tagged
// streams, so stages are independently rerunnable and replays are
// bit-identical.

namespace roskd {

namespace fs = std::filesystem;

// ---- in-memory stage functions ----

inline LabeledDataset build_dataset(const RunConfig& cfg, std::uint64_t root_seed) {
  LabeledDataset ds = generate(cfg.dataset.classes, cfg.dataset.dim, cfg.dataset.per_class,
                               cfg.dataset.separation, derive_seed(root_seed, "stage.dataset"),
                               cfg.dataset.task_mode, cfg.dataset.modes_per_class,
                               cfg.dataset.intra_radius);
  return inject_noise(ds, cfg.dataset.noise_rate, derive_seed(root_seed, "stage.noise"),
                      cfg.dataset.asymmetric_noise);
}

inline SplitIndices build_split(std::size_t n, std::uint64_t root_seed) {
  return split_70_10_20(n, derive_seed(root_seed, "stage.split"));
}

inline Partition build_partition(const RunConfig& cfg, std::size_t train_size,
                                 std::uint64_t root_seed) {
  const PartitionSpec spec{cfg.partition.k, cfg.partition.p,
                           derive_seed(root_seed, "stage.partition")};
  return make_partition(train_size, spec);
}

inline std::vector<int> widths_for(int dim, const std::vector<int>& hidden, int classes) {
  std::vector<int> widths;
  widths.push_back(dim);
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(classes);
  return widths;
}

inline std::vector<ModelSpec> teacher_specs(const RunConfig& cfg, std::uint64_t root_seed) {
  std::vector<ModelSpec> specs;
  for (std::size_t i = 0; i < cfg.teachers.hidden.size(); ++i) {
    specs.push_back(ModelSpec{widths_for(cfg.dataset.dim, cfg.teachers.hidden[i], cfg.dataset.classes),
                              Activation::kRelu,
                              derive_seed(root_seed, "teacher.init", static_cast<std::uint64_t>(i))});
  }
  return specs;
}

inline ModelSpec student_spec(const RunConfig& cfg, std::uint64_t root_seed) {
  return ModelSpec{widths_for(cfg.dataset.dim, cfg.student.hidden, cfg.dataset.classes),
                   Activation::kRelu, derive_seed(root_seed, "student.init")};
}

// Subset index lists mapped through the training split: partition indices
// address positions within the train split, training consumes dataset rows.
inline std::vector<std::vector<int>> subsets_as_dataset_rows(const Partition& part,
                                                             const std::vector<int>& train_idx) {
  std::vector<std::vector<int>> rows(part.subsets.size());
  for (std::size_t i = 0; i < part.subsets.size(); ++i) {
    rows[i].reserve(part.subsets[i].size());
    for (int pos : part.subsets[i]) rows[i].push_back(train_idx[static_cast<std::size_t>(pos)]);
  }
  return rows;
}

inline TeacherEnsemble build_teachers(const RunConfig& cfg, const LabeledDataset& ds,
                                      const std::vector<int>& train_idx, const Partition& part,
                                      std::uint64_t root_seed, int jobs = 1) {
  if (static_cast<int>(cfg.teachers.hidden.size()) != part.spec.k) {
    throw std::invalid_argument("config: teachers.hidden must list one architecture per subset (k=" +
                                std::to_string(part.spec.k) + ")");
  }
  return train_ensemble(teacher_specs(cfg, root_seed), ds, subsets_as_dataset_rows(part, train_idx),
                        cfg.optim, cfg.teachers.epochs, cfg.teachers.batch,
                        derive_seed(root_seed, "stage.teachers"), jobs);
}

inline DistillConfig build_distill_config(const RunConfig& cfg, const TeacherEnsemble& ensemble,
                                          std::uint64_t root_seed,
                                          std::optional<Baseline> baseline = std::nullopt) {
  DistillConfig dc;
  dc.alpha = cfg.distill.alpha;
  dc.tau = cfg.distill.tau;
  dc.averaging_enabled = cfg.distill.averaging;
  dc.warmup_epochs = cfg.distill.warmup_epochs;
  dc.epochs = cfg.distill.epochs;
  dc.batch = cfg.distill.batch;
  dc.mode = cfg.dataset.task_mode;
  dc.optim = cfg.optim;
  dc.seed = derive_seed(root_seed, "stage.distill");
  dc.resample = cfg.distill.resample == "example" ? WeightResample::kPerExample
                                                  : WeightResample::kPerIteration;
  dc.sampler.rate = cfg.distill.exponential_rate;
  if (cfg.distill.sampler == "equal") dc.sampler.kind = SamplerKind::kEqualWeight;
  else if (cfg.distill.sampler == "single") dc.sampler.kind = SamplerKind::kSingleTeacher;
  else dc.sampler.kind = SamplerKind::kExponential;
  dc.sampler.single_index = cfg.distill.single_teacher.value_or(largest_teacher_index(ensemble));
  if (baseline) {
    return apply_baseline(dc, *baseline,
                          cfg.distill.single_teacher.value_or(largest_teacher_index(ensemble)));
  }
  return dc;
}

inline AttackConfig build_attack_config(const RunConfig& cfg, std::uint64_t root_seed) {
  AttackConfig ac;
  ac.kind = cfg.attack.kind == "fgsm" ? AttackKind::kFgsm : AttackKind::kPgd;
  ac.epsilon = cfg.attack.epsilon;
  ac.pgd_steps = cfg.attack.steps;
  ac.pgd_step_size = cfg.attack.step_size;
  ac.random_start = cfg.attack.random_start;
  ac.seed = derive_seed(root_seed, "stage.attack");
  return ac;
}

struct LandscapeBatch {
  Matrix features;
  std::vector<std::uint32_t> labels;
  std::string id;
};

// Fixed evaluation batch for landscape slices: a seeded sample of the test
// split, recorded by id so different models are compared on the same rows.
inline LandscapeBatch landscape_batch(const RunConfig& cfg, const LabeledDataset& ds,
                                      const std::vector<int>& test_idx, std::uint64_t root_seed) {
  const std::uint64_t batch_seed = derive_seed(root_seed, "stage.landscape.batch");
  std::vector<int> order = test_idx;
  Rng rng(batch_seed);
  shuffle(order, rng);
  const std::size_t n = std::min<std::size_t>(order.size(), cfg.landscape.eval_batch);
  order.resize(n);
  LandscapeBatch batch;
  batch.features = gather_rows(ds.features, order);
  batch.labels = gather_labels(ds.clean_labels, order);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "test:%016llx:%zu", static_cast<unsigned long long>(batch_seed), n);
  batch.id = buf;
  return batch;
}

inline LandscapeGrid build_landscape(const RunConfig& cfg, const ParamVector& model,
                                     const LabeledDataset& ds, const std::vector<int>& test_idx,
                                     std::uint64_t root_seed) {
  const auto batch = landscape_batch(cfg, ds, test_idx, root_seed);
  const auto [d1, d2] = random_directions(model, derive_seed(root_seed, "stage.landscape"));
  const GridSpec grid{cfg.landscape.points, cfg.landscape.extent, cfg.landscape.clamp};
  return evaluate_grid(model, d1, d2, batch.features, batch.labels, ds.task_mode, grid, batch.id);
}

// ---- run directories, manifest, file-level stages ----

struct MissingDependency : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunContext {
  RunConfig cfg;
  std::uint64_t seed = 1;  // root seed (config seed unless overridden)
  std::optional<Baseline> baseline;
  fs::path run_dir;
  int jobs = 1;
};

inline std::string baseline_name(Baseline b) {
  switch (b) {
    case Baseline::kI: return "I";
    case Baseline::kII: return "II";
    case Baseline::kIII: return "III";
    case Baseline::kV: return "V";
  }
  return "?";
}

inline std::string run_dir_name(const RunConfig& cfg, std::uint64_t seed,
                                std::optional<Baseline> baseline) {
  std::string name = config_hash_hex(cfg).substr(0, 12) + "-s" + std::to_string(seed);
  if (baseline) name += "-b" + baseline_name(*baseline);
  return name;
}

class Manifest {
 public:
  static Manifest create(const RunContext& ctx) {
    Manifest m;
    m.data_ = {{"format", "roskd-manifest"},
               {"version", 1},
               {"tool_version", ROSKD_VERSION},
               {"config_hash", config_hash_hex(ctx.cfg)},
               {"root_seed", ctx.seed},
               {"baseline", ctx.baseline ? json(baseline_name(*ctx.baseline)) : json(nullptr)},
               {"config", config_to_json(ctx.cfg)},
               {"stage_order", json::array()},
               {"stages", json::object()}};
    return m;
  }

  static Manifest load(const fs::path& path) {
    Manifest m;
    m.data_ = json::parse(read_text_file(path));
    if (m.data_.at("format") != "roskd-manifest") {
      throw std::invalid_argument("not a roskd manifest: " + path.string());
    }
    return m;
  }

  void record_stage(const std::string& name, const std::vector<std::string>& artifacts,
                    long wall_ms) {
    auto& order = data_["stage_order"];
    bool seen = false;
    for (const auto& s : order) seen = seen || s == name;
    if (!seen) order.push_back(name);
    data_["stages"][name] = {{"artifacts", artifacts}, {"wall_ms", wall_ms}};
  }

  void save(const fs::path& path) const { write_text_file(path, data_.dump(2) + "\n"); }

  RunConfig config() const { return parse_config(data_.at("config")); }
  std::uint64_t root_seed() const { return data_.at("root_seed").get<std::uint64_t>(); }
  std::optional<Baseline> baseline() const {
    if (data_.at("baseline").is_null()) return std::nullopt;
    return baseline_from_string(data_.at("baseline").get<std::string>());
  }
  std::vector<std::string> stage_order() const {
    return data_.at("stage_order").get<std::vector<std::string>>();
  }
  std::vector<std::string> stage_artifacts(const std::string& stage) const {
    return data_.at("stages").at(stage).at("artifacts").get<std::vector<std::string>>();
  }

 private:
  json data_;
};

namespace detail {

inline fs::path manifest_path(const RunContext& ctx) { return ctx.run_dir / "manifest.json"; }

inline Manifest load_or_create_manifest(const RunContext& ctx) {
  const fs::path path = manifest_path(ctx);
  if (fs::exists(path)) return Manifest::load(path);
  return Manifest::create(ctx);
}

inline void require_artifact(const RunContext& ctx, const std::string& file,
                             const std::string& producing_stage) {
  if (!fs::exists(ctx.run_dir / file)) {
    throw MissingDependency("dependency missing: " + (ctx.run_dir / file).string() + " (run 'roskd " +
                            producing_stage + "' first)");
  }
}

class StageTimer {
 public:
  StageTimer() : start_(std::chrono::steady_clock::now()) {}
  long elapsed_ms() const {
    return static_cast<long>(std::chrono::duration_cast<std::chrono::milliseconds>(
                                 std::chrono::steady_clock::now() - start_)
                                 .count());
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

}  // namespace detail

inline void stage_gen(const RunContext& ctx) {
  detail::StageTimer timer;
  fs::create_directories(ctx.run_dir);
  const LabeledDataset ds = build_dataset(ctx.cfg, ctx.seed);
  write_dataset(ctx.run_dir / "dataset.csv", ctx.run_dir / "dataset.json", ds);
  Manifest m = detail::load_or_create_manifest(ctx);
  m.record_stage("gen", {"dataset.csv", "dataset.json"}, timer.elapsed_ms());
  m.save(detail::manifest_path(ctx));
}

inline void stage_partition(const RunContext& ctx) {
  detail::StageTimer timer;
  detail::require_artifact(ctx, "dataset.json", "gen");
  const LabeledDataset ds = read_dataset(ctx.run_dir / "dataset.csv", ctx.run_dir / "dataset.json");
  const SplitIndices split = build_split(ds.size(), ctx.seed);
  const Partition part = build_partition(ctx.cfg, split.train.size(), ctx.seed);
  write_partition(ctx.run_dir / "partition.json", part);
  Manifest m = detail::load_or_create_manifest(ctx);
  m.record_stage("partition", {"partition.json"}, timer.elapsed_ms());
  m.save(detail::manifest_path(ctx));
}

inline void stage_train_teachers(const RunContext& ctx) {
  detail::StageTimer timer;
  detail::require_artifact(ctx, "dataset.json", "gen");
  detail::require_artifact(ctx, "partition.json", "partition");
  const LabeledDataset ds = read_dataset(ctx.run_dir / "dataset.csv", ctx.run_dir / "dataset.json");
  const SplitIndices split = build_split(ds.size(), ctx.seed);
  const Partition part = read_partition(ctx.run_dir / "partition.json");
  const TeacherEnsemble ensemble = build_teachers(ctx.cfg, ds, split.train, part, ctx.seed, ctx.jobs);

  const std::string run_id = run_dir_name(ctx.cfg, ctx.seed, ctx.baseline);
  std::vector<std::string> artifacts;
  for (std::size_t i = 0; i < ensemble.size(); ++i) {
    const std::string name = "teacher_" + std::to_string(i) + ".ckpt";
    save_checkpoint(ctx.run_dir / name, ensemble.teachers[i], run_id);
    artifacts.push_back(name);
  }
  json histories = json::array();
  for (const auto& h : ensemble.histories) {
    histories.push_back({{"loss", h.loss}, {"accuracy", h.accuracy}});
  }
  write_text_file(ctx.run_dir / "teacher_histories.json", json(histories).dump(2) + "\n");
  artifacts.push_back("teacher_histories.json");

  Manifest m = detail::load_or_create_manifest(ctx);
  m.record_stage("train-teachers", artifacts, timer.elapsed_ms());
  m.save(detail::manifest_path(ctx));
}

inline TeacherEnsemble load_teachers(const RunContext& ctx, int k) {
  TeacherEnsemble ensemble;
  for (int i = 0; i < k; ++i) {
    const std::string name = "teacher_" + std::to_string(i) + ".ckpt";
    detail::require_artifact(ctx, name, "train-teachers");
    ensemble.teachers.push_back(load_checkpoint(ctx.run_dir / name));
    ensemble.subset_ids.push_back(i);
    ensemble.histories.emplace_back();
  }
  return ensemble;
}

inline void stage_distill(const RunContext& ctx) {
  detail::StageTimer timer;
  detail::require_artifact(ctx, "dataset.json", "gen");
  detail::require_artifact(ctx, "partition.json", "partition");
  const LabeledDataset ds = read_dataset(ctx.run_dir / "dataset.csv", ctx.run_dir / "dataset.json");
  const SplitIndices split = build_split(ds.size(), ctx.seed);
  const TeacherEnsemble ensemble = load_teachers(ctx, ctx.cfg.partition.k);

  const DistillConfig dc = build_distill_config(ctx.cfg, ensemble, ctx.seed, ctx.baseline);
  const DistillResult result =
      run_distillation(student_spec(ctx.cfg, ctx.seed), ds, split.train, split.val, ensemble, dc);

  const std::string run_id = run_dir_name(ctx.cfg, ctx.seed, ctx.baseline);
  save_checkpoint(ctx.run_dir / "M.ckpt", result.student, run_id);
  save_checkpoint(ctx.run_dir / "M_smooth.ckpt", result.smooth, run_id);
  write_text_file(ctx.run_dir / "history.jsonl", history_to_jsonl(result.history));

  Manifest m = detail::load_or_create_manifest(ctx);
  m.record_stage("distill", {"M.ckpt", "M_smooth.ckpt", "history.jsonl"}, timer.elapsed_ms());
  m.save(detail::manifest_path(ctx));
}

inline void stage_attack(const RunContext& ctx) {
  detail::StageTimer timer;
  detail::require_artifact(ctx, "dataset.json", "gen");
  detail::require_artifact(ctx, "M_smooth.ckpt", "distill");
  const LabeledDataset ds = read_dataset(ctx.run_dir / "dataset.csv", ctx.run_dir / "dataset.json");
  const SplitIndices split = build_split(ds.size(), ctx.seed);
  const ParamVector model = load_checkpoint(ctx.run_dir / "M_smooth.ckpt");
  const RobustnessReport report =
      evaluate_robustness(model, ds, split.test, build_attack_config(ctx.cfg, ctx.seed));
  write_text_file(ctx.run_dir / "robustness.json", robustness_to_json(report).dump(2) + "\n");
  Manifest m = detail::load_or_create_manifest(ctx);
  m.record_stage("attack", {"robustness.json"}, timer.elapsed_ms());
  m.save(detail::manifest_path(ctx));
}

inline void stage_landscape(const RunContext& ctx) {
  detail::StageTimer timer;
  detail::require_artifact(ctx, "dataset.json", "gen");
  detail::require_artifact(ctx, "M_smooth.ckpt", "distill");
  const LabeledDataset ds = read_dataset(ctx.run_dir / "dataset.csv", ctx.run_dir / "dataset.json");
  const SplitIndices split = build_split(ds.size(), ctx.seed);
  const ParamVector model = load_checkpoint(ctx.run_dir / "M_smooth.ckpt");
  const LandscapeGrid grid = build_landscape(ctx.cfg, model, ds, split.test, ctx.seed);
  write_landscape(ctx.run_dir / "landscape.csv", ctx.run_dir / "landscape.json", grid,
                  derive_seed(ctx.seed, "stage.landscape"));
  Manifest m = detail::load_or_create_manifest(ctx);
  m.record_stage("landscape", {"landscape.csv", "landscape.json"}, timer.elapsed_ms());
  m.save(detail::manifest_path(ctx));
}

inline void stage_report(const RunContext& ctx) {
  detail::StageTimer timer;
  detail::require_artifact(ctx, "dataset.json", "gen");
  detail::require_artifact(ctx, "M_smooth.ckpt", "distill");
  const LabeledDataset ds = read_dataset(ctx.run_dir / "dataset.csv", ctx.run_dir / "dataset.json");
  const SplitIndices split = build_split(ds.size(), ctx.seed);
  const ParamVector model = load_checkpoint(ctx.run_dir / "M_smooth.ckpt");
  const MetricsReport report = full_report(model, ds, split.test, ds.task_mode);
  write_text_file(ctx.run_dir / "report.json", metrics_to_json(report).dump(2) + "\n");
  Manifest m = detail::load_or_create_manifest(ctx);
  m.record_stage("report", {"report.json"}, timer.elapsed_ms());
  m.save(detail::manifest_path(ctx));
}

inline void run_stage(const RunContext& ctx, const std::string& stage) {
  if (stage == "gen") stage_gen(ctx);
  else if (stage == "partition") stage_partition(ctx);
  else if (stage == "train-teachers") stage_train_teachers(ctx);
  else if (stage == "distill") stage_distill(ctx);
  else if (stage == "attack") stage_attack(ctx);
  else if (stage == "landscape") stage_landscape(ctx);
  else if (stage == "report") stage_report(ctx);
  else throw std::invalid_argument("unknown stage: " + stage);
}

inline const std::vector<std::string>& all_stages() {
  static const std::vector<std::string> stages = {
      "gen", "partition", "train-teachers", "distill", "attack", "landscape", "report"};
  return stages;
}

// Re-executes the stages recorded in a manifest into `replay_dir` and
// byte-compares every artifact against the original run.
struct ReplayResult {
  bool identical = true;
  std::vector<std::string> mismatches;
};

inline ReplayResult replay_manifest(const fs::path& manifest_file, const fs::path& replay_dir,
                                    int jobs, std::ostream* log = nullptr) {
  const Manifest manifest = Manifest::load(manifest_file);
  RunContext ctx;
  ctx.cfg = manifest.config();
  ctx.seed = manifest.root_seed();
  ctx.baseline = manifest.baseline();
  ctx.run_dir = replay_dir;
  ctx.jobs = jobs;
  fs::create_directories(replay_dir);

  const fs::path original_dir = manifest_file.parent_path();
  ReplayResult result;
  for (const std::string& stage : manifest.stage_order()) {
    run_stage(ctx, stage);
    for (const std::string& artifact : manifest.stage_artifacts(stage)) {
      const std::string original = read_text_file(original_dir / artifact);
      const std::string replayed = read_text_file(replay_dir / artifact);
      const bool same = original == replayed;
      result.identical = result.identical && same;
      if (!same) result.mismatches.push_back(artifact);
      if (log) *log << (same ? "  identical " : "  MISMATCH  ") << artifact << "\n";
    }
  }
  return result;
}

}  // namespace roskd
