// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "roskd/ablation.hpp"
#include "roskd/pipeline.hpp"

using namespace roskd;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("roskd_pipeline_test_" + std::to_string(::getpid() + std::rand()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

RunConfig tiny_config() {
  RunConfig cfg;
  cfg.seed = 3;
  cfg.dataset.classes = 3;
  cfg.dataset.dim = 4;
  cfg.dataset.per_class = 30;
  cfg.dataset.separation = 4.0;
  cfg.dataset.modes_per_class = 1;
  cfg.dataset.intra_radius = 0.0;
  cfg.dataset.noise_rate = 0.2;
  cfg.partition = {2, 0.5};
  cfg.teachers.hidden = {{8}, {10}};
  cfg.teachers.epochs = 3;
  cfg.teachers.batch = 16;
  cfg.student.hidden = {6};
  cfg.distill.epochs = 3;
  cfg.distill.warmup_epochs = 1;
  cfg.distill.batch = 16;
  cfg.attack.steps = 2;
  cfg.landscape.points = 5;
  cfg.landscape.eval_batch = 12;
  return cfg;
}

RunContext make_ctx(const RunConfig& cfg, const fs::path& dir) {
  RunContext ctx;
  ctx.cfg = cfg;
  ctx.seed = cfg.seed;
  ctx.run_dir = dir;
  ctx.jobs = 2;
  return ctx;
}

}  // namespace

TEST_CASE("stages write their artifacts and the manifest") {
  const TempDir tmp;
  const RunContext ctx = make_ctx(tiny_config(), tmp.path / "run");
  for (const std::string& stage : all_stages()) run_stage(ctx, stage);

  for (const char* name :
       {"dataset.csv", "dataset.json", "partition.json", "teacher_0.ckpt", "teacher_1.ckpt",
        "teacher_histories.json", "M.ckpt", "M_smooth.ckpt", "history.jsonl", "robustness.json",
        "landscape.csv", "landscape.json", "report.json", "manifest.json"}) {
    CHECK(fs::exists(ctx.run_dir / name));
  }

  const Manifest manifest = Manifest::load(ctx.run_dir / "manifest.json");
  CHECK(manifest.stage_order() == all_stages());
  CHECK(manifest.root_seed() == 3);
}

TEST_CASE("missing upstream artifacts name the producing stage") {
  const TempDir tmp;
  const RunContext ctx = make_ctx(tiny_config(), tmp.path / "run");
  CHECK_THROWS_WITH_AS(stage_distill(ctx), doctest::Contains("run 'roskd gen' first"),
                       MissingDependency);
  stage_gen(ctx);
  CHECK_THROWS_WITH_AS(stage_distill(ctx), doctest::Contains("run 'roskd partition' first"),
                       MissingDependency);
  stage_partition(ctx);
  CHECK_THROWS_WITH_AS(stage_distill(ctx), doctest::Contains("run 'roskd train-teachers' first"),
                       MissingDependency);
}

TEST_CASE("rerunning a stage reproduces identical bytes") {
  const TempDir tmp;
  const RunContext ctx = make_ctx(tiny_config(), tmp.path / "run");
  stage_gen(ctx);
  stage_partition(ctx);
  stage_train_teachers(ctx);
  stage_distill(ctx);
  const std::string first = read_text_file(ctx.run_dir / "M_smooth.ckpt");
  stage_distill(ctx);
  CHECK(read_text_file(ctx.run_dir / "M_smooth.ckpt") == first);
}

TEST_CASE("manifest replay is bit-identical") {
  const TempDir tmp;
  const RunContext ctx = make_ctx(tiny_config(), tmp.path / "run");
  for (const std::string& stage : all_stages()) run_stage(ctx, stage);
  const ReplayResult result =
      replay_manifest(ctx.run_dir / "manifest.json", tmp.path / "replay", 2);
  CHECK(result.identical);
  CHECK(result.mismatches.empty());
}

TEST_CASE("baseline flag maps to the documented config reduction") {
  const TempDir tmp;
  const RunConfig cfg = tiny_config();

  RunContext flagged = make_ctx(cfg, tmp.path / "flagged");
  flagged.baseline = Baseline::kIII;
  for (const std::string& stage : {"gen", "partition", "train-teachers", "distill"}) {
    run_stage(flagged, stage);
  }

  RunConfig manual_cfg = cfg;
  manual_cfg.distill.sampler = "equal";
  manual_cfg.distill.averaging = false;
  RunContext manual = make_ctx(manual_cfg, tmp.path / "manual");
  for (const std::string& stage : {"gen", "partition", "train-teachers", "distill"}) {
    run_stage(manual, stage);
  }

  const ParamVector a = load_checkpoint(flagged.run_dir / "M_smooth.ckpt");
  const ParamVector b = load_checkpoint(manual.run_dir / "M_smooth.ckpt");
  CHECK(a.values == b.values);
}

TEST_CASE("run directory name combines config hash, seed, and baseline") {
  const RunConfig cfg = tiny_config();
  const std::string plain = run_dir_name(cfg, 3, std::nullopt);
  CHECK(plain == config_hash_hex(cfg).substr(0, 12) + "-s3");
  CHECK(run_dir_name(cfg, 3, Baseline::kV) == plain + "-bV");
}

TEST_CASE("jobs do not change teacher training results") {
  const RunConfig cfg = tiny_config();
  const LabeledDataset ds = build_dataset(cfg, cfg.seed);
  const SplitIndices split = build_split(ds.size(), cfg.seed);
  const Partition part = build_partition(cfg, split.train.size(), cfg.seed);
  const TeacherEnsemble serial = build_teachers(cfg, ds, split.train, part, cfg.seed, 1);
  const TeacherEnsemble parallel = build_teachers(cfg, ds, split.train, part, cfg.seed, 4);
  REQUIRE(serial.size() == parallel.size());
  for (std::size_t i = 0; i < serial.size(); ++i) {
    CHECK(serial.teachers[i].values == parallel.teachers[i].values);
  }
}

TEST_CASE("single-cell ablation equals a direct run") {
  const RunConfig cfg = tiny_config();
  const auto rows = run_ablation(cfg, {0.5}, {"exponential"}, {true}, {cfg.seed}, 1);
  REQUIRE(rows.size() == 1);
  REQUIRE(rows[0].ok);

  const LabeledDataset ds = build_dataset(cfg, cfg.seed);
  const SplitIndices split = build_split(ds.size(), cfg.seed);
  const Partition part = build_partition(cfg, split.train.size(), cfg.seed);
  const TeacherEnsemble ensemble = build_teachers(cfg, ds, split.train, part, cfg.seed, 1);
  const DistillResult direct =
      run_distillation(student_spec(cfg, cfg.seed), ds, split.train, split.val, ensemble,
                       build_distill_config(cfg, ensemble, cfg.seed));
  const MetricsReport report = full_report(direct.smooth, ds, split.test, ds.task_mode);
  CHECK(rows[0].f1 == report.f1);
  CHECK(rows[0].precision == report.precision);
}

TEST_CASE("failed ablation cells are marked and the sweep continues") {
  RunConfig cfg = tiny_config();
  cfg.distill.warmup_epochs = 99;  // invalid: warmup >= epochs
  const auto rows = run_ablation(cfg, {0.0, 0.5}, {"exponential"}, {true}, {cfg.seed}, 1);
  REQUIRE(rows.size() == 2);
  for (const auto& row : rows) {
    CHECK_FALSE(row.ok);
    CHECK(!row.error.empty());
  }
  const std::string csv = ablation_csv(rows);
  CHECK(csv.find("failed:") != std::string::npos);
}
