// SPDX-License-Identifier: Apache-2.0
//
// roskd: stochastic multi-teacher distillation lab.
//
// Typical flow:
//   roskd pipeline --config cfg.json --seed 1 --out runs
// or stage by stage:
//   roskd gen | partition | train-teachers | distill | attack | landscape | report
// plus:
//   roskd ablation  (sweep overlap/sampler/averaging over seeds)
//   roskd replay    (re-execute a manifest and verify bit-identical artifacts)

#include <cstdlib>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "roskd/roskd.hpp"

namespace {

using namespace roskd;

struct CommonOptions {
  std::string config_path;
  std::string out_dir = "runs";
  std::string run_name;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string baseline;
  int jobs = 1;
};

void add_common_flags(CLI::App* cmd, CommonOptions& opts, bool with_baseline) {
  cmd->add_option("--config", opts.config_path, "JSON run configuration")->required();
  cmd->add_option("--out", opts.out_dir, "output root directory (default: runs)");
  cmd->add_option("--run-name", opts.run_name, "override the hash-seed run directory name");
  cmd->add_option("--seed", opts.seed, "root seed override")->each([&](const std::string&) {
    opts.seed_set = true;
  });
  cmd->add_option("--jobs", opts.jobs, "parallel workers within a stage")
      ->check(CLI::PositiveNumber);
  if (with_baseline) {
    cmd->add_option("--baseline", opts.baseline, "run a baseline configuration: I, II, III or V")
        ->check(CLI::IsMember({"I", "II", "III", "V"}));
  }
}

RunContext make_context(const CommonOptions& opts) {
  RunContext ctx;
  ctx.cfg = parse_config(json::parse(read_text_file(opts.config_path)));
  ctx.seed = opts.seed_set ? opts.seed : ctx.cfg.seed;
  if (!opts.baseline.empty()) ctx.baseline = baseline_from_string(opts.baseline);
  ctx.jobs = opts.jobs;

  std::string out_dir = opts.out_dir;
  if (const char* env = std::getenv("ROSKD_OUT"); env && *env) out_dir = env;
  const std::string name =
      opts.run_name.empty() ? run_dir_name(ctx.cfg, ctx.seed, ctx.baseline) : opts.run_name;
  ctx.run_dir = fs::path(out_dir) / name;
  return ctx;
}

std::vector<double> parse_double_list(const std::string& csv) {
  std::vector<double> values;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) values.push_back(std::stod(item));
  }
  return values;
}

std::vector<std::string> parse_string_list(const std::string& csv) {
  std::vector<std::string> values;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) values.push_back(item);
  }
  return values;
}

int run_single_stage(const CommonOptions& opts, const std::string& stage) {
  const RunContext ctx = make_context(opts);
  run_stage(ctx, stage);
  std::cout << stage << ": wrote artifacts under " << ctx.run_dir.string() << "\n";
  return 0;
}

int cmd_partition_sweep(const CommonOptions& opts, const std::string& sweep) {
  const RunContext ctx = make_context(opts);
  const LabeledDataset ds = build_dataset(ctx.cfg, ctx.seed);
  const SplitIndices split = build_split(ds.size(), ctx.seed);
  std::ostringstream csv;
  csv << "p,k,min_subset,max_subset,mean_coverage,mean_offdiag_jaccard\n";
  for (double p : parse_double_list(sweep)) {
    RunConfig cfg = ctx.cfg;
    cfg.partition.p = p;
    const Partition part = build_partition(cfg, split.train.size(), ctx.seed);
    const OverlapStats stats = overlap_stats(part);
    std::size_t min_size = part.subsets[0].size(), max_size = part.subsets[0].size();
    for (const auto& s : part.subsets) {
      min_size = std::min(min_size, s.size());
      max_size = std::max(max_size, s.size());
    }
    double offdiag = 0.0;
    int pairs = 0;
    for (int a = 0; a < part.spec.k; ++a) {
      for (int b = a + 1; b < part.spec.k; ++b) {
        offdiag += stats.jaccard(a, b);
        ++pairs;
      }
    }
    csv << p << "," << part.spec.k << "," << min_size << "," << max_size << ","
        << stats.mean_coverage << "," << (pairs ? offdiag / pairs : 1.0) << "\n";
  }
  fs::create_directories(ctx.run_dir);
  write_text_file(ctx.run_dir / "partition_sweep.csv", csv.str());
  std::cout << "partition sweep: wrote " << (ctx.run_dir / "partition_sweep.csv").string() << "\n";
  return 0;
}

int cmd_pipeline(const CommonOptions& opts) {
  const RunContext ctx = make_context(opts);
  for (const std::string& stage : all_stages()) {
    run_stage(ctx, stage);
    std::cout << "stage " << stage << " done\n";
  }
  std::cout << "pipeline complete: " << ctx.run_dir.string() << "\n";
  return 0;
}

int cmd_ablation(const CommonOptions& opts, const std::string& p_values,
                 const std::string& samplers, const std::string& averaging, int num_seeds) {
  const RunContext ctx = make_context(opts);
  std::vector<bool> averaging_options;
  for (const auto& token : parse_string_list(averaging)) {
    if (token == "on") averaging_options.push_back(true);
    else if (token == "off") averaging_options.push_back(false);
    else throw std::invalid_argument("--averaging entries must be on/off");
  }
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < num_seeds; ++i) seeds.push_back(ctx.seed + static_cast<std::uint64_t>(i));

  const auto rows = run_ablation(ctx.cfg, parse_double_list(p_values),
                                 parse_string_list(samplers), averaging_options, seeds, ctx.jobs,
                                 &std::cout);
  fs::create_directories(ctx.run_dir);
  write_text_file(ctx.run_dir / "ablation.csv", ablation_csv(rows));
  std::cout << "ablation: wrote " << (ctx.run_dir / "ablation.csv").string() << "\n";
  for (const auto& row : rows) {
    if (!row.ok) {
      std::cout << "note: cell p=" << row.cell.p << " sampler=" << row.cell.sampler
                << " seed=" << row.seed << " failed: " << row.error << "\n";
    }
  }
  return 0;
}

int cmd_replay(const std::string& manifest_path, const std::string& replay_dir, int jobs) {
  std::string dir = replay_dir;
  if (dir.empty()) dir = manifest_path + ".replay";
  const ReplayResult result = replay_manifest(manifest_path, dir, jobs, &std::cout);
  if (result.identical) {
    std::cout << "replay: all artifacts bit-identical\n";
    return 0;
  }
  std::cout << "replay: " << result.mismatches.size() << " artifact(s) differ\n";
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stochastic multi-teacher distillation lab"};
  app.require_subcommand(1);
  app.set_version_flag("--version", ROSKD_VERSION);

  CommonOptions opts;
  std::string sweep, manifest_path, replay_dir;
  std::string p_values = "0,0.2,0.4,0.6,0.8,1.0";
  std::string samplers = "exponential";
  std::string averaging = "on";
  int num_seeds = 5;

  auto* gen = app.add_subcommand("gen", "generate the synthetic noisy dataset");
  add_common_flags(gen, opts, false);

  auto* partition = app.add_subcommand("partition", "build the overlapping training subsets");
  add_common_flags(partition, opts, false);
  partition->add_option("--sweep", sweep, "comma-separated overlap ratios; emits stats only");

  auto* teachers = app.add_subcommand("train-teachers", "train one teacher per subset");
  add_common_flags(teachers, opts, false);

  auto* distill = app.add_subcommand("distill", "train the student under the configured sampler");
  add_common_flags(distill, opts, true);

  auto* attack = app.add_subcommand("attack", "evaluate robustness before/after an l2 attack");
  add_common_flags(attack, opts, false);

  auto* landscape = app.add_subcommand("landscape", "loss-landscape slice around the student");
  add_common_flags(landscape, opts, false);

  auto* report = app.add_subcommand("report", "test-split metrics for the trained student");
  add_common_flags(report, opts, false);

  auto* pipeline = app.add_subcommand("pipeline", "run every stage in order");
  add_common_flags(pipeline, opts, true);

  auto* ablation = app.add_subcommand("ablation", "sweep overlap/sampler/averaging over seeds");
  add_common_flags(ablation, opts, false);
  ablation->add_option("--p-values", p_values, "overlap ratios to sweep");
  ablation->add_option("--samplers", samplers, "samplers to sweep: exponential,equal,single");
  ablation->add_option("--averaging", averaging, "averaging settings to sweep: on,off");
  ablation->add_option("--num-seeds", num_seeds, "seeds per cell, starting at the root seed")
      ->check(CLI::PositiveNumber);

  auto* replay = app.add_subcommand("replay", "re-execute a manifest and verify artifacts");
  replay->add_option("--manifest", manifest_path, "manifest.json of the original run")->required();
  replay->add_option("--dir", replay_dir, "directory for the replayed run");
  replay->add_option("--jobs", opts.jobs, "parallel workers")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return run_single_stage(opts, "gen");
    if (partition->parsed()) {
      return sweep.empty() ? run_single_stage(opts, "partition") : cmd_partition_sweep(opts, sweep);
    }
    if (teachers->parsed()) return run_single_stage(opts, "train-teachers");
    if (distill->parsed()) return run_single_stage(opts, "distill");
    if (attack->parsed()) return run_single_stage(opts, "attack");
    if (landscape->parsed()) return run_single_stage(opts, "landscape");
    if (report->parsed()) return run_single_stage(opts, "report");
    if (pipeline->parsed()) return cmd_pipeline(opts);
    if (ablation->parsed()) return cmd_ablation(opts, p_values, samplers, averaging, num_seeds);
    if (replay->parsed()) return cmd_replay(manifest_path, replay_dir, opts.jobs);
  } catch (const MissingDependency& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
