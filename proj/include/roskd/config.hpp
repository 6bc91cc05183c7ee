// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstdio>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "roskd/attack.hpp"
#include "roskd/dataset.hpp"
#include "roskd/distill.hpp"
#include "roskd/landscape.hpp"
#include "roskd/nn.hpp"
#include "roskd/partition.hpp"
#include "roskd/rng.hpp"

// Versioned JSON run configuration. Parsing is strict: unknown keys are
// hard errors, so a mistyped hyperparameter name cannot silently fall back
// to a default.

namespace roskd {

using nlohmann::json;

struct RunConfig {
  std::uint64_t seed = 1;

  // Defaults are the reference experiment: a 2000-sample 8-class dataset
  // whose classes are scattered mixtures (so a disjoint fifth of the
  // training split genuinely undersamples them), five deep teachers of
  // distinct shapes, and a small shallow student.
  struct Dataset {
    int classes = 8;
    int dim = 16;
    int per_class = 250;
    double separation = 1.5;
    int modes_per_class = 12;
    double intra_radius = 5.0;
    double noise_rate = 0.3;
    TaskMode task_mode = TaskMode::kSingleLabel;
    bool asymmetric_noise = false;
  } dataset;

  struct PartitionSection {
    int k = 5;
    double p = 0.4;
  } partition;

  struct Teachers {
    std::vector<std::vector<int>> hidden = {
        {64, 64, 64}, {128, 128}, {96, 96, 96}, {160, 80}, {128, 64, 32}};
    int epochs = 50;
    int batch = 64;
  } teachers;

  struct Student {
    std::vector<int> hidden = {48};
  } student;

  struct Distill {
    double alpha = 0.9;
    double tau = 0.5;
    std::string sampler = "exponential";  // exponential | equal | single
    std::optional<int> single_teacher;    // default: largest teacher
    double exponential_rate = 1.0;
    bool averaging = true;
    int warmup_epochs = 10;
    int epochs = 50;
    int batch = 64;
    std::string resample = "iteration";  // iteration | example
  } distill;

  OptimConfig optim;

  struct Attack {
    std::string kind = "pgd";  // pgd | fgsm
    double epsilon = 128.0 / 255.0;
    int steps = 10;
    std::optional<double> step_size;  // default epsilon / 4
    bool random_start = true;
  } attack;

  struct Landscape {
    int points = 41;
    double extent = 1.0;
    double clamp = 8.0;
    int eval_batch = 256;
  } landscape;
};

namespace detail {

inline void require_known_keys(const json& j, const std::string& section,
                               std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw std::invalid_argument("config: " + section + " must be an object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* key : allowed) {
      if (item.key() == key) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw std::invalid_argument("config: unknown key '" + item.key() + "' in " + section);
    }
  }
}

template <typename T>
void read_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

template <typename T>
void read_optional(const json& j, const char* key, std::optional<T>& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

}  // namespace detail

inline RunConfig parse_config(const json& j) {
  detail::require_known_keys(j, "config root",
                             {"version", "seed", "dataset", "partition", "teachers", "student",
                              "distill", "optimizer", "attack", "landscape"});
  if (!j.contains("version") || j.at("version").get<int>() != 1) {
    throw std::invalid_argument("config: expected version 1");
  }
  RunConfig cfg;
  detail::read_if(j, "seed", cfg.seed);

  if (j.contains("dataset")) {
    const json& d = j.at("dataset");
    detail::require_known_keys(d, "dataset",
                               {"classes", "dim", "per_class", "separation", "modes_per_class",
                                "intra_radius", "noise_rate", "task_mode", "asymmetric_noise"});
    detail::read_if(d, "classes", cfg.dataset.classes);
    detail::read_if(d, "dim", cfg.dataset.dim);
    detail::read_if(d, "per_class", cfg.dataset.per_class);
    detail::read_if(d, "separation", cfg.dataset.separation);
    detail::read_if(d, "modes_per_class", cfg.dataset.modes_per_class);
    detail::read_if(d, "intra_radius", cfg.dataset.intra_radius);
    detail::read_if(d, "noise_rate", cfg.dataset.noise_rate);
    detail::read_if(d, "asymmetric_noise", cfg.dataset.asymmetric_noise);
    if (d.contains("task_mode")) {
      const std::string mode = d.at("task_mode").get<std::string>();
      if (mode == "single_label") cfg.dataset.task_mode = TaskMode::kSingleLabel;
      else if (mode == "multi_label") cfg.dataset.task_mode = TaskMode::kMultiLabel;
      else throw std::invalid_argument("config: task_mode must be single_label or multi_label");
    }
  }

  if (j.contains("partition")) {
    const json& p = j.at("partition");
    detail::require_known_keys(p, "partition", {"k", "p"});
    detail::read_if(p, "k", cfg.partition.k);
    detail::read_if(p, "p", cfg.partition.p);
  }

  if (j.contains("teachers")) {
    const json& t = j.at("teachers");
    detail::require_known_keys(t, "teachers", {"hidden", "epochs", "batch"});
    detail::read_if(t, "hidden", cfg.teachers.hidden);
    detail::read_if(t, "epochs", cfg.teachers.epochs);
    detail::read_if(t, "batch", cfg.teachers.batch);
  }

  if (j.contains("student")) {
    const json& s = j.at("student");
    detail::require_known_keys(s, "student", {"hidden"});
    detail::read_if(s, "hidden", cfg.student.hidden);
  }

  if (j.contains("distill")) {
    const json& d = j.at("distill");
    detail::require_known_keys(d, "distill",
                               {"alpha", "tau", "sampler", "single_teacher", "exponential_rate",
                                "averaging", "warmup_epochs", "epochs", "batch", "resample"});
    detail::read_if(d, "alpha", cfg.distill.alpha);
    detail::read_if(d, "tau", cfg.distill.tau);
    detail::read_if(d, "sampler", cfg.distill.sampler);
    detail::read_optional(d, "single_teacher", cfg.distill.single_teacher);
    detail::read_if(d, "exponential_rate", cfg.distill.exponential_rate);
    detail::read_if(d, "averaging", cfg.distill.averaging);
    detail::read_if(d, "warmup_epochs", cfg.distill.warmup_epochs);
    detail::read_if(d, "epochs", cfg.distill.epochs);
    detail::read_if(d, "batch", cfg.distill.batch);
    detail::read_if(d, "resample", cfg.distill.resample);
  }

  if (j.contains("optimizer")) {
    const json& o = j.at("optimizer");
    detail::require_known_keys(
        o, "optimizer", {"momentum", "weight_decay", "base_lr", "decay_epochs", "decay_factor"});
    detail::read_if(o, "momentum", cfg.optim.momentum);
    detail::read_if(o, "weight_decay", cfg.optim.weight_decay);
    detail::read_if(o, "base_lr", cfg.optim.base_lr);
    detail::read_if(o, "decay_epochs", cfg.optim.decay_epochs);
    detail::read_if(o, "decay_factor", cfg.optim.decay_factor);
  }

  if (j.contains("attack")) {
    const json& a = j.at("attack");
    detail::require_known_keys(a, "attack",
                               {"kind", "epsilon", "steps", "step_size", "random_start"});
    detail::read_if(a, "kind", cfg.attack.kind);
    if (cfg.attack.kind != "pgd" && cfg.attack.kind != "fgsm") {
      throw std::invalid_argument("config: attack kind must be pgd or fgsm");
    }
    detail::read_if(a, "epsilon", cfg.attack.epsilon);
    detail::read_if(a, "steps", cfg.attack.steps);
    detail::read_optional(a, "step_size", cfg.attack.step_size);
    detail::read_if(a, "random_start", cfg.attack.random_start);
  }

  if (j.contains("landscape")) {
    const json& l = j.at("landscape");
    detail::require_known_keys(l, "landscape", {"points", "extent", "clamp", "eval_batch"});
    detail::read_if(l, "points", cfg.landscape.points);
    detail::read_if(l, "extent", cfg.landscape.extent);
    detail::read_if(l, "clamp", cfg.landscape.clamp);
    detail::read_if(l, "eval_batch", cfg.landscape.eval_batch);
  }

  if (cfg.distill.sampler != "exponential" && cfg.distill.sampler != "equal" &&
      cfg.distill.sampler != "single") {
    throw std::invalid_argument("config: sampler must be exponential, equal, or single");
  }
  if (cfg.distill.resample != "iteration" && cfg.distill.resample != "example") {
    throw std::invalid_argument("config: resample must be iteration or example");
  }
  return cfg;
}

inline json config_to_json(const RunConfig& cfg) {
  json j;
  j["version"] = 1;
  j["seed"] = cfg.seed;
  j["dataset"] = {{"classes", cfg.dataset.classes},
                  {"dim", cfg.dataset.dim},
                  {"per_class", cfg.dataset.per_class},
                  {"separation", cfg.dataset.separation},
                  {"modes_per_class", cfg.dataset.modes_per_class},
                  {"intra_radius", cfg.dataset.intra_radius},
                  {"noise_rate", cfg.dataset.noise_rate},
                  {"task_mode",
                   cfg.dataset.task_mode == TaskMode::kSingleLabel ? "single_label" : "multi_label"},
                  {"asymmetric_noise", cfg.dataset.asymmetric_noise}};
  j["partition"] = {{"k", cfg.partition.k}, {"p", cfg.partition.p}};
  j["teachers"] = {{"hidden", cfg.teachers.hidden},
                   {"epochs", cfg.teachers.epochs},
                   {"batch", cfg.teachers.batch}};
  j["student"] = {{"hidden", cfg.student.hidden}};
  j["distill"] = {{"alpha", cfg.distill.alpha},
                  {"tau", cfg.distill.tau},
                  {"sampler", cfg.distill.sampler},
                  {"single_teacher",
                   cfg.distill.single_teacher ? json(*cfg.distill.single_teacher) : json(nullptr)},
                  {"exponential_rate", cfg.distill.exponential_rate},
                  {"averaging", cfg.distill.averaging},
                  {"warmup_epochs", cfg.distill.warmup_epochs},
                  {"epochs", cfg.distill.epochs},
                  {"batch", cfg.distill.batch},
                  {"resample", cfg.distill.resample}};
  j["optimizer"] = {{"momentum", cfg.optim.momentum},
                    {"weight_decay", cfg.optim.weight_decay},
                    {"base_lr", cfg.optim.base_lr},
                    {"decay_epochs", cfg.optim.decay_epochs},
                    {"decay_factor", cfg.optim.decay_factor}};
  j["attack"] = {{"kind", cfg.attack.kind},
                 {"epsilon", cfg.attack.epsilon},
                 {"steps", cfg.attack.steps},
                 {"step_size", cfg.attack.step_size ? json(*cfg.attack.step_size) : json(nullptr)},
                 {"random_start", cfg.attack.random_start}};
  j["landscape"] = {{"points", cfg.landscape.points},
                    {"extent", cfg.landscape.extent},
                    {"clamp", cfg.landscape.clamp},
                    {"eval_batch", cfg.landscape.eval_batch}};
  return j;
}

// FNV-1a over the canonical dump; nlohmann objects iterate in sorted key
// order, so the hash is stable across field insertion order.
inline std::uint64_t config_hash(const RunConfig& cfg) {
  const std::string dump = config_to_json(cfg).dump();
  return detail::fnv1a_mix(0xcbf29ce484222325ULL, std::string_view(dump));
}

inline std::string config_hash_hex(const RunConfig& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(config_hash(cfg)));
  return std::string(buf);
}

}  // namespace roskd
