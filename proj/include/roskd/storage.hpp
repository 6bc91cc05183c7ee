// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <charconv>
#include <cstdint>
#include <span>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "roskd/attack.hpp"
#include "roskd/dataset.hpp"
#include "roskd/distill.hpp"
#include "roskd/landscape.hpp"
#include "roskd/metrics.hpp"
#include "roskd/nn.hpp"
#include "roskd/partition.hpp"

// On-disk formats. Checkpoints store parameters as hex-encoded IEEE-754 bit
// patterns so they round-trip bit-exactly; CSV floats use shortest
// round-trip formatting.

namespace roskd {

using nlohmann::json;

namespace detail {

inline std::string double_to_string(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double string_to_double(std::string_view s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{}) throw std::invalid_argument("bad float field: " + std::string(s));
  return v;
}

constexpr char kHexDigits[] = "0123456789abcdef";

}  // namespace detail

inline std::string doubles_to_hex(std::span<const double> values) {
  std::string out;
  out.reserve(values.size() * 16);
  for (double v : values) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    for (int shift = 60; shift >= 0; shift -= 4) {
      out.push_back(detail::kHexDigits[(bits >> shift) & 0xF]);
    }
  }
  return out;
}

inline std::vector<double> hex_to_doubles(std::string_view hex) {
  if (hex.size() % 16 != 0) throw std::invalid_argument("hex blob length not a multiple of 16");
  std::vector<double> out(hex.size() / 16);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint64_t bits = 0;
    for (int j = 0; j < 16; ++j) {
      const char c = hex[i * 16 + j];
      int digit;
      if (c >= '0' && c <= '9') digit = c - '0';
      else if (c >= 'a' && c <= 'f') digit = c - 'a' + 10;
      else throw std::invalid_argument("bad hex digit in parameter blob");
      bits = (bits << 4) | static_cast<std::uint64_t>(digit);
    }
    std::memcpy(&out[i], &bits, sizeof(double));
  }
  return out;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << contents;
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---- model checkpoints ----

inline json spec_to_json(const ModelSpec& spec) {
  return json{{"layer_widths", spec.layer_widths},
              {"activation", "relu"},
              {"init_seed", spec.init_seed}};
}

inline ModelSpec spec_from_json(const json& j) {
  ModelSpec spec;
  spec.layer_widths = j.at("layer_widths").get<std::vector<int>>();
  if (j.at("activation").get<std::string>() != "relu") {
    throw std::invalid_argument("unknown activation in checkpoint");
  }
  spec.init_seed = j.at("init_seed").get<std::uint64_t>();
  validate_spec(spec);
  return spec;
}

inline void save_checkpoint(const std::filesystem::path& path, const ParamVector& params,
                            const std::string& run_id) {
  json j{{"format", "roskd-checkpoint"},
         {"version", 1},
         {"run_id", run_id},
         {"spec", spec_to_json(params.spec)},
         {"param_count", params.values.size()},
         {"values_hex", doubles_to_hex(params.values)}};
  write_text_file(path, j.dump(2) + "\n");
}

inline ParamVector load_checkpoint(const std::filesystem::path& path, std::string* run_id = nullptr) {
  const json j = json::parse(read_text_file(path));
  if (j.at("format") != "roskd-checkpoint" || j.at("version") != 1) {
    throw std::invalid_argument("not a roskd checkpoint: " + path.string());
  }
  ParamVector params;
  params.spec = spec_from_json(j.at("spec"));
  params.values = hex_to_doubles(j.at("values_hex").get<std::string>());
  if (params.values.size() != param_count(params.spec) ||
      params.values.size() != j.at("param_count").get<std::size_t>()) {
    throw std::invalid_argument("checkpoint parameter count mismatch: " + path.string());
  }
  if (run_id) *run_id = j.at("run_id").get<std::string>();
  return params;
}

// ---- datasets: CSV + JSON sidecar ----

inline void write_dataset(const std::filesystem::path& csv_path,
                          const std::filesystem::path& sidecar_path, const LabeledDataset& ds) {
  std::ostringstream csv;
  const int dim = ds.dim();
  for (int j = 0; j < dim; ++j) csv << "feat_" << j << ",";
  if (ds.task_mode == TaskMode::kSingleLabel) {
    csv << "clean,noisy\n";
  } else {
    for (int c = 0; c < ds.classes; ++c) csv << "clean_" << c << ",";
    for (int c = 0; c < ds.classes; ++c) csv << "noisy_" << c << (c + 1 < ds.classes ? "," : "\n");
  }
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (int j = 0; j < dim; ++j) csv << detail::double_to_string(ds.features(i, j)) << ",";
    if (ds.task_mode == TaskMode::kSingleLabel) {
      csv << ds.clean_labels[i] << "," << ds.noisy_labels[i] << "\n";
    } else {
      for (int c = 0; c < ds.classes; ++c) csv << ((ds.clean_labels[i] >> c) & 1u) << ",";
      for (int c = 0; c < ds.classes; ++c) {
        csv << ((ds.noisy_labels[i] >> c) & 1u) << (c + 1 < ds.classes ? "," : "\n");
      }
    }
  }
  write_text_file(csv_path, csv.str());

  json sidecar{{"format", "roskd-dataset"},
               {"version", 1},
               {"classes", ds.classes},
               {"dim", dim},
               {"per_class", ds.per_class},
               {"separation", ds.separation},
               {"modes_per_class", ds.modes_per_class},
               {"intra_radius", ds.intra_radius},
               {"noise_rate", ds.noise_rate},
               {"asymmetric_noise", ds.asymmetric_noise},
               {"task_mode", ds.task_mode == TaskMode::kSingleLabel ? "single_label" : "multi_label"},
               {"seed", ds.seed},
               {"n_samples", ds.size()}};
  write_text_file(sidecar_path, sidecar.dump(2) + "\n");
}

inline LabeledDataset read_dataset(const std::filesystem::path& csv_path,
                                   const std::filesystem::path& sidecar_path) {
  const json sidecar = json::parse(read_text_file(sidecar_path));
  if (sidecar.at("format") != "roskd-dataset") {
    throw std::invalid_argument("not a roskd dataset sidecar: " + sidecar_path.string());
  }
  LabeledDataset ds;
  ds.classes = sidecar.at("classes").get<int>();
  ds.per_class = sidecar.at("per_class").get<int>();
  ds.separation = sidecar.at("separation").get<double>();
  ds.modes_per_class = sidecar.at("modes_per_class").get<int>();
  ds.intra_radius = sidecar.at("intra_radius").get<double>();
  ds.noise_rate = sidecar.at("noise_rate").get<double>();
  ds.asymmetric_noise = sidecar.at("asymmetric_noise").get<bool>();
  ds.task_mode = sidecar.at("task_mode") == "single_label" ? TaskMode::kSingleLabel
                                                           : TaskMode::kMultiLabel;
  ds.seed = sidecar.at("seed").get<std::uint64_t>();
  const int dim = sidecar.at("dim").get<int>();
  const std::size_t n = sidecar.at("n_samples").get<std::size_t>();

  ds.features = Matrix(n, static_cast<std::size_t>(dim));
  ds.clean_labels.resize(n);
  ds.noisy_labels.resize(n);

  std::istringstream in(read_text_file(csv_path));
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("empty dataset csv");
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (row >= n) throw std::invalid_argument("dataset csv has more rows than sidecar declares");
    std::size_t pos = 0;
    auto next_field = [&]() {
      const std::size_t comma = line.find(',', pos);
      const std::string_view field(line.data() + pos,
                                   (comma == std::string::npos ? line.size() : comma) - pos);
      pos = comma == std::string::npos ? line.size() : comma + 1;
      return field;
    };
    for (int j = 0; j < dim; ++j) ds.features(row, j) = detail::string_to_double(next_field());
    if (ds.task_mode == TaskMode::kSingleLabel) {
      ds.clean_labels[row] = static_cast<std::uint32_t>(detail::string_to_double(next_field()));
      ds.noisy_labels[row] = static_cast<std::uint32_t>(detail::string_to_double(next_field()));
    } else {
      std::uint32_t clean = 0, noisy = 0;
      for (int c = 0; c < ds.classes; ++c) {
        if (next_field() == "1") clean |= (1u << c);
      }
      for (int c = 0; c < ds.classes; ++c) {
        if (next_field() == "1") noisy |= (1u << c);
      }
      ds.clean_labels[row] = clean;
      ds.noisy_labels[row] = noisy;
    }
    ++row;
  }
  if (row != n) throw std::invalid_argument("dataset csv row count mismatch");
  return ds;
}

// ---- partitions ----

inline void write_partition(const std::filesystem::path& path, const Partition& part) {
  json j{{"format", "roskd-partition"},
         {"version", 1},
         {"spec", {{"k", part.spec.k}, {"p", part.spec.p}, {"seed", part.spec.seed}}},
         {"train_size", part.train_size},
         {"subsets", part.subsets},
         {"core_blocks", part.core_blocks}};
  write_text_file(path, j.dump() + "\n");
}

inline Partition read_partition(const std::filesystem::path& path) {
  const json j = json::parse(read_text_file(path));
  if (j.at("format") != "roskd-partition") {
    throw std::invalid_argument("not a roskd partition: " + path.string());
  }
  Partition part;
  part.spec.k = j.at("spec").at("k").get<int>();
  part.spec.p = j.at("spec").at("p").get<double>();
  part.spec.seed = j.at("spec").at("seed").get<std::uint64_t>();
  part.train_size = j.at("train_size").get<std::size_t>();
  part.subsets = j.at("subsets").get<std::vector<std::vector<int>>>();
  part.core_blocks = j.at("core_blocks").get<std::vector<std::vector<int>>>();
  return part;
}

// ---- metrics / robustness reports ----

inline json metrics_to_json(const MetricsReport& report) {
  json per_class = json::array();
  for (const auto& auc : report.per_class_auc) {
    per_class.push_back(auc ? json(*auc) : json(nullptr));
  }
  json j{{"mode", report.mode == TaskMode::kSingleLabel ? "single_label" : "multi_label"},
         {"classes", report.classes},
         {"n_samples", report.n_samples},
         {"averaging", "macro"},
         {"precision", report.precision},
         {"recall", report.recall},
         {"f1", report.f1},
         {"per_class_auc", per_class},
         {"mean_auc", report.mean_auc ? json(*report.mean_auc) : json(nullptr)}};
  if (report.mode == TaskMode::kSingleLabel) {
    std::vector<std::vector<long>> confusion(report.classes, std::vector<long>(report.classes));
    for (int a = 0; a < report.classes; ++a) {
      for (int b = 0; b < report.classes; ++b) {
        confusion[a][b] = static_cast<long>(report.confusion(a, b));
      }
    }
    j["confusion"] = confusion;
  } else {
    json cells = json::array();
    for (const auto& cell : report.binary_confusion) {
      cells.push_back({{"tp", cell[0]}, {"fp", cell[1]}, {"fn", cell[2]}, {"tn", cell[3]}});
    }
    j["confusion"] = cells;
    j["threshold"] = 0.5;
  }
  return j;
}

inline json robustness_to_json(const RobustnessReport& report) {
  const auto& cfg = report.config;
  auto brief = [](const MetricsReport& m) {
    return json{{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}};
  };
  return json{{"attack", cfg.kind == AttackKind::kFgsm ? "fgsm" : "pgd"},
              {"norm", "l2"},
              {"epsilon", cfg.epsilon},
              {"steps", cfg.kind == AttackKind::kFgsm ? 1 : cfg.pgd_steps},
              {"step_size", cfg.kind == AttackKind::kFgsm ? cfg.epsilon : cfg.step_size()},
              {"random_start", cfg.kind == AttackKind::kPgd && cfg.random_start},
              {"white_box", true},
              {"seed", cfg.seed},
              {"before", brief(report.before)},
              {"after", brief(report.after)}};
}

// ---- distillation history: JSON lines, one record per epoch ----

inline std::string history_to_jsonl(const std::vector<DistillEpochRecord>& history) {
  std::ostringstream out;
  for (const auto& rec : history) {
    json j{{"epoch", rec.epoch},
           {"train_loss", rec.train_loss},
           {"val_f1", rec.val_f1},
           {"lr", rec.lr},
           {"mean_weights", rec.mean_weights},
           {"averaging_active", rec.averaging_active}};
    out << j.dump() << "\n";
  }
  return out.str();
}

// ---- landscape: alpha,beta,loss CSV + sidecar ----

inline void write_landscape(const std::filesystem::path& csv_path,
                            const std::filesystem::path& sidecar_path, const LandscapeGrid& grid,
                            std::uint64_t direction_seed) {
  std::ostringstream csv;
  csv << "alpha,beta,loss\n";
  for (std::size_t ia = 0; ia < grid.alphas.size(); ++ia) {
    for (std::size_t ib = 0; ib < grid.betas.size(); ++ib) {
      csv << detail::double_to_string(grid.alphas[ia]) << ","
          << detail::double_to_string(grid.betas[ib]) << ","
          << detail::double_to_string(grid.losses(ia, ib)) << "\n";
    }
  }
  write_text_file(csv_path, csv.str());

  json sidecar{{"format", "roskd-landscape"},
               {"version", 1},
               {"direction_seed", direction_seed},
               {"clamp", grid.clamp_value},
               {"points", grid.alphas.size()},
               {"extent", grid.alphas.empty() ? 0.0 : -grid.alphas.front()},
               {"eval_batch_id", grid.eval_batch_id},
               {"min_loss", grid.min_loss()}};
  write_text_file(sidecar_path, sidecar.dump(2) + "\n");
}

}  // namespace roskd
