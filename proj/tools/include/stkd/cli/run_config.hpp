#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "stkd/distill.hpp"
#include "stkd/models.hpp"
#include "stkd/train.hpp"

namespace stkd::cli {

struct DataSection {
  /// "synthetic" or "csv".
  std::string source = "synthetic";
  std::string readings_csv;
  std::string edges_csv;
  std::size_t n_nodes = 200;
  std::size_t n_steps = 2016;
  double step_minutes = 5.0;
  /// Connection radius of the geometric sensor graph (unit square).
  double radius = 0.15;
  double alpha = 0.85;
  double noise = 8.0;
  double amplitude_min = 10.0;
  double amplitude_max = 30.0;
  std::size_t history = 12;
  std::size_t horizon = 3;
  std::array<double, 3> splits{0.7, 0.1, 0.2};
  std::uint64_t seed = 42;
};

struct TeacherSection {
  std::size_t blocks = 2;
  std::size_t hidden = 32;
  std::size_t kernel = 3;
  std::size_t head_hidden = 128;
  std::size_t embed_dim = 8;
  bool time_features = true;
  bool input_skip = true;
  TrainConfig train;
};

struct StudentSection {
  std::size_t hidden = 64;
  std::size_t embed_dim = 16;
  std::size_t hidden_layers = 2;
  bool time_features = true;
  TrainConfig train;
};

struct BenchSection {
  std::size_t reps = 100;
  std::size_t warmup = 10;
};

struct OversmoothingSection {
  std::vector<std::size_t> depths{0, 1, 2, 4, 8};
  std::size_t n_nodes = 100;
  double radius = 0.3;
  std::size_t history = 12;
  std::size_t hidden = 64;
  std::size_t kernel = 3;
  std::uint64_t seed = 42;
};

struct RunConfig {
  DataSection data;
  TeacherSection teacher;
  StudentSection student;
  DistillConfig distill;
  BenchSection bench;
  OversmoothingSection oversmoothing;
  std::string output_dir = "runs/default";

  RunConfig();

  /// --seed: one value for data, teacher, student and depth-study seeds.
  void override_seed(std::uint64_t seed);
  /// Throws ParameterError on out-of-range values.
  void validate() const;

  TeacherConfig teacher_config(std::size_t n_nodes, std::size_t steps_per_day) const;
  StudentConfig student_config(std::size_t n_nodes, std::size_t steps_per_day) const;
};

/// Strict parse: unknown keys and wrongly typed values are rejected. Missing
/// keys keep their defaults.
RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::filesystem::path& path);

/// Every field, defaults included, as pretty-printed JSON.
std::string dump_config(const RunConfig& cfg);

}  // namespace stkd::cli
