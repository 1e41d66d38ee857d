#pragma once

#include "texsds/reference.hpp"
#include "texsds/texfield.hpp"
#include "texsds/trainer.hpp"

#include <filesystem>
#include <string>

namespace texsds {

inline constexpr const char* kDefaultModelId = "stable-diffusion-2-depth";

struct MeshSettings {
  std::string path;
  bool regenerate_uvs = false;  // replace existing UVs with the grid atlas

  bool operator==(const MeshSettings&) const = default;
};

struct BakeSettings {
  int resolution = 512;
  int dilation = 4;

  bool operator==(const BakeSettings&) const = default;
};

struct OutputSettings {
  std::string dir = "out";
  int turntable_views = 8;
  double turntable_elevation = 30.0;
  double turntable_distance = 1.5;

  bool operator==(const OutputSettings&) const = default;
};

/// Everything a `texsds` command needs. JSON sections: mesh, field, render,
/// guidance, train, bake, output.
struct ExperimentConfig {
  MeshSettings mesh;
  FieldConfig field;
  RunConfig run;
  std::string model_id = kDefaultModelId;
  PatternSpec analytic_target;
  BakeSettings bake;
  OutputSettings output;

  /// Directory relative paths are resolved against (the config file's
  /// directory). Not serialized.
  std::filesystem::path base_dir;

  [[nodiscard]] std::filesystem::path mesh_path() const;
  void validate() const;

  bool operator==(const ExperimentConfig& other) const;
};

/// Strict parse: unknown keys and ill-typed values raise ConfigError naming the
/// dotted key path. Absent keys keep their defaults.
ExperimentConfig parse_experiment_config(const std::string& json_text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Full document including defaults, pretty-printed.
std::string serialize_experiment_config(const ExperimentConfig& config);

}  // namespace texsds
