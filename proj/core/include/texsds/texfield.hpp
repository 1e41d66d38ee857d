#pragma once

#include "texsds/geometry.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace texsds {

using Color = Eigen::Vector3d;

/// Shape of the hash-grid texture field. Defaults match the canonical
/// multiresolution hash encoding (16 levels, 2 features, 2^19 entries).
struct FieldConfig {
  int num_levels = 16;
  int features_per_level = 2;
  int log2_table_size = 19;
  int base_resolution = 16;
  int finest_resolution = 2048;
  int mlp_hidden_width = 64;
  int mlp_hidden_layers = 2;
  std::uint64_t seed = 0;

  /// Throws InvalidArgument on non-positive widths, an empty level set, or
  /// finest < base.
  void validate() const;

  [[nodiscard]] int encoding_width() const { return num_levels * features_per_level; }
  [[nodiscard]] std::size_t table_entries() const { return std::size_t{1} << log2_table_size; }
  [[nodiscard]] std::size_t table_parameter_count() const;
  [[nodiscard]] std::size_t mlp_parameter_count() const;
  [[nodiscard]] std::size_t parameter_count() const { return table_parameter_count() + mlp_parameter_count(); }

  bool operator==(const FieldConfig&) const = default;
};

/// Spatial hash of an integer lattice corner, reduced to the table size.
std::uint32_t spatial_hash(std::uint32_t x, std::uint32_t y, std::uint32_t z, int log2_table_size);

/// The eight lattice corners surrounding a point at one level, with their
/// table slots and trilinear weights. Corner c uses offset
/// (c & 1, (c >> 1) & 1, (c >> 2) & 1).
struct CellCorners {
  std::array<std::uint32_t, 8> slot{};
  std::array<double, 8> weight{};
  std::array<std::uint32_t, 3> base{};
};

struct DenseLayer {
  int inputs = 0;
  int outputs = 0;
  std::size_t weight_offset = 0;  // row-major outputs x inputs
  std::size_t bias_offset = 0;
};

/// Multiresolution hash grid followed by a ReLU MLP with sigmoid output.
///
/// Every trainable value lives in one flat float32 array: level tables in
/// level order (entry-major, feature-minor), then each dense layer's weights
/// followed by its bias. Checkpoints and the optimizer rely on this order.
class TextureField {
 public:
  /// Random initialization: tables uniform in [-1e-4, 1e-4], dense weights
  /// He-uniform on fan-in, biases zero. Deterministic in `config.seed`.
  explicit TextureField(const FieldConfig& config);

  /// Wraps existing parameters (e.g. from a checkpoint).
  TextureField(const FieldConfig& config, std::vector<float> parameters);

  [[nodiscard]] const FieldConfig& config() const { return config_; }
  [[nodiscard]] std::size_t parameter_count() const { return params_.size(); }
  [[nodiscard]] std::span<const float> parameters() const { return params_; }
  [[nodiscard]] std::span<float> parameters() { return params_; }

  [[nodiscard]] int level_resolution(int level) const { return resolutions_[level]; }
  [[nodiscard]] std::size_t table_offset(int level) const;
  [[nodiscard]] const std::vector<DenseLayer>& layers() const { return layers_; }

  /// Clamps p into [-1,1]^3 and returns the enclosing cell at `level`.
  [[nodiscard]] CellCorners locate(const Vec3& p, int level) const;

  /// Concatenated per-level interpolated features (num_levels * features).
  [[nodiscard]] std::vector<double> hash_encode(const Vec3& p) const;

  [[nodiscard]] Color query(const Vec3& p) const;
  void query(std::span<const Vec3> points, std::span<Color> out) const;

  /// Adds d(loss)/d(params) for one query into `gradient`, given
  /// d(loss)/d(rgb) at that point.
  void accumulate_gradient(const Vec3& p, const Color& d_rgb, std::span<double> gradient) const;

  bool operator==(const TextureField& other) const {
    return config_ == other.config_ && params_ == other.params_;
  }

 private:
  friend class FieldEvaluator;
  void build_layout();

  FieldConfig config_;
  std::vector<int> resolutions_;
  std::vector<DenseLayer> layers_;
  std::vector<float> params_;
};

/// Reusable scratch space for repeated queries against one field. Not
/// thread-safe; use one per thread.
class FieldEvaluator {
 public:
  explicit FieldEvaluator(const TextureField& field);

  Color query(const Vec3& p);
  void accumulate_gradient(const Vec3& p, const Color& d_rgb, std::span<double> gradient);

 private:
  void forward(const Vec3& p);

  const TextureField& field_;
  std::vector<CellCorners> cells_;
  // activations_[0] is the encoding; activations_[k] the output of layer k-1.
  std::vector<std::vector<double>> activations_;
  std::vector<double> delta_;
  std::vector<double> delta_next_;
  Color output_ = Color::Zero();
};

}  // namespace texsds
