#include "texsds/texfield.hpp"

#include "texsds/errors.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace texsds {
namespace {

constexpr std::uint32_t kPrimeY = 2654435761u;
constexpr std::uint32_t kPrimeZ = 805459861u;
constexpr float kTableInitRange = 1e-4f;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

void FieldConfig::validate() const {
  if (num_levels < 1) throw InvalidArgument("field: num_levels must be >= 1");
  if (features_per_level < 1) throw InvalidArgument("field: features_per_level must be >= 1");
  if (log2_table_size < 1 || log2_table_size > 30) throw InvalidArgument("field: log2_table_size must be in [1, 30]");
  if (base_resolution < 1) throw InvalidArgument("field: base_resolution must be >= 1");
  if (finest_resolution < base_resolution) throw InvalidArgument("field: finest_resolution must be >= base_resolution");
  if (mlp_hidden_width < 1) throw InvalidArgument("field: mlp_hidden_width must be >= 1");
  if (mlp_hidden_layers < 0) throw InvalidArgument("field: mlp_hidden_layers must be >= 0");
}

std::size_t FieldConfig::table_parameter_count() const {
  return static_cast<std::size_t>(num_levels) * table_entries() * static_cast<std::size_t>(features_per_level);
}

std::size_t FieldConfig::mlp_parameter_count() const {
  std::size_t count = 0;
  std::size_t inputs = static_cast<std::size_t>(encoding_width());
  for (int k = 0; k < mlp_hidden_layers; ++k) {
    count += inputs * mlp_hidden_width + mlp_hidden_width;
    inputs = static_cast<std::size_t>(mlp_hidden_width);
  }
  return count + inputs * 3 + 3;
}

std::uint32_t spatial_hash(std::uint32_t x, std::uint32_t y, std::uint32_t z, int log2_table_size) {
  const std::uint32_t h = x ^ (y * kPrimeY) ^ (z * kPrimeZ);
  const std::uint32_t mask = log2_table_size >= 32 ? ~0u : ((1u << log2_table_size) - 1u);
  return h & mask;
}

TextureField::TextureField(const FieldConfig& config) : config_(config) {
  config_.validate();
  build_layout();
  params_.assign(config_.parameter_count(), 0.0f);

  std::mt19937_64 rng(config_.seed);
  std::uniform_real_distribution<float> table_dist(-kTableInitRange, kTableInitRange);
  const std::size_t table_count = config_.table_parameter_count();
  for (std::size_t i = 0; i < table_count; ++i) params_[i] = table_dist(rng);

  for (const auto& layer : layers_) {
    const float bound = std::sqrt(6.0f / static_cast<float>(layer.inputs));
    std::uniform_real_distribution<float> weight_dist(-bound, bound);
    const std::size_t n = static_cast<std::size_t>(layer.inputs) * layer.outputs;
    for (std::size_t i = 0; i < n; ++i) params_[layer.weight_offset + i] = weight_dist(rng);
  }
}

TextureField::TextureField(const FieldConfig& config, std::vector<float> parameters)
    : config_(config), params_(std::move(parameters)) {
  config_.validate();
  build_layout();
  if (params_.size() != config_.parameter_count()) {
    throw InvalidArgument("field: expected " + std::to_string(config_.parameter_count()) + " parameters, got " +
                          std::to_string(params_.size()));
  }
}

void TextureField::build_layout() {
  const int levels = config_.num_levels;
  const double growth =
      levels > 1 ? std::exp(std::log(static_cast<double>(config_.finest_resolution) / config_.base_resolution) /
                            (levels - 1))
                 : 1.0;
  resolutions_.resize(levels);
  for (int l = 0; l < levels; ++l) {
    // The epsilon keeps the last level at exactly finest_resolution despite
    // rounding in exp/log.
    const double r = config_.base_resolution * std::pow(growth, l);
    resolutions_[l] = static_cast<int>(std::floor(r * (1.0 + 1e-12)));
  }

  layers_.clear();
  std::size_t offset = config_.table_parameter_count();
  int inputs = config_.encoding_width();
  for (int k = 0; k <= config_.mlp_hidden_layers; ++k) {
    DenseLayer layer;
    layer.inputs = inputs;
    layer.outputs = k == config_.mlp_hidden_layers ? 3 : config_.mlp_hidden_width;
    layer.weight_offset = offset;
    offset += static_cast<std::size_t>(layer.inputs) * layer.outputs;
    layer.bias_offset = offset;
    offset += static_cast<std::size_t>(layer.outputs);
    layers_.push_back(layer);
    inputs = layer.outputs;
  }
}

std::size_t TextureField::table_offset(int level) const {
  return static_cast<std::size_t>(level) * config_.table_entries() * config_.features_per_level;
}

CellCorners TextureField::locate(const Vec3& p, int level) const {
  const int res = resolutions_[level];
  CellCorners cell;
  std::array<double, 3> frac{};
  for (int axis = 0; axis < 3; ++axis) {
    const double u = std::clamp(0.5 * (p[axis] + 1.0), 0.0, 1.0);
    const double scaled = u * res;
    const int i0 = std::min(static_cast<int>(std::floor(scaled)), res - 1);
    cell.base[axis] = static_cast<std::uint32_t>(i0);
    frac[axis] = scaled - i0;
  }
  for (int c = 0; c < 8; ++c) {
    const std::uint32_t dx = c & 1;
    const std::uint32_t dy = (c >> 1) & 1;
    const std::uint32_t dz = (c >> 2) & 1;
    cell.slot[c] = spatial_hash(cell.base[0] + dx, cell.base[1] + dy, cell.base[2] + dz, config_.log2_table_size);
    cell.weight[c] = (dx ? frac[0] : 1.0 - frac[0]) * (dy ? frac[1] : 1.0 - frac[1]) * (dz ? frac[2] : 1.0 - frac[2]);
  }
  return cell;
}

std::vector<double> TextureField::hash_encode(const Vec3& p) const {
  const int features = config_.features_per_level;
  std::vector<double> out(static_cast<std::size_t>(config_.encoding_width()), 0.0);
  for (int l = 0; l < config_.num_levels; ++l) {
    const CellCorners cell = locate(p, l);
    const float* table = params_.data() + table_offset(l);
    for (int c = 0; c < 8; ++c) {
      for (int f = 0; f < features; ++f) {
        out[l * features + f] += cell.weight[c] * table[static_cast<std::size_t>(cell.slot[c]) * features + f];
      }
    }
  }
  return out;
}

Color TextureField::query(const Vec3& p) const { return FieldEvaluator(*this).query(p); }

void TextureField::query(std::span<const Vec3> points, std::span<Color> out) const {
  if (points.size() != out.size()) throw InvalidArgument("query: output span size mismatch");
  FieldEvaluator eval(*this);
  for (std::size_t i = 0; i < points.size(); ++i) out[i] = eval.query(points[i]);
}

void TextureField::accumulate_gradient(const Vec3& p, const Color& d_rgb, std::span<double> gradient) const {
  FieldEvaluator(*this).accumulate_gradient(p, d_rgb, gradient);
}

FieldEvaluator::FieldEvaluator(const TextureField& field)
    : field_(field), cells_(static_cast<std::size_t>(field.config().num_levels)) {
  activations_.emplace_back(static_cast<std::size_t>(field.config().encoding_width()));
  std::size_t widest = activations_.back().size();
  for (const auto& layer : field.layers()) {
    activations_.emplace_back(static_cast<std::size_t>(layer.outputs));
    widest = std::max(widest, static_cast<std::size_t>(layer.outputs));
  }
  delta_.resize(widest);
  delta_next_.resize(widest);
}

void FieldEvaluator::forward(const Vec3& raw) {
  const Vec3 p = raw.cwiseMax(-1.0).cwiseMin(1.0);
  const auto& cfg = field_.config();
  const int features = cfg.features_per_level;
  const float* params = field_.params_.data();

  auto& encoding = activations_[0];
  std::fill(encoding.begin(), encoding.end(), 0.0);
  for (int l = 0; l < cfg.num_levels; ++l) {
    cells_[l] = field_.locate(p, l);
    const float* table = params + field_.table_offset(l);
    const auto& cell = cells_[l];
    for (int c = 0; c < 8; ++c) {
      const float* entry = table + static_cast<std::size_t>(cell.slot[c]) * features;
      for (int f = 0; f < features; ++f) encoding[l * features + f] += cell.weight[c] * entry[f];
    }
  }

  const auto& layers = field_.layers();
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const auto& layer = layers[k];
    const auto& in = activations_[k];
    auto& out = activations_[k + 1];
    const float* w = params + layer.weight_offset;
    const float* b = params + layer.bias_offset;
    const bool hidden = k + 1 < layers.size();
    for (int o = 0; o < layer.outputs; ++o) {
      double acc = b[o];
      const float* row = w + static_cast<std::size_t>(o) * layer.inputs;
      for (int i = 0; i < layer.inputs; ++i) acc += row[i] * in[i];
      out[o] = hidden ? std::max(acc, 0.0) : acc;
    }
  }
  const auto& logits = activations_.back();
  output_ = Color(sigmoid(logits[0]), sigmoid(logits[1]), sigmoid(logits[2]));
}

Color FieldEvaluator::query(const Vec3& p) {
  forward(p);
  return output_;
}

void FieldEvaluator::accumulate_gradient(const Vec3& p, const Color& d_rgb, std::span<double> gradient) {
  if (gradient.size() != field_.parameter_count()) throw InvalidArgument("gradient buffer size mismatch");
  forward(p);
  const float* params = field_.params_.data();
  const auto& layers = field_.layers();

  for (int c = 0; c < 3; ++c) delta_[c] = d_rgb[c] * output_[c] * (1.0 - output_[c]);

  for (std::size_t k = layers.size(); k-- > 0;) {
    const auto& layer = layers[k];
    const auto& in = activations_[k];
    const float* w = params + layer.weight_offset;
    double* gw = gradient.data() + layer.weight_offset;
    double* gb = gradient.data() + layer.bias_offset;
    std::fill(delta_next_.begin(), delta_next_.begin() + layer.inputs, 0.0);
    for (int o = 0; o < layer.outputs; ++o) {
      const double d = delta_[o];
      if (d == 0.0) continue;
      gb[o] += d;
      const float* row = w + static_cast<std::size_t>(o) * layer.inputs;
      double* grow = gw + static_cast<std::size_t>(o) * layer.inputs;
      for (int i = 0; i < layer.inputs; ++i) {
        grow[i] += d * in[i];
        delta_next_[i] += d * row[i];
      }
    }
    // ReLU gate for hidden inputs; the encoding (k == 0) is linear.
    if (k > 0) {
      for (int i = 0; i < layer.inputs; ++i) {
        if (in[i] <= 0.0) delta_next_[i] = 0.0;
      }
    }
    std::swap(delta_, delta_next_);
  }

  const auto& cfg = field_.config();
  const int features = cfg.features_per_level;
  for (int l = 0; l < cfg.num_levels; ++l) {
    double* table_grad = gradient.data() + field_.table_offset(l);
    const auto& cell = cells_[l];
    for (int c = 0; c < 8; ++c) {
      double* entry = table_grad + static_cast<std::size_t>(cell.slot[c]) * features;
      for (int f = 0; f < features; ++f) entry[f] += cell.weight[c] * delta_[l * features + f];
    }
  }
}

}  // namespace texsds
