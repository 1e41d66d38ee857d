#pragma once

#include "texsds/camera.hpp"
#include "texsds/image.hpp"
#include "texsds/render.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace texsds {

/// Dense float tensor with an explicit shape (row-major).
struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<float> data;

  Tensor() = default;
  Tensor(std::vector<std::int64_t> s, float fill = 0.0f);
  Tensor(std::vector<std::int64_t> s, std::vector<float> values);

  [[nodiscard]] std::size_t element_count() const;
  bool operator==(const Tensor&) const = default;
};

Tensor image_to_tensor(const Image& image);
Image tensor_to_image(const Tensor& tensor);

enum class Weighting { uniform, sigma_sq };

struct GuidanceConfig {
  std::string prompt;
  std::string negative_prompt;
  double guidance_scale = 100.0;
  Range t_range{0.02, 0.98};
  Weighting weighting = Weighting::uniform;

  void validate() const;
  bool operator==(const GuidanceConfig&) const = default;
};

/// Noise-schedule coefficients at a schedule fraction: z_t = alpha x + sigma eps.
struct NoiseLevel {
  double alpha = 1.0;
  double sigma = 0.0;
};

/// alpha = cos(pi t / 2), sigma = sin(pi t / 2).
NoiseLevel cosine_schedule(double t);

struct NoisePrediction {
  Tensor eps_cond;
  Tensor eps_uncond;
};

/// Per-view randomness for one SDS evaluation.
struct SdsDraw {
  double t = 0.5;
  std::uint64_t noise_seed = 0;
};

/// Everything that went into one view's SDS term.
struct SdsStep {
  double t = 0.0;
  Tensor noise;
  Tensor noised_input;
  double weight = 1.0;
};

/// Source of noise predictions. Implementations must tolerate concurrent
/// calls.
class GuidanceBackend {
 public:
  virtual ~GuidanceBackend() = default;

  [[nodiscard]] virtual NoiseLevel noise_level(double t) = 0;

  /// Maps an image into the backend's working space (latents, or the image
  /// itself).
  virtual Tensor encode(const Image& image) = 0;

  virtual NoisePrediction predict_noise(const Tensor& noised, double t, const DepthCondition& depth,
                                        const std::string& prompt, const std::string& negative_prompt,
                                        const std::optional<CameraSample>& view) = 0;

  /// Vector-Jacobian product of encode() at `image`.
  virtual Image encode_backward(const Tensor& working_grad, const Image& image) = 0;

  /// Required side length of depth maps; 0 when any size is accepted.
  [[nodiscard]] virtual int depth_resolution() { return 0; }
};

/// Uniform draw in [t_min, t_max]. Throws InvalidArgument for an inverted
/// range or one outside [0, 1].
double sample_timestep(std::mt19937_64& rng, Range t_range);

/// eps_uncond + scale * (eps_cond - eps_uncond)
Tensor cfg_combine(const NoisePrediction& prediction, double scale);

/// Standard normal tensor, deterministic in `seed`.
Tensor gaussian_noise(const std::vector<std::int64_t>& shape, std::uint64_t seed);

double sds_weight(Weighting weighting, const NoiseLevel& level);

struct SdsResult {
  std::vector<Image> image_grads;   // d(loss)/d(image), one per input image
  std::vector<double> view_losses;  // mean squared working-space gradient
  double loss = 0.0;                // mean of view_losses
  std::vector<SdsStep> steps;
};

/// Score distillation gradient for a batch of rendered views.
///
/// Per view: z_t = alpha x + sigma eps in working space, CFG-combined noise
/// prediction eps_hat, and working-space gradient
///     g = w(t) * alpha(t) * sigma(t) * (eps_hat - eps),
/// pulled back to image space through the encoder. The alpha*sigma factor
/// makes g the exact gradient of 0.5 * alpha^2 * ||x - y||^2 for a backend
/// whose data distribution is the single image y.
SdsResult sds_gradient(GuidanceBackend& backend, std::span<const Image> images,
                       std::span<const DepthCondition> depths, const GuidanceConfig& config,
                       std::span<const SdsDraw> draws, std::span<const CameraSample> views = {});

/// Convenience overload that draws t and noise seeds from `rng`.
SdsResult sds_gradient(GuidanceBackend& backend, std::span<const Image> images,
                       std::span<const DepthCondition> depths, const GuidanceConfig& config, std::mt19937_64& rng,
                       std::span<const CameraSample> views = {});

/// Closed-form denoiser for the one-point data distribution {target}:
/// eps(z_t, t) = (z_t - alpha(t) target) / sigma(t) on the cosine schedule.
/// The conditional and unconditional branches agree, so guidance scale has no
/// effect. Works directly in image space; depth and prompts are ignored.
class AnalyticBackend final : public GuidanceBackend {
 public:
  using TargetFn = std::function<Image(const CameraSample& view, int resolution)>;

  explicit AnalyticBackend(Image target);
  /// Per-view targets, e.g. renders of a reference texture.
  explicit AnalyticBackend(TargetFn target);

  [[nodiscard]] NoiseLevel noise_level(double t) override { return cosine_schedule(t); }
  Tensor encode(const Image& image) override { return image_to_tensor(image); }
  NoisePrediction predict_noise(const Tensor& noised, double t, const DepthCondition& depth,
                                const std::string& prompt, const std::string& negative_prompt,
                                const std::optional<CameraSample>& view) override;
  Image encode_backward(const Tensor& working_grad, const Image& image) override;

 private:
  std::optional<Image> fixed_;
  TargetFn per_view_;
};

}  // namespace texsds
