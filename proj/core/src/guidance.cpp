#include "texsds/guidance.hpp"

#include "texsds/errors.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

namespace texsds {

Tensor::Tensor(std::vector<std::int64_t> s, float fill) : shape(std::move(s)) {
  data.assign(element_count(), fill);
}

Tensor::Tensor(std::vector<std::int64_t> s, std::vector<float> values) : shape(std::move(s)), data(std::move(values)) {
  if (data.size() != element_count()) throw InvalidArgument("tensor data does not match shape");
}

std::size_t Tensor::element_count() const {
  if (shape.empty()) return 0;
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t acc, std::int64_t d) { return acc * static_cast<std::size_t>(d); });
}

Tensor image_to_tensor(const Image& image) {
  return Tensor({image.height, image.width, image.channels}, image.data);
}

Image tensor_to_image(const Tensor& tensor) {
  if (tensor.shape.size() != 3) throw InvalidArgument("expected an H x W x C tensor");
  Image img(static_cast<int>(tensor.shape[1]), static_cast<int>(tensor.shape[0]), static_cast<int>(tensor.shape[2]));
  img.data = tensor.data;
  return img;
}

void GuidanceConfig::validate() const {
  if (!(t_range.lo >= 0.0 && t_range.hi <= 1.0 && t_range.lo <= t_range.hi)) {
    throw InvalidArgument("guidance: t_range must satisfy 0 <= t_min <= t_max <= 1");
  }
  if (!(guidance_scale >= 0.0)) throw InvalidArgument("guidance: guidance_scale must be >= 0");
}

NoiseLevel cosine_schedule(double t) {
  const double angle = 0.5 * std::numbers::pi * t;
  return {std::cos(angle), std::sin(angle)};
}

double sample_timestep(std::mt19937_64& rng, Range t_range) {
  if (!(t_range.lo <= t_range.hi)) throw InvalidArgument("timestep range is inverted");
  if (t_range.lo < 0.0 || t_range.hi > 1.0) throw InvalidArgument("timestep range must lie in [0, 1]");
  if (t_range.lo == t_range.hi) {
    rng.discard(1);
    return t_range.lo;
  }
  return std::uniform_real_distribution<double>(t_range.lo, t_range.hi)(rng);
}

Tensor cfg_combine(const NoisePrediction& prediction, double scale) {
  const auto& cond = prediction.eps_cond;
  const auto& uncond = prediction.eps_uncond;
  if (cond.shape != uncond.shape || cond.data.size() != uncond.data.size()) {
    throw InvalidArgument("cfg_combine: conditional and unconditional shapes differ");
  }
  Tensor out(cond.shape);
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    const double u = uncond.data[i];
    out.data[i] = static_cast<float>(u + scale * (static_cast<double>(cond.data[i]) - u));
  }
  return out;
}

Tensor gaussian_noise(const std::vector<std::int64_t>& shape, std::uint64_t seed) {
  Tensor out(shape);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& v : out.data) v = static_cast<float>(normal(rng));
  return out;
}

double sds_weight(Weighting weighting, const NoiseLevel& level) {
  switch (weighting) {
    case Weighting::uniform:
      return 1.0;
    case Weighting::sigma_sq:
      return level.sigma * level.sigma;
  }
  return 1.0;
}

SdsResult sds_gradient(GuidanceBackend& backend, std::span<const Image> images,
                       std::span<const DepthCondition> depths, const GuidanceConfig& config,
                       std::span<const SdsDraw> draws, std::span<const CameraSample> views) {
  config.validate();
  if (depths.size() != images.size() || draws.size() != images.size()) {
    throw InvalidArgument("sds_gradient: images, depths and draws must have equal length");
  }
  if (!views.empty() && views.size() != images.size()) {
    throw InvalidArgument("sds_gradient: views must be empty or match the image count");
  }

  SdsResult result;
  result.image_grads.reserve(images.size());
  for (std::size_t v = 0; v < images.size(); ++v) {
    const Image& image = images[v];
    const SdsDraw& draw = draws[v];
    const Tensor clean = backend.encode(image);
    const NoiseLevel level = backend.noise_level(draw.t);

    SdsStep step;
    step.t = draw.t;
    step.weight = sds_weight(config.weighting, level);
    step.noise = gaussian_noise(clean.shape, draw.noise_seed);
    step.noised_input = Tensor(clean.shape);
    for (std::size_t i = 0; i < clean.data.size(); ++i) {
      step.noised_input.data[i] = static_cast<float>(level.alpha * clean.data[i] + level.sigma * step.noise.data[i]);
    }

    const std::optional<CameraSample> view = views.empty() ? std::nullopt : std::optional<CameraSample>(views[v]);
    const NoisePrediction pred =
        backend.predict_noise(step.noised_input, draw.t, depths[v], config.prompt, config.negative_prompt, view);
    const Tensor guided = cfg_combine(pred, config.guidance_scale);
    if (guided.shape != clean.shape) throw ProtocolError("noise prediction shape does not match working space");

    const double scale = step.weight * level.alpha * level.sigma;
    Tensor grad(clean.shape);
    double sq = 0.0;
    for (std::size_t i = 0; i < grad.data.size(); ++i) {
      const double g = scale * (static_cast<double>(guided.data[i]) - step.noise.data[i]);
      grad.data[i] = static_cast<float>(g);
      sq += g * g;
    }
    const double view_loss = grad.data.empty() ? 0.0 : sq / static_cast<double>(grad.data.size());

    result.image_grads.push_back(backend.encode_backward(grad, image));
    result.view_losses.push_back(view_loss);
    result.steps.push_back(std::move(step));
  }
  if (!result.view_losses.empty()) {
    result.loss = std::accumulate(result.view_losses.begin(), result.view_losses.end(), 0.0) /
                  static_cast<double>(result.view_losses.size());
  }
  return result;
}

SdsResult sds_gradient(GuidanceBackend& backend, std::span<const Image> images,
                       std::span<const DepthCondition> depths, const GuidanceConfig& config, std::mt19937_64& rng,
                       std::span<const CameraSample> views) {
  std::vector<SdsDraw> draws(images.size());
  for (auto& d : draws) {
    d.t = sample_timestep(rng, config.t_range);
    d.noise_seed = rng();
  }
  return sds_gradient(backend, images, depths, config, draws, views);
}

AnalyticBackend::AnalyticBackend(Image target) : fixed_(std::move(target)) {}

AnalyticBackend::AnalyticBackend(TargetFn target) : per_view_(std::move(target)) {
  if (!per_view_) throw InvalidArgument("analytic backend needs a target");
}

NoisePrediction AnalyticBackend::predict_noise(const Tensor& noised, double t, const DepthCondition& /*depth*/,
                                               const std::string& /*prompt*/,
                                               const std::string& /*negative_prompt*/,
                                               const std::optional<CameraSample>& view) {
  if (noised.shape.size() != 3) throw InvalidArgument("analytic backend expects H x W x C input");
  const int height = static_cast<int>(noised.shape[0]);
  const int width = static_cast<int>(noised.shape[1]);

  Image per_view_target;
  const Image* target = nullptr;
  if (fixed_) {
    target = &*fixed_;
  } else {
    if (!view) throw InvalidArgument("analytic backend with per-view targets needs the camera");
    per_view_target = per_view_(*view, width);
    target = &per_view_target;
  }
  if (target->width != width || target->height != height ||
      static_cast<std::int64_t>(target->channels) != noised.shape[2]) {
    throw InvalidArgument("analytic target shape does not match the rendered image");
  }

  const NoiseLevel level = noise_level(t);
  const double sigma = std::max(level.sigma, 1e-12);
  NoisePrediction pred;
  pred.eps_cond = Tensor(noised.shape);
  for (std::size_t i = 0; i < noised.data.size(); ++i) {
    pred.eps_cond.data[i] =
        static_cast<float>((static_cast<double>(noised.data[i]) - level.alpha * target->data[i]) / sigma);
  }
  pred.eps_uncond = pred.eps_cond;
  return pred;
}

Image AnalyticBackend::encode_backward(const Tensor& working_grad, const Image& image) {
  Image out = tensor_to_image(working_grad);
  if (out.width != image.width || out.height != image.height) {
    throw InvalidArgument("gradient shape does not match image");
  }
  return out;
}

}  // namespace texsds
