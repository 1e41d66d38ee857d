#pragma once

#include "texsds/guidance.hpp"

#include <chrono>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace texsds {

struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds initial_backoff{250};
  double multiplier = 2.0;
};

/// Handshake payload from GET /v1/info.
struct BackendInfo {
  int protocol = 0;
  int latent_channels = 0;
  int latent_size = 0;
  std::vector<double> alphas_cumprod;
  std::string model_id;
};

/// Client for a remote depth-conditioned latent diffusion server.
///
/// Endpoints (JSON bodies, tensors as base64 float16):
///   GET  /v1/info
///   POST /v1/encode         {image}                       -> {latent}
///   POST /v1/predict_noise  {latent_noised, t, depth,
///                            prompt, negative_prompt}     -> {eps_cond, eps_uncond}
///   POST /v1/encode_grad    {latent_grad, image}          -> {image_grad}
///
/// Connection failures and 5xx answers are retried with exponential backoff;
/// 4xx answers and malformed payloads raise ProtocolError immediately.
class DiffusionBackend final : public GuidanceBackend {
 public:
  DiffusionBackend(std::string endpoint, std::string model_id, RetryPolicy retry = {});

  /// Performs (and caches) the handshake. Throws ProtocolVersionMismatch if
  /// the server speaks another protocol version.
  const BackendInfo& info();

  [[nodiscard]] NoiseLevel noise_level(double t) override;
  Tensor encode(const Image& image) override;
  NoisePrediction predict_noise(const Tensor& noised, double t, const DepthCondition& depth,
                                const std::string& prompt, const std::string& negative_prompt,
                                const std::optional<CameraSample>& view) override;
  Image encode_backward(const Tensor& working_grad, const Image& image) override;
  [[nodiscard]] int depth_resolution() override { return info().latent_size; }

  [[nodiscard]] const std::string& endpoint() const { return endpoint_; }

  /// Request bodies exactly as sent; exposed for fixture tests.
  static std::string encode_request(const Image& image);
  static std::string predict_request(const Tensor& noised, double t, const DepthCondition& depth,
                                     const std::string& prompt, const std::string& negative_prompt);
  static std::string encode_grad_request(const Tensor& latent_grad, const Image& image);

  static NoisePrediction parse_predict_response(const std::string& body);
  static BackendInfo parse_info_response(const std::string& body);

 private:
  std::string get(const std::string& path);
  std::string post(const std::string& path, const std::string& body);
  std::string with_retry(const std::string& method, const std::string& path, const std::string* body);

  std::string endpoint_;
  std::string model_id_;
  RetryPolicy retry_;
  std::mutex info_mutex_;
  std::optional<BackendInfo> info_;
};

}  // namespace texsds
