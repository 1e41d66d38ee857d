#include "texsds/diffusion_client.hpp"

#include "texsds/errors.hpp"
#include "texsds/wire.hpp"
#include "wire_json.hpp"

#include <httplib.h>

#include <cmath>
#include <thread>

namespace texsds {
namespace {

using nlohmann::json;

json parse_body(const std::string& body, const char* what) {
  try {
    return json::parse(body);
  } catch (const json::parse_error& e) {
    throw ProtocolError(std::string("malformed ") + what + " response: " + e.what());
  }
}

std::string error_message(const std::string& body) {
  try {
    const auto j = json::parse(body);
    if (j.is_object() && j.contains("error") && j["error"].is_string()) return j["error"].get<std::string>();
  } catch (const json::exception&) {
  }
  return body.substr(0, 200);
}

Tensor depth_tensor(const DepthCondition& depth) {
  return Tensor({1, depth.size, depth.size}, depth.values);
}

// Outcome of one HTTP exchange, before retry classification.
struct Attempt {
  bool connected = false;
  int status = 0;
  std::string body;
  std::string transport_error;
};

}  // namespace

DiffusionBackend::DiffusionBackend(std::string endpoint, std::string model_id, RetryPolicy retry)
    : endpoint_(std::move(endpoint)), model_id_(std::move(model_id)), retry_(retry) {
  if (endpoint_.empty()) throw InvalidArgument("diffusion backend needs an endpoint");
  if (retry_.attempts < 1) throw InvalidArgument("retry attempts must be >= 1");
}

std::string DiffusionBackend::with_retry(const std::string& method, const std::string& path, const std::string* body) {
  auto backoff = retry_.initial_backoff;
  Attempt last;
  for (int attempt = 1; attempt <= retry_.attempts; ++attempt) {
    last = Attempt{};
    {
      httplib::Client client(endpoint_);
      client.set_connection_timeout(std::chrono::seconds(5));
      client.set_read_timeout(std::chrono::seconds(300));
      client.set_write_timeout(std::chrono::seconds(60));
      httplib::Result res = method == "GET" ? client.Get(path.c_str())
                                            : client.Post(path.c_str(), *body, "application/json");
      if (res) {
        last.connected = true;
        last.status = res->status;
        last.body = res->body;
      } else {
        last.transport_error = httplib::to_string(res.error());
      }
    }
    if (last.connected && last.status >= 200 && last.status < 300) return last.body;
    if (last.connected && last.status >= 400 && last.status < 500) {
      throw ProtocolError(method + " " + path + " rejected (HTTP " + std::to_string(last.status) +
                          "): " + error_message(last.body));
    }
    if (attempt < retry_.attempts) {
      std::this_thread::sleep_for(backoff);
      backoff = std::chrono::milliseconds(
          static_cast<long long>(std::llround(static_cast<double>(backoff.count()) * retry_.multiplier)));
    }
  }
  const std::string where = method + " " + endpoint_ + path + " failed after " + std::to_string(retry_.attempts) +
                            " attempts: ";
  if (last.connected) {
    throw ModelError(where + "HTTP " + std::to_string(last.status) + ": " + error_message(last.body));
  }
  throw BackendUnavailable(where + last.transport_error);
}

std::string DiffusionBackend::get(const std::string& path) { return with_retry("GET", path, nullptr); }

std::string DiffusionBackend::post(const std::string& path, const std::string& body) {
  return with_retry("POST", path, &body);
}

BackendInfo DiffusionBackend::parse_info_response(const std::string& body) {
  const json j = parse_body(body, "info");
  BackendInfo info;
  try {
    info.protocol = j.at("protocol").get<int>();
    if (info.protocol != wire::kProtocolVersion) {
      throw ProtocolVersionMismatch("server speaks protocol " + std::to_string(info.protocol) + ", client speaks " +
                                    std::to_string(wire::kProtocolVersion));
    }
    info.latent_channels = j.at("latent_channels").get<int>();
    info.latent_size = j.at("latent_size").get<int>();
    info.alphas_cumprod = j.at("schedule").at("alphas_cumprod").get<std::vector<double>>();
    if (j.contains("model_id")) info.model_id = j.at("model_id").get<std::string>();
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("invalid info response: ") + e.what());
  }
  if (info.latent_channels < 1 || info.latent_size < 1 || info.alphas_cumprod.size() < 2) {
    throw ProtocolError("info response has empty latent shape or schedule");
  }
  for (double a : info.alphas_cumprod) {
    if (!(a > 0.0 && a <= 1.0)) throw ProtocolError("alphas_cumprod entries must lie in (0, 1]");
  }
  return info;
}

const BackendInfo& DiffusionBackend::info() {
  std::lock_guard lock(info_mutex_);
  if (!info_) {
    BackendInfo parsed = parse_info_response(get("/v1/info"));
    if (!parsed.model_id.empty() && !model_id_.empty() && parsed.model_id != model_id_) {
      throw ProtocolError("server serves model '" + parsed.model_id + "', expected '" + model_id_ + "'");
    }
    info_ = std::move(parsed);
  }
  return *info_;
}

NoiseLevel DiffusionBackend::noise_level(double t) {
  const auto& schedule = info().alphas_cumprod;
  const double clamped = std::clamp(t, 0.0, 1.0);
  const auto index = static_cast<std::size_t>(std::llround(clamped * static_cast<double>(schedule.size() - 1)));
  const double a = schedule[index];
  return {std::sqrt(a), std::sqrt(1.0 - a)};
}

std::string DiffusionBackend::encode_request(const Image& image) {
  return json{{"image", wire::tensor_to_value(image_to_tensor(image))}}.dump();
}

std::string DiffusionBackend::predict_request(const Tensor& noised, double t, const DepthCondition& depth,
                                              const std::string& prompt, const std::string& negative_prompt) {
  return json{{"latent_noised", wire::tensor_to_value(noised)},
              {"t", t},
              {"depth", wire::tensor_to_value(depth_tensor(depth))},
              {"prompt", prompt},
              {"negative_prompt", negative_prompt}}
      .dump();
}

std::string DiffusionBackend::encode_grad_request(const Tensor& latent_grad, const Image& image) {
  return json{{"latent_grad", wire::tensor_to_value(latent_grad)},
              {"image", wire::tensor_to_value(image_to_tensor(image))}}
      .dump();
}

NoisePrediction DiffusionBackend::parse_predict_response(const std::string& body) {
  const json j = parse_body(body, "predict_noise");
  if (!j.is_object() || !j.contains("eps_cond") || !j.contains("eps_uncond")) {
    throw ProtocolError("predict_noise response lacks eps_cond/eps_uncond");
  }
  NoisePrediction pred;
  pred.eps_cond = wire::tensor_from_value(j.at("eps_cond"));
  pred.eps_uncond = wire::tensor_from_value(j.at("eps_uncond"));
  return pred;
}

Tensor DiffusionBackend::encode(const Image& image) {
  const auto& meta = info();
  const json j = parse_body(post("/v1/encode", encode_request(image)), "encode");
  if (!j.is_object() || !j.contains("latent")) throw ProtocolError("encode response lacks latent");
  Tensor latent = wire::tensor_from_value(j.at("latent"));
  const std::vector<std::int64_t> expected{meta.latent_channels, meta.latent_size, meta.latent_size};
  if (latent.shape != expected) throw ProtocolError("encode returned a latent of unexpected shape");
  return latent;
}

NoisePrediction DiffusionBackend::predict_noise(const Tensor& noised, double t, const DepthCondition& depth,
                                                const std::string& prompt, const std::string& negative_prompt,
                                                const std::optional<CameraSample>& /*view*/) {
  const auto& meta = info();
  if (depth.size != meta.latent_size || depth.values.size() != static_cast<std::size_t>(depth.size) * depth.size) {
    throw ProtocolError("depth map is " + std::to_string(depth.size) + "x" + std::to_string(depth.size) +
                        " but the model expects " + std::to_string(meta.latent_size) + "x" +
                        std::to_string(meta.latent_size));
  }
  const std::vector<std::int64_t> expected{meta.latent_channels, meta.latent_size, meta.latent_size};
  if (noised.shape != expected) throw ProtocolError("noised latent has unexpected shape");

  NoisePrediction pred =
      parse_predict_response(post("/v1/predict_noise", predict_request(noised, t, depth, prompt, negative_prompt)));
  if (pred.eps_cond.shape != noised.shape || pred.eps_uncond.shape != noised.shape) {
    throw ProtocolError("noise prediction shape does not match the latent");
  }
  return pred;
}

Image DiffusionBackend::encode_backward(const Tensor& working_grad, const Image& image) {
  const json j = parse_body(post("/v1/encode_grad", encode_grad_request(working_grad, image)), "encode_grad");
  if (!j.is_object() || !j.contains("image_grad")) throw ProtocolError("encode_grad response lacks image_grad");
  const Tensor grad = wire::tensor_from_value(j.at("image_grad"));
  const std::vector<std::int64_t> expected{image.height, image.width, image.channels};
  if (grad.shape != expected) throw ProtocolError("image gradient shape does not match the image");
  return tensor_to_image(grad);
}

}  // namespace texsds
