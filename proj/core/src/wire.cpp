#include "texsds/wire.hpp"

#include "texsds/errors.hpp"
#include "wire_json.hpp"

#include <array>
#include <bit>
#include <cstring>

namespace texsds::wire {
namespace {

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int decode_char(char c) {
  if (c >= 'A' && c <= 'Z') return c - 'A';
  if (c >= 'a' && c <= 'z') return c - 'a' + 26;
  if (c >= '0' && c <= '9') return c - '0' + 52;
  if (c == '+') return 62;
  if (c == '/') return 63;
  return -1;
}

}  // namespace

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t n = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out += kAlphabet[(n >> 18) & 63];
    out += kAlphabet[(n >> 12) & 63];
    out += kAlphabet[(n >> 6) & 63];
    out += kAlphabet[n & 63];
  }
  const std::size_t rest = bytes.size() - i;
  if (rest == 1) {
    const std::uint32_t n = bytes[i] << 16;
    out += kAlphabet[(n >> 18) & 63];
    out += kAlphabet[(n >> 12) & 63];
    out += "==";
  } else if (rest == 2) {
    const std::uint32_t n = (bytes[i] << 16) | (bytes[i + 1] << 8);
    out += kAlphabet[(n >> 18) & 63];
    out += kAlphabet[(n >> 12) & 63];
    out += kAlphabet[(n >> 6) & 63];
    out += '=';
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw ProtocolError("base64 length is not a multiple of 4");
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    std::array<int, 4> v{};
    int padding = 0;
    for (int k = 0; k < 4; ++k) {
      const char c = text[i + k];
      if (c == '=') {
        if (i + 4 != text.size() || k < 2) throw ProtocolError("misplaced base64 padding");
        v[k] = 0;
        ++padding;
      } else {
        if (padding > 0) throw ProtocolError("misplaced base64 padding");
        v[k] = decode_char(c);
        if (v[k] < 0) throw ProtocolError("invalid base64 character");
      }
    }
    const std::uint32_t n = (v[0] << 18) | (v[1] << 12) | (v[2] << 6) | v[3];
    out.push_back(static_cast<std::uint8_t>(n >> 16));
    if (padding < 2) out.push_back(static_cast<std::uint8_t>((n >> 8) & 0xff));
    if (padding < 1) out.push_back(static_cast<std::uint8_t>(n & 0xff));
  }
  return out;
}

std::uint16_t float_to_half(float value) {
  const auto f = std::bit_cast<std::uint32_t>(value);
  const std::uint32_t sign = (f >> 16) & 0x8000u;
  const std::uint32_t exponent = (f >> 23) & 0xffu;
  std::uint32_t mantissa = f & 0x7fffffu;

  if (exponent == 0xffu) {
    return static_cast<std::uint16_t>(sign | 0x7c00u | (mantissa != 0 ? 0x200u | (mantissa >> 13) : 0u));
  }
  const int e = static_cast<int>(exponent) - 127 + 15;
  if (e >= 31) return static_cast<std::uint16_t>(sign | 0x7c00u);
  if (e <= 0) {
    if (e < -10) return static_cast<std::uint16_t>(sign);
    mantissa |= 0x800000u;
    const int shift = 14 - e;
    std::uint32_t half = mantissa >> shift;
    const std::uint32_t remainder = mantissa & ((1u << shift) - 1u);
    const std::uint32_t halfway = 1u << (shift - 1);
    if (remainder > halfway || (remainder == halfway && (half & 1u))) ++half;
    return static_cast<std::uint16_t>(sign | half);
  }
  std::uint32_t half = sign | (static_cast<std::uint32_t>(e) << 10) | (mantissa >> 13);
  const std::uint32_t remainder = mantissa & 0x1fffu;
  // A carry out of the mantissa correctly bumps the exponent (up to inf).
  if (remainder > 0x1000u || (remainder == 0x1000u && (half & 1u))) ++half;
  return static_cast<std::uint16_t>(half);
}

float half_to_float(std::uint16_t bits) {
  const std::uint32_t sign = (bits & 0x8000u) << 16;
  const std::uint32_t exponent = (bits >> 10) & 0x1fu;
  const std::uint32_t mantissa = bits & 0x3ffu;
  if (exponent == 0) {
    const float magnitude = std::ldexp(static_cast<float>(mantissa), -24);
    return sign ? -magnitude : magnitude;
  }
  if (exponent == 31) return std::bit_cast<float>(sign | 0x7f800000u | (mantissa << 13));
  return std::bit_cast<float>(sign | ((exponent - 15 + 127) << 23) | (mantissa << 13));
}

nlohmann::json tensor_to_value(const Tensor& tensor) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(tensor.data.size() * 2);
  for (float v : tensor.data) {
    const std::uint16_t h = float_to_half(v);
    bytes.push_back(static_cast<std::uint8_t>(h & 0xffu));
    bytes.push_back(static_cast<std::uint8_t>(h >> 8));
  }
  return {{"shape", tensor.shape}, {"dtype", "float16"}, {"data", base64_encode(bytes)}};
}

Tensor tensor_from_value(const nlohmann::json& value) {
  if (!value.is_object() || !value.contains("shape") || !value.contains("data")) {
    throw ProtocolError("tensor must be an object with shape and data");
  }
  if (value.contains("dtype") && value.at("dtype") != "float16") throw ProtocolError("unsupported tensor dtype");
  Tensor out;
  try {
    out.shape = value.at("shape").get<std::vector<std::int64_t>>();
  } catch (const nlohmann::json::exception&) {
    throw ProtocolError("tensor shape must be an integer array");
  }
  for (auto d : out.shape) {
    if (d < 0) throw ProtocolError("negative tensor dimension");
  }
  if (!value.at("data").is_string()) throw ProtocolError("tensor data must be a base64 string");
  const auto bytes = base64_decode(value.at("data").get<std::string>());
  if (bytes.size() != out.element_count() * 2) throw ProtocolError("tensor data length does not match its shape");
  out.data.resize(out.element_count());
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    out.data[i] = half_to_float(static_cast<std::uint16_t>(bytes[2 * i] | (bytes[2 * i + 1] << 8)));
  }
  return out;
}

std::string tensor_to_json(const Tensor& tensor) { return tensor_to_value(tensor).dump(); }

Tensor tensor_from_json(std::string_view json) {
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(json);
  } catch (const nlohmann::json::parse_error& e) {
    throw ProtocolError(std::string("malformed tensor JSON: ") + e.what());
  }
  return tensor_from_value(value);
}

Tensor quantize_half(const Tensor& tensor) {
  Tensor out = tensor;
  for (auto& v : out.data) v = half_to_float(float_to_half(v));
  return out;
}

}  // namespace texsds::wire
