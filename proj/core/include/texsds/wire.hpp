#pragma once

#include "texsds/guidance.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace texsds::wire {

/// Version of the guidance HTTP protocol spoken by this client.
inline constexpr int kProtocolVersion = 1;

std::string base64_encode(std::span<const std::uint8_t> bytes);
/// Throws ProtocolError on characters outside the standard alphabet or bad
/// padding.
std::vector<std::uint8_t> base64_decode(std::string_view text);

/// IEEE 754 binary16 conversion, round-to-nearest-even.
std::uint16_t float_to_half(float value);
float half_to_float(std::uint16_t bits);

/// {"shape": [...], "dtype": "float16", "data": "<base64 little-endian>"}
std::string tensor_to_json(const Tensor& tensor);
Tensor tensor_from_json(std::string_view json);

/// Value after a float16 round trip, i.e. what the server actually sees.
Tensor quantize_half(const Tensor& tensor);

}  // namespace texsds::wire
