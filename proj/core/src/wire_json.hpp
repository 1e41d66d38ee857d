#pragma once

#include "texsds/guidance.hpp"

#include <json.hpp>

namespace texsds::wire {

nlohmann::json tensor_to_value(const Tensor& tensor);
Tensor tensor_from_value(const nlohmann::json& value);

}  // namespace texsds::wire
