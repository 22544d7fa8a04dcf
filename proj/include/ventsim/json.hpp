#pragma once

#include <json.hpp>

namespace ventsim {
/// Insertion-ordered JSON keeps written documents in a stable, readable order.
using Json = nlohmann::ordered_json;
} // namespace ventsim
