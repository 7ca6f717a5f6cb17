#pragma once

#include <string>
#include <string_view>

#include "stimulheat/protocol.hpp"

namespace stimulheat::protocol {

/// Upper-case hex without separators.
[[nodiscard]] std::string to_hex(std::span<const std::uint8_t> bytes);
/// Accepts upper or lower case, ignores spaces. Throws std::invalid_argument.
[[nodiscard]] Bytes from_hex(std::string_view text);

/// Reference frames for other implementations of the protocol, as a JSON
/// document: {"protocol_version", "vectors": [{"name", "hex", "valid",
/// "type", "fields"} or {"name", "hex", "valid": false, "error"}]}.
[[nodiscard]] std::string test_vectors_json();

}  // namespace stimulheat::protocol
