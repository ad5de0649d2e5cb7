#pragma once

#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace ttc {

std::string sha256_hex(std::string_view bytes);

/// Serialization used for digests: object keys sorted, integral-valued
/// numbers written as integers, everything else in shortest round-trip form,
/// no whitespace. Two JSON values that differ only in key order or in
/// 1 vs 1.0 produce the same string.
std::string canonical_dump(const nlohmann::json& value);

}  // namespace ttc
