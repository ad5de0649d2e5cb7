#include "ttc/digest.hpp"

#include <array>
#include <cmath>
#include <cstdint>

#include <openssl/evp.h>

#include "ttc/error.hpp"

namespace ttc {

std::string sha256_hex(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[md[i] >> 4]);
    out.push_back(kHex[md[i] & 0x0f]);
  }
  return out;
}

namespace {

nlohmann::json normalize(const nlohmann::json& value) {
  switch (value.type()) {
    case nlohmann::json::value_t::object: {
      nlohmann::json out = nlohmann::json::object();
      for (const auto& [k, v] : value.items()) out[k] = normalize(v);
      return out;
    }
    case nlohmann::json::value_t::array: {
      nlohmann::json out = nlohmann::json::array();
      for (const auto& v : value) out.push_back(normalize(v));
      return out;
    }
    case nlohmann::json::value_t::number_float: {
      const double d = value.get<double>();
      if (std::isfinite(d) && std::trunc(d) == d && std::fabs(d) < 9.0e15) {
        return static_cast<std::int64_t>(d);
      }
      return d;
    }
    case nlohmann::json::value_t::number_unsigned:
      if (value.get<std::uint64_t>() <= static_cast<std::uint64_t>(INT64_MAX)) {
        return value.get<std::int64_t>();
      }
      return value;
    default:
      return value;
  }
}

}  // namespace

std::string canonical_dump(const nlohmann::json& value) {
  // nlohmann::json (std::map-backed) already iterates keys in sorted order.
  return normalize(value).dump();
}

}  // namespace ttc
