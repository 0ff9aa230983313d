#include "nstlab/core/hash.hpp"

#include <openssl/evp.h>

#include <memory>
#include <stdexcept>

namespace nstlab::core {

Digest sha256(std::span<const std::uint8_t> bytes) {
  Digest out{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 ||
      len != out.size()) {
    throw std::runtime_error("sha256: digest failed");
  }
  return out;
}

Digest sha256(std::string_view text) {
  return sha256(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()),
                                              text.size()));
}

std::string to_hex(std::span<const std::uint8_t> bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (std::uint8_t b : bytes) {
    out.push_back(kDigits[b >> 4u]);
    out.push_back(kDigits[b & 15u]);
  }
  return out;
}

std::string short_hash(std::string_view text) {
  Digest d = sha256(text);
  return to_hex(std::span<const std::uint8_t>(d.data(), 8));
}

std::uint64_t hash64(std::string_view text) {
  Digest d = sha256(text);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v = (v << 8u) | d[i];
  return v;
}

}  // namespace nstlab::core
