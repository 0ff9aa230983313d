#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace nstlab::core {

using Digest = std::array<std::uint8_t, 32>;

Digest sha256(std::span<const std::uint8_t> bytes);
Digest sha256(std::string_view text);
std::string to_hex(std::span<const std::uint8_t> bytes);
// First 16 hex characters of the SHA-256 of `text`; used for content ids.
std::string short_hash(std::string_view text);
std::uint64_t hash64(std::string_view text);

}  // namespace nstlab::core
