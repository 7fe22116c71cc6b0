// SPDX-FileCopyrightText: (c) 2026 The udd-desk Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "udd/digest.hpp"

#include <bit>
#include <cstdio>
#include <cstring>

namespace udd {

namespace {
constexpr std::uint64_t kPrime = 0x100000001B3ULL;
}

void Fnv1a::update(std::span<const std::uint8_t> bytes) {
  for (auto b : bytes) {
    h_ ^= b;
    h_ *= kPrime;
  }
}

void Fnv1a::update(std::string_view s) {
  update(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
  update(std::uint64_t{s.size()});
}

// Hashes the little-endian byte image of each value so the digest does not
// depend on host byte order.
void Fnv1a::update(std::span<const double> values) {
  for (double v : values) update(std::bit_cast<std::uint64_t>(v));
}

void Fnv1a::update(std::uint64_t v) {
  std::uint8_t bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<std::uint8_t>(v >> (8 * i));
  update(std::span<const std::uint8_t>(bytes, 8));
}

std::string Fnv1a::hex() const { return to_hex(h_); }

std::string to_hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace udd
