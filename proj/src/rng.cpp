// SPDX-FileCopyrightText: (c) 2026 The udd-desk Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "udd/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace udd {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += kGolden;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), key_(splitmix64(splitmix64(seed) ^ splitmix64(stream_id + kGolden))) {}

RngStream RngStream::split(std::uint64_t id) const {
  return RngStream(seed_, splitmix64(key_ ^ splitmix64(id ^ 0xD1B54A32D192ED03ULL)), 0);
}

RngStream RngStream::split(std::initializer_list<std::uint64_t> ids) const {
  RngStream s = *this;
  for (auto id : ids) s = s.split(id);
  return s;
}

std::uint64_t RngStream::next_u64() {
  const std::uint64_t n = counter_++;
  return splitmix64(key_ + n * kGolden);
}

double RngStream::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double RngStream::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

std::uint64_t RngStream::below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("RngStream::below: empty range");
  // Rejection on the top of the range removes modulo bias.
  const std::uint64_t limit = -n % n;
  for (;;) {
    const std::uint64_t r = next_u64();
    if (r >= limit) return r % n;
  }
}

double RngStream::normal() {
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace udd
