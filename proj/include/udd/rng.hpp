// SPDX-FileCopyrightText: (c) 2026 The udd-desk Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <initializer_list>
#include <utility>

namespace udd {

/// Counter-based random stream.
///
/// Draw n is a pure function of (key, n): the key is a SplitMix64 digest of
/// the seed and any stream ids, and each draw hashes key + n * golden. No
/// library distributions are used, so sequences are identical on every
/// platform. `split` derives an independent child stream without touching the
/// parent.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream_id = 0);

  /// Child stream keyed by (this key, id); the parent counter is unaffected.
  RngStream split(std::uint64_t id) const;
  RngStream split(std::initializer_list<std::uint64_t> ids) const;

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  /// Uniform integer on [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);
  /// Standard normal via Box-Muller; consumes two draws.
  double normal();

  template <typename It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      const auto j = below(i);
      using std::swap;
      swap(first[i - 1], first[j]);
    }
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  RngStream(std::uint64_t seed, std::uint64_t key, std::uint64_t counter)
      : seed_(seed), key_(key), counter_(counter) {}

  std::uint64_t seed_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace udd
