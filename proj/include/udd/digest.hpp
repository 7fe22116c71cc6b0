// SPDX-FileCopyrightText: (c) 2026 The udd-desk Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace udd {

/// Incremental 64-bit FNV-1a. Used for integrity and replay digests, not for
/// anything adversarial.
class Fnv1a {
 public:
  void update(std::span<const std::uint8_t> bytes);
  void update(std::string_view s);
  void update(std::span<const double> values);
  void update(std::uint64_t v);
  std::uint64_t value() const { return h_; }
  std::string hex() const;

 private:
  std::uint64_t h_ = 0xCBF29CE484222325ULL;
};

std::string to_hex(std::uint64_t v);

}  // namespace udd
