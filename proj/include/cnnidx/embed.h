// Copyright 2026 The cnnidx Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace cnnidx {

struct EmbedConfig {
  std::size_t code_length = 512;
  friend bool operator==(const EmbedConfig&, const EmbedConfig&) = default;
};

/// L-bit code packed little-endian: bit i lives in bit (i % 8) of byte
/// (i / 8). Pad bits in the last byte are always zero.
class BinaryCode {
 public:
  BinaryCode() = default;
  explicit BinaryCode(std::size_t bits) : bits_(bits), bytes_((bits + 7) / 8, 0) {}
  /// Adopts packed bytes; throws InvalidArgument if sizes disagree or a pad bit is set.
  BinaryCode(std::size_t bits, std::vector<std::uint8_t> bytes);

  std::size_t size() const { return bits_; }
  bool test(std::size_t i) const { return (bytes_[i / 8] >> (i % 8)) & 1u; }
  void set(std::size_t i, bool value) {
    const auto mask = static_cast<std::uint8_t>(1u << (i % 8));
    if (value) {
      bytes_[i / 8] |= mask;
    } else {
      bytes_[i / 8] &= static_cast<std::uint8_t>(~mask);
    }
  }
  std::span<const std::uint8_t> bytes() const { return bytes_; }

  /// Every meaningful bit flipped; pad bits stay zero.
  BinaryCode complement() const;

  friend bool operator==(const BinaryCode&, const BinaryCode&) = default;

 private:
  std::size_t bits_ = 0;
  std::vector<std::uint8_t> bytes_;
};

inline std::size_t code_bytes(std::size_t bits) { return (bits + 7) / 8; }

/// Splits x and c into L equal contiguous parts; bit i is set iff the mean
/// of part i of x is >= the mean of part i of c.
BinaryCode encode(std::span<const float> x, std::span<const float> c, const EmbedConfig& cfg);

/// Writes the packed code for (x, c) into `out` (code_bytes(L) bytes).
void encode_into(std::span<const float> x, std::span<const float> c, std::size_t code_length,
                 std::span<std::uint8_t> out);

std::size_t hamming(const BinaryCode& a, const BinaryCode& b);

/// Popcount distance over two packed buffers of equal length. Pad bits must
/// be zero in both.
std::size_t hamming_bytes(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b);

}  // namespace cnnidx
