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

#include "cnnidx/embed.h"

#include <bit>
#include <cstring>
#include <string>

#include "cnnidx/error.h"

namespace cnnidx {

BinaryCode::BinaryCode(std::size_t bits, std::vector<std::uint8_t> bytes)
    : bits_(bits), bytes_(std::move(bytes)) {
  if (bytes_.size() != code_bytes(bits)) {
    throw InvalidArgument("binary code of " + std::to_string(bits) + " bits needs " +
                          std::to_string(code_bytes(bits)) + " bytes");
  }
  if (bits % 8 != 0 && (bytes_.back() >> (bits % 8)) != 0) {
    throw InvalidArgument("binary code has non-zero pad bits");
  }
}

BinaryCode BinaryCode::complement() const {
  BinaryCode out(bits_);
  for (std::size_t i = 0; i < bits_; ++i) out.set(i, !test(i));
  return out;
}

void encode_into(std::span<const float> x, std::span<const float> c, std::size_t code_length,
                 std::span<std::uint8_t> out) {
  if (x.size() != c.size()) {
    throw InvalidArgument("encode: dimension mismatch (" + std::to_string(x.size()) + " vs " +
                          std::to_string(c.size()) + ")");
  }
  if (code_length == 0 || x.size() % code_length != 0) {
    throw InvalidArgument("encode: dimension " + std::to_string(x.size()) +
                          " is not divisible by code length " + std::to_string(code_length));
  }
  if (out.size() != code_bytes(code_length)) {
    throw InvalidArgument("encode: output buffer has the wrong size");
  }
  std::memset(out.data(), 0, out.size());
  const std::size_t part = x.size() / code_length;
  for (std::size_t i = 0; i < code_length; ++i) {
    // Parts have equal length, so comparing sums compares means.
    double sx = 0.0, sc = 0.0;
    for (std::size_t j = i * part; j < (i + 1) * part; ++j) {
      sx += x[j];
      sc += c[j];
    }
    if (sx >= sc) out[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
  }
}

BinaryCode encode(std::span<const float> x, std::span<const float> c, const EmbedConfig& cfg) {
  std::vector<std::uint8_t> bytes(code_bytes(cfg.code_length));
  encode_into(x, c, cfg.code_length, bytes);
  return BinaryCode(cfg.code_length, std::move(bytes));
}

std::size_t hamming_bytes(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  std::size_t n = a.size(), i = 0, dist = 0;
  for (; i + 8 <= n; i += 8) {
    std::uint64_t x, y;
    std::memcpy(&x, a.data() + i, 8);
    std::memcpy(&y, b.data() + i, 8);
    dist += static_cast<std::size_t>(std::popcount(x ^ y));
  }
  if (i < n) {
    std::uint64_t x = 0, y = 0;
    std::memcpy(&x, a.data() + i, n - i);
    std::memcpy(&y, b.data() + i, n - i);
    dist += static_cast<std::size_t>(std::popcount(x ^ y));
  }
  return dist;
}

std::size_t hamming(const BinaryCode& a, const BinaryCode& b) {
  if (a.size() != b.size()) {
    throw InvalidArgument("hamming: code lengths differ (" + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()) + ")");
  }
  return hamming_bytes(a.bytes(), b.bytes());
}

}  // namespace cnnidx
