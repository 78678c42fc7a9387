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
#include <cstring>
#include <filesystem>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "cnnidx/embed.h"
#include "cnnidx/pq.h"
#include "cnnidx/tifc.h"
#include "cnnidx/vecio.h"

namespace cnnidx {

enum class Scheme : std::uint32_t {
  kTifc = 0,  // softmax term frequencies over D virtual words
  kIfc = 1,   // product-quantization dictionary of K^M words
};

const char* scheme_name(Scheme scheme);
Scheme parse_scheme(std::string_view name);

struct BuildConfig {
  Scheme scheme = Scheme::kIfc;
  std::size_t link_count = 40;  // S
  EmbedConfig embed;
  PqConfig pq;                  // IFC only
  std::uint64_t virtual_word_seed = 1;  // TIFC only
};

/// Entries of one word stored inline as `[u32 image id][code bytes]`,
/// sorted by image id.
class PostingList {
 public:
  explicit PostingList(std::size_t code_bytes) : stride_(4 + code_bytes) {}

  std::size_t size() const { return bytes_.size() / stride_; }
  std::size_t stride() const { return stride_; }

  std::uint32_t image_id(std::size_t i) const {
    std::uint32_t id;
    std::memcpy(&id, bytes_.data() + i * stride_, 4);
    return id;
  }
  std::span<const std::uint8_t> code(std::size_t i) const {
    return {bytes_.data() + i * stride_ + 4, stride_ - 4};
  }

  void append(std::uint32_t image_id, std::span<const std::uint8_t> code);
  std::span<const std::uint8_t> raw() const { return bytes_; }
  void assign_raw(std::span<const std::uint8_t> raw);

  friend bool operator==(const PostingList&, const PostingList&) = default;

 private:
  std::size_t stride_;
  std::vector<std::uint8_t> bytes_;
};

struct IndexStats {
  WordId word_count = 0;
  std::size_t occupied_words = 0;
  std::size_t total_entries = 0;
  /// Image ids plus per-list headers.
  std::size_t posting_bytes = 0;
  std::size_t code_bytes = 0;
  std::size_t quantizer_bytes = 0;
  /// Exact size of the serialized index file.
  std::size_t total_bytes = 0;
  /// Bucket 0 counts empty lists; bucket b >= 1 counts lengths in [2^(b-1), 2^b).
  std::vector<std::uint64_t> length_histogram;
};

/// Word id -> posting list, plus the quantizer that defines the words.
/// Immutable after build() or load().
class InvertedIndex {
 public:
  using Quantizer = std::variant<VirtualWordBank, PqCodebook>;

  Scheme scheme() const { return scheme_; }
  std::size_t dim() const { return dim_; }
  WordId word_count() const { return word_count_; }
  std::size_t link_count() const { return link_count_; }
  const EmbedConfig& embed() const { return embed_; }
  std::size_t indexed_count() const { return indexed_count_; }
  const Quantizer& quantizer() const { return quantizer_; }
  const PqCodebook* codebook() const { return std::get_if<PqCodebook>(&quantizer_); }
  const VirtualWordBank* virtual_words() const {
    return std::get_if<VirtualWordBank>(&quantizer_);
  }

  /// nullptr when no image links to `word`.
  const PostingList* list(WordId word) const;
  std::size_t occupied_words() const;
  std::size_t total_entries() const;

  /// Calls fn(word, list) for every non-empty list in ascending word order.
  template <typename Fn>
  void for_each_list(Fn&& fn) const {
    if (dense_) {
      for (std::size_t w = 0; w < lists_.size(); ++w) {
        if (lists_[w].size() != 0) fn(static_cast<WordId>(w), lists_[w]);
      }
    } else {
      for (std::size_t i = 0; i < lists_.size(); ++i) fn(words_[i], lists_[i]);
    }
  }

  /// The `count` words a vector links to (build) or is assigned to (query):
  /// top-count softmax bins for TIFC, nearest product words for IFC.
  std::vector<WordId> select_words(std::span<const float> x, std::size_t count) const;

  /// The reference vector a code is computed against for `word`.
  void word_vector(WordId word, std::span<float> out) const;

  friend bool operator==(const InvertedIndex&, const InvertedIndex&) = default;

 private:
  friend class IndexAssembler;

  InvertedIndex(Scheme scheme, std::size_t dim, std::size_t link_count, EmbedConfig embed,
                Quantizer quantizer);

  Scheme scheme_;
  std::size_t dim_;
  WordId word_count_;
  std::size_t link_count_;
  EmbedConfig embed_;
  std::size_t indexed_count_ = 0;
  Quantizer quantizer_;
  bool dense_;
  std::vector<WordId> words_;  // sorted, sparse layout only
  std::vector<PostingList> lists_;
};

/// Builds an index. IFC trains its codebook on `db` unless one is given.
InvertedIndex build(const FeatureSet& db, const BuildConfig& cfg, unsigned threads = 0);
InvertedIndex build(const FeatureSet& db, const BuildConfig& cfg, PqCodebook codebook,
                    unsigned threads = 0);

void save(const InvertedIndex& index, const std::filesystem::path& path);
InvertedIndex load(const std::filesystem::path& path);

/// Serialized bytes, identical to what save() writes.
std::vector<std::uint8_t> serialize(const InvertedIndex& index);
InvertedIndex deserialize(std::span<const std::uint8_t> bytes);

IndexStats stats(const InvertedIndex& index);

void save_codebook(const PqCodebook& codebook, const std::filesystem::path& path);
PqCodebook load_codebook(const std::filesystem::path& path);

}  // namespace cnnidx
