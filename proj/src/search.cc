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

#include "cnnidx/search.h"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <string>

#include "cnnidx/error.h"
#include "cnnidx/parallel.h"

namespace cnnidx {
namespace {

void validate(const InvertedIndex& ix, std::span<const float> q, const QueryConfig& cfg) {
  if (q.size() != ix.dim()) {
    throw InvalidArgument("query dimension " + std::to_string(q.size()) +
                          " differs from index dimension " + std::to_string(ix.dim()));
  }
  if (cfg.assignment_count < 1 || cfg.assignment_count > ix.word_count()) {
    throw InvalidArgument("assignment count W=" + std::to_string(cfg.assignment_count) +
                          " outside [1, " + std::to_string(ix.word_count()) + "]");
  }
  if (cfg.hamming_threshold > ix.embed().code_length) {
    throw InvalidArgument("hamming threshold T=" + std::to_string(cfg.hamming_threshold) +
                          " exceeds code length " + std::to_string(ix.embed().code_length));
  }
  if (cfg.top_k < 1) throw InvalidArgument("top_k must be >= 1");
}

#if defined(__x86_64__) && defined(__GNUC__)
#define CNNIDX_POPCNT_CLONES __attribute__((target_clones("popcnt", "default")))
#else
#define CNNIDX_POPCNT_CLONES
#endif

// Writes (image id, distance) for every entry closer than `threshold` to `out`
// and returns how many were written.
CNNIDX_POPCNT_CLONES
std::size_t filter_list(std::span<const std::uint8_t> raw, std::size_t stride,
                        const std::uint8_t* query, std::uint32_t threshold, Searcher::Hit* out) {
  const std::size_t n = stride - 4;
  const std::size_t count = raw.size() / stride;
  std::size_t kept = 0;
  for (std::size_t e = 0; e < count; ++e) {
    const std::uint8_t* entry = raw.data() + e * stride;
    const std::uint8_t* code = entry + 4;
    std::uint32_t h = 0;
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
      std::uint64_t a, b;
      std::memcpy(&a, code + i, 8);
      std::memcpy(&b, query + i, 8);
      h += static_cast<std::uint32_t>(std::popcount(a ^ b));
    }
    if (i + 4 <= n) {
      std::uint32_t a, b;
      std::memcpy(&a, code + i, 4);
      std::memcpy(&b, query + i, 4);
      h += static_cast<std::uint32_t>(std::popcount(a ^ b));
      i += 4;
    }
    for (; i < n; ++i) {
      h += static_cast<std::uint32_t>(std::popcount(static_cast<unsigned>(code[i] ^ query[i])));
    }
    std::memcpy(&out[kept].image_id, entry, 4);
    out[kept].distance = h;
    kept += h < threshold;
  }
  return kept;
}

bool ranks_before(const RankedEntry& a, const RankedEntry& b) {
  if (a.votes != b.votes) return a.votes > b.votes;
  if (a.min_hamming != b.min_hamming) return a.min_hamming < b.min_hamming;
  return a.image_id < b.image_id;
}

}  // namespace

std::size_t default_hamming_threshold(std::size_t code_length) {
  return static_cast<std::size_t>(std::lround(static_cast<double>(code_length) * 180.0 / 512.0));
}

Searcher::Searcher(const InvertedIndex& index)
    : index_(index),
      votes_(index.indexed_count(), 0),
      min_hamming_(index.indexed_count(), 0),
      word_vec_(index.dim()),
      query_code_(code_bytes(index.embed().code_length)) {}

RankedResult Searcher::query(std::span<const float> q, const QueryConfig& cfg) {
  validate(index_, q, cfg);
  RankedResult out;
  const auto threshold = static_cast<std::uint32_t>(cfg.hamming_threshold);
  const auto code_length = index_.embed().code_length;
  for (const WordId word : index_.select_words(q, cfg.assignment_count)) {
    const PostingList* list = index_.list(word);
    if (list == nullptr) continue;
    index_.word_vector(word, word_vec_);
    encode_into(q, word_vec_, code_length, query_code_);
    out.scanned_entries += list->size();
    if (hits_.size() < list->size()) hits_.resize(list->size());
    const std::size_t kept =
        filter_list(list->raw(), list->stride(), query_code_.data(), threshold, hits_.data());
    out.total_votes += kept;
    for (std::size_t k = 0; k < kept; ++k) {
      const auto id = hits_[k].image_id;
      const auto h = hits_[k].distance;
      if (votes_[id] == 0) {
        touched_.push_back(id);
        min_hamming_[id] = h;
      } else {
        min_hamming_[id] = std::min(min_hamming_[id], h);
      }
      ++votes_[id];
    }
  }

  out.entries.reserve(touched_.size());
  for (const auto id : touched_) {
    out.entries.push_back({id, votes_[id], min_hamming_[id]});
    votes_[id] = 0;
  }
  touched_.clear();
  const auto keep = std::min(cfg.top_k, out.entries.size());
  std::partial_sort(out.entries.begin(), out.entries.begin() + static_cast<std::ptrdiff_t>(keep),
                    out.entries.end(), ranks_before);
  out.entries.resize(keep);
  return out;
}

RankedResult query(const InvertedIndex& index, std::span<const float> q, const QueryConfig& cfg) {
  Searcher searcher(index);
  return searcher.query(q, cfg);
}

std::vector<std::uint32_t> candidate_set(const InvertedIndex& index, std::span<const float> q,
                                         std::size_t assignment_count) {
  validate(index, q, QueryConfig{assignment_count, 0, 1});
  std::vector<std::uint32_t> ids;
  for (const WordId word : index.select_words(q, assignment_count)) {
    if (const PostingList* list = index.list(word)) {
      for (std::size_t e = 0; e < list->size(); ++e) ids.push_back(list->image_id(e));
    }
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

std::vector<QueryOutcome> query_batch(const InvertedIndex& index, const FeatureSet& queries,
                                      const QueryConfig& cfg, unsigned threads) {
  std::vector<QueryOutcome> out(queries.size());
  parallel_blocks(queries.size(), 16, threads, [&](std::size_t begin, std::size_t end) {
    Searcher searcher(index);
    for (std::size_t i = begin; i < end; ++i) {
      const auto start = std::chrono::steady_clock::now();
      out[i].result = searcher.query(queries[i], cfg);
      out[i].seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
  });
  return out;
}

}  // namespace cnnidx
