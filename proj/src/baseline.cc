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

#include "cnnidx/baseline.h"

#include <algorithm>
#include <string>

#include "cnnidx/error.h"
#include "cnnidx/parallel.h"
#include "cnnidx/pq.h"
#include "cnnidx/random.h"

namespace cnnidx {
namespace {

bool closer(const Neighbor& a, const Neighbor& b) {
  return a.distance != b.distance ? a.distance < b.distance : a.id < b.id;
}

void check_dim(const FeatureSet& db, std::span<const float> q) {
  if (q.size() != db.dim()) {
    throw InvalidArgument("query dimension " + std::to_string(q.size()) +
                          " differs from database dimension " + std::to_string(db.dim()));
  }
}

std::vector<Neighbor> top(std::vector<Neighbor> all, std::size_t top_k) {
  const auto keep = std::min(top_k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep), all.end(),
                    closer);
  all.resize(keep);
  return all;
}

}  // namespace

std::vector<Neighbor> brute_force(const FeatureSet& db, std::span<const float> q,
                                  std::size_t top_k) {
  check_dim(db, q);
  std::vector<Neighbor> all(db.size());
  for (std::size_t i = 0; i < db.size(); ++i) {
    all[i] = {static_cast<std::uint32_t>(i), squared_l2(db[i], q)};
  }
  return top(std::move(all), top_k);
}

LshIndex::LshIndex(const FeatureSet& db, const LshConfig& cfg, unsigned threads)
    : db_(db), cfg_(cfg) {
  if (cfg.tables < 1 || cfg.bits_per_table < 1) {
    throw InvalidArgument("lsh: tables and bits per table must be >= 1");
  }
  if (cfg.bits_per_table > 64) throw InvalidArgument("lsh: at most 64 bits per table");
  if (db.empty()) throw InvalidArgument("lsh: empty database");

  Rng rng(cfg.seed);
  planes_.resize(cfg.tables * cfg.bits_per_table * db.dim());
  for (auto& p : planes_) p = static_cast<float>(rng.normal());

  std::vector<std::uint64_t> keys(db.size() * cfg.tables);
  parallel_blocks(db.size(), 1024, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      for (std::size_t t = 0; t < cfg.tables; ++t) keys[i * cfg.tables + t] = hash(t, db[i]);
    }
  });
  buckets_.resize(cfg.tables);
  for (std::size_t i = 0; i < db.size(); ++i) {
    for (std::size_t t = 0; t < cfg.tables; ++t) {
      buckets_[t][keys[i * cfg.tables + t]].push_back(static_cast<std::uint32_t>(i));
    }
  }
}

std::uint64_t LshIndex::hash(std::size_t table, std::span<const float> x) const {
  const std::size_t dim = db_.dim();
  std::uint64_t key = 0;
  for (std::size_t b = 0; b < cfg_.bits_per_table; ++b) {
    const float* plane = planes_.data() + (table * cfg_.bits_per_table + b) * dim;
    double dot = 0.0;
    for (std::size_t j = 0; j < dim; ++j) dot += static_cast<double>(plane[j]) * x[j];
    if (dot >= 0.0) key |= std::uint64_t{1} << b;
  }
  return key;
}

std::vector<std::uint32_t> LshIndex::candidates(std::span<const float> q) const {
  check_dim(db_, q);
  std::vector<std::uint32_t> ids;
  for (std::size_t t = 0; t < cfg_.tables; ++t) {
    auto it = buckets_[t].find(hash(t, q));
    if (it != buckets_[t].end()) ids.insert(ids.end(), it->second.begin(), it->second.end());
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

std::vector<Neighbor> LshIndex::query(std::span<const float> q, std::size_t top_k) const {
  const auto ids = candidates(q);
  std::vector<Neighbor> all(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) all[i] = {ids[i], squared_l2(db_[ids[i]], q)};
  return top(std::move(all), top_k);
}

std::size_t LshIndex::memory_bytes() const {
  std::size_t bytes = planes_.size() * sizeof(float);
  for (const auto& table : buckets_) {
    for (const auto& [key, ids] : table) bytes += sizeof(key) + ids.size() * sizeof(std::uint32_t);
  }
  return bytes;
}

LshIndex lsh_build(const FeatureSet& db, const LshConfig& cfg, unsigned threads) {
  return LshIndex(db, cfg, threads);
}

std::vector<Neighbor> lsh_query(const LshIndex& index, std::span<const float> q,
                                std::size_t top_k) {
  return index.query(q, top_k);
}

}  // namespace cnnidx
