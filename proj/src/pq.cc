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

#include "cnnidx/pq.h"

#include <algorithm>
#include <limits>
#include <numeric>
#include <queue>
#include <string>
#include <unordered_set>

#include "cnnidx/error.h"
#include "cnnidx/parallel.h"
#include "cnnidx/random.h"

namespace cnnidx {
namespace {

constexpr std::size_t kBlock = 4096;

WordId checked_power(std::size_t base, std::size_t exponent) {
  WordId result = 1;
  for (std::size_t i = 0; i < exponent; ++i) {
    if (base != 0 && result > std::numeric_limits<WordId>::max() / base) {
      throw InvalidArgument("K^M = " + std::to_string(base) + "^" + std::to_string(exponent) +
                            " does not fit in a 64-bit word id");
    }
    result *= base;
  }
  return result;
}

void validate_config(const PqConfig& cfg) {
  if (cfg.segments < 1) throw InvalidArgument("pq: segments (M) must be >= 1");
  if (cfg.words_per_segment < 1) throw InvalidArgument("pq: words per segment (K) must be >= 1");
  if (cfg.words_per_segment > std::numeric_limits<std::uint32_t>::max()) {
    throw InvalidArgument("pq: words per segment (K) too large");
  }
  checked_power(cfg.words_per_segment, cfg.segments);
}

void check_dim(std::span<const float> x, const PqCodebook& cb) {
  if (x.size() != cb.dim()) {
    throw InvalidArgument("pq: vector dimension " + std::to_string(x.size()) +
                          " differs from codebook dimension " + std::to_string(cb.dim()));
  }
}

std::uint32_t nearest_centroid(const float* point, std::span<const float> centroids,
                               std::size_t dim, std::size_t k, double& best) {
  best = std::numeric_limits<double>::infinity();
  std::uint32_t label = 0;
  for (std::size_t c = 0; c < k; ++c) {
    const double d = squared_l2({point, dim}, centroids.subspan(c * dim, dim));
    if (d < best) {
      best = d;
      label = static_cast<std::uint32_t>(c);
    }
  }
  return label;
}

std::vector<float> seed_plus_plus(std::span<const float> points, std::size_t n, std::size_t dim,
                                  std::size_t k, Rng& rng) {
  std::vector<float> centroids;
  centroids.reserve(k * dim);
  auto add = [&](std::size_t i) {
    centroids.insert(centroids.end(), points.begin() + static_cast<std::ptrdiff_t>(i * dim),
                     points.begin() + static_cast<std::ptrdiff_t>((i + 1) * dim));
  };
  add(rng.below(n));
  std::vector<double> closest(n, std::numeric_limits<double>::infinity());
  for (std::size_t c = 1; c < k; ++c) {
    auto last = std::span<const float>(centroids).subspan((c - 1) * dim, dim);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      closest[i] = std::min(closest[i], squared_l2(points.subspan(i * dim, dim), last));
      total += closest[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      double target = rng.uniform() * total;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        target -= closest[i];
        if (target < 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      // Fewer distinct points than k; duplicate an arbitrary point.
      pick = rng.below(n);
    }
    add(pick);
  }
  return centroids;
}

}  // namespace

double squared_l2(std::span<const float> a, std::span<const float> b) {
  const std::size_t n = a.size();
  double acc[4] = {0.0, 0.0, 0.0, 0.0};
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    for (std::size_t j = 0; j < 4; ++j) {
      const double d = static_cast<double>(a[i + j]) - static_cast<double>(b[i + j]);
      acc[j] += d * d;
    }
  }
  for (; i < n; ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc[0] += d * d;
  }
  return (acc[0] + acc[1]) + (acc[2] + acc[3]);
}

PqCodebook::PqCodebook(std::size_t dim, PqConfig config, std::vector<float> centroids)
    : dim_(dim), config_(config), word_count_(0), centroids_(std::move(centroids)) {
  validate_config(config_);
  if (dim == 0 || dim % config_.segments != 0) {
    throw InvalidArgument("pq: dimension " + std::to_string(dim) +
                          " is not divisible by M=" + std::to_string(config_.segments));
  }
  if (centroids_.size() != config_.words_per_segment * dim) {
    throw InvalidArgument("pq: expected " + std::to_string(config_.words_per_segment * dim) +
                          " centroid values, got " + std::to_string(centroids_.size()));
  }
  word_count_ = checked_power(config_.words_per_segment, config_.segments);
}

WordId PqCodebook::encode_word(std::span<const std::uint32_t> sub_words) const {
  if (sub_words.size() != segments()) throw InvalidArgument("pq: wrong number of sub-words");
  WordId w = 0;
  for (auto s : sub_words) {
    if (s >= words_per_segment()) throw InvalidArgument("pq: sub-word id out of range");
    w = w * words_per_segment() + s;
  }
  return w;
}

std::vector<std::uint32_t> PqCodebook::decode_word(WordId word) const {
  if (word >= word_count_) {
    throw InvalidArgument("pq: word id " + std::to_string(word) + " out of range");
  }
  std::vector<std::uint32_t> out(segments());
  for (std::size_t m = segments(); m-- > 0;) {
    out[m] = static_cast<std::uint32_t>(word % words_per_segment());
    word /= words_per_segment();
  }
  return out;
}

KMeansResult kmeans(std::span<const float> points, std::size_t dim, std::size_t k,
                    std::size_t max_iters, std::uint64_t seed, unsigned threads) {
  if (dim == 0 || points.size() % dim != 0) throw InvalidArgument("kmeans: bad point buffer");
  const std::size_t n = points.size() / dim;
  if (k < 1 || n < k) {
    throw InvalidArgument("kmeans: need at least k=" + std::to_string(k) + " points, got " +
                          std::to_string(n));
  }
  Rng rng(seed);
  KMeansResult res;
  res.centroids = seed_plus_plus(points, n, dim, k, rng);
  res.labels.assign(n, std::numeric_limits<std::uint32_t>::max());

  const std::size_t blocks = (n + kBlock - 1) / kBlock;
  struct Partial {
    std::vector<double> sums;
    std::vector<std::size_t> counts;
    double sse = 0.0;
    std::size_t changed = 0;
  };
  std::vector<Partial> partials(blocks);

  auto assign_step = [&](bool accumulate) {
    parallel_blocks(n, kBlock, threads, [&](std::size_t begin, std::size_t end) {
      auto& p = partials[begin / kBlock];
      p.sse = 0.0;
      p.changed = 0;
      if (accumulate) {
        p.sums.assign(k * dim, 0.0);
        p.counts.assign(k, 0);
      }
      for (std::size_t i = begin; i < end; ++i) {
        double d;
        const auto label = nearest_centroid(points.data() + i * dim, res.centroids, dim, k, d);
        p.sse += d;
        if (label != res.labels[i]) ++p.changed;
        res.labels[i] = label;
        if (accumulate) {
          ++p.counts[label];
          double* s = p.sums.data() + label * dim;
          for (std::size_t j = 0; j < dim; ++j) s[j] += points[i * dim + j];
        }
      }
    });
    double sse = 0.0;
    std::size_t changed = 0;
    for (const auto& p : partials) {
      sse += p.sse;
      changed += p.changed;
    }
    return std::pair{sse, changed};
  };

  for (std::size_t iter = 0; iter < std::max<std::size_t>(1, max_iters); ++iter) {
    const auto [sse, changed] = assign_step(true);
    res.sse_history.push_back(sse);
    res.iterations = iter + 1;
    if (iter > 0 && changed == 0) break;

    std::vector<double> sums(k * dim, 0.0);
    std::vector<std::size_t> counts(k, 0);
    for (const auto& p : partials) {
      for (std::size_t c = 0; c < k; ++c) counts[c] += p.counts[c];
      for (std::size_t j = 0; j < sums.size(); ++j) sums[j] += p.sums[j];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;  // empty cluster keeps its centroid
      for (std::size_t j = 0; j < dim; ++j) {
        res.centroids[c * dim + j] =
            static_cast<float>(sums[c * dim + j] / static_cast<double>(counts[c]));
      }
    }
  }
  res.sse = assign_step(false).first;
  return res;
}

PqCodebook train(const FeatureSet& training, const PqConfig& config, unsigned threads) {
  validate_config(config);
  const std::size_t dim = training.dim();
  if (dim == 0 || dim % config.segments != 0) {
    throw InvalidArgument("pq: dimension " + std::to_string(dim) +
                          " is not divisible by M=" + std::to_string(config.segments));
  }
  const std::size_t n = training.size();
  const std::size_t k = config.words_per_segment;
  if (n < k) {
    throw InvalidArgument("pq: training set has " + std::to_string(n) +
                          " vectors, fewer than K=" + std::to_string(k));
  }
  const std::size_t sub = dim / config.segments;
  std::vector<float> centroids;
  centroids.reserve(k * dim);
  std::vector<float> segment(n * sub);
  for (std::size_t m = 0; m < config.segments; ++m) {
    for (std::size_t i = 0; i < n; ++i) {
      auto row = training[i].subspan(m * sub, sub);
      std::copy(row.begin(), row.end(), segment.begin() + static_cast<std::ptrdiff_t>(i * sub));
    }
    KMeansResult best;
    bool have = false;
    for (std::size_t r = 0; r < std::max<std::size_t>(1, config.kmeans_restarts); ++r) {
      auto run = kmeans(segment, sub, k, config.kmeans_iters,
                        mix_seed(config.kmeans_seed, m * 1000003 + r), threads);
      if (!have || run.sse < best.sse) {
        best = std::move(run);
        have = true;
      }
    }
    centroids.insert(centroids.end(), best.centroids.begin(), best.centroids.end());
  }
  return PqCodebook(dim, config, std::move(centroids));
}

WordId assign(std::span<const float> x, const PqCodebook& cb) {
  check_dim(x, cb);
  const std::size_t sub = cb.sub_dim();
  WordId w = 0;
  for (std::size_t m = 0; m < cb.segments(); ++m) {
    double best;
    const auto label = nearest_centroid(
        x.data() + m * sub,
        std::span<const float>(cb.centroids()).subspan(m * cb.words_per_segment() * sub,
                                                       cb.words_per_segment() * sub),
        sub, cb.words_per_segment(), best);
    w = w * cb.words_per_segment() + label;
  }
  return w;
}

std::vector<WordDistance> nearest_words(std::span<const float> x, const PqCodebook& cb,
                                        std::size_t count) {
  check_dim(x, cb);
  if (count < 1 || count > cb.word_count()) {
    throw InvalidArgument("nearest_words: count " + std::to_string(count) + " outside [1, " +
                          std::to_string(cb.word_count()) + "]");
  }
  const std::size_t segs = cb.segments();
  const std::size_t k = cb.words_per_segment();
  const std::size_t sub = cb.sub_dim();

  // Per segment: sub-word ids sorted by (distance, id), and their distances.
  std::vector<std::vector<std::uint32_t>> order(segs, std::vector<std::uint32_t>(k));
  std::vector<std::vector<double>> dist(segs, std::vector<double>(k));
  for (std::size_t m = 0; m < segs; ++m) {
    for (std::size_t c = 0; c < k; ++c) dist[m][c] = squared_l2(x.subspan(m * sub, sub), cb.centroid(m, c));
    std::iota(order[m].begin(), order[m].end(), 0u);
    std::sort(order[m].begin(), order[m].end(), [&](std::uint32_t a, std::uint32_t b) {
      return dist[m][a] != dist[m][b] ? dist[m][a] < dist[m][b] : a < b;
    });
  }

  struct Node {
    double distance;
    WordId word;
    WordId ranks;  // positions into `order`, mixed radix base K
  };
  auto after = [](const Node& a, const Node& b) {
    return a.distance != b.distance ? a.distance > b.distance : a.word > b.word;
  };
  std::priority_queue<Node, std::vector<Node>, decltype(after)> heap(after);
  std::unordered_set<WordId> seen;
  std::vector<std::uint32_t> rank(segs);

  auto push = [&](WordId ranks) {
    if (!seen.insert(ranks).second) return;
    WordId r = ranks, word = 0;
    for (std::size_t m = segs; m-- > 0;) {
      rank[m] = static_cast<std::uint32_t>(r % k);
      r /= k;
    }
    double total = 0.0;
    for (std::size_t m = 0; m < segs; ++m) {
      const auto s = order[m][rank[m]];
      total += dist[m][s];
      word = word * k + s;
    }
    heap.push({total, word, ranks});
  };

  // Nodes tied with the last kept distance are drained, then re-sorted by id.
  push(0);
  std::vector<WordDistance> out;
  while (!heap.empty()) {
    const Node top = heap.top();
    if (out.size() >= count && top.distance > out[count - 1].distance) break;
    heap.pop();
    out.push_back({top.word, top.distance});

    WordId r = top.ranks, stride = 1;
    for (std::size_t m = segs; m-- > 0;) {
      const auto pos = r % k;
      r /= k;
      if (pos + 1 < k) push(top.ranks + stride);
      stride *= k;
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const WordDistance& a, const WordDistance& b) {
    return a.distance != b.distance ? a.distance < b.distance : a.word < b.word;
  });
  out.resize(count);
  return out;
}

void reconstruct_into(WordId word, const PqCodebook& cb, std::span<float> out) {
  if (out.size() != cb.dim()) throw InvalidArgument("reconstruct: output has the wrong size");
  const auto subs = cb.decode_word(word);
  for (std::size_t m = 0; m < subs.size(); ++m) {
    auto c = cb.centroid(m, subs[m]);
    std::copy(c.begin(), c.end(), out.begin() + static_cast<std::ptrdiff_t>(m * cb.sub_dim()));
  }
}

std::vector<float> reconstruct(WordId word, const PqCodebook& cb) {
  std::vector<float> out(cb.dim());
  reconstruct_into(word, cb, out);
  return out;
}

}  // namespace cnnidx
