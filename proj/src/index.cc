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

#include "cnnidx/index.h"

#include <algorithm>
#include <bit>
#include <limits>
#include <fstream>
#include <string>

#include <zlib.h>

#include "byteio.h"
#include "cnnidx/error.h"
#include "cnnidx/parallel.h"

namespace cnnidx {
namespace {

constexpr char kIndexMagic[8] = {'C', 'N', 'N', 'I', 'D', 'X', '0', '1'};
constexpr char kCodebookMagic[8] = {'C', 'N', 'N', 'P', 'Q', 'C', '0', '1'};
constexpr std::uint32_t kFormatVersion = 1;

constexpr std::uint32_t tag(const char (&s)[5]) {
  return static_cast<std::uint32_t>(s[0]) | static_cast<std::uint32_t>(s[1]) << 8 |
         static_cast<std::uint32_t>(s[2]) << 16 | static_cast<std::uint32_t>(s[3]) << 24;
}
constexpr std::uint32_t kConfigTag = tag("CONF");
constexpr std::uint32_t kQuantizerTag = tag("QUNT");
constexpr std::uint32_t kListsTag = tag("LIST");

constexpr std::size_t kSectionCount = 3;
constexpr std::size_t kHeaderBytes = 8 + 4 + 4 + kSectionCount * (4 + 8 + 8);
constexpr std::size_t kConfigBytes = 4 + 5 * 8;
constexpr std::size_t kListHeaderBytes = 8 + 4;

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large buffers in chunks.
  while (!bytes.empty()) {
    const auto n = std::min<std::size_t>(bytes.size(), 1u << 30);
    crc = crc32(crc, bytes.data(), static_cast<uInt>(n));
    bytes = bytes.subspan(n);
  }
  return static_cast<std::uint32_t>(crc);
}

std::size_t quantizer_section_bytes(const InvertedIndex::Quantizer& q) {
  if (std::holds_alternative<VirtualWordBank>(q)) return 2 * 8;
  const auto& cb = std::get<PqCodebook>(q);
  return 6 * 8 + cb.centroids().size() * sizeof(float);
}

void write_quantizer(detail::ByteWriter& w, const InvertedIndex::Quantizer& q) {
  if (const auto* bank = std::get_if<VirtualWordBank>(&q)) {
    w.put<std::uint64_t>(bank->dim());
    w.put<std::uint64_t>(bank->seed());
    return;
  }
  const auto& cb = std::get<PqCodebook>(q);
  w.put<std::uint64_t>(cb.dim());
  w.put<std::uint64_t>(cb.segments());
  w.put<std::uint64_t>(cb.words_per_segment());
  w.put<std::uint64_t>(cb.config().kmeans_iters);
  w.put<std::uint64_t>(cb.config().kmeans_seed);
  w.put<std::uint64_t>(cb.config().kmeans_restarts);
  w.put_span(std::span<const float>(cb.centroids()));
}

PqCodebook read_codebook_body(detail::ByteReader& r) {
  const auto dim = r.get<std::uint64_t>();
  PqConfig cfg;
  cfg.segments = r.get<std::uint64_t>();
  cfg.words_per_segment = r.get<std::uint64_t>();
  cfg.kmeans_iters = r.get<std::uint64_t>();
  cfg.kmeans_seed = r.get<std::uint64_t>();
  cfg.kmeans_restarts = r.get<std::uint64_t>();
  if (dim == 0 || cfg.words_per_segment == 0 || dim > r.remaining() ||
      cfg.words_per_segment > r.remaining() / sizeof(float) / dim) {
    throw FormatError("codebook: implausible shape");
  }
  std::vector<float> centroids(cfg.words_per_segment * dim);
  r.get_into(std::span<float>(centroids));
  try {
    return PqCodebook(dim, cfg, std::move(centroids));
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("codebook: ") + e.what());
  }
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  const auto size = std::filesystem::file_size(path);
  std::vector<std::uint8_t> bytes(size);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
  if (static_cast<std::uintmax_t>(in.gcount()) != size) {
    throw IoError("short read from " + path.string());
  }
  return bytes;
}

void write_file(std::span<const std::uint8_t> bytes, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
}

// Verifies magic and CRC trailer; returns the payload between them.
std::span<const std::uint8_t> check_envelope(std::span<const std::uint8_t> bytes,
                                             const char (&magic)[8], const char* what) {
  if (bytes.size() < 8 + 4 || std::memcmp(bytes.data(), magic, 8) != 0) {
    throw FormatError(std::string(what) + ": bad magic bytes (not a " +
                      std::string(magic, 8) + " file)");
  }
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + bytes.size() - 4, 4);
  if (crc32_of(bytes.first(bytes.size() - 4)) != stored) {
    throw FormatError(std::string(what) + ": checksum mismatch (file corrupt or truncated)");
  }
  return bytes.first(bytes.size() - 4);
}

}  // namespace

const char* scheme_name(Scheme scheme) { return scheme == Scheme::kTifc ? "tifc" : "ifc"; }

Scheme parse_scheme(std::string_view name) {
  if (name == "tifc") return Scheme::kTifc;
  if (name == "ifc") return Scheme::kIfc;
  throw InvalidArgument("unknown scheme '" + std::string(name) + "' (expected tifc or ifc)");
}

void PostingList::append(std::uint32_t image_id, std::span<const std::uint8_t> code) {
  if (code.size() + 4 != stride_) throw InvalidArgument("posting entry has the wrong code size");
  const auto* p = reinterpret_cast<const std::uint8_t*>(&image_id);
  bytes_.insert(bytes_.end(), p, p + 4);
  bytes_.insert(bytes_.end(), code.begin(), code.end());
}

void PostingList::assign_raw(std::span<const std::uint8_t> raw) {
  if (raw.size() % stride_ != 0) throw FormatError("posting list size is not a whole entry count");
  bytes_.assign(raw.begin(), raw.end());
}

InvertedIndex::InvertedIndex(Scheme scheme, std::size_t dim, std::size_t link_count,
                             EmbedConfig embed, Quantizer quantizer)
    : scheme_(scheme),
      dim_(dim),
      word_count_(0),
      link_count_(link_count),
      embed_(embed),
      quantizer_(std::move(quantizer)),
      dense_(scheme == Scheme::kTifc) {
  if (const auto* cb = codebook()) {
    word_count_ = cb->word_count();
  } else {
    word_count_ = std::get<VirtualWordBank>(quantizer_).dim();
  }
  if (dense_) lists_.assign(word_count_, PostingList(code_bytes(embed_.code_length)));
}

const PostingList* InvertedIndex::list(WordId word) const {
  if (dense_) {
    if (word >= lists_.size() || lists_[word].size() == 0) return nullptr;
    return &lists_[word];
  }
  auto it = std::lower_bound(words_.begin(), words_.end(), word);
  if (it == words_.end() || *it != word) return nullptr;
  return &lists_[static_cast<std::size_t>(it - words_.begin())];
}

std::size_t InvertedIndex::occupied_words() const {
  if (!dense_) return lists_.size();
  return static_cast<std::size_t>(
      std::count_if(lists_.begin(), lists_.end(), [](const auto& l) { return l.size() != 0; }));
}

std::size_t InvertedIndex::total_entries() const {
  std::size_t n = 0;
  for (const auto& l : lists_) n += l.size();
  return n;
}

std::vector<WordId> InvertedIndex::select_words(std::span<const float> x,
                                                std::size_t count) const {
  if (x.size() != dim_) {
    throw InvalidArgument("vector dimension " + std::to_string(x.size()) +
                          " differs from index dimension " + std::to_string(dim_));
  }
  std::vector<WordId> out;
  out.reserve(count);
  if (const auto* cb = codebook()) {
    for (const auto& wd : nearest_words(x, *cb, count)) out.push_back(wd.word);
  } else {
    for (const auto& ws : top_words(softmax(x), count)) out.push_back(ws.word);
  }
  return out;
}

void InvertedIndex::word_vector(WordId word, std::span<float> out) const {
  if (const auto* cb = codebook()) {
    reconstruct_into(word, *cb, out);
    return;
  }
  const auto& bank = std::get<VirtualWordBank>(quantizer_);
  if (word >= bank.dim()) throw InvalidArgument("virtual word id out of range");
  if (out.size() != bank.dim()) throw InvalidArgument("word vector output has the wrong size");
  auto v = bank.word(word);
  std::copy(v.begin(), v.end(), out.begin());
}

// Populates the private layout of an index for build() and deserialize().
class IndexAssembler {
 public:
  static InvertedIndex make(Scheme scheme, std::size_t dim, std::size_t link_count,
                            EmbedConfig embed, InvertedIndex::Quantizer quantizer) {
    return InvertedIndex(scheme, dim, link_count, embed, std::move(quantizer));
  }

  static void fill(InvertedIndex& ix, std::size_t n, std::span<const WordId> links,
                   std::span<const std::uint8_t> codes) {
    const std::size_t s = ix.link_count_;
    const std::size_t cb = code_bytes(ix.embed_.code_length);
    ix.indexed_count_ = n;
    if (ix.dense_) {
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < s; ++j) {
          ix.lists_[links[i * s + j]].append(static_cast<std::uint32_t>(i),
                                             codes.subspan((i * s + j) * cb, cb));
        }
      }
      return;
    }
    // Sparse: order links by (word, image) and cut into lists.
    std::vector<std::size_t> order(n * s);
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return links[a] != links[b] ? links[a] < links[b] : a < b;
    });
    for (std::size_t k : order) {
      const WordId w = links[k];
      if (ix.words_.empty() || ix.words_.back() != w) {
        ix.words_.push_back(w);
        ix.lists_.emplace_back(cb);
      }
      ix.lists_.back().append(static_cast<std::uint32_t>(k / s), codes.subspan(k * cb, cb));
    }
  }

  static void add_list(InvertedIndex& ix, WordId word, std::span<const std::uint8_t> raw) {
    if (ix.dense_) {
      ix.lists_[word].assign_raw(raw);
    } else {
      ix.words_.push_back(word);
      ix.lists_.emplace_back(code_bytes(ix.embed_.code_length));
      ix.lists_.back().assign_raw(raw);
    }
  }

  static void set_count(InvertedIndex& ix, std::size_t n) { ix.indexed_count_ = n; }
};

namespace {

InvertedIndex build_impl(const FeatureSet& db, const BuildConfig& cfg,
                         InvertedIndex::Quantizer quantizer, unsigned threads) {
  if (db.empty()) throw InvalidArgument("build: empty database");
  if (db.size() > std::numeric_limits<std::uint32_t>::max()) {
    throw InvalidArgument("build: database too large for 32-bit image ids");
  }
  const std::size_t dim = db.dim();
  const std::size_t L = cfg.embed.code_length;
  if (L == 0 || dim % L != 0) {
    throw InvalidArgument("build: dimension " + std::to_string(dim) +
                          " is not divisible by code length L=" + std::to_string(L));
  }
  auto ix = IndexAssembler::make(cfg.scheme, dim, cfg.link_count, cfg.embed, std::move(quantizer));
  if (ix.dim() != dim) {
    throw InvalidArgument("build: quantizer dimension " + std::to_string(ix.dim()) +
                          " differs from database dimension " + std::to_string(dim));
  }
  if (cfg.link_count < 1 || cfg.link_count > ix.word_count()) {
    throw InvalidArgument("build: link count S=" + std::to_string(cfg.link_count) +
                          " outside [1, " + std::to_string(ix.word_count()) + "]");
  }

  const std::size_t n = db.size();
  const std::size_t s = cfg.link_count;
  const std::size_t cb = code_bytes(L);
  std::vector<WordId> links(n * s);
  std::vector<std::uint8_t> codes(n * s * cb);
  parallel_blocks(n, 256, threads, [&](std::size_t begin, std::size_t end) {
    std::vector<float> word_vec(dim);
    for (std::size_t i = begin; i < end; ++i) {
      const auto words = ix.select_words(db[i], s);
      for (std::size_t j = 0; j < s; ++j) {
        links[i * s + j] = words[j];
        ix.word_vector(words[j], word_vec);
        encode_into(db[i], word_vec, L, std::span<std::uint8_t>(codes).subspan((i * s + j) * cb, cb));
      }
    }
  });
  IndexAssembler::fill(ix, n, links, codes);
  return ix;
}

}  // namespace

InvertedIndex build(const FeatureSet& db, const BuildConfig& cfg, unsigned threads) {
  if (cfg.scheme == Scheme::kTifc) {
    if (db.dim() == 0) throw InvalidArgument("build: empty database");
    return build_impl(db, cfg, make_virtual_words(db.dim(), cfg.virtual_word_seed), threads);
  }
  return build_impl(db, cfg, train(db, cfg.pq, threads), threads);
}

InvertedIndex build(const FeatureSet& db, const BuildConfig& cfg, PqCodebook codebook,
                    unsigned threads) {
  if (cfg.scheme != Scheme::kIfc) throw InvalidArgument("build: a codebook requires the ifc scheme");
  return build_impl(db, cfg, std::move(codebook), threads);
}

std::vector<std::uint8_t> serialize(const InvertedIndex& ix) {
  const std::size_t cb = code_bytes(ix.embed().code_length);
  const std::size_t quant_bytes = quantizer_section_bytes(ix.quantizer());
  const std::size_t list_bytes =
      8 + ix.occupied_words() * kListHeaderBytes + ix.total_entries() * (4 + cb);

  detail::ByteWriter w;
  w.put_bytes(kIndexMagic, 8);
  w.put<std::uint32_t>(kFormatVersion);
  w.put<std::uint32_t>(kSectionCount);
  std::uint64_t offset = kHeaderBytes;
  for (auto [t, len] : {std::pair{kConfigTag, kConfigBytes}, std::pair{kQuantizerTag, quant_bytes},
                        std::pair{kListsTag, list_bytes}}) {
    w.put<std::uint32_t>(t);
    w.put<std::uint64_t>(offset);
    w.put<std::uint64_t>(len);
    offset += len;
  }

  w.put<std::uint32_t>(static_cast<std::uint32_t>(ix.scheme()));
  w.put<std::uint64_t>(ix.dim());
  w.put<std::uint64_t>(ix.word_count());
  w.put<std::uint64_t>(ix.link_count());
  w.put<std::uint64_t>(ix.embed().code_length);
  w.put<std::uint64_t>(ix.indexed_count());

  write_quantizer(w, ix.quantizer());

  w.put<std::uint64_t>(ix.occupied_words());
  ix.for_each_list([&](WordId word, const PostingList& list) {
    w.put<std::uint64_t>(word);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(list.size()));
    w.put_span(list.raw());
  });

  w.put<std::uint32_t>(crc32_of(w.bytes()));
  return std::move(w.bytes());
}

InvertedIndex deserialize(std::span<const std::uint8_t> bytes) {
  const auto body = check_envelope(bytes, kIndexMagic, "index");
  detail::ByteReader r(body, "index");
  r.take(8);
  const auto version = r.get<std::uint32_t>();
  if (version != kFormatVersion) {
    throw FormatError("index: unsupported format version " + std::to_string(version));
  }
  const auto sections = r.get<std::uint32_t>();
  if (sections != kSectionCount) throw FormatError("index: unexpected section count");
  struct Section {
    std::uint32_t tag;
    std::uint64_t offset, length;
  };
  Section table[kSectionCount];
  for (auto& s : table) {
    s.tag = r.get<std::uint32_t>();
    s.offset = r.get<std::uint64_t>();
    s.length = r.get<std::uint64_t>();
    if (s.offset > body.size() || s.length > body.size() - s.offset) {
      throw FormatError("index: section extends past end of file");
    }
  }
  if (table[0].tag != kConfigTag || table[1].tag != kQuantizerTag || table[2].tag != kListsTag) {
    throw FormatError("index: unexpected section order");
  }
  auto section = [&](const Section& s, const char* name) {
    return detail::ByteReader(body.subspan(s.offset, s.length), std::string("index ") + name);
  };

  auto conf = section(table[0], "config");
  const auto scheme_raw = conf.get<std::uint32_t>();
  if (scheme_raw > 1) throw FormatError("index: unknown scheme " + std::to_string(scheme_raw));
  const auto scheme = static_cast<Scheme>(scheme_raw);
  const auto dim = conf.get<std::uint64_t>();
  const auto word_count = conf.get<std::uint64_t>();
  const auto link_count = conf.get<std::uint64_t>();
  const auto code_length = conf.get<std::uint64_t>();
  const auto indexed = conf.get<std::uint64_t>();
  if (code_length == 0 || dim == 0 || dim % code_length != 0) {
    throw FormatError("index: inconsistent dimension / code length");
  }

  auto quant = section(table[1], "quantizer");
  InvertedIndex::Quantizer quantizer = VirtualWordBank(1, 0);
  if (scheme == Scheme::kTifc) {
    const auto bank_dim = quant.get<std::uint64_t>();
    const auto seed = quant.get<std::uint64_t>();
    if (bank_dim != dim) throw FormatError("index: virtual word dimension mismatch");
    quantizer = make_virtual_words(bank_dim, seed);
  } else {
    quantizer = read_codebook_body(quant);
  }

  InvertedIndex ix = [&] {
    try {
      return IndexAssembler::make(scheme, dim, link_count, EmbedConfig{code_length},
                                  std::move(quantizer));
    } catch (const InvalidArgument& e) {
      throw FormatError(std::string("index: ") + e.what());
    }
  }();
  if (ix.dim() != dim || ix.word_count() != word_count) {
    throw FormatError("index: quantizer disagrees with config");
  }
  if (link_count < 1 || link_count > word_count) throw FormatError("index: bad link count");

  auto lists = section(table[2], "lists");
  const std::size_t stride = 4 + code_bytes(code_length);
  const auto list_count = lists.get<std::uint64_t>();
  std::optional<WordId> prev;
  std::size_t entries = 0;
  for (std::uint64_t l = 0; l < list_count; ++l) {
    const auto word = lists.get<std::uint64_t>();
    const auto count = lists.get<std::uint32_t>();
    if (word >= word_count || (prev && word <= *prev) || count == 0) {
      throw FormatError("index: malformed posting list header");
    }
    prev = word;
    if (count > lists.remaining() / stride) throw FormatError("index lists: truncated");
    auto raw = lists.take(count * stride);
    std::uint32_t last_id = 0;
    for (std::size_t e = 0; e < count; ++e) {
      std::uint32_t id;
      std::memcpy(&id, raw.data() + e * stride, 4);
      if (id >= indexed || (e > 0 && id <= last_id)) {
        throw FormatError("index: posting list ids out of range or unsorted");
      }
      last_id = id;
    }
    IndexAssembler::add_list(ix, word, raw);
    entries += count;
  }
  if (entries != indexed * link_count) {
    throw FormatError("index: entry count " + std::to_string(entries) + " != N*S");
  }
  IndexAssembler::set_count(ix, indexed);
  return ix;
}

void save(const InvertedIndex& ix, const std::filesystem::path& path) {
  write_file(serialize(ix), path);
}

InvertedIndex load(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return deserialize(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

IndexStats stats(const InvertedIndex& ix) {
  IndexStats st;
  st.word_count = ix.word_count();
  st.occupied_words = ix.occupied_words();
  st.total_entries = ix.total_entries();
  const std::size_t cb = code_bytes(ix.embed().code_length);
  st.code_bytes = st.total_entries * cb;
  st.posting_bytes = 8 + st.occupied_words * kListHeaderBytes + st.total_entries * 4;
  st.quantizer_bytes = quantizer_section_bytes(ix.quantizer());
  st.total_bytes =
      kHeaderBytes + kConfigBytes + st.quantizer_bytes + st.posting_bytes + st.code_bytes + 4;

  st.length_histogram.assign(1, st.word_count - st.occupied_words);
  ix.for_each_list([&](WordId, const PostingList& list) {
    const auto len = list.size();
    const auto bucket = static_cast<std::size_t>(std::bit_width(len));
    if (st.length_histogram.size() <= bucket) st.length_histogram.resize(bucket + 1, 0);
    ++st.length_histogram[bucket];
  });
  return st;
}

void save_codebook(const PqCodebook& codebook, const std::filesystem::path& path) {
  detail::ByteWriter w;
  w.put_bytes(kCodebookMagic, 8);
  w.put<std::uint32_t>(kFormatVersion);
  write_quantizer(w, codebook);
  w.put<std::uint32_t>(crc32_of(w.bytes()));
  write_file(w.bytes(), path);
}

PqCodebook load_codebook(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    const auto body = check_envelope(bytes, kCodebookMagic, "codebook");
    detail::ByteReader r(body, "codebook");
    r.take(8);
    if (r.get<std::uint32_t>() != kFormatVersion) {
      throw FormatError("codebook: unsupported format version");
    }
    return read_codebook_body(r);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace cnnidx
