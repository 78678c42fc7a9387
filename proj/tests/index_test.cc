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

#include <gtest/gtest.h>
#include <zlib.h>

#include <cmath>
#include <cstring>
#include <map>
#include <numeric>
#include <set>

#include "cnnidx/error.h"
#include "cnnidx/search.h"
#include "test_util.h"

namespace cnnidx {
namespace {

using testing::TempDir;

BuildConfig ifc_config(std::size_t s, std::size_t l, std::size_t k, std::size_t m) {
  BuildConfig cfg;
  cfg.scheme = Scheme::kIfc;
  cfg.link_count = s;
  cfg.embed.code_length = l;
  cfg.pq.words_per_segment = k;
  cfg.pq.segments = m;
  cfg.pq.kmeans_restarts = 1;
  return cfg;
}

BuildConfig tifc_config(std::size_t s, std::size_t l) {
  BuildConfig cfg;
  cfg.scheme = Scheme::kTifc;
  cfg.link_count = s;
  cfg.embed.code_length = l;
  return cfg;
}

template <typename T>
T read_le(const std::vector<std::uint8_t>& bytes, std::size_t at) {
  T v;
  std::memcpy(&v, bytes.data() + at, sizeof(T));
  return v;
}

void reseal(std::vector<std::uint8_t>& bytes) {
  const auto crc = static_cast<std::uint32_t>(
      crc32(0L, bytes.data(), static_cast<uInt>(bytes.size() - 4)));
  std::memcpy(bytes.data() + bytes.size() - 4, &crc, 4);
}

std::string format_error(const std::vector<std::uint8_t>& bytes) {
  try {
    deserialize(bytes);
  } catch (const FormatError& e) {
    return e.what();
  }
  return "";
}

TEST(SchemeTest, Names) {
  EXPECT_EQ(parse_scheme("tifc"), Scheme::kTifc);
  EXPECT_EQ(parse_scheme("ifc"), Scheme::kIfc);
  EXPECT_STREQ(scheme_name(Scheme::kTifc), "tifc");
  EXPECT_THROW(parse_scheme("lsh"), InvalidArgument);
}

TEST(BuildTest, SingleLinkIsAssign) {
  const auto db = testing::random_features(300, 8, 1);
  const auto ix = build(db, ifc_config(1, 8, 6, 2), 1);
  const auto* cb = ix.codebook();
  ASSERT_NE(cb, nullptr);
  EXPECT_EQ(ix.total_entries(), 300u);
  std::vector<int> seen(300, 0);
  ix.for_each_list([&](WordId word, const PostingList& list) {
    for (std::size_t e = 0; e < list.size(); ++e) {
      const auto id = list.image_id(e);
      ++seen[id];
      EXPECT_EQ(assign(db[id], *cb), word);
    }
  });
  for (int s : seen) EXPECT_EQ(s, 1);
}

TEST(BuildTest, EntryCountIsNTimesS) {
  const auto tiny = testing::random_features(3, 4, 2);
  EXPECT_EQ(build(tiny, tifc_config(2, 2), 1).total_entries(), 6u);
  const auto db = testing::random_features(200, 12, 3);
  for (const auto& cfg : {tifc_config(5, 4), ifc_config(7, 6, 4, 3)}) {
    const auto ix = build(db, cfg, 1);
    EXPECT_EQ(ix.total_entries(), 200u * cfg.link_count);
    EXPECT_EQ(ix.indexed_count(), 200u);
    std::vector<std::set<WordId>> words(200);
    std::vector<std::size_t> links(200, 0);
    ix.for_each_list([&](WordId word, const PostingList& list) {
      for (std::size_t e = 0; e < list.size(); ++e) {
        words[list.image_id(e)].insert(word);
        ++links[list.image_id(e)];
      }
    });
    for (std::size_t i = 0; i < 200; ++i) {
      EXPECT_EQ(words[i].size(), cfg.link_count);
      EXPECT_EQ(links[i], cfg.link_count);
    }
  }
}

TEST(BuildTest, LinksFollowWordSelectionAndCodes) {
  const auto db = testing::random_features(120, 16, 4);
  for (const auto& cfg : {tifc_config(3, 8), ifc_config(4, 8, 5, 2)}) {
    const auto ix = build(db, cfg, 1);
    std::vector<float> c(16);
    ix.for_each_list([&](WordId word, const PostingList& list) {
      ix.word_vector(word, c);
      for (std::size_t e = 0; e < list.size(); ++e) {
        const auto id = list.image_id(e);
        const auto sel = ix.select_words(db[id], cfg.link_count);
        EXPECT_NE(std::find(sel.begin(), sel.end(), word), sel.end());
        const auto code = encode(db[id], c, cfg.embed);
        EXPECT_TRUE(std::equal(code.bytes().begin(), code.bytes().end(), list.code(e).begin()));
      }
    });
  }
}

TEST(BuildTest, TifcLinksAreTopSoftmaxBins) {
  const auto db = testing::random_features(50, 8, 5);
  const auto ix = build(db, tifc_config(3, 4), 1);
  for (std::size_t i = 0; i < db.size(); ++i) {
    std::vector<std::uint32_t> order(8);
    std::iota(order.begin(), order.end(), 0u);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return db[i][a] > db[i][b]; });
    const auto sel = ix.select_words(db[i], 3);
    ASSERT_EQ(sel.size(), 3u);
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(sel[j], order[j]);
  }
}

TEST(BuildTest, IdenticalImagesShareWordsAndCodes) {
  auto db = testing::random_features(60, 8, 6);
  std::vector<float> dup(db[10].begin(), db[10].end());
  db.append(dup);
  const auto ix = build(db, ifc_config(3, 4, 4, 2), 1);
  std::map<WordId, std::vector<std::uint8_t>> a, b;
  ix.for_each_list([&](WordId word, const PostingList& list) {
    for (std::size_t e = 0; e < list.size(); ++e) {
      std::vector<std::uint8_t> code(list.code(e).begin(), list.code(e).end());
      if (list.image_id(e) == 10) a[word] = code;
      if (list.image_id(e) == 60) b[word] = code;
    }
  });
  EXPECT_EQ(a.size(), 3u);
  EXPECT_EQ(a, b);
}

TEST(BuildTest, Preconditions) {
  const auto db = testing::random_features(20, 6, 7);
  EXPECT_THROW(build(db, tifc_config(7, 3), 1), InvalidArgument);
  EXPECT_THROW(build(db, tifc_config(2, 4), 1), InvalidArgument);
  EXPECT_THROW(build(db, ifc_config(5, 3, 2, 2), 1), InvalidArgument);
  EXPECT_THROW(build(db, ifc_config(2, 3, 21, 1), 1), InvalidArgument);
}

TEST(BuildTest, DeterministicAcrossThreads) {
  const auto db = testing::random_features(400, 16, 8);
  const auto cfg = ifc_config(4, 8, 8, 2);
  const auto a = serialize(build(db, cfg, 1));
  EXPECT_EQ(serialize(build(db, cfg, 1)), a);
  EXPECT_EQ(serialize(build(db, cfg, 4)), a);
}

TEST(BuildTest, PretrainedCodebook) {
  const auto db = testing::random_features(300, 8, 9);
  const auto cfg = ifc_config(3, 4, 5, 2);
  const auto cb = train(db, cfg.pq, 1);
  EXPECT_EQ(build(db, cfg, cb, 1), build(db, cfg, 1));
  EXPECT_THROW(build(db, tifc_config(3, 4), cb, 1), InvalidArgument);
}

TEST(PersistTest, RoundTripTifc) {
  TempDir dir;
  const auto db = testing::random_features(100, 16, 10);
  const auto queries = testing::random_features(10, 16, 11);
  const auto ix = build(db, tifc_config(4, 8), 1);
  save(ix, dir / "t.idx");
  const auto back = load(dir / "t.idx");
  EXPECT_EQ(back, ix);
  for (std::size_t q = 0; q < queries.size(); ++q) {
    const QueryConfig qc{4, 3, 20};
    EXPECT_EQ(query(back, queries[q], qc), query(ix, queries[q], qc));
  }
}

TEST(PersistTest, RoundTripIfcKeepsCodebook) {
  TempDir dir;
  const auto db = testing::random_features(200, 8, 12);
  const auto ix = build(db, ifc_config(3, 4, 6, 2), 1);
  save(ix, dir / "i.idx");
  const auto back = load(dir / "i.idx");
  ASSERT_NE(back.codebook(), nullptr);
  EXPECT_EQ(*back.codebook(), *ix.codebook());
  const auto probe = testing::random_features(100, 8, 13);
  for (std::size_t i = 0; i < probe.size(); ++i) {
    EXPECT_EQ(assign(probe[i], *back.codebook()), assign(probe[i], *ix.codebook()));
  }
}

TEST(PersistTest, CodebookFile) {
  TempDir dir;
  const auto db = testing::random_features(100, 6, 14);
  PqConfig cfg;
  cfg.words_per_segment = 4;
  cfg.segments = 3;
  const auto cb = train(db, cfg, 1);
  save_codebook(cb, dir / "c.pq");
  EXPECT_EQ(load_codebook(dir / "c.pq"), cb);
  EXPECT_THROW(load_codebook(dir / "missing.pq"), IoError);
}

TEST(PersistTest, Layout) {
  const auto db = testing::random_features(50, 8, 15);
  const auto ix = build(db, ifc_config(2, 4, 3, 2), 1);
  const auto bytes = serialize(ix);
  ASSERT_GT(bytes.size(), 60u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 8), "CNNIDX01");
  EXPECT_EQ(read_le<std::uint32_t>(bytes, 8), 1u);
  EXPECT_EQ(read_le<std::uint32_t>(bytes, 12), 3u);
  std::uint64_t expect_offset = 16 + 3 * 20;
  const char* tags[] = {"CONF", "QUNT", "LIST"};
  for (int s = 0; s < 3; ++s) {
    const std::size_t at = 16 + 20 * s;
    EXPECT_EQ(std::string(bytes.begin() + at, bytes.begin() + at + 4), tags[s]);
    EXPECT_EQ(read_le<std::uint64_t>(bytes, at + 4), expect_offset);
    expect_offset += read_le<std::uint64_t>(bytes, at + 12);
  }
  EXPECT_EQ(expect_offset + 4, bytes.size());
  EXPECT_EQ(read_le<std::uint32_t>(bytes, 76), 1u);
  EXPECT_EQ(read_le<std::uint64_t>(bytes, 80), 8u);
  EXPECT_EQ(read_le<std::uint64_t>(bytes, 88), 9u);
  EXPECT_EQ(read_le<std::uint64_t>(bytes, 96), 2u);
  EXPECT_EQ(read_le<std::uint64_t>(bytes, 104), 4u);
  EXPECT_EQ(read_le<std::uint64_t>(bytes, 112), 50u);
  EXPECT_EQ(read_le<std::uint32_t>(bytes, bytes.size() - 4),
            static_cast<std::uint32_t>(crc32(0L, bytes.data(), static_cast<uInt>(bytes.size() - 4))));
}

TEST(PersistTest, CorruptedMagic) {
  const auto db = testing::random_features(30, 4, 16);
  auto bytes = serialize(build(db, tifc_config(2, 2), 1));
  bytes[3] ^= 0xff;
  EXPECT_NE(format_error(bytes).find("magic"), std::string::npos);
  TempDir dir;
  testing::write_bytes(dir / "bad.idx", bytes);
  EXPECT_THROW(load(dir / "bad.idx"), FormatError);
}

TEST(PersistTest, ChecksumMismatch) {
  const auto db = testing::random_features(30, 4, 17);
  auto bytes = serialize(build(db, tifc_config(2, 2), 1));
  bytes[bytes.size() / 2] ^= 0x10;
  EXPECT_NE(format_error(bytes).find("checksum"), std::string::npos);
}

TEST(PersistTest, VersionMismatch) {
  const auto db = testing::random_features(30, 4, 18);
  auto bytes = serialize(build(db, tifc_config(2, 2), 1));
  bytes[8] = 2;
  reseal(bytes);
  EXPECT_NE(format_error(bytes).find("version"), std::string::npos);
}

TEST(PersistTest, Truncation) {
  const auto db = testing::random_features(30, 4, 19);
  const auto bytes = serialize(build(db, tifc_config(2, 2), 1));
  for (std::size_t cut : {std::size_t{0}, std::size_t{5}, std::size_t{20}, bytes.size() / 2,
                          bytes.size() - 1}) {
    std::vector<std::uint8_t> part(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut));
    EXPECT_FALSE(format_error(part).empty()) << "cut " << cut;
    if (part.size() > 12) {
      reseal(part);
      EXPECT_FALSE(format_error(part).empty()) << "resealed cut " << cut;
    }
  }
}

TEST(PersistTest, ByteIdenticalRebuild) {
  TempDir dir;
  const auto db = testing::random_features(300, 16, 20);
  const auto cfg = ifc_config(3, 8, 7, 2);
  save(build(db, cfg, 1), dir / "a.idx");
  save(build(db, cfg, 2), dir / "b.idx");
  EXPECT_EQ(testing::read_bytes(dir / "a.idx"), testing::read_bytes(dir / "b.idx"));
}

TEST(StatsTest, Arithmetic) {
  const auto db = testing::random_features(1000, 512, 21);
  const auto ix = build(db, tifc_config(4, 512), 1);
  const auto st = stats(ix);
  EXPECT_EQ(st.total_entries, 4000u);
  EXPECT_EQ(st.code_bytes, 4000u * 64u);
  EXPECT_EQ(st.word_count, 512u);
  EXPECT_EQ(st.occupied_words, ix.occupied_words());
  EXPECT_EQ(st.posting_bytes, 8 + st.occupied_words * 12 + 4000 * 4);
  EXPECT_EQ(st.quantizer_bytes, 16u);
}

TEST(StatsTest, HistogramCountsEmptyLists) {
  const auto db = testing::random_features(10, 8, 22);
  const auto ix = build(db, ifc_config(1, 4, 10, 2), 1);
  const auto st = stats(ix);
  ASSERT_FALSE(st.length_histogram.empty());
  EXPECT_EQ(st.length_histogram[0], 100u - ix.occupied_words());
  EXPECT_GT(st.length_histogram[0], 0u);
  std::uint64_t lists = 0, entries_lo = 0;
  for (std::size_t b = 0; b < st.length_histogram.size(); ++b) {
    lists += st.length_histogram[b];
    if (b > 0) entries_lo += st.length_histogram[b] << (b - 1);
  }
  EXPECT_EQ(lists, 100u);
  EXPECT_LE(entries_lo, st.total_entries);
}

TEST(StatsTest, MatchesFileSize) {
  TempDir dir;
  const auto db = testing::random_features(500, 32, 23);
  for (const auto& cfg : {tifc_config(3, 16), ifc_config(5, 32, 8, 2)}) {
    const auto ix = build(db, cfg, 1);
    save(ix, dir / "s.idx");
    const auto size = std::filesystem::file_size(dir / "s.idx");
    const auto st = stats(ix);
    EXPECT_EQ(st.total_bytes, size);
    EXPECT_LE(std::abs(double(st.total_bytes) - double(size)), 0.05 * double(size));
  }
}

}  // namespace
}  // namespace cnnidx
