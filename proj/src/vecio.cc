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

#include "cnnidx/vecio.h"

#include <algorithm>
#include <charconv>
#include <cstring>
#include <cmath>
#include <fstream>
#include <sstream>

#include "byteio.h"
#include "cnnidx/error.h"
#include "cnnidx/random.h"

namespace cnnidx {
namespace {

void check_finite(std::span<const float> v, std::size_t record) {
  for (float x : v) {
    if (!std::isfinite(x)) {
      throw FormatError("record " + std::to_string(record) + ": non-finite component");
    }
  }
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  return out;
}

// Reads one int32 record header. Returns false on clean end of file.
bool read_header(std::ifstream& in, std::int32_t& dim, std::size_t record,
                 const std::filesystem::path& path) {
  char buf[4];
  in.read(buf, 4);
  if (in.gcount() == 0 && in.eof()) return false;
  if (in.gcount() != 4) {
    throw FormatError(path.string() + ": record " + std::to_string(record) +
                      ": truncated header");
  }
  std::memcpy(&dim, buf, 4);
  if (dim <= 0) {
    throw FormatError(path.string() + ": record " + std::to_string(record) +
                      ": malformed header (dim " + std::to_string(dim) + ")");
  }
  return true;
}

template <typename T>
void read_payload(std::ifstream& in, std::span<T> out, std::size_t record,
                  const std::filesystem::path& path) {
  in.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(out.size_bytes()));
  if (static_cast<std::size_t>(in.gcount()) != out.size_bytes()) {
    throw FormatError(path.string() + ": record " + std::to_string(record) +
                      ": truncated payload");
  }
}

void finish_write(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace

FeatureSet::FeatureSet(std::size_t dim) : dim_(dim) {
  if (dim == 0) throw InvalidArgument("feature dimension must be positive");
}

FeatureSet::FeatureSet(std::size_t dim, std::vector<float> values)
    : dim_(dim), values_(std::move(values)) {
  if (dim == 0) throw InvalidArgument("feature dimension must be positive");
  if (values_.size() % dim != 0) {
    throw InvalidArgument("value count " + std::to_string(values_.size()) +
                          " is not a multiple of dim " + std::to_string(dim));
  }
  for (std::size_t i = 0; i < size(); ++i) check_finite((*this)[i], i);
}

void FeatureSet::append(std::span<const float> vector) {
  if (dim_ == 0) throw InvalidArgument("feature dimension must be positive");
  if (vector.size() != dim_) {
    throw InvalidArgument("record " + std::to_string(size()) + ": dimension " +
                          std::to_string(vector.size()) + " differs from " +
                          std::to_string(dim_));
  }
  check_finite(vector, size());
  values_.insert(values_.end(), vector.begin(), vector.end());
}

FeatureSet read_feature_file(const std::filesystem::path& path) {
  auto in = open_in(path);
  FeatureSet fs;
  std::vector<float> row;
  std::int32_t dim = 0;
  std::size_t record = 0;
  while (read_header(in, dim, record, path)) {
    if (record == 0) {
      fs = FeatureSet(static_cast<std::size_t>(dim));
      const auto bytes = std::filesystem::file_size(path);
      fs.reserve(bytes / (4 + 4 * static_cast<std::size_t>(dim)));
      row.resize(static_cast<std::size_t>(dim));
    } else if (static_cast<std::size_t>(dim) != fs.dim()) {
      throw FormatError(path.string() + ": record " + std::to_string(record) +
                        ": dimension " + std::to_string(dim) + " differs from " +
                        std::to_string(fs.dim()));
    }
    read_payload(in, std::span<float>(row), record, path);
    try {
      fs.append(row);
    } catch (const InvalidArgument& e) {
      throw FormatError(path.string() + ": " + e.what());
    }
    ++record;
  }
  if (record == 0) throw FormatError(path.string() + ": no records");
  return fs;
}

void write_feature_file(const FeatureSet& features, const std::filesystem::path& path) {
  if (features.empty()) throw InvalidArgument("refusing to write an empty feature set");
  auto out = open_out(path);
  const auto dim = static_cast<std::int32_t>(features.dim());
  for (std::size_t i = 0; i < features.size(); ++i) {
    out.write(reinterpret_cast<const char*>(&dim), 4);
    auto row = features[i];
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size_bytes()));
  }
  finish_write(out, path);
}

std::vector<std::vector<std::int32_t>> read_int_file(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::vector<std::vector<std::int32_t>> records;
  char buf[4];
  while (true) {
    in.read(buf, 4);
    if (in.gcount() == 0 && in.eof()) break;
    if (in.gcount() != 4) {
      throw FormatError(path.string() + ": record " + std::to_string(records.size()) +
                        ": truncated header");
    }
    std::int32_t n;
    std::memcpy(&n, buf, 4);
    if (n < 0) {
      throw FormatError(path.string() + ": record " + std::to_string(records.size()) +
                        ": malformed header");
    }
    std::vector<std::int32_t> rec(static_cast<std::size_t>(n));
    read_payload(in, std::span<std::int32_t>(rec), records.size(), path);
    records.push_back(std::move(rec));
  }
  return records;
}

void write_int_file(std::span<const std::vector<std::int32_t>> records,
                    const std::filesystem::path& path) {
  auto out = open_out(path);
  for (const auto& rec : records) {
    const auto n = static_cast<std::int32_t>(rec.size());
    out.write(reinterpret_cast<const char*>(&n), 4);
    out.write(reinterpret_cast<const char*>(rec.data()),
              static_cast<std::streamsize>(rec.size() * sizeof(std::int32_t)));
  }
  finish_write(out, path);
}

GroundTruth parse_ground_truth(std::string_view text, std::optional<std::size_t> database_size) {
  GroundTruth gt;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto eol = text.find('\n');
    std::string_view line = text.substr(0, eol);
    text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    const auto where = "ground truth line " + std::to_string(line_no);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) continue;
    line = line.substr(first);

    const auto colon = line.find(':');
    if (colon == std::string_view::npos) throw FormatError(where + ": missing ':'");
    std::string_view qid_text = line.substr(0, colon);
    while (!qid_text.empty() && (qid_text.back() == ' ' || qid_text.back() == '\t')) {
      qid_text.remove_suffix(1);
    }
    std::uint32_t qid = 0;
    auto [qend, qerr] = std::from_chars(qid_text.data(), qid_text.data() + qid_text.size(), qid);
    if (qerr != std::errc{} || qend != qid_text.data() + qid_text.size() || qid_text.empty()) {
      throw FormatError(where + ": bad query id '" + std::string(qid_text) + "'");
    }
    if (gt.entries.contains(qid)) {
      throw FormatError(where + ": duplicate query id " + std::to_string(qid));
    }

    std::vector<std::uint32_t> ids;
    std::string_view rest = line.substr(colon + 1);
    while (true) {
      const auto b = rest.find_first_not_of(" \t\r");
      if (b == std::string_view::npos) break;
      rest = rest.substr(b);
      const auto e = std::min(rest.find_first_of(" \t\r"), rest.size());
      std::uint32_t id = 0;
      auto [end, err] = std::from_chars(rest.data(), rest.data() + e, id);
      if (err != std::errc{} || end != rest.data() + e) {
        throw FormatError(where + ": bad database id '" + std::string(rest.substr(0, e)) + "'");
      }
      if (database_size && id >= *database_size) {
        throw FormatError(where + ": id " + std::to_string(id) + " out of range for N=" +
                          std::to_string(*database_size));
      }
      ids.push_back(id);
      rest = rest.substr(e);
    }
    if (ids.empty()) {
      throw FormatError(where + ": query " + std::to_string(qid) + " has no relevant ids");
    }
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    gt.entries.emplace(qid, std::move(ids));
  }
  return gt;
}

GroundTruth read_ground_truth(const std::filesystem::path& path,
                              std::optional<std::size_t> database_size) {
  auto in = open_in(path);
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_ground_truth(buf.str(), database_size);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_ground_truth(const GroundTruth& gt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (const auto& [qid, ids] : gt.entries) {
    out << qid << ':';
    for (auto id : ids) out << ' ' << id;
    out << '\n';
  }
  finish_write(out, path);
}

SyntheticData generate_synthetic(const SynthSpec& spec) {
  if (spec.n_clusters == 0 || spec.points_per_cluster == 0 || spec.dim == 0) {
    throw InvalidArgument("synthetic spec counts must be >= 1");
  }
  if (!(spec.cluster_stddev >= 0) || !(spec.noise_stddev >= 0) || !(spec.center_stddev >= 0)) {
    throw InvalidArgument("synthetic spec standard deviations must be >= 0");
  }
  const std::size_t n = spec.n_clusters * spec.points_per_cluster;
  if (n > static_cast<std::size_t>(INT32_MAX)) {
    throw InvalidArgument("synthetic database too large for int32 ids");
  }

  SyntheticData out{FeatureSet(spec.dim), FeatureSet(spec.dim), {}, {}};
  out.database.reserve(n);
  out.queries.reserve(spec.n_clusters);

  Rng centers_rng(mix_seed(spec.seed, 0));
  Rng points_rng(mix_seed(spec.seed, 1));
  Rng query_rng(mix_seed(spec.seed, 2));

  std::vector<float> center(spec.dim), point(spec.dim);
  for (std::size_t c = 0; c < spec.n_clusters; ++c) {
    for (auto& v : center) v = static_cast<float>(spec.center_stddev * centers_rng.normal());
    const auto first = static_cast<std::uint32_t>(c * spec.points_per_cluster);
    for (std::size_t p = 0; p < spec.points_per_cluster; ++p) {
      for (std::size_t d = 0; d < spec.dim; ++d) {
        point[d] = center[d] + static_cast<float>(spec.cluster_stddev * points_rng.normal());
      }
      out.database.append(point);
    }

    const auto source = first + static_cast<std::uint32_t>(query_rng.below(spec.points_per_cluster));
    auto src = out.database[source];
    for (std::size_t d = 0; d < spec.dim; ++d) {
      point[d] = src[d] + static_cast<float>(spec.noise_stddev * query_rng.normal());
    }
    out.queries.append(point);
    out.query_sources.push_back(source);

    std::vector<std::uint32_t> members(spec.points_per_cluster);
    for (std::size_t p = 0; p < members.size(); ++p) members[p] = first + static_cast<std::uint32_t>(p);
    out.ground_truth.entries.emplace(static_cast<std::uint32_t>(c), std::move(members));
  }
  return out;
}

void normalize_l2(FeatureSet& features) {
  for (std::size_t i = 0; i < features.size(); ++i) {
    auto row = features.mutable_row(i);
    double norm = 0.0;
    for (float v : row) norm += static_cast<double>(v) * v;
    if (norm <= 0.0) continue;
    const double inv = 1.0 / std::sqrt(norm);
    for (auto& v : row) v = static_cast<float>(v * inv);
  }
}

}  // namespace cnnidx
