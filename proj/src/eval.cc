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

#include "cnnidx/eval.h"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <numeric>
#include <unordered_set>

#include "cnnidx/error.h"

namespace cnnidx {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::vector<std::uint32_t> ids_of(std::span<const Neighbor> neighbors) {
  std::vector<std::uint32_t> ids(neighbors.size());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = neighbors[i].id;
  return ids;
}

}  // namespace

double average_precision(std::span<const std::uint32_t> ranked,
                         std::span<const std::uint32_t> relevant) {
  const std::unordered_set<std::uint32_t> wanted(relevant.begin(), relevant.end());
  if (wanted.empty()) throw InvalidArgument("average_precision: empty relevant set");
  std::unordered_set<std::uint32_t> found;
  double sum = 0.0;
  for (std::size_t r = 0; r < ranked.size(); ++r) {
    if (wanted.contains(ranked[r]) && found.insert(ranked[r]).second) {
      sum += static_cast<double>(found.size()) / static_cast<double>(r + 1);
    }
  }
  return sum / static_cast<double>(wanted.size());
}

double recall_at_k(std::span<const std::uint32_t> ranked, std::span<const std::uint32_t> reference,
                   std::size_t k) {
  const auto ref_k = std::min(k, reference.size());
  if (ref_k == 0) throw InvalidArgument("recall_at_k: empty reference");
  const std::unordered_set<std::uint32_t> want(reference.begin(),
                                               reference.begin() + static_cast<std::ptrdiff_t>(ref_k));
  std::unordered_set<std::uint32_t> hit;
  for (std::size_t i = 0; i < std::min(k, ranked.size()); ++i) {
    if (want.contains(ranked[i])) hit.insert(ranked[i]);
  }
  return static_cast<double>(hit.size()) / static_cast<double>(ref_k);
}

EvalReport evaluate(std::span<const QueryRun> runs, const GroundTruth& gt,
                    const EvalOptions& options) {
  if (gt.entries.empty()) throw InvalidArgument("evaluate: empty ground truth");
  if (options.exclude_self && options.self_ids.size() < runs.size()) {
    throw InvalidArgument("evaluate: excluding self matches needs one self id per query");
  }
  EvalReport report;
  report.config = options.config;
  report.index_bytes = options.index_bytes;
  report.queries = runs.size();
  for (const auto& [qid, relevant] : gt.entries) {
    if (qid >= runs.size()) {
      throw FormatError("evaluate: missing results for query " + std::to_string(qid));
    }
    std::vector<std::uint32_t> ranked = runs[qid].ranked;
    std::vector<std::uint32_t> rel = relevant;
    if (options.exclude_self) {
      const auto self = options.self_ids[qid];
      std::erase(ranked, self);
      std::erase(rel, self);
      if (rel.empty()) continue;
    }
    report.query_ids.push_back(qid);
    report.per_query_ap.push_back(average_precision(ranked, rel));
  }
  if (!report.per_query_ap.empty()) {
    report.map = std::accumulate(report.per_query_ap.begin(), report.per_query_ap.end(), 0.0) /
                 static_cast<double>(report.per_query_ap.size());
  }
  if (!runs.empty()) {
    double time = 0.0, candidates = 0.0;
    for (const auto& r : runs) {
      time += r.seconds;
      candidates += static_cast<double>(r.candidates);
    }
    report.mean_query_time = time / static_cast<double>(runs.size());
    if (options.database_size > 0) {
      report.scan_fraction = candidates / static_cast<double>(runs.size()) /
                             static_cast<double>(options.database_size);
    }
  }
  return report;
}

nlohmann::ordered_json to_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["map"] = report.map;
  j["queries"] = report.queries;
  j["mean_query_time_s"] = report.mean_query_time;
  j["scan_fraction"] = report.scan_fraction;
  j["index_bytes"] = report.index_bytes;
  j["config"] = report.config;
  auto& per = j["per_query_ap"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < report.per_query_ap.size(); ++i) {
    per.push_back({{"query", report.query_ids[i]}, {"ap", report.per_query_ap[i]}});
  }
  return j;
}

std::vector<QueryRun> run_index(const InvertedIndex& index, const FeatureSet& queries,
                                const QueryConfig& cfg, unsigned threads) {
  const auto outcomes = query_batch(index, queries, cfg, threads);
  std::vector<QueryRun> runs(queries.size());
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto& res = outcomes[i].result;
    runs[i].ranked.reserve(res.entries.size());
    for (const auto& e : res.entries) runs[i].ranked.push_back(e.image_id);
    runs[i].seconds = outcomes[i].seconds;
    runs[i].total_votes = res.total_votes;
    runs[i].candidates = candidate_set(index, queries[i], cfg.assignment_count).size();
  }
  return runs;
}

std::vector<QueryRun> run_brute_force(const FeatureSet& db, const FeatureSet& queries,
                                      std::size_t top_k) {
  std::vector<QueryRun> runs(queries.size());
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto start = Clock::now();
    const auto nn = brute_force(db, queries[i], top_k);
    runs[i].seconds = seconds_since(start);
    runs[i].ranked = ids_of(nn);
    runs[i].candidates = db.size();
  }
  return runs;
}

std::vector<QueryRun> run_lsh(const LshIndex& index, const FeatureSet& queries,
                              std::size_t top_k) {
  std::vector<QueryRun> runs(queries.size());
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto start = Clock::now();
    const auto nn = index.query(queries[i], top_k);
    runs[i].seconds = seconds_since(start);
    runs[i].ranked = ids_of(nn);
    runs[i].candidates = index.candidates(queries[i]).size();
  }
  return runs;
}

namespace {

struct PointConfig {
  BuildConfig build;
  QueryConfig query;
};

PointConfig resolve_point(const SweepSpec& spec,
                          std::span<const std::pair<std::string, std::int64_t>> point) {
  PointConfig pc{spec.build, QueryConfig{}};
  std::optional<std::size_t> w = spec.assignment_count, t = spec.hamming_threshold;
  for (const auto& [param, value] : point) {
    if (value < 0) throw InvalidArgument(param + " must be non-negative");
    const auto v = static_cast<std::size_t>(value);
    if (param == "L") {
      pc.build.embed.code_length = v;
    } else if (param == "S") {
      pc.build.link_count = v;
    } else if (param == "K") {
      pc.build.pq.words_per_segment = v;
    } else if (param == "M") {
      pc.build.pq.segments = v;
    } else if (param == "W") {
      w = v;
    } else if (param == "T") {
      t = v;
    } else {
      throw InvalidArgument("unknown sweep parameter '" + param + "'");
    }
  }
  pc.query.assignment_count = w.value_or(pc.build.link_count);
  pc.query.hamming_threshold = t.value_or(default_hamming_threshold(pc.build.embed.code_length));
  pc.query.top_k = spec.top_k;
  return pc;
}

nlohmann::ordered_json point_config_json(const PointConfig& pc) {
  nlohmann::ordered_json j;
  j["scheme"] = scheme_name(pc.build.scheme);
  j["S"] = pc.build.link_count;
  j["L"] = pc.build.embed.code_length;
  if (pc.build.scheme == Scheme::kIfc) {
    j["K"] = pc.build.pq.words_per_segment;
    j["M"] = pc.build.pq.segments;
    j["kmeans_iters"] = pc.build.pq.kmeans_iters;
    j["kmeans_seed"] = pc.build.pq.kmeans_seed;
    j["kmeans_restarts"] = pc.build.pq.kmeans_restarts;
  } else {
    j["virtual_seed"] = pc.build.virtual_word_seed;
  }
  j["W"] = pc.query.assignment_count;
  j["T"] = pc.query.hamming_threshold;
  j["topk"] = pc.query.top_k;
  return j;
}

}  // namespace

std::vector<SweepRow> sweep(const SweepSpec& spec, const SweepData& data, unsigned threads) {
  if (spec.grid.empty()) throw InvalidArgument("sweep: empty grid");
  for (const auto& axis : spec.grid) {
    if (axis.values.empty()) throw InvalidArgument("sweep: axis " + axis.param + " has no values");
  }

  // Cartesian product, first axis outermost.
  std::vector<std::vector<std::pair<std::string, std::int64_t>>> points(1);
  for (const auto& axis : spec.grid) {
    std::vector<std::vector<std::pair<std::string, std::int64_t>>> next;
    for (const auto& p : points) {
      for (const auto v : axis.values) {
        auto q = p;
        q.emplace_back(axis.param, v);
        next.push_back(std::move(q));
      }
    }
    points = std::move(next);
  }

  std::optional<InvertedIndex> index;
  std::optional<std::tuple<std::size_t, std::size_t, std::size_t, std::size_t>> index_key;
  std::optional<PqCodebook> codebook;
  std::optional<std::pair<std::size_t, std::size_t>> codebook_key;

  std::vector<SweepRow> rows;
  for (const auto& point : points) {
    SweepRow row;
    row.point = point;
    try {
      const auto pc = resolve_point(spec, point);
      const auto key = std::tuple{pc.build.link_count, pc.build.embed.code_length,
                                  pc.build.pq.words_per_segment, pc.build.pq.segments};
      if (!index || index_key != key) {
        index.reset();
        if (pc.build.scheme == Scheme::kIfc) {
          const auto ck = std::pair{pc.build.pq.words_per_segment, pc.build.pq.segments};
          if (!codebook || codebook_key != ck) {
            codebook.reset();
            codebook = train(data.training ? *data.training : data.database, pc.build.pq, threads);
            codebook_key = ck;
          }
          index = build(data.database, pc.build, *codebook, threads);
        } else {
          index = build(data.database, pc.build, threads);
        }
        index_key = key;
      }
      const auto runs = run_index(*index, data.queries, pc.query, spec.parallel ? threads : 1);
      EvalOptions opts;
      opts.database_size = data.database.size();
      opts.index_bytes = stats(*index).total_bytes;
      opts.exclude_self = spec.exclude_self;
      opts.self_ids = data.self_ids;
      opts.config = point_config_json(pc);
      row.report = evaluate(runs, data.ground_truth, opts);
      double cands = 0.0;
      for (const auto& r : runs) {
        cands += static_cast<double>(r.candidates);
        row.total_votes += r.total_votes;
      }
      row.mean_candidates = runs.empty() ? 0.0 : cands / static_cast<double>(runs.size());
    } catch (const Error& e) {
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

SweepSpec parse_sweep_spec(const nlohmann::json& j) {
  SweepSpec spec;
  try {
    spec.build.scheme = parse_scheme(j.value("scheme", std::string("ifc")));
    spec.build.link_count = j.value("S", spec.build.link_count);
    spec.build.embed.code_length = j.value("L", spec.build.embed.code_length);
    spec.build.pq.words_per_segment = j.value("K", spec.build.pq.words_per_segment);
    spec.build.pq.segments = j.value("M", spec.build.pq.segments);
    spec.build.pq.kmeans_iters = j.value("kmeans_iters", spec.build.pq.kmeans_iters);
    spec.build.pq.kmeans_seed = j.value("kmeans_seed", spec.build.pq.kmeans_seed);
    spec.build.pq.kmeans_restarts = j.value("kmeans_restarts", spec.build.pq.kmeans_restarts);
    spec.build.virtual_word_seed = j.value("virtual_seed", spec.build.virtual_word_seed);
    spec.top_k = j.value("topk", spec.top_k);
    if (j.contains("W")) spec.assignment_count = j.at("W").get<std::size_t>();
    if (j.contains("T")) spec.hamming_threshold = j.at("T").get<std::size_t>();
    spec.exclude_self = j.value("exclude_self", false);
    spec.parallel = j.value("parallel", false);
    if (!j.contains("grid") || !j.at("grid").is_array()) {
      throw InvalidArgument("sweep spec: 'grid' must be an array of {param, values}");
    }
    static const std::unordered_set<std::string> known{"L", "T", "S", "W", "K", "M"};
    for (const auto& axis : j.at("grid")) {
      SweepAxis a{axis.at("param").get<std::string>(), axis.at("values").get<std::vector<std::int64_t>>()};
      if (!known.contains(a.param)) {
        throw InvalidArgument("sweep spec: unknown parameter '" + a.param + "'");
      }
      spec.grid.push_back(std::move(a));
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("sweep spec: ") + e.what());
  }
  if (spec.grid.empty()) throw InvalidArgument("sweep spec: empty grid");
  return spec;
}

void write_sweep_csv(std::span<const SweepRow> rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  if (!rows.empty()) {
    for (const auto& [param, value] : rows.front().point) out << param << ',';
  }
  out << "map,mean_query_time_s,scan_fraction,index_bytes,mean_candidates,total_votes,error\n";
  out.precision(9);
  for (const auto& row : rows) {
    for (const auto& [param, value] : row.point) out << value << ',';
    if (row.report) {
      out << row.report->map << ',' << row.report->mean_query_time << ','
          << row.report->scan_fraction << ',' << row.report->index_bytes << ',';
    } else {
      out << ",,,,";
    }
    out << row.mean_candidates << ',' << row.total_votes << ',';
    std::string err = row.error;
    std::replace(err.begin(), err.end(), '"', '\'');
    out << (err.empty() ? "" : "\"" + err + "\"") << '\n';
  }
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
}

nlohmann::ordered_json sweep_to_json(std::span<const SweepRow> rows) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& row : rows) {
    nlohmann::ordered_json j;
    auto& point = j["point"] = nlohmann::ordered_json::object();
    for (const auto& [param, value] : row.point) point[param] = value;
    if (row.report) j["report"] = to_json(*row.report);
    j["mean_candidates"] = row.mean_candidates;
    j["total_votes"] = row.total_votes;
    if (!row.error.empty()) j["error"] = row.error;
    arr.push_back(std::move(j));
  }
  return arr;
}

}  // namespace cnnidx
