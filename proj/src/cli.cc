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

#include "cnnidx/cli.h"

#include <fstream>
#include <optional>
#include <ostream>
#include <string>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "cnnidx/baseline.h"
#include "cnnidx/error.h"
#include "cnnidx/eval.h"
#include "cnnidx/index.h"
#include "cnnidx/search.h"
#include "cnnidx/vecio.h"

namespace cnnidx {
namespace {

using Json = nlohmann::ordered_json;

struct Common {
  unsigned threads = 0;
};

void write_json(const Json& j, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << j.dump(2) << '\n';
  out.flush();
  if (!out) throw IoError("write failed: " + path);
}

Json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path + " for reading");
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
}

void echo(std::ostream& out, const char* command, const Json& config) {
  out << "config " << command << ' ' << config.dump() << '\n';
}

FeatureSet load_features(const std::string& path, bool normalize) {
  auto fs = read_feature_file(path);
  if (normalize) normalize_l2(fs);
  return fs;
}

std::vector<std::uint32_t> to_u32(const std::vector<std::int32_t>& v) {
  std::vector<std::uint32_t> out;
  out.reserve(v.size());
  for (auto x : v) {
    if (x < 0) throw FormatError("negative id in integer list file");
    out.push_back(static_cast<std::uint32_t>(x));
  }
  return out;
}

// Writes ranked ids plus the summary (deterministic) and timing files.
void write_runs(const std::vector<QueryRun>& runs, const Json& config, std::size_t database_size,
                std::size_t index_bytes, const std::string& out_path,
                const std::vector<std::size_t>* scanned) {
  std::vector<std::vector<std::int32_t>> ranked(runs.size());
  Json per_query = Json::array();
  Json times = Json::array();
  double total_time = 0.0;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    for (auto id : runs[i].ranked) ranked[i].push_back(static_cast<std::int32_t>(id));
    Json q{{"query", i}, {"returned", runs[i].ranked.size()}, {"candidates", runs[i].candidates}};
    if (scanned) {
      q["scanned_entries"] = (*scanned)[i];
      q["total_votes"] = runs[i].total_votes;
    }
    per_query.push_back(std::move(q));
    times.push_back(runs[i].seconds);
    total_time += runs[i].seconds;
  }
  write_int_file(ranked, out_path);
  Json summary{{"config", config},
               {"database_size", database_size},
               {"index_bytes", index_bytes},
               {"queries", std::move(per_query)}};
  write_json(summary, out_path + ".json");
  Json timing{{"mean_query_time_s", runs.empty() ? 0.0 : total_time / runs.size()},
              {"per_query_s", std::move(times)}};
  write_json(timing, out_path + ".timing.json");
}

// --- synth ---------------------------------------------------------------

struct SynthOpts {
  SynthSpec spec;
  std::string database, queries, ground_truth, sources;
};

void add_synth(CLI::App& app, SynthOpts& o) {
  app.add_option("--clusters", o.spec.n_clusters, "number of clusters (one query each)")
      ->check(CLI::PositiveNumber);
  app.add_option("--points-per-cluster", o.spec.points_per_cluster)->check(CLI::PositiveNumber);
  app.add_option("--dim", o.spec.dim)->check(CLI::PositiveNumber);
  app.add_option("--cluster-stddev", o.spec.cluster_stddev)->check(CLI::NonNegativeNumber);
  app.add_option("--noise-stddev", o.spec.noise_stddev, "query perturbation")
      ->check(CLI::NonNegativeNumber);
  app.add_option("--center-stddev", o.spec.center_stddev)->check(CLI::NonNegativeNumber);
  app.add_option("--seed", o.spec.seed);
  app.add_option("--database", o.database, "output feature file")->required();
  app.add_option("--queries", o.queries, "output feature file")->required();
  app.add_option("--ground-truth", o.ground_truth, "output ground-truth text")->required();
  app.add_option("--sources", o.sources, "optional int-list file of each query's source id");
}

int run_synth(const SynthOpts& o, std::ostream& out) {
  echo(out, "synth",
       Json{{"clusters", o.spec.n_clusters},
            {"points_per_cluster", o.spec.points_per_cluster},
            {"dim", o.spec.dim},
            {"cluster_stddev", o.spec.cluster_stddev},
            {"noise_stddev", o.spec.noise_stddev},
            {"center_stddev", o.spec.center_stddev},
            {"seed", o.spec.seed},
            {"database", o.database},
            {"queries", o.queries},
            {"ground_truth", o.ground_truth},
            {"sources", o.sources}});
  const auto data = generate_synthetic(o.spec);
  write_feature_file(data.database, o.database);
  write_feature_file(data.queries, o.queries);
  write_ground_truth(data.ground_truth, o.ground_truth);
  if (!o.sources.empty()) {
    std::vector<std::vector<std::int32_t>> src{{}};
    for (auto s : data.query_sources) src[0].push_back(static_cast<std::int32_t>(s));
    write_int_file(src, o.sources);
  }
  out << fmt::format("wrote {} database vectors, {} queries\n", data.database.size(),
                     data.queries.size());
  return kExitOk;
}

// --- train ---------------------------------------------------------------

struct TrainOpts {
  std::string features, out;
  PqConfig pq;
  bool normalize = false;
};

void add_pq_flags(CLI::App& app, PqConfig& pq) {
  app.add_option("--K", pq.words_per_segment, "words per sub-codebook")->check(CLI::PositiveNumber);
  app.add_option("--M", pq.segments, "number of segments")->check(CLI::PositiveNumber);
  app.add_option("--kmeans-iters", pq.kmeans_iters)->check(CLI::PositiveNumber);
  app.add_option("--kmeans-seed", pq.kmeans_seed);
  app.add_option("--kmeans-restarts", pq.kmeans_restarts)->check(CLI::PositiveNumber);
}

Json pq_json(const PqConfig& pq) {
  return Json{{"K", pq.words_per_segment},
              {"M", pq.segments},
              {"kmeans_iters", pq.kmeans_iters},
              {"kmeans_seed", pq.kmeans_seed},
              {"kmeans_restarts", pq.kmeans_restarts}};
}

void add_train(CLI::App& app, TrainOpts& o) {
  app.add_option("--features", o.features, "training feature file")->required();
  app.add_option("--out", o.out, "output codebook file")->required();
  app.add_flag("--normalize", o.normalize, "L2-normalize vectors before training");
  add_pq_flags(app, o.pq);
}

int run_train(const TrainOpts& o, const Common& c, std::ostream& out) {
  Json cfg = pq_json(o.pq);
  cfg["features"] = o.features;
  cfg["normalize"] = o.normalize;
  cfg["out"] = o.out;
  echo(out, "train", cfg);
  const auto fs = load_features(o.features, o.normalize);
  const auto cb = train(fs, o.pq, c.threads);
  save_codebook(cb, o.out);
  out << fmt::format("trained {} x {} words over {} vectors\n", cb.segments(),
                     cb.words_per_segment(), fs.size());
  return kExitOk;
}

// --- build ---------------------------------------------------------------

struct BuildOpts {
  std::string features, out, scheme = "ifc", train_features, codebook;
  BuildConfig cfg;
  bool normalize = false;
};

void add_build(CLI::App& app, BuildOpts& o) {
  app.add_option("--features", o.features, "database feature file")->required();
  app.add_option("--out", o.out, "output index file")->required();
  app.add_option("--scheme", o.scheme, "tifc or ifc")->check(CLI::IsMember({"tifc", "ifc"}));
  app.add_option("--S", o.cfg.link_count, "links per database vector")->check(CLI::PositiveNumber);
  app.add_option("--L", o.cfg.embed.code_length, "binary code length in bits")
      ->check(CLI::PositiveNumber);
  add_pq_flags(app, o.cfg.pq);
  app.add_option("--train-features", o.train_features, "separate training set (ifc)");
  app.add_option("--codebook", o.codebook, "pretrained codebook from `train` (ifc)");
  app.add_option("--virtual-seed", o.cfg.virtual_word_seed, "virtual word seed (tifc)");
  app.add_flag("--normalize", o.normalize, "L2-normalize vectors before indexing");
}

Json build_json(const BuildOpts& o) {
  Json j{{"features", o.features},
         {"scheme", o.scheme},
         {"S", o.cfg.link_count},
         {"L", o.cfg.embed.code_length}};
  if (o.scheme == "ifc") {
    j.update(pq_json(o.cfg.pq));
    j["train_features"] = o.train_features;
    j["codebook"] = o.codebook;
  } else {
    j["virtual_seed"] = o.cfg.virtual_word_seed;
  }
  j["normalize"] = o.normalize;
  j["out"] = o.out;
  return j;
}

int run_build(BuildOpts o, const Common& c, std::ostream& out) {
  o.cfg.scheme = parse_scheme(o.scheme);
  echo(out, "build", build_json(o));
  const auto db = load_features(o.features, o.normalize);
  std::optional<InvertedIndex> ix;
  if (o.cfg.scheme == Scheme::kIfc && !o.codebook.empty()) {
    ix = build(db, o.cfg, load_codebook(o.codebook), c.threads);
  } else if (o.cfg.scheme == Scheme::kIfc && !o.train_features.empty()) {
    ix = build(db, o.cfg, train(load_features(o.train_features, o.normalize), o.cfg.pq, c.threads),
               c.threads);
  } else {
    ix = build(db, o.cfg, c.threads);
  }
  save(*ix, o.out);
  const auto st = stats(*ix);
  out << fmt::format("indexed {} vectors: {} entries in {} of {} lists, {} bytes\n",
                     ix->indexed_count(), st.total_entries, st.occupied_words, st.word_count,
                     st.total_bytes);
  return kExitOk;
}

// --- query ---------------------------------------------------------------

struct QueryOpts {
  std::string index, queries, out;
  std::optional<std::size_t> w, t;
  std::size_t top_k = 100;
  bool normalize = false;
};

void add_query(CLI::App& app, QueryOpts& o) {
  app.add_option("--index", o.index, "index file from `build`")->required();
  app.add_option("--queries", o.queries, "query feature file")->required();
  app.add_option("--out", o.out, "output ranked id list (int-list format)")->required();
  app.add_option("--W", o.w, "words assigned per query (default: the index's S)")
      ->check(CLI::PositiveNumber);
  app.add_option("--T", o.t, "Hamming threshold; entries vote iff distance < T "
                             "(default: round(L*180/512))");
  app.add_option("--topk", o.top_k, "results kept per query")->check(CLI::PositiveNumber);
  app.add_flag("--normalize", o.normalize, "L2-normalize queries");
}

int run_query(const QueryOpts& o, const Common& c, std::ostream& out) {
  const auto ix = load(o.index);
  QueryConfig qc;
  qc.assignment_count = o.w.value_or(ix.link_count());
  qc.hamming_threshold = o.t.value_or(default_hamming_threshold(ix.embed().code_length));
  qc.top_k = o.top_k;
  Json cfg{{"index", o.index},
           {"queries", o.queries},
           {"scheme", scheme_name(ix.scheme())},
           {"S", ix.link_count()},
           {"L", ix.embed().code_length},
           {"W", qc.assignment_count},
           {"T", qc.hamming_threshold},
           {"topk", qc.top_k},
           {"normalize", o.normalize},
           {"out", o.out}};
  echo(out, "query", cfg);
  const auto qs = load_features(o.queries, o.normalize);
  const auto outcomes = query_batch(ix, qs, qc, c.threads);
  std::vector<QueryRun> runs(qs.size());
  std::vector<std::size_t> scanned(qs.size());
  for (std::size_t i = 0; i < runs.size(); ++i) {
    for (const auto& e : outcomes[i].result.entries) runs[i].ranked.push_back(e.image_id);
    runs[i].seconds = outcomes[i].seconds;
    runs[i].total_votes = outcomes[i].result.total_votes;
    runs[i].candidates = candidate_set(ix, qs[i], qc.assignment_count).size();
    scanned[i] = outcomes[i].result.scanned_entries;
  }
  write_runs(runs, cfg, ix.indexed_count(), stats(ix).total_bytes, o.out, &scanned);
  out << fmt::format("ran {} queries\n", runs.size());
  return kExitOk;
}

// --- baseline ------------------------------------------------------------

struct BaselineOpts {
  std::string method = "bf", database, queries, out;
  std::size_t top_k = 100;
  LshConfig lsh;
  bool normalize = false;
};

void add_baseline(CLI::App& app, BaselineOpts& o) {
  app.add_option("--method", o.method, "bf or lsh")->check(CLI::IsMember({"bf", "lsh"}));
  app.add_option("--database", o.database, "database feature file")->required();
  app.add_option("--queries", o.queries, "query feature file")->required();
  app.add_option("--out", o.out, "output ranked id list")->required();
  app.add_option("--topk", o.top_k)->check(CLI::PositiveNumber);
  app.add_option("--tables", o.lsh.tables, "lsh hash tables")->check(CLI::PositiveNumber);
  app.add_option("--bits", o.lsh.bits_per_table, "lsh bits per table")->check(CLI::Range(1, 64));
  app.add_option("--seed", o.lsh.seed, "lsh hyperplane seed");
  app.add_flag("--normalize", o.normalize, "L2-normalize all vectors");
}

int run_baseline(const BaselineOpts& o, const Common& c, std::ostream& out) {
  Json cfg{{"method", o.method}, {"database", o.database}, {"queries", o.queries},
           {"topk", o.top_k}};
  if (o.method == "lsh") {
    cfg["tables"] = o.lsh.tables;
    cfg["bits"] = o.lsh.bits_per_table;
    cfg["seed"] = o.lsh.seed;
  }
  cfg["normalize"] = o.normalize;
  cfg["out"] = o.out;
  echo(out, "baseline", cfg);
  const auto db = load_features(o.database, o.normalize);
  const auto qs = load_features(o.queries, o.normalize);
  std::vector<QueryRun> runs;
  std::size_t bytes = db.values().size() * sizeof(float);
  if (o.method == "bf") {
    runs = run_brute_force(db, qs, o.top_k);
  } else {
    const LshIndex ix(db, o.lsh, c.threads);
    runs = run_lsh(ix, qs, o.top_k);
    bytes += ix.memory_bytes();
  }
  write_runs(runs, cfg, db.size(), bytes, o.out, nullptr);
  out << fmt::format("ran {} queries\n", runs.size());
  return kExitOk;
}

// --- evaluate ------------------------------------------------------------

struct EvaluateOpts {
  std::string results, ground_truth, summary, timing, self_ids, out;
  bool exclude_self = false;
};

void add_evaluate(CLI::App& app, EvaluateOpts& o) {
  app.add_option("--results", o.results, "ranked id list from query/baseline")->required();
  app.add_option("--ground-truth", o.ground_truth)->required();
  app.add_option("--summary", o.summary, "summary JSON (default: <results>.json if present)");
  app.add_option("--timing", o.timing, "timing JSON (default: <results>.timing.json if present)");
  app.add_flag("--exclude-self", o.exclude_self, "drop each query's own id (needs --self-ids)");
  app.add_option("--self-ids", o.self_ids, "int-list file with one source id per query");
  app.add_option("--out", o.out, "report JSON path");
}

int run_evaluate(EvaluateOpts o, std::ostream& out) {
  namespace fs = std::filesystem;
  if (o.summary.empty() && fs::exists(o.results + ".json")) o.summary = o.results + ".json";
  if (o.timing.empty() && fs::exists(o.results + ".timing.json")) {
    o.timing = o.results + ".timing.json";
  }
  Json cfg{{"results", o.results}, {"ground_truth", o.ground_truth}, {"summary", o.summary},
           {"timing", o.timing},   {"exclude_self", o.exclude_self}, {"self_ids", o.self_ids},
           {"out", o.out}};
  echo(out, "evaluate", cfg);
  if (o.exclude_self && o.self_ids.empty()) {
    throw InvalidArgument("--exclude-self requires --self-ids");
  }

  const auto ranked = read_int_file(o.results);
  std::vector<QueryRun> runs(ranked.size());
  for (std::size_t i = 0; i < runs.size(); ++i) runs[i].ranked = to_u32(ranked[i]);

  EvalOptions opts;
  std::optional<std::size_t> database_size;
  if (!o.summary.empty()) {
    const auto summary = read_json(o.summary);
    try {
      opts.database_size = summary.at("database_size").get<std::size_t>();
      opts.index_bytes = summary.at("index_bytes").get<std::size_t>();
      const auto& per = summary.at("queries");
      if (per.size() != runs.size()) throw FormatError("summary query count differs from results");
      for (std::size_t i = 0; i < runs.size(); ++i) {
        runs[i].candidates = per[i].at("candidates").get<std::size_t>();
      }
      cfg["run"] = summary.at("config");
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(o.summary + ": " + e.what());
    }
    database_size = opts.database_size;
  }
  if (!o.timing.empty()) {
    const auto timing = read_json(o.timing);
    try {
      const auto& per = timing.at("per_query_s");
      if (per.size() != runs.size()) throw FormatError("timing query count differs from results");
      for (std::size_t i = 0; i < runs.size(); ++i) runs[i].seconds = per[i].get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(o.timing + ": " + e.what());
    }
  }
  const auto gt = read_ground_truth(o.ground_truth, database_size);
  opts.exclude_self = o.exclude_self;
  if (!o.self_ids.empty()) {
    for (const auto& rec : read_int_file(o.self_ids)) {
      for (auto id : to_u32(rec)) opts.self_ids.push_back(id);
    }
  }
  opts.config = cfg;
  const auto report = evaluate(runs, gt, opts);
  if (!o.out.empty()) {
    auto doc = to_json(report);
    doc.erase("mean_query_time_s");
    write_json(doc, o.out);
    write_json(Json{{"mean_query_time_s", report.mean_query_time}}, o.out + ".timing.json");
  }
  out << fmt::format("MAP {:.6f}\n", report.map);
  if (!o.summary.empty()) out << fmt::format("scan_fraction {:.6f}\n", report.scan_fraction);
  if (!o.timing.empty()) out << fmt::format("mean_query_time_s {:.6g}\n", report.mean_query_time);
  return kExitOk;
}

// --- sweep ---------------------------------------------------------------

struct SweepOpts {
  std::string spec, out_csv, out_json;
};

void add_sweep(CLI::App& app, SweepOpts& o) {
  app.add_option("--spec", o.spec, "sweep specification JSON")->required();
  app.add_option("--out-csv", o.out_csv, "CSV output")->required();
  app.add_option("--out-json", o.out_json, "JSON output (default: <out-csv>.json)");
}

int run_sweep(SweepOpts o, const Common& c, std::ostream& out) {
  if (o.out_json.empty()) o.out_json = o.out_csv + ".json";
  const auto j = read_json(o.spec);
  const auto spec = parse_sweep_spec(j);
  auto path = [&](const char* key) {
    if (!j.contains(key)) throw InvalidArgument(std::string("sweep spec: missing '") + key + "'");
    return j.at(key).get<std::string>();
  };
  const bool normalize = j.value("normalize", false);
  Json cfg = j;
  cfg["out_csv"] = o.out_csv;
  cfg["out_json"] = o.out_json;
  echo(out, "sweep", cfg);

  const auto db = load_features(path("database"), normalize);
  const auto qs = load_features(path("queries"), normalize);
  const auto gt = read_ground_truth(path("ground_truth"), db.size());
  std::optional<FeatureSet> training;
  if (j.contains("training")) training = load_features(j.at("training").get<std::string>(), normalize);
  SweepData data{db, qs, gt, {}, training ? &*training : nullptr};
  if (j.contains("self_ids")) {
    for (const auto& rec : read_int_file(j.at("self_ids").get<std::string>())) {
      for (auto id : to_u32(rec)) data.self_ids.push_back(id);
    }
  }
  const auto rows = sweep(spec, data, c.threads);
  write_sweep_csv(rows, o.out_csv);
  Json doc{{"config", cfg}, {"rows", sweep_to_json(rows)}};
  write_json(doc, o.out_json);
  std::size_t failed = 0;
  for (const auto& row : rows) {
    std::string point;
    for (const auto& [param, value] : row.point) point += fmt::format("{}={} ", param, value);
    if (row.report) {
      out << fmt::format("{}MAP {:.6f} scan_fraction {:.4f}\n", point, row.report->map,
                         row.report->scan_fraction);
    } else {
      ++failed;
      out << fmt::format("{}error: {}\n", point, row.error);
    }
  }
  out << fmt::format("{} points, {} failed\n", rows.size(), failed);
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Inverted-table indexing of global feature vectors"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  Common common;
  app.add_option("--threads", common.threads, "worker threads (0 = all cores)");

  SynthOpts synth;
  TrainOpts train_opts;
  BuildOpts build_opts;
  QueryOpts query_opts;
  BaselineOpts baseline;
  EvaluateOpts evaluate_opts;
  SweepOpts sweep_opts;
  auto* synth_cmd = app.add_subcommand("synth", "generate a clustered synthetic dataset");
  add_synth(*synth_cmd, synth);
  auto* train_cmd = app.add_subcommand("train", "train a product-quantization codebook");
  add_train(*train_cmd, train_opts);
  auto* build_cmd = app.add_subcommand("build", "build and save an inverted index");
  add_build(*build_cmd, build_opts);
  auto* query_cmd = app.add_subcommand("query", "search an index with a query file");
  add_query(*query_cmd, query_opts);
  auto* baseline_cmd = app.add_subcommand("baseline", "brute-force or LSH search");
  add_baseline(*baseline_cmd, baseline);
  auto* evaluate_cmd = app.add_subcommand("evaluate", "MAP / time / scan-fraction report");
  add_evaluate(*evaluate_cmd, evaluate_opts);
  auto* sweep_cmd = app.add_subcommand("sweep", "parameter sweep from a JSON spec");
  add_sweep(*sweep_cmd, sweep_opts);
  for (auto* sub : app.get_subcommands({})) {
    sub->add_option("--threads", common.threads, "worker threads (0 = all cores)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*synth_cmd) return run_synth(synth, out);
    if (*train_cmd) return run_train(train_opts, common, out);
    if (*build_cmd) return run_build(build_opts, common, out);
    if (*query_cmd) return run_query(query_opts, common, out);
    if (*baseline_cmd) return run_baseline(baseline, common, out);
    if (*evaluate_cmd) return run_evaluate(evaluate_opts, out);
    if (*sweep_cmd) return run_sweep(sweep_opts, common, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
  return kExitUsage;
}

}  // namespace cnnidx
