#ifndef UTTERCLUST_PIPELINE_HPP
#define UTTERCLUST_PIPELINE_HPP

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "utterclust/config.hpp"
#include "utterclust/corpus.hpp"
#include "utterclust/embedding.hpp"
#include "utterclust/error.hpp"
#include "utterclust/merging.hpp"
#include "utterclust/metrics.hpp"
#include "utterclust/naming.hpp"
#include "utterclust/rbc.hpp"
#include "utterclust/remote_encoder.hpp"
#include "utterclust/representatives.hpp"
#include "utterclust/text.hpp"

namespace utterclust {

struct StageTiming {
  std::string stage;
  double seconds = 0.0;
};

struct PipelineResult {
  IngestStats ingest;
  std::optional<EmbeddedCorpus> corpus;
  Clustering flat;
  Clustering clustering;  // after the merge step
  std::optional<MarkerSet> markers;
  std::vector<RepresentativeSet> representatives;
  std::vector<ClusterName> names;
  std::vector<StageTiming> timings;
};

namespace detail {

inline Tokenizer make_tokenizer(const NamingConfig& naming) {
  if (naming.stopwords.empty()) return Tokenizer();
  return Tokenizer(StopwordList::from_file(naming.stopwords));
}

inline WordCounts background_for(const MergeConfig& merge, const Tokenizer& tokenizer) {
  return load_background(merge.background_freqs.empty() ? default_background_path() : merge.background_freqs,
                         tokenizer);
}

// Runs one stage, records its wall time, and prefixes failures with the
// stage name while keeping the error kind.
class StageRunner {
public:
  explicit StageRunner(std::vector<StageTiming>& timings) : timings_(timings) {}

  template <class F>
  decltype(auto) operator()(const std::string& stage, F&& fn) {
    const auto start = std::chrono::steady_clock::now();
    auto record = [&] {
      const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - start;
      timings_.push_back({stage, dt.count()});
    };
    try {
      if constexpr (std::is_void_v<std::invoke_result_t<F>>) {
        fn();
        record();
      } else {
        decltype(auto) out = fn();
        record();
        return out;
      }
    } catch (const error& e) {
      throw error(e.kind(), stage + ": " + e.what());
    } catch (const std::bad_alloc&) {
      throw error(error_kind::data, stage + ": out of memory");
    }
  }

private:
  std::vector<StageTiming>& timings_;
};

class Intermediates {
public:
  explicit Intermediates(const OutputConfig& out) : enabled_(out.keep_intermediate), dir_(out.work_dir) {
    if (!enabled_) return;
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw io_error("cannot create work directory " + dir_.string() + ": " + ec.message());
  }

  bool enabled() const { return enabled_; }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  void json(const std::string& name, const nlohmann::json& j) const {
    if (!enabled_) return;
    std::ofstream out(path(name));
    if (!out) throw io_error("cannot write " + path(name));
    out << j.dump(2) << '\n';
  }

  void records(const std::string& name, const std::vector<UtteranceRecord>& recs) const {
    if (!enabled_) return;
    std::ofstream out(path(name));
    if (!out) throw io_error("cannot write " + path(name));
    for (const auto& r : recs)
      out << nlohmann::json{{"id", r.id}, {"text", r.text}, {"count", r.frequency}}.dump() << '\n';
  }

  // "UCVECS01", u64 rows, u64 dim, float64 rows.
  void vectors(const std::string& name, const RowMatrix& m) const {
    if (!enabled_) return;
    std::ofstream out(path(name), std::ios::binary);
    if (!out) throw io_error("cannot write " + path(name));
    const std::uint64_t n = static_cast<std::uint64_t>(m.rows()), d = static_cast<std::uint64_t>(m.cols());
    out.write("UCVECS01", 8);
    out.write(reinterpret_cast<const char*>(&n), sizeof n);
    out.write(reinterpret_cast<const char*>(&d), sizeof d);
    out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * n * d));
  }

private:
  bool enabled_;
  std::filesystem::path dir_;
};

inline std::vector<UtteranceRecord> ingest(const std::vector<RawUtterance>& raws, IngestStats& stats) {
  auto records = deduplicate(raws, &stats);
  if (records.empty()) throw data_error("no utterances ingested");
  return records;
}

inline Clustering merge_step(const Clustering& flat, const EmbeddedCorpus& corpus, const PipelineConfig& cfg,
                             const Tokenizer& tokenizer, std::optional<MarkerSet>& markers) {
  switch (cfg.merge.mode) {
    case merge_mode::none:
      return flat;
    case merge_mode::semantic:
      return semantic_merge(flat, corpus, cfg.merge);
    case merge_mode::keyword: {
      auto background = background_for(cfg.merge, tokenizer);
      markers = extract_markers(corpus.records(), background, cfg.merge.dirichlet_alpha0,
                                cfg.merge.marker_z_threshold, tokenizer);
      if (markers->size() == 0) return flat;
      return keyword_merge(flat, corpus, *markers, cfg.merge, tokenizer);
    }
  }
  return flat;
}

inline std::vector<ClusterName> name_step(const Clustering& clustering, const EmbeddedCorpus& corpus,
                                          const PipelineConfig& cfg, const Tokenizer& tokenizer) {
  if (clustering.clusters.empty()) return {};
  if (cfg.naming.method == naming_method::tfidf)
    return name_clusters_tfidf(clustering, corpus, cfg.naming, tokenizer);
  auto encoder = make_encoder(cfg.naming_encoder());
  if (!encoder) throw usage_error("embedding naming needs a fallback or remote encoder (set naming.encoder)");
  try {
    return name_clusters_embedding(clustering, corpus, cfg.naming, *encoder, tokenizer);
  } catch (const error& e) {
    if (!cfg.naming.fallback_to_tfidf ||
        (e.kind() != error_kind::transport && e.kind() != error_kind::protocol))
      throw;
    return name_clusters_tfidf(clustering, corpus, cfg.naming, tokenizer);
  }
}

inline nlohmann::json representatives_json(const std::vector<RepresentativeSet>& reps) {
  nlohmann::json all = nlohmann::json::array();
  for (const auto& set : reps) {
    nlohmann::json one = nlohmann::json::array();
    for (const auto& r : set.records) one.push_back({{"id", r.id}, {"text", r.text}, {"frequency", r.frequency}});
    all.push_back({{"method", to_string(set.method)}, {"padded", set.padded}, {"records", std::move(one)}});
  }
  return all;
}

inline nlohmann::json names_json(const std::vector<ClusterName>& names) {
  nlohmann::json all = nlohmann::json::array();
  for (const auto& n : names)
    all.push_back({{"cluster_id", n.cluster_id}, {"name", n.name}, {"score", n.score}, {"method", to_string(n.method)}});
  return all;
}

}  // namespace detail

/// Ingest, embed, cluster and merge. `stop_after_merge` skips
/// representatives and naming.
inline PipelineResult run_stages(const PipelineConfig& cfg, const std::vector<RawUtterance>& raws,
                                 bool stop_after_merge = false) {
  cfg.validate();
  PipelineResult res;
  detail::StageRunner stage(res.timings);
  detail::Intermediates keep(cfg.output);
  const Tokenizer tokenizer = detail::make_tokenizer(cfg.naming);

  auto records = stage("ingest", [&] { return detail::ingest(raws, res.ingest); });
  keep.records("01_records.jsonl", records);

  res.corpus.emplace(stage("embed", [&] { return embed(std::move(records), cfg.encoder); }));
  const EmbeddedCorpus& corpus = *res.corpus;
  keep.vectors("02_embeddings.bin", corpus.vectors());

  res.flat = stage("cluster", [&] { return rbc_cluster(corpus, cfg.rbc); });
  keep.json("03_clusters.json", to_json(res.flat));
  if (keep.enabled()) write_centroids(keep.path("03_centroids.bin"), res.flat);

  res.clustering = stage("merge", [&] { return detail::merge_step(res.flat, corpus, cfg, tokenizer, res.markers); });
  if (res.markers) keep.json("04_markers.json", to_json(*res.markers));
  keep.json("04_merged.json", to_json(res.clustering));
  if (stop_after_merge) return res;

  res.representatives = stage("represent", [&] {
    std::vector<RepresentativeSet> out;
    for (const auto& c : res.clustering.clusters) out.push_back(select_representatives(c, corpus, cfg.representatives));
    return out;
  });
  keep.json("05_representatives.json", detail::representatives_json(res.representatives));

  res.names = stage("name", [&] { return detail::name_step(res.clustering, corpus, cfg, tokenizer); });
  keep.json("06_names.json", detail::names_json(res.names));
  return res;
}

inline std::vector<RawUtterance> read_input(const PipelineConfig& cfg) {
  if (cfg.input_path.empty()) throw usage_error("no input file given (input.path)");
  try {
    return read_utterances(cfg.input_path, cfg.format);
  } catch (const error& e) {
    throw error(e.kind(), std::string("read: ") + e.what());
  }
}

inline PipelineResult run_pipeline(const PipelineConfig& cfg) { return run_stages(cfg, read_input(cfg)); }

// ---------------------------------------------------------------------------
// Reports

/// Report with deterministic content first and the per-stage timings as the
/// last key, so two runs can be compared by everything before "timings".
inline nlohmann::ordered_json report_json(const PipelineResult& res, const PipelineConfig& cfg) {
  const auto& corpus = *res.corpus;
  nlohmann::ordered_json clusters = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < res.clustering.clusters.size(); ++i) {
    const auto& c = res.clustering.clusters[i];
    nlohmann::ordered_json j;
    j["id"] = c.cluster_id;
    if (i < res.names.size()) {
      j["name"] = res.names[i].name;
      j["name_score"] = res.names[i].score;
    }
    j["size"] = c.size;
    j["weight"] = c.weight;
    auto& reps = j["representatives"] = nlohmann::ordered_json::array();
    if (i < res.representatives.size())
      for (const auto& r : res.representatives[i].records)
        reps.push_back({{"text", r.text},
                        {"frequency", r.frequency},
                        {"method", to_string(res.representatives[i].method)}});
    if (i < res.representatives.size() && res.representatives[i].padded) j["representatives_padded"] = true;

    std::vector<record_id> members = c.member_ids;
    std::stable_sort(members.begin(), members.end(), [&](record_id a, record_id b) {
      return corpus.record(a).frequency > corpus.record(b).frequency;
    });
    if (members.size() > cfg.output.sample_n) members.resize(cfg.output.sample_n);
    auto& sample = j["members"] = nlohmann::ordered_json::array();
    for (auto id : members) sample.push_back({{"text", corpus.record(id).text}, {"frequency", corpus.record(id).frequency}});
    clusters.push_back(std::move(j));
  }

  nlohmann::ordered_json outliers = nlohmann::ordered_json::array();
  for (auto id : res.clustering.outlier_ids)
    outliers.push_back({{"text", corpus.record(id).text}, {"frequency", corpus.record(id).frequency}});

  nlohmann::ordered_json r;
  r["clusters"] = std::move(clusters);
  r["n_clusters"] = res.clustering.clusters.size();
  r["record_count"] = corpus.size();
  r["utterance_count"] = res.ingest.accepted;
  r["dropped_empty"] = res.ingest.dropped_empty;
  r["clustered_ratio"] = clustered_ratio(res.clustering, corpus);
  r["outlier_count"] = res.clustering.outlier_ids.size();
  r["outliers"] = std::move(outliers);
  r["converged"] = res.flat.converged;
  r["iterations"] = res.flat.iterations_run;
  r["config"] = to_json(cfg);
  nlohmann::ordered_json timings;
  for (const auto& t : res.timings) timings[t.stage] = t.seconds;
  r["timings"] = std::move(timings);
  return r;
}

inline std::string report_markdown(const PipelineResult& res, const PipelineConfig& cfg) {
  const auto j = report_json(res, cfg);
  std::ostringstream out;
  out << "# Clusters\n\n";
  out << j["n_clusters"].get<std::size_t>() << " clusters over " << j["record_count"].get<std::size_t>()
      << " unique utterances; " << j["outlier_count"].get<std::size_t>() << " outliers; clustered ratio "
      << j["clustered_ratio"].get<double>() << "\n";
  for (const auto& c : j["clusters"]) {
    out << "\n## " << c["id"].get<std::uint32_t>() << ". cluster name: " << c.value("name", std::string(unnamed_cluster))
        << " (" << c["weight"].get<std::uint64_t>() << ")\n\n";
    out << "Representatives:\n\n";
    for (const auto& r : c["representatives"])
      out << "- " << r["text"].get<std::string>() << " (" << r["frequency"].get<std::uint64_t>() << ")\n";
    out << "\nMost frequent members:\n\n";
    for (const auto& m : c["members"])
      out << "- " << m["text"].get<std::string>() << " (" << m["frequency"].get<std::uint64_t>() << ")\n";
  }
  out << "\n## Outliers\n\n";
  for (const auto& o : j["outliers"])
    out << "- " << o["text"].get<std::string>() << " (" << o["frequency"].get<std::uint64_t>() << ")\n";
  out << "\n## Timings\n\n";
  for (const auto& [stage, secs] : j["timings"].items()) out << "- " << stage << ": " << secs.get<double>() << " s\n";
  return out.str();
}

inline void write_report(const PipelineResult& res, const PipelineConfig& cfg, std::ostream& out) {
  if (cfg.output.format == report_format::json)
    out << report_json(res, cfg).dump(2) << '\n';
  else
    out << report_markdown(res, cfg);
}

// ---------------------------------------------------------------------------
// Evaluation

struct EvalRun {
  EvalReport report;
  std::size_t min_size = 0;
  double min_sim = 0.0;
};

inline LabeledDataset read_dataset(const PipelineConfig& cfg) {
  const std::string& path = cfg.eval.dataset.empty() ? cfg.input_path : cfg.eval.dataset;
  if (path.empty()) throw usage_error("no dataset given (eval.dataset)");
  auto ds = load_labeled_dataset(path, cfg.eval.exclude_label);
  if (ds.examples.empty()) throw data_error("dataset has no examples: " + path);
  return ds;
}

inline RbcConfig eval_rbc_config(const PipelineConfig& cfg, const LabeledDataset& ds) {
  RbcConfig rbc = cfg.rbc;
  if (cfg.eval.auto_min_size) rbc.min_size = min_class_size(ds);
  return rbc;
}

inline EmbeddedCorpus embed_dataset(const PipelineConfig& cfg, const LabeledDataset& ds) {
  std::vector<StageTiming> ignored;
  detail::StageRunner stage(ignored);
  IngestStats stats;
  auto records = stage("ingest", [&] { return detail::ingest(ds.raw_utterances(), stats); });
  return stage("embed", [&] { return embed(std::move(records), cfg.encoder); });
}

inline EvalRun evaluate_config(const PipelineConfig& cfg, const LabeledDataset& ds, const EmbeddedCorpus& corpus) {
  PipelineConfig local = cfg;
  local.rbc = eval_rbc_config(cfg, ds);
  local.validate();
  std::vector<StageTiming> ignored;
  detail::StageRunner stage(ignored);
  const Tokenizer tokenizer = detail::make_tokenizer(local.naming);
  std::optional<MarkerSet> markers;
  auto flat = stage("cluster", [&] { return rbc_cluster(corpus, local.rbc); });
  auto clustering = stage("merge", [&] { return detail::merge_step(flat, corpus, local, tokenizer, markers); });

  EvalRun run;
  run.min_size = local.rbc.min_size;
  run.min_sim = local.rbc.min_sim;
  run.report = stage("eval", [&] { return evaluate_against_labels(corpus, clustering, ds); });
  if (local.eval.naming && !clustering.clusters.empty()) {
    run.report.naming_similarity = stage("name", [&] {
      auto names = detail::name_step(clustering, corpus, local, tokenizer);
      auto labels = majority_labels(corpus, clustering, ds);
      std::vector<std::string> predicted, gold;
      for (std::size_t i = 0; i < names.size(); ++i) {
        if (labels[i].empty()) continue;
        predicted.push_back(comparable_name(names[i].name, tokenizer));
        gold.push_back(comparable_name(ds.label_names.at(labels[i]), tokenizer));
      }
      auto encoder = make_encoder(local.naming_encoder());
      if (!encoder) throw usage_error("naming similarity needs a fallback or remote encoder (set naming.encoder)");
      return naming_similarity(predicted, gold, *encoder);
    });
  }
  return run;
}

inline nlohmann::ordered_json to_json(const EvalRun& run) {
  nlohmann::ordered_json j;
  const auto report = to_json(run.report);
  for (const auto& [k, v] : report.items()) j[k] = v;
  j["min_sim"] = run.min_sim;
  j["min_size"] = run.min_size;
  return j;
}

inline EvalRun run_eval(const PipelineConfig& cfg) {
  const auto ds = read_dataset(cfg);
  const auto corpus = embed_dataset(cfg, ds);
  return evaluate_config(cfg, ds, corpus);
}

/// One evaluation per min_sim in the grid, sharing the embedded corpus.
inline std::vector<EvalRun> run_sweep(const PipelineConfig& cfg) {
  const auto ds = read_dataset(cfg);
  const auto corpus = embed_dataset(cfg, ds);
  std::vector<EvalRun> runs;
  for (double s : cfg.eval.sweep_min_sims) {
    PipelineConfig local = cfg;
    local.rbc.min_sim = s;
    runs.push_back(evaluate_config(local, ds, corpus));
  }
  return runs;
}

inline nlohmann::ordered_json sweep_json(const std::vector<EvalRun>& runs) {
  nlohmann::ordered_json j;
  auto& all = j["runs"] = nlohmann::ordered_json::array();
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    all.push_back(to_json(runs[i]));
    if (runs[i].report.ari && (!best || *runs[i].report.ari > *runs[*best].report.ari)) best = i;
  }
  j["best"] = best ? nlohmann::ordered_json(to_json(runs[*best])) : nlohmann::ordered_json();
  return j;
}

/// Domain markers of the input corpus against the background table.
inline MarkerSet run_markers(const PipelineConfig& cfg) {
  const Tokenizer tokenizer = detail::make_tokenizer(cfg.naming);
  IngestStats stats;
  auto records = detail::ingest(read_input(cfg), stats);
  auto background = detail::background_for(cfg.merge, tokenizer);
  return extract_markers(records, background, cfg.merge.dirichlet_alpha0, cfg.merge.marker_z_threshold, tokenizer);
}

}  // namespace utterclust

#endif  // UTTERCLUST_PIPELINE_HPP
