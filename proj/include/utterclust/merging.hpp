#ifndef UTTERCLUST_MERGING_HPP
#define UTTERCLUST_MERGING_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "utterclust/embedding.hpp"
#include "utterclust/error.hpp"
#include "utterclust/rbc.hpp"
#include "utterclust/text.hpp"

namespace utterclust {

enum class merge_mode { none, semantic, keyword };

inline merge_mode parse_merge_mode(std::string_view name) {
  if (name == "none") return merge_mode::none;
  if (name == "semantic") return merge_mode::semantic;
  if (name == "keyword") return merge_mode::keyword;
  throw usage_error("unknown merge mode: " + std::string(name));
}

inline const char* to_string(merge_mode mode) {
  switch (mode) {
    case merge_mode::none: return "none";
    case merge_mode::semantic: return "semantic";
    case merge_mode::keyword: return "keyword";
  }
  return "unknown";
}

struct MergeConfig {
  merge_mode mode = merge_mode::none;
  double merge_min_sim = 0.8;
  std::size_t top_k_words = 10;
  double marker_z_threshold = 5.0;
  std::string background_freqs;  // path; empty selects the shipped table
  double dirichlet_alpha0 = 500.0;

  void validate() const {
    if (!(merge_min_sim > 0.0 && merge_min_sim < 1.0))
      throw usage_error("merge.min_sim must lie in (0, 1)");
    if (top_k_words < 1) throw usage_error("merge.top_k_words must be at least 1");
    if (!(dirichlet_alpha0 > 0.0)) throw usage_error("merge.alpha0 must be positive");
  }
};

/// Token counts of a corpus. Ordered so that every derived quantity is
/// independent of hash-table iteration order.
struct WordCounts {
  std::map<std::string, double> counts;
  double total = 0.0;

  void add(const std::string& w, double c) {
    counts[w] += c;
    total += c;
  }
  double count(const std::string& w) const {
    auto it = counts.find(w);
    return it == counts.end() ? 0.0 : it->second;
  }
};

struct MarkerSet {
  std::set<std::string> markers;
  std::map<std::string, double> z_scores;  // every word seen in the target corpus

  bool contains(const std::string& w) const { return markers.count(w) != 0; }
  std::size_t size() const { return markers.size(); }
};

struct LogOddsScore {
  double delta = 0.0;
  double variance = 0.0;
  double z = 0.0;
};

/// Frequency-weighted token counts over the records.
inline WordCounts count_tokens(const std::vector<UtteranceRecord>& records,
                               const Tokenizer& tokenizer) {
  WordCounts wc;
  for (const auto& r : records)
    for (const auto& t : tokenizer(r.text)) wc.add(t, static_cast<double>(r.frequency));
  return wc;
}

/// `word<TAB>count` per line. Each word passes through the tokenizer so that
/// background counts live in the same stemmed, stopword-free space as the
/// target corpus.
inline WordCounts load_background(std::istream& in, const Tokenizer& tokenizer) {
  WordCounts wc;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw data_error("background table line " + std::to_string(line_no) + ": missing tab");
    double count = 0.0;
    try {
      count = std::stod(line.substr(tab + 1));
    } catch (const std::exception&) {
      throw data_error("background table line " + std::to_string(line_no) + ": bad count");
    }
    if (!(count >= 0.0))
      throw data_error("background table line " + std::to_string(line_no) + ": negative count");
    for (const auto& t : tokenizer(line.substr(0, tab))) wc.add(t, count);
  }
  return wc;
}

inline WordCounts load_background(const std::string& path, const Tokenizer& tokenizer) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open background table: " + path);
  return load_background(in, tokenizer);
}

#ifdef UTTERCLUST_DATA_DIR
inline std::string default_background_path() {
  return std::string(UTTERCLUST_DATA_DIR) + "/background_en.tsv";
}
#endif

/// Log-odds ratio with an informative Dirichlet prior. For every word in
/// either corpus, with prior pseudo-count a_w = max(alpha0 * p(w), 0.01):
///   delta = log((y_t+a_w) / (n_t+alpha0-y_t-a_w)) - log((y_b+a_w) / (n_b+alpha0-y_b-a_w))
///   var   = 1/(y_t+a_w) + 1/(y_b+a_w),   z = delta / sqrt(var)
/// Positive z marks excess in `target`.
inline std::map<std::string, LogOddsScore> log_odds_scores(const WordCounts& target,
                                                           const WordCounts& background,
                                                           const WordCounts& prior, double alpha0) {
  constexpr double alpha_floor = 0.01;
  auto score = [&](const std::string& w) {
    const double p = prior.total > 0.0 ? prior.count(w) / prior.total : 0.0;
    const double a = std::max(alpha0 * p, alpha_floor);
    const double yt = target.count(w);
    const double yb = background.count(w);
    LogOddsScore s;
    s.delta = std::log((yt + a) / (target.total + alpha0 - yt - a)) -
              std::log((yb + a) / (background.total + alpha0 - yb - a));
    s.variance = 1.0 / (yt + a) + 1.0 / (yb + a);
    s.z = s.delta / std::sqrt(s.variance);
    return s;
  };
  std::map<std::string, LogOddsScore> out;
  for (const auto& [w, c] : target.counts) out.emplace(w, score(w));
  for (const auto& [w, c] : background.counts)
    if (!out.count(w)) out.emplace(w, score(w));
  return out;
}

/// Domain markers: target words with z >= z_threshold against a
/// background-proportional prior.
inline MarkerSet extract_markers(const WordCounts& target, const WordCounts& background,
                                 double alpha0, double z_threshold) {
  if (target.total <= 0.0) throw data_error("target corpus has no tokens");
  if (background.total <= 0.0) throw data_error("background table is empty");
  if (!(alpha0 > 0.0)) throw usage_error("alpha0 must be positive");
  MarkerSet ms;
  for (const auto& [w, s] : log_odds_scores(target, background, background, alpha0)) {
    if (target.count(w) <= 0.0) continue;
    ms.z_scores.emplace(w, s.z);
    if (s.z >= z_threshold) ms.markers.insert(w);
  }
  return ms;
}

inline MarkerSet extract_markers(const std::vector<UtteranceRecord>& corpus,
                                 const WordCounts& background, double alpha0, double z_threshold,
                                 const Tokenizer& tokenizer = Tokenizer()) {
  return extract_markers(count_tokens(corpus, tokenizer), background, alpha0, z_threshold);
}

inline nlohmann::json to_json(const MarkerSet& ms) {
  std::vector<std::pair<std::string, double>> ranked;
  for (const auto& w : ms.markers) ranked.emplace_back(w, ms.z_scores.at(w));
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& [w, z] : ranked) arr.push_back({{"word", w}, {"z", z}});
  return {{"markers", std::move(arr)}};
}

namespace detail {

inline void require_same_corpus(const Clustering& clustering, const EmbeddedCorpus& corpus) {
  try {
    check_partition(clustering, corpus.size());
  } catch (const data_error& e) {
    throw data_error(std::string("clustering does not match corpus: ") + e.what());
  }
}

// Builds the merged clustering from groups of input-cluster indices.
inline Clustering assemble_merged(const Clustering& in, const EmbeddedCorpus& corpus,
                                  const std::vector<std::vector<std::size_t>>& groups) {
  Clustering out;
  out.config = in.config;
  out.iterations_run = in.iterations_run;
  out.converged = in.converged;
  out.outlier_ids = in.outlier_ids;
  out.assignment_similarity = in.assignment_similarity;
  for (const auto& group : groups) {
    Cluster c;
    for (auto idx : group) {
      const auto& src = in.clusters[idx];
      c.member_ids.insert(c.member_ids.end(), src.member_ids.begin(), src.member_ids.end());
      c.weight += src.weight;
    }
    std::sort(c.member_ids.begin(), c.member_ids.end());
    c.size = c.member_ids.size();
    c.centroid = mean_of(corpus.vectors(), c.member_ids);
    out.clusters.push_back(std::move(c));
  }
  renumber(out.clusters);
  return out;
}

}  // namespace detail

/// Single merge step: RBC over the (unit-normalized) flat-cluster centroids
/// with min_sim = merge_min_sim and min_size = 1.
inline Clustering semantic_merge(const Clustering& clustering, const EmbeddedCorpus& corpus,
                                 const MergeConfig& config) {
  if (config.mode != merge_mode::semantic) throw usage_error("semantic_merge requires mode=semantic");
  config.validate();
  detail::require_same_corpus(clustering, corpus);
  if (clustering.clusters.empty()) return clustering;

  const auto k = static_cast<Eigen::Index>(clustering.clusters.size());
  RowMatrix centroids(k, static_cast<Eigen::Index>(corpus.dim()));
  for (Eigen::Index i = 0; i < k; ++i) {
    Eigen::RowVectorXd c = mean_of(corpus.vectors(), clustering.clusters[static_cast<std::size_t>(i)].member_ids);
    const double norm = c.norm();
    if (norm == 0.0) throw data_error("cluster " + std::to_string(i) + " has a zero centroid");
    centroids.row(i) = c / norm;
  }
  RbcConfig level{config.merge_min_sim, 1, clustering.config.max_iter, clustering.config.seed};
  Clustering top = rbc_cluster_rows(centroids, {}, level);

  std::vector<std::vector<std::size_t>> groups;
  for (const auto& c : top.clusters) groups.emplace_back(c.member_ids.begin(), c.member_ids.end());
  return detail::assemble_merged(clustering, corpus, groups);
}

/// The top_k most frequent words (frequency-weighted, ties lexicographic).
inline std::vector<std::string> top_words(const std::map<std::string, double>& counts,
                                          std::size_t k) {
  std::vector<std::pair<std::string, double>> v(counts.begin(), counts.end());
  std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  if (v.size() > k) v.resize(k);
  std::vector<std::string> out;
  for (auto& [w, c] : v) out.push_back(std::move(w));
  std::sort(out.begin(), out.end());
  return out;
}

/// |M ∩ W1 ∩ W2| / |M|. Inputs are sorted word lists.
inline double marker_similarity(const std::vector<std::string>& w1, const std::vector<std::string>& w2,
                                const MarkerSet& markers) {
  if (markers.size() == 0) throw usage_error("marker set is empty");
  std::vector<std::string> both;
  std::set_intersection(w1.begin(), w1.end(), w2.begin(), w2.end(), std::back_inserter(both));
  std::size_t shared = 0;
  for (const auto& w : both) shared += markers.contains(w);
  return static_cast<double>(shared) / static_cast<double>(markers.size());
}

/// Greedy agglomeration on marker overlap: repeatedly merge the pair with
/// the highest similarity >= merge_min_sim (ties: lowest index pair), then
/// recompute the merged cluster's top words from the union of its members.
inline Clustering keyword_merge(const Clustering& clustering, const EmbeddedCorpus& corpus,
                                const MarkerSet& markers, const MergeConfig& config,
                                const Tokenizer& tokenizer = Tokenizer()) {
  if (config.mode != merge_mode::keyword) throw usage_error("keyword_merge requires mode=keyword");
  config.validate();
  if (markers.size() == 0) throw usage_error("keyword merging needs at least one marker");
  detail::require_same_corpus(clustering, corpus);

  struct Group {
    std::vector<std::size_t> clusters;
    std::map<std::string, double> counts;
    std::vector<std::string> top;
  };
  std::vector<Group> groups;
  for (std::size_t i = 0; i < clustering.clusters.size(); ++i) {
    Group g;
    g.clusters.push_back(i);
    for (auto id : clustering.clusters[i].member_ids) {
      const auto& rec = corpus.record(id);
      for (const auto& t : tokenizer(rec.text)) g.counts[t] += static_cast<double>(rec.frequency);
    }
    g.top = top_words(g.counts, config.top_k_words);
    groups.push_back(std::move(g));
  }

  std::vector<std::vector<double>> sim(groups.size(), std::vector<double>(groups.size(), 0.0));
  for (std::size_t i = 0; i < groups.size(); ++i)
    for (std::size_t j = i + 1; j < groups.size(); ++j)
      sim[i][j] = sim[j][i] = marker_similarity(groups[i].top, groups[j].top, markers);

  for (;;) {
    double best = config.merge_min_sim;
    std::size_t bi = 0, bj = 0;
    bool found = false;
    for (std::size_t i = 0; i < groups.size(); ++i)
      for (std::size_t j = i + 1; j < groups.size(); ++j)
        if (sim[i][j] >= best && (!found || sim[i][j] > best)) {
          best = sim[i][j];
          bi = i;
          bj = j;
          found = true;
        }
    if (!found) break;

    auto& g = groups[bi];
    g.clusters.insert(g.clusters.end(), groups[bj].clusters.begin(), groups[bj].clusters.end());
    for (const auto& [w, c] : groups[bj].counts) g.counts[w] += c;
    g.top = top_words(g.counts, config.top_k_words);
    groups.erase(groups.begin() + static_cast<std::ptrdiff_t>(bj));
    sim.erase(sim.begin() + static_cast<std::ptrdiff_t>(bj));
    for (auto& row : sim) row.erase(row.begin() + static_cast<std::ptrdiff_t>(bj));
    for (std::size_t j = 0; j < groups.size(); ++j)
      if (j != bi) sim[bi][j] = sim[j][bi] = marker_similarity(groups[bi].top, groups[j].top, markers);
  }

  std::vector<std::vector<std::size_t>> out;
  for (const auto& g : groups) out.push_back(g.clusters);
  return detail::assemble_merged(clustering, corpus, out);
}

}  // namespace utterclust

#endif  // UTTERCLUST_MERGING_HPP
