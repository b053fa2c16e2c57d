#ifndef UTTERCLUST_NAMING_HPP
#define UTTERCLUST_NAMING_HPP

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "utterclust/embedding.hpp"
#include "utterclust/error.hpp"
#include "utterclust/rbc.hpp"
#include "utterclust/text.hpp"

namespace utterclust {

enum class naming_method { tfidf, embedding };

inline naming_method parse_naming_method(std::string_view name) {
  if (name == "tfidf" || name == "tf-idf") return naming_method::tfidf;
  if (name == "embedding") return naming_method::embedding;
  throw usage_error("unknown naming method: " + std::string(name));
}

inline const char* to_string(naming_method m) {
  return m == naming_method::tfidf ? "tfidf" : "embedding";
}

inline constexpr std::string_view unnamed_cluster = "(unnamed)";

struct NamingConfig {
  naming_method method = naming_method::tfidf;
  std::vector<std::size_t> ngram_orders{1, 2, 3};
  std::string stopwords;  // path; empty selects the built-in list
  EncoderSpec encoder;    // embedding method only
  bool fallback_to_tfidf = false;
  std::size_t max_document_tokens = 512;

  void validate() const {
    if (ngram_orders.empty()) throw usage_error("naming.ngram_orders must not be empty");
    for (auto n : ngram_orders)
      if (n < 1 || n > 3) throw usage_error("ngram orders must be 1, 2 or 3");
  }
};

struct ClusterName {
  std::uint32_t cluster_id = 0;
  std::string name;
  double score = 0.0;
  naming_method method = naming_method::tfidf;
};

namespace detail {

struct NgramStat {
  double tf = 0.0;
  std::size_t order = 0;
};

// Frequency-weighted ngram counts of one cluster. Ngrams are taken within
// each utterance's token sequence, never across utterances.
inline std::map<std::string, NgramStat> cluster_ngrams(const Cluster& cluster,
                                                       const EmbeddedCorpus& corpus,
                                                       const Tokenizer& tokenizer,
                                                       const std::vector<std::size_t>& orders) {
  std::map<std::string, NgramStat> grams;
  for (auto id : cluster.member_ids) {
    const auto& rec = corpus.record(id);
    auto tokens = tokenizer(rec.text);
    for (auto n : orders)
      for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        auto& s = grams[join_tokens(tokens, i, i + n)];
        s.tf += static_cast<double>(rec.frequency);
        s.order = n;
      }
  }
  return grams;
}

// Higher score, then longer ngram, then lexicographically smaller.
inline bool better_name(double score, std::size_t order, const std::string& name, double best_score,
                        std::size_t best_order, const std::string& best_name) {
  if (score != best_score) return score > best_score;
  if (order != best_order) return order > best_order;
  return name < best_name;
}

}  // namespace detail

/// tf-idf naming with clusters as documents:
///   tf(g, c) = frequency-weighted count of g in c
///   idf(g)   = ln((1 + |C|) / (1 + df(g))) + 1
inline std::vector<ClusterName> name_clusters_tfidf(const Clustering& clustering,
                                                    const EmbeddedCorpus& corpus,
                                                    const NamingConfig& config,
                                                    const Tokenizer& tokenizer = Tokenizer()) {
  config.validate();
  if (clustering.clusters.empty()) throw usage_error("nothing to name: clustering has no clusters");

  std::vector<std::map<std::string, detail::NgramStat>> docs;
  std::map<std::string, std::size_t> df;
  for (const auto& c : clustering.clusters) {
    docs.push_back(detail::cluster_ngrams(c, corpus, tokenizer, config.ngram_orders));
    for (const auto& [g, s] : docs.back()) ++df[g];
  }
  const double n_docs = static_cast<double>(clustering.clusters.size());

  std::vector<ClusterName> names;
  for (std::size_t i = 0; i < clustering.clusters.size(); ++i) {
    ClusterName best{clustering.clusters[i].cluster_id, std::string(unnamed_cluster), 0.0,
                     naming_method::tfidf};
    std::size_t best_order = 0;
    bool any = false;
    for (const auto& [g, s] : docs[i]) {
      const double idf = std::log((1.0 + n_docs) / (1.0 + static_cast<double>(df[g]))) + 1.0;
      const double score = s.tf * idf;
      if (!any || detail::better_name(score, s.order, g, best.score, best_order, best.name)) {
        best.name = g;
        best.score = score;
        best_order = s.order;
        any = true;
      }
    }
    names.push_back(std::move(best));
  }
  return names;
}

/// Cluster document built from member token sequences, most frequent
/// members first, each repeated by frequency, capped at `max_tokens`.
inline std::string cluster_document(const Cluster& cluster, const EmbeddedCorpus& corpus,
                                    const Tokenizer& tokenizer, std::size_t max_tokens) {
  std::vector<record_id> order = cluster.member_ids;
  std::stable_sort(order.begin(), order.end(), [&](record_id a, record_id b) {
    return corpus.record(a).frequency > corpus.record(b).frequency;
  });
  std::vector<std::string> doc;
  for (auto id : order) {
    const auto& rec = corpus.record(id);
    auto tokens = tokenizer(rec.text);
    if (tokens.empty()) continue;
    for (std::uint64_t rep = 0; rep < rec.frequency && doc.size() < max_tokens; ++rep)
      for (const auto& t : tokens) {
        if (doc.size() >= max_tokens) break;
        doc.push_back(t);
      }
    if (doc.size() >= max_tokens) break;
  }
  return join_tokens(doc, 0, doc.size());
}

/// Names each cluster with the candidate ngram whose embedding is most
/// cosine-similar to the embedding of the cluster document.
inline std::vector<ClusterName> name_clusters_embedding(const Clustering& clustering,
                                                        const EmbeddedCorpus& corpus,
                                                        const NamingConfig& config, Encoder& encoder,
                                                        const Tokenizer& tokenizer = Tokenizer()) {
  config.validate();
  if (clustering.clusters.empty()) throw usage_error("nothing to name: clustering has no clusters");

  std::vector<ClusterName> names;
  for (const auto& c : clustering.clusters) {
    ClusterName best{c.cluster_id, std::string(unnamed_cluster), 0.0, naming_method::embedding};
    auto grams = detail::cluster_ngrams(c, corpus, tokenizer, config.ngram_orders);
    std::string doc = cluster_document(c, corpus, tokenizer, config.max_document_tokens);
    if (grams.empty() || doc.empty()) {
      names.push_back(std::move(best));
      continue;
    }
    std::vector<std::string> texts{doc};
    std::vector<std::size_t> orders;
    for (const auto& [g, s] : grams) {
      texts.push_back(g);
      orders.push_back(s.order);
    }
    RowMatrix vecs = encoder.encode(texts);
    if (static_cast<std::size_t>(vecs.rows()) != texts.size())
      throw protocol_error("encoder returned " + std::to_string(vecs.rows()) + " vectors for " +
                           std::to_string(texts.size()) + " texts");
    std::size_t best_order = 0;
    for (std::size_t i = 1; i < texts.size(); ++i) {
      const double score = cosine(vecs.row(static_cast<Eigen::Index>(i)), vecs.row(0));
      if (i == 1 || detail::better_name(score, orders[i - 1], texts[i], best.score, best_order, best.name)) {
        best.name = texts[i];
        best.score = score;
        best_order = orders[i - 1];
      }
    }
    names.push_back(std::move(best));
  }
  return names;
}

}  // namespace utterclust

#endif  // UTTERCLUST_NAMING_HPP
