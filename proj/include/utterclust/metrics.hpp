#ifndef UTTERCLUST_METRICS_HPP
#define UTTERCLUST_METRICS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "utterclust/corpus.hpp"
#include "utterclust/embedding.hpp"
#include "utterclust/error.hpp"
#include "utterclust/rbc.hpp"
#include "utterclust/text.hpp"

namespace utterclust {

// ---------------------------------------------------------------------------
// Adjusted Rand index

namespace detail {

inline double choose2(double n) { return n * (n - 1.0) / 2.0; }

template <class L>
std::vector<std::size_t> dense_labels(std::span<const L> labels, std::size_t& n_classes) {
  std::map<L, std::size_t> ids;
  std::vector<std::size_t> out;
  out.reserve(labels.size());
  for (const auto& l : labels) out.push_back(ids.try_emplace(l, ids.size()).first->second);
  n_classes = ids.size();
  return out;
}

}  // namespace detail

/// ARI between two labelings of the same elements (position i in both spans
/// is element i). When the chance-corrected denominator vanishes the result
/// is 1 for identical partitions and 0 otherwise.
template <class A, class B>
double adjusted_rand_index(std::span<const A> pred, std::span<const B> gold) {
  if (pred.size() != gold.size())
    throw data_error("partitions cover different element counts: " + std::to_string(pred.size()) +
                     " vs " + std::to_string(gold.size()));
  std::size_t ka = 0, kb = 0;
  auto a = detail::dense_labels(pred, ka);
  auto b = detail::dense_labels(gold, kb);

  std::map<std::pair<std::size_t, std::size_t>, double> table;
  std::vector<double> rows(ka, 0.0), cols(kb, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    table[{a[i], b[i]}] += 1.0;
    rows[a[i]] += 1.0;
    cols[b[i]] += 1.0;
  }
  double index = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (const auto& [cell, n] : table) index += detail::choose2(n);
  for (double n : rows) sum_a += detail::choose2(n);
  for (double n : cols) sum_b += detail::choose2(n);
  const double total = detail::choose2(static_cast<double>(a.size()));
  const double expected = total > 0.0 ? sum_a * sum_b / total : 0.0;
  const double max_index = 0.5 * (sum_a + sum_b);
  const double denom = max_index - expected;
  if (denom == 0.0) return table.size() == ka && table.size() == kb ? 1.0 : 0.0;
  return (index - expected) / denom;
}

template <class A, class B>
double adjusted_rand_index(const std::vector<A>& pred, const std::vector<B>& gold) {
  return adjusted_rand_index(std::span<const A>(pred), std::span<const B>(gold));
}

/// ARI between two partitions given as blocks of element ids. Both must
/// cover exactly the same elements.
template <class T>
double adjusted_rand_index(const std::vector<std::vector<T>>& pred,
                           const std::vector<std::vector<T>>& gold) {
  auto labels = [](const std::vector<std::vector<T>>& blocks) {
    std::map<T, std::size_t> out;
    for (std::size_t b = 0; b < blocks.size(); ++b)
      for (const auto& e : blocks[b])
        if (!out.emplace(e, b).second) throw data_error("element appears in two blocks");
    return out;
  };
  auto lp = labels(pred);
  auto lg = labels(gold);
  if (lp.size() != lg.size()) throw data_error("partitions are over different element sets");
  std::vector<std::size_t> a, b;
  for (const auto& [e, block] : lp) {
    auto it = lg.find(e);
    if (it == lg.end()) throw data_error("partitions are over different element sets");
    a.push_back(block);
    b.push_back(it->second);
  }
  return adjusted_rand_index(a, b);
}

// ---------------------------------------------------------------------------
// Silhouette

/// Per-point silhouette values with cosine distance 1 - cos(x, y). Mean
/// distances to a cluster come from its vector sum, so the cost is
/// O(n * clusters * d) instead of O(n^2 * d).
template <class L>
std::vector<double> silhouette_samples(const RowMatrix& vectors, std::span<const L> labels) {
  if (static_cast<std::size_t>(vectors.rows()) != labels.size())
    throw data_error("silhouette: label count does not match vector count");
  std::size_t k = 0;
  auto lab = detail::dense_labels(labels, k);
  if (k < 2) throw data_error("silhouette is undefined for fewer than two clusters");

  RowMatrix unit = vectors;
  for (Eigen::Index i = 0; i < unit.rows(); ++i) {
    const double norm = unit.row(i).norm();
    if (norm == 0.0) throw data_error("silhouette: zero vector");
    unit.row(i) /= norm;
  }
  RowMatrix sums = RowMatrix::Zero(static_cast<Eigen::Index>(k), unit.cols());
  std::vector<double> sizes(k, 0.0);
  for (std::size_t i = 0; i < lab.size(); ++i) {
    sums.row(static_cast<Eigen::Index>(lab[i])) += unit.row(static_cast<Eigen::Index>(i));
    sizes[lab[i]] += 1.0;
  }
  const RowMatrix dots = unit * sums.transpose();

  std::vector<double> s(lab.size(), 0.0);
  for (std::size_t i = 0; i < lab.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    const std::size_t own = lab[i];
    if (sizes[own] < 2.0) continue;
    const double self = unit.row(row).squaredNorm();
    const double a = 1.0 - (dots(row, static_cast<Eigen::Index>(own)) - self) / (sizes[own] - 1.0);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c)
      if (c != own) b = std::min(b, 1.0 - dots(row, static_cast<Eigen::Index>(c)) / sizes[c]);
    const double denom = std::max(a, b);
    s[i] = denom > 0.0 ? std::clamp((b - a) / denom, -1.0, 1.0) : 0.0;
  }
  return s;
}

template <class L>
double silhouette(const RowMatrix& vectors, std::span<const L> labels) {
  auto s = silhouette_samples(vectors, labels);
  double sum = 0.0;
  for (double v : s) sum += v;
  return sum / static_cast<double>(s.size());
}

template <class L>
double silhouette(const RowMatrix& vectors, const std::vector<L>& labels) {
  return silhouette(vectors, std::span<const L>(labels));
}

// ---------------------------------------------------------------------------
// Coverage

/// Frequency-weighted share of the corpus that ended up in a cluster.
inline double clustered_ratio(const Clustering& clustering, const EmbeddedCorpus& corpus) {
  double clustered = 0.0, total = 0.0;
  for (const auto& r : corpus.records()) total += static_cast<double>(r.frequency);
  for (const auto& c : clustering.clusters)
    for (auto id : c.member_ids) clustered += static_cast<double>(corpus.record(id).frequency);
  return total > 0.0 ? clustered / total : 0.0;
}

/// Share of records (each counted once) that ended up in a cluster.
inline double clustered_ratio(const Clustering& clustering) {
  const double clustered = static_cast<double>(clustering.clustered_count());
  const double total = clustered + static_cast<double>(clustering.outlier_ids.size());
  return total > 0.0 ? clustered / total : 0.0;
}

// ---------------------------------------------------------------------------
// Labeled datasets

struct LabeledExample {
  std::string text;
  std::string label;
  std::optional<std::vector<double>> embedding;
};

struct LabeledDataset {
  std::vector<LabeledExample> examples;
  std::set<std::string> labels;
  std::map<std::string, std::string> label_names;

  void add(std::string text, std::string label, std::optional<std::string> name = std::nullopt,
           std::optional<std::vector<double>> embedding = std::nullopt) {
    if (normalize(text).empty()) throw data_error("labeled example with empty text");
    labels.insert(label);
    if (name) {
      label_names[label] = *name;
    } else if (!label_names.count(label)) {
      std::string readable = label;
      std::replace(readable.begin(), readable.end(), '_', ' ');
      label_names[label] = readable;
    }
    examples.push_back({std::move(text), std::move(label), std::move(embedding)});
  }

  std::vector<RawUtterance> raw_utterances() const {
    std::vector<RawUtterance> raws;
    raws.reserve(examples.size());
    for (const auto& e : examples) raws.push_back({e.text, std::nullopt, 1, e.embedding});
    return raws;
  }
};

/// `{"text": ..., "label": ..., "name"?: ...}` per line.
inline LabeledDataset load_labeled_jsonl(std::istream& in, const std::string& exclude_label = "") {
  LabeledDataset ds;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw data_error("line " + std::to_string(line_no) + ": invalid JSON: " + e.what());
    }
    if (!obj.is_object() || !obj.contains("text") || !obj["text"].is_string() ||
        !obj.contains("label"))
      throw data_error("line " + std::to_string(line_no) + ": need \"text\" and \"label\"");
    std::string label = obj["label"].is_string() ? obj["label"].get<std::string>() : obj["label"].dump();
    if (!exclude_label.empty() && label == exclude_label) continue;
    std::optional<std::string> name;
    if (obj.contains("name") && obj["name"].is_string()) name = obj["name"].get<std::string>();
    std::optional<std::vector<double>> embedding;
    if (auto it = obj.find("embedding"); it != obj.end()) {
      if (!it->is_array()) throw data_error("line " + std::to_string(line_no) + ": \"embedding\" must be an array");
      embedding = it->get<std::vector<double>>();
    }
    ds.add(obj["text"].get<std::string>(), std::move(label), std::move(name), std::move(embedding));
  }
  return ds;
}

namespace detail {

// RFC 4180 fields: quoted fields may contain commas, doubled quotes and
// newlines.
inline bool read_csv_record(std::istream& in, std::vector<std::string>& fields) {
  fields.clear();
  std::string field;
  bool quoted = false, any = false;
  char c;
  while (in.get(c)) {
    any = true;
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          field.push_back('"');
          in.get();
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c == '\n') {
      break;
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  if (!any) return false;
  fields.push_back(std::move(field));
  return true;
}

}  // namespace detail

/// CSV with a header naming `text` and `label` columns (and optionally `name`).
inline LabeledDataset load_labeled_csv(std::istream& in, const std::string& exclude_label = "") {
  std::vector<std::string> header;
  if (!detail::read_csv_record(in, header)) throw data_error("CSV dataset is empty");
  auto column = [&](const std::string& name) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    return std::nullopt;
  };
  auto text_col = column("text");
  auto label_col = column("label");
  auto name_col = column("name");
  if (!text_col || !label_col) throw data_error("CSV header must contain text and label columns");

  LabeledDataset ds;
  std::vector<std::string> fields;
  std::size_t row = 1;
  while (detail::read_csv_record(in, fields)) {
    ++row;
    if (fields.size() == 1 && fields[0].empty()) continue;
    if (fields.size() <= std::max(*text_col, *label_col))
      throw data_error("CSV row " + std::to_string(row) + " has too few fields");
    if (!exclude_label.empty() && fields[*label_col] == exclude_label) continue;
    std::optional<std::string> name;
    if (name_col && *name_col < fields.size() && !fields[*name_col].empty()) name = fields[*name_col];
    ds.add(fields[*text_col], fields[*label_col], std::move(name));
  }
  return ds;
}

inline LabeledDataset load_labeled_dataset(const std::string& path, const std::string& exclude_label = "") {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open dataset: " + path);
  const bool csv = path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0;
  return csv ? load_labeled_csv(in, exclude_label) : load_labeled_jsonl(in, exclude_label);
}

/// Recommended min_size: the smallest class.
inline std::size_t min_class_size(const LabeledDataset& ds) {
  std::map<std::string, std::size_t> counts;
  for (const auto& e : ds.examples) ++counts[e.label];
  if (counts.empty()) throw data_error("dataset has no examples");
  std::size_t m = counts.begin()->second;
  for (const auto& [label, n] : counts) m = std::min(m, n);
  return m;
}

// ---------------------------------------------------------------------------
// Evaluation against gold labels

struct EvalReport {
  std::optional<double> ari;
  std::optional<double> silhouette;
  double clustered_ratio = 0.0;
  std::size_t n_clusters = 0;
  std::optional<double> naming_similarity;
};

inline nlohmann::json to_json(const EvalReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); };
  return {{"ari", opt(r.ari)},
          {"silhouette", opt(r.silhouette)},
          {"clustered_ratio", r.clustered_ratio},
          {"n_clusters", r.n_clusters},
          {"naming_similarity", opt(r.naming_similarity)}};
}

/// Record id of every dataset example, by normalized text.
inline std::vector<record_id> example_records(const EmbeddedCorpus& corpus, const LabeledDataset& ds) {
  std::unordered_map<std::string, record_id> by_text;
  for (const auto& r : corpus.records()) by_text.emplace(r.text, r.id);
  std::vector<record_id> out;
  out.reserve(ds.examples.size());
  for (const auto& e : ds.examples) {
    auto it = by_text.find(normalize(e.text));
    if (it == by_text.end()) throw data_error("dataset example not found in corpus: " + e.text);
    out.push_back(it->second);
  }
  return out;
}

/// Cluster index of each record, -1 for outliers.
inline std::vector<int> cluster_of(const Clustering& clustering, std::size_t n) {
  std::vector<int> out(n, -1);
  for (std::size_t c = 0; c < clustering.clusters.size(); ++c)
    for (auto id : clustering.clusters[c].member_ids) out.at(id) = static_cast<int>(c);
  return out;
}

/// ARI over clustered examples (outliers excluded from both partitions),
/// silhouette of the predicted partition over clustered records, and the
/// share of examples that were clustered.
inline EvalReport evaluate_against_labels(const EmbeddedCorpus& corpus, const Clustering& clustering,
                                          const LabeledDataset& ds) {
  EvalReport report;
  report.n_clusters = clustering.clusters.size();
  const auto records = example_records(corpus, ds);
  const auto assigned = cluster_of(clustering, corpus.size());

  std::vector<int> pred;
  std::vector<std::string> gold;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const int c = assigned[records[i]];
    if (c < 0) continue;
    pred.push_back(c);
    gold.push_back(ds.examples[i].label);
  }
  report.clustered_ratio =
      ds.examples.empty() ? 0.0 : static_cast<double>(pred.size()) / static_cast<double>(ds.examples.size());
  if (pred.empty()) return report;
  report.ari = adjusted_rand_index(pred, gold);

  if (clustering.clusters.size() >= 2) {
    const auto clustered = clustering.clustered_count();
    RowMatrix vecs(static_cast<Eigen::Index>(clustered), static_cast<Eigen::Index>(corpus.dim()));
    std::vector<int> labels;
    labels.reserve(clustered);
    for (std::size_t c = 0; c < clustering.clusters.size(); ++c)
      for (auto id : clustering.clusters[c].member_ids) {
        vecs.row(static_cast<Eigen::Index>(labels.size())) = corpus.vector(id);
        labels.push_back(static_cast<int>(c));
      }
    report.silhouette = silhouette(vecs, labels);
  }
  return report;
}

/// Most common gold label among each cluster's examples; ties go to the
/// lexicographically smallest label.
inline std::vector<std::string> majority_labels(const EmbeddedCorpus& corpus, const Clustering& clustering,
                                                const LabeledDataset& ds) {
  const auto records = example_records(corpus, ds);
  const auto assigned = cluster_of(clustering, corpus.size());
  std::vector<std::map<std::string, std::size_t>> votes(clustering.clusters.size());
  for (std::size_t i = 0; i < records.size(); ++i)
    if (int c = assigned[records[i]]; c >= 0) ++votes[static_cast<std::size_t>(c)][ds.examples[i].label];
  std::vector<std::string> out;
  for (const auto& v : votes) {
    std::string best;
    std::size_t best_n = 0;
    for (const auto& [label, n] : v)
      if (n > best_n) {
        best = label;
        best_n = n;
      }
    out.push_back(best);
  }
  return out;
}

/// Phrase form used when comparing names: the tokenizer's stemmed,
/// stopword-free tokens, or the normalized phrase if none survive.
inline std::string comparable_name(const std::string& phrase, const Tokenizer& tokenizer = Tokenizer()) {
  auto tokens = tokenizer(phrase);
  if (tokens.empty()) return normalize(phrase);
  return join_tokens(tokens, 0, tokens.size());
}

/// Mean cosine similarity between encoded predicted and gold names, pairwise
/// by position.
inline double naming_similarity(const std::vector<std::string>& predicted,
                                const std::vector<std::string>& gold, Encoder& encoder) {
  if (predicted.size() != gold.size()) throw data_error("predicted and gold name counts differ");
  if (predicted.empty()) throw data_error("no names to compare");
  std::vector<std::string> texts;
  for (const auto& p : predicted) texts.push_back(p);
  for (const auto& g : gold) texts.push_back(g);
  RowMatrix v = encoder.encode(texts);
  if (static_cast<std::size_t>(v.rows()) != texts.size())
    throw protocol_error("encoder returned the wrong number of vectors");
  const auto n = static_cast<Eigen::Index>(predicted.size());
  double sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) sum += cosine(v.row(i), v.row(n + i));
  return sum / static_cast<double>(n);
}

}  // namespace utterclust

#endif  // UTTERCLUST_METRICS_HPP
