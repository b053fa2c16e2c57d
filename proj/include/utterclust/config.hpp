#ifndef UTTERCLUST_CONFIG_HPP
#define UTTERCLUST_CONFIG_HPP

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <nlohmann/json.hpp>

#include "utterclust/corpus.hpp"
#include "utterclust/embedding.hpp"
#include "utterclust/error.hpp"
#include "utterclust/merging.hpp"
#include "utterclust/naming.hpp"
#include "utterclust/rbc.hpp"
#include "utterclust/representatives.hpp"

namespace utterclust {

enum class report_format { json, markdown };

inline report_format parse_report_format(std::string_view name) {
  if (name == "json") return report_format::json;
  if (name == "markdown" || name == "md") return report_format::markdown;
  throw usage_error("unknown report format: " + std::string(name));
}

inline const char* to_string(report_format f) { return f == report_format::json ? "json" : "markdown"; }

struct OutputConfig {
  std::string path;  // empty writes to stdout
  report_format format = report_format::json;
  std::size_t sample_n = 5;
  std::string work_dir = "utterclust-work";
  bool keep_intermediate = false;
  std::string centroids;  // optional binary sidecar for `cluster`
};

struct EvalConfig {
  std::string dataset;  // empty falls back to input.path
  std::string exclude_label;
  bool auto_min_size = true;  // rbc.min_size = auto: smallest class size
  bool naming = false;        // also score cluster names against gold names
  std::vector<double> sweep_min_sims{0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9};
};

struct PipelineConfig {
  std::string input_path;
  input_format format = input_format::lines;
  EncoderSpec encoder;
  RbcConfig rbc;
  MergeConfig merge;
  RepConfig representatives;
  NamingConfig naming;
  bool naming_encoder_set = false;  // otherwise naming reuses `encoder`
  OutputConfig output;
  EvalConfig eval;

  void validate() const {
    encoder.validate();
    rbc.validate();
    merge.validate();
    representatives.validate();
    naming.validate();
    if (naming_encoder_set) naming.encoder.validate();
  }

  // Encoder used for text outside the corpus.
  const EncoderSpec& naming_encoder() const { return naming_encoder_set ? naming.encoder : encoder; }
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline double parse_double(const std::string& key, std::string_view v) {
  std::string s = trim(v);
  double out = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(out))
    throw usage_error(key + ": expected a number, got \"" + std::string(v) + "\"");
  return out;
}

inline std::uint64_t parse_uint(const std::string& key, std::string_view v) {
  std::string s = trim(v);
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty())
    throw usage_error(key + ": expected a non-negative integer, got \"" + std::string(v) + "\"");
  return out;
}

inline bool parse_bool(const std::string& key, std::string_view v) {
  std::string s = trim(v);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw usage_error(key + ": expected a boolean, got \"" + std::string(v) + "\"");
}

inline std::vector<std::string> split_list(std::string_view v) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= v.size()) {
    auto end = v.find(',', start);
    if (end == std::string_view::npos) end = v.size();
    if (auto item = trim(v.substr(start, end - start)); !item.empty()) out.push_back(item);
    start = end + 1;
  }
  return out;
}

// "0.5,0.6,0.7" or an inclusive range "from:to:step".
inline std::vector<double> parse_grid(const std::string& key, std::string_view v) {
  std::vector<double> out;
  if (v.find(':') != std::string_view::npos) {
    std::vector<double> parts;
    std::size_t start = 0;
    for (;;) {
      auto end = v.find(':', start);
      parts.push_back(parse_double(key, v.substr(start, end == std::string_view::npos ? v.npos : end - start)));
      if (end == std::string_view::npos) break;
      start = end + 1;
    }
    if (parts.size() != 3 || parts[2] <= 0.0 || parts[1] < parts[0])
      throw usage_error(key + ": range must be from:to:step with step > 0");
    const auto steps = static_cast<std::size_t>(std::floor((parts[1] - parts[0]) / parts[2] + 1e-9));
    for (std::size_t i = 0; i <= steps; ++i) out.push_back(parts[0] + static_cast<double>(i) * parts[2]);
  } else {
    for (const auto& item : split_list(v)) out.push_back(parse_double(key, item));
  }
  if (out.empty()) throw usage_error(key + ": empty grid");
  return out;
}

// Lowercase with '-' folded into '_', so `--rbc.min-sim` and `rbc.min_sim`
// name the same key. Bare RBC keys are accepted without their section.
inline std::string canonical_key(std::string_view key) {
  std::string k = trim(key);
  for (auto& c : k) {
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (c == '-') c = '_';
  }
  if (k == "min_sim" || k == "min_size" || k == "max_iter" || k == "seed") return "rbc." + k;
  return k;
}

}  // namespace detail

/// Every settable key, in canonical dotted form.
inline const std::vector<std::string>& option_keys() {
  static const std::vector<std::string> keys{
      "input.path",          "input.format",
      "encoder.kind",        "encoder.endpoint",         "encoder.dim",
      "encoder.seed",        "encoder.batch_size",
      "rbc.min_sim",         "rbc.min_size",             "rbc.max_iter",
      "rbc.seed",
      "merge.mode",          "merge.min_sim",            "merge.top_k_words",
      "merge.z_threshold",   "merge.background",         "merge.alpha0",
      "representatives.k",   "representatives.method",   "representatives.seed",
      "naming.method",       "naming.ngram_orders",      "naming.stopwords",
      "naming.fallback_to_tfidf", "naming.max_document_tokens",
      "naming.encoder",      "naming.endpoint",          "naming.dim",
      "naming.encoder_seed",
      "output.path",         "output.report",            "output.sample_n",
      "output.work_dir",     "output.keep_intermediate", "output.centroids",
      "eval.dataset",        "eval.exclude_label",       "eval.naming",
      "sweep.min_sims"};
  return keys;
}

inline void set_option(PipelineConfig& c, std::string_view raw_key, std::string_view raw_value) {
  using namespace detail;
  const std::string key = canonical_key(raw_key);
  const std::string value = trim(raw_value);
  auto count = [&] { return static_cast<std::size_t>(parse_uint(key, value)); };

  if (key == "input.path") c.input_path = value;
  else if (key == "input.format") c.format = parse_input_format(value);
  else if (key == "encoder.kind") c.encoder.kind = parse_encoder_kind(value);
  else if (key == "encoder.endpoint") c.encoder.endpoint = value.empty() ? std::nullopt : std::optional(value);
  else if (key == "encoder.dim") c.encoder.fallback_dim = count();
  else if (key == "encoder.seed") c.encoder.fallback_seed = parse_uint(key, value);
  else if (key == "encoder.batch_size") c.encoder.batch_size = count();
  else if (key == "rbc.min_sim") c.rbc.min_sim = parse_double(key, value);
  else if (key == "rbc.min_size") {
    c.eval.auto_min_size = value == "auto";
    if (!c.eval.auto_min_size) c.rbc.min_size = count();
  }
  else if (key == "rbc.max_iter") c.rbc.max_iter = count();
  else if (key == "rbc.seed") c.rbc.seed = parse_uint(key, value);
  else if (key == "merge.mode") c.merge.mode = parse_merge_mode(value);
  else if (key == "merge.min_sim") c.merge.merge_min_sim = parse_double(key, value);
  else if (key == "merge.top_k_words") c.merge.top_k_words = count();
  else if (key == "merge.z_threshold") c.merge.marker_z_threshold = parse_double(key, value);
  else if (key == "merge.background") c.merge.background_freqs = value;
  else if (key == "merge.alpha0") c.merge.dirichlet_alpha0 = parse_double(key, value);
  else if (key == "representatives.k") c.representatives.k = count();
  else if (key == "representatives.method") c.representatives.method = parse_rep_method(value);
  else if (key == "representatives.seed") c.representatives.seed = parse_uint(key, value);
  else if (key == "naming.method") c.naming.method = parse_naming_method(value);
  else if (key == "naming.ngram_orders") {
    c.naming.ngram_orders.clear();
    for (const auto& item : split_list(value)) c.naming.ngram_orders.push_back(parse_uint(key, item));
  }
  else if (key == "naming.stopwords") c.naming.stopwords = value;
  else if (key == "naming.fallback_to_tfidf") c.naming.fallback_to_tfidf = parse_bool(key, value);
  else if (key == "naming.max_document_tokens") c.naming.max_document_tokens = count();
  else if (key == "naming.encoder") {
    c.naming.encoder.kind = parse_encoder_kind(value);
    c.naming_encoder_set = true;
  }
  else if (key == "naming.endpoint") {
    c.naming.encoder.endpoint = value.empty() ? std::nullopt : std::optional(value);
    c.naming_encoder_set = true;
  }
  else if (key == "naming.dim") {
    c.naming.encoder.fallback_dim = count();
    c.naming_encoder_set = true;
  }
  else if (key == "naming.encoder_seed") {
    c.naming.encoder.fallback_seed = parse_uint(key, value);
    c.naming_encoder_set = true;
  }
  else if (key == "output.path") c.output.path = value;
  else if (key == "output.report") c.output.format = parse_report_format(value);
  else if (key == "output.sample_n") c.output.sample_n = count();
  else if (key == "output.work_dir") c.output.work_dir = value;
  else if (key == "output.keep_intermediate") c.output.keep_intermediate = parse_bool(key, value);
  else if (key == "output.centroids") c.output.centroids = value;
  else if (key == "eval.dataset") c.eval.dataset = value;
  else if (key == "eval.exclude_label") c.eval.exclude_label = value;
  else if (key == "eval.naming") c.eval.naming = parse_bool(key, value);
  else if (key == "sweep.min_sims") c.eval.sweep_min_sims = parse_grid(key, value);
  else throw usage_error("unknown config key: " + std::string(raw_key));
}

/// INI text: `[section]` headers with `key = value` lines, or dotted keys
/// before any section. Later keys override earlier ones.
inline PipelineConfig parse_config(std::istream& in, PipelineConfig base = {}) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw usage_error(std::string("config: ") + e.what());
  }
  for (const auto& [name, node] : tree) {
    if (node.empty()) {
      set_option(base, name, node.data());
      continue;
    }
    for (const auto& [key, leaf] : node) {
      if (!leaf.empty()) throw usage_error("config: nested value under " + name + "." + key);
      set_option(base, name + "." + key, leaf.data());
    }
  }
  return base;
}

inline PipelineConfig load_config(const std::string& path, PipelineConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open config file: " + path);
  return parse_config(in, std::move(base));
}

/// Config echo for reports. Output locations are left out so that the same
/// run written to two places produces the same report.
inline nlohmann::ordered_json to_json(const PipelineConfig& c) {
  auto encoder_json = [](const EncoderSpec& e) {
    nlohmann::ordered_json j{{"kind", to_string(e.kind)}};
    if (e.kind == encoder_kind::remote) {
      j["endpoint"] = e.endpoint.value_or("");
      j["batch_size"] = e.batch_size;
    }
    if (e.kind == encoder_kind::fallback) {
      j["dim"] = e.fallback_dim;
      j["seed"] = e.fallback_seed;
    }
    return j;
  };
  nlohmann::ordered_json j;
  j["input"] = {{"format", c.format == input_format::jsonl ? "jsonl" : "lines"}};
  j["encoder"] = encoder_json(c.encoder);
  j["rbc"] = {{"min_sim", c.rbc.min_sim},
              {"min_size", c.rbc.min_size},
              {"max_iter", c.rbc.max_iter},
              {"seed", c.rbc.seed}};
  j["merge"] = {{"mode", to_string(c.merge.mode)}};
  if (c.merge.mode != merge_mode::none) j["merge"]["min_sim"] = c.merge.merge_min_sim;
  if (c.merge.mode == merge_mode::keyword) {
    j["merge"]["top_k_words"] = c.merge.top_k_words;
    j["merge"]["z_threshold"] = c.merge.marker_z_threshold;
    j["merge"]["alpha0"] = c.merge.dirichlet_alpha0;
    j["merge"]["background"] = c.merge.background_freqs.empty() ? "default" : c.merge.background_freqs;
  }
  j["representatives"] = {{"k", c.representatives.k},
                          {"method", to_string(c.representatives.method)},
                          {"seed", c.representatives.seed}};
  j["naming"] = {{"method", to_string(c.naming.method)}, {"ngram_orders", c.naming.ngram_orders}};
  if (c.naming.method == naming_method::embedding) j["naming"]["encoder"] = encoder_json(c.naming_encoder());
  return j;
}

}  // namespace utterclust

#endif  // UTTERCLUST_CONFIG_HPP
