#ifndef UTTERCLUST_CORPUS_HPP
#define UTTERCLUST_CORPUS_HPP

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>
#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/locid.h>
#include <unicode/unistr.h>

#include "utterclust/error.hpp"

namespace utterclust {

using record_id = std::uint32_t;

struct RawUtterance {
  std::string text;
  std::optional<std::string> source_id;
  // Pre-aggregated duplicate count from the structured format.
  std::uint64_t count = 1;
  // Precomputed vector from the structured format, consumed by embed().
  std::optional<std::vector<double>> embedding;
};

struct UtteranceRecord {
  record_id id = 0;
  std::string text;
  std::uint64_t frequency = 1;
  // Vector of the first raw occurrence that supplied one; empty otherwise.
  std::vector<double> precomputed_embedding;
};

struct IngestStats {
  std::size_t accepted = 0;       // raw utterances kept, weighted by count
  std::size_t dropped_empty = 0;  // rows empty after normalization
};

/// NFC-normalizes, lowercases and collapses whitespace runs to a single
/// space. Returns an empty string when nothing but whitespace remains; that
/// empty string is the marker callers drop.
inline std::string normalize(std::string_view raw) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) throw error(error_kind::io, "ICU NFC normalizer unavailable");

  icu::UnicodeString text = icu::UnicodeString::fromUTF8(
      icu::StringPiece(raw.data(), static_cast<std::int32_t>(raw.size())));
  icu::UnicodeString normalized = nfc->normalize(text, status);
  if (U_FAILURE(status)) throw data_error("text is not valid Unicode");
  normalized.toLower(icu::Locale::getRoot());

  icu::UnicodeString collapsed;
  bool pending_space = false;
  for (std::int32_t i = 0; i < normalized.length();) {
    UChar32 c = normalized.char32At(i);
    i += U16_LENGTH(c);
    if (u_isUWhiteSpace(c)) {
      pending_space = !collapsed.isEmpty();
      continue;
    }
    if (pending_space) {
      collapsed.append(static_cast<UChar>(u' '));
      pending_space = false;
    }
    collapsed.append(c);
  }
  // NFC is not closed under lowercasing for every script.
  collapsed = nfc->normalize(collapsed, status);

  std::string out;
  collapsed.toUTF8String(out);
  return out;
}

/// One record per distinct normalized text, ids in first-seen order.
inline std::vector<UtteranceRecord> deduplicate(const std::vector<RawUtterance>& raws,
                                                IngestStats* stats = nullptr) {
  std::vector<UtteranceRecord> records;
  std::unordered_map<std::string, std::size_t> index;
  IngestStats local;
  for (const auto& raw : raws) {
    std::string text = normalize(raw.text);
    if (text.empty()) {
      ++local.dropped_empty;
      continue;
    }
    if (raw.count == 0) throw data_error("utterance count must be positive: \"" + text + "\"");
    local.accepted += raw.count;
    auto [it, inserted] = index.try_emplace(text, records.size());
    if (inserted) {
      UtteranceRecord rec;
      rec.id = static_cast<record_id>(records.size());
      rec.text = std::move(text);
      rec.frequency = raw.count;
      if (raw.embedding) rec.precomputed_embedding = *raw.embedding;
      records.push_back(std::move(rec));
    } else {
      auto& rec = records[it->second];
      rec.frequency += raw.count;
      if (rec.precomputed_embedding.empty() && raw.embedding)
        rec.precomputed_embedding = *raw.embedding;
    }
  }
  if (stats) *stats = local;
  return records;
}

// ---------------------------------------------------------------------------
// Readers

enum class input_format { lines, jsonl };

inline input_format parse_input_format(std::string_view name) {
  if (name == "lines" || name == "text" || name == "txt") return input_format::lines;
  if (name == "jsonl" || name == "structured") return input_format::jsonl;
  throw usage_error("unknown input format: " + std::string(name));
}

// Blank lines are kept so that deduplicate() can count them as dropped.
inline std::vector<RawUtterance> read_lines(std::istream& in) {
  std::vector<RawUtterance> raws;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    raws.push_back(RawUtterance{std::move(line), std::nullopt, 1, std::nullopt});
  }
  return raws;
}

inline RawUtterance parse_structured_line(const std::string& line, std::size_t line_no) {
  nlohmann::json obj;
  try {
    obj = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw data_error("line " + std::to_string(line_no) + ": invalid JSON: " + e.what());
  }
  if (!obj.is_object() || !obj.contains("text") || !obj["text"].is_string())
    throw data_error("line " + std::to_string(line_no) + ": missing string field \"text\"");

  RawUtterance raw;
  raw.text = obj["text"].get<std::string>();
  if (auto it = obj.find("id"); it != obj.end())
    raw.source_id = it->is_string() ? it->get<std::string>() : it->dump();
  if (auto it = obj.find("count"); it != obj.end()) {
    if (!it->is_number_integer() || it->get<std::int64_t>() <= 0)
      throw data_error("line " + std::to_string(line_no) + ": \"count\" must be a positive integer");
    raw.count = it->get<std::uint64_t>();
  }
  if (auto it = obj.find("embedding"); it != obj.end()) {
    if (!it->is_array())
      throw data_error("line " + std::to_string(line_no) + ": \"embedding\" must be an array");
    std::vector<double> vec;
    vec.reserve(it->size());
    for (const auto& v : *it) {
      if (!v.is_number())
        throw data_error("line " + std::to_string(line_no) + ": non-numeric embedding entry");
      vec.push_back(v.get<double>());
    }
    raw.embedding = std::move(vec);
  }
  return raw;
}

inline std::vector<RawUtterance> read_jsonl(std::istream& in) {
  std::vector<RawUtterance> raws;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    raws.push_back(parse_structured_line(line, line_no));
  }
  return raws;
}

inline std::vector<RawUtterance> read_utterances(const std::string& path, input_format format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open input file: " + path);
  return format == input_format::jsonl ? read_jsonl(in) : read_lines(in);
}

}  // namespace utterclust

#endif  // UTTERCLUST_CORPUS_HPP
