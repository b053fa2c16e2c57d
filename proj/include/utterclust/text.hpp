#ifndef UTTERCLUST_TEXT_HPP
#define UTTERCLUST_TEXT_HPP

#include <cstdint>
#include <fstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <unicode/uchar.h>
#include <unicode/locid.h>
#include <unicode/unistr.h>

#include "utterclust/error.hpp"
#include "utterclust/stopwords_en.hpp"

namespace utterclust {

namespace detail {

// Porter's consonant test: 'y' is a consonant at the start of a word or
// after a vowel.
inline bool is_consonant(const std::string& w, std::size_t i) {
  switch (w[i]) {
    case 'a': case 'e': case 'i': case 'o': case 'u': return false;
    case 'y': return i == 0 || !is_consonant(w, i - 1);
    default: return true;
  }
}

// Number of vowel-consonant sequences in w[0, end).
inline int measure(const std::string& w, std::size_t end) {
  int m = 0;
  std::size_t i = 0;
  while (i < end && is_consonant(w, i)) ++i;
  while (i < end) {
    while (i < end && !is_consonant(w, i)) ++i;
    if (i >= end) break;
    while (i < end && is_consonant(w, i)) ++i;
    ++m;
  }
  return m;
}

inline bool has_vowel(const std::string& w, std::size_t end) {
  for (std::size_t i = 0; i < end; ++i)
    if (!is_consonant(w, i)) return true;
  return false;
}

inline bool ends_with(const std::string& w, std::string_view suffix) {
  return w.size() >= suffix.size() && w.compare(w.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// consonant-vowel-consonant ending, last consonant not w, x or y
inline bool ends_cvc(const std::string& w) {
  const std::size_t n = w.size();
  if (n < 3) return false;
  if (!is_consonant(w, n - 1) || is_consonant(w, n - 2) || !is_consonant(w, n - 3)) return false;
  char c = w[n - 1];
  return c != 'w' && c != 'x' && c != 'y';
}

}  // namespace detail

/// Light suffix stemmer: plural -s/-es/-ies, then -eed/-ed/-ing with the
/// usual e-restoration and double-consonant undoubling (Porter step 1a/1b).
/// Only lowercase ASCII words are touched.
inline std::string light_stem(std::string w) {
  for (char c : w)
    if (c < 'a' || c > 'z') return w;
  if (w.size() <= 2) return w;
  using detail::ends_with;

  if (ends_with(w, "sses")) {
    w.resize(w.size() - 2);
  } else if (ends_with(w, "ies")) {
    w.resize(w.size() - 2);
  } else if (!ends_with(w, "ss") && ends_with(w, "s")) {
    w.pop_back();
  }

  bool restore = false;
  if (ends_with(w, "eed")) {
    if (detail::measure(w, w.size() - 3) > 0) w.pop_back();
  } else if (ends_with(w, "ed") && detail::has_vowel(w, w.size() - 2)) {
    w.resize(w.size() - 2);
    restore = true;
  } else if (ends_with(w, "ing") && detail::has_vowel(w, w.size() - 3)) {
    w.resize(w.size() - 3);
    restore = true;
  }
  if (restore) {
    const std::size_t n = w.size();
    if (ends_with(w, "at") || ends_with(w, "bl") || ends_with(w, "iz")) {
      w.push_back('e');
    } else if (n >= 2 && w[n - 1] == w[n - 2] && detail::is_consonant(w, n - 1) &&
               w[n - 1] != 'l' && w[n - 1] != 's' && w[n - 1] != 'z') {
      w.pop_back();
    } else if (detail::measure(w, n) == 1 && detail::ends_cvc(w)) {
      w.push_back('e');
    }
  }
  return w;
}

class StopwordList {
public:
  StopwordList() {
    for (auto w : default_stopwords_en) words_.emplace(w);
  }
  explicit StopwordList(std::unordered_set<std::string> words) : words_(std::move(words)) {}

  /// One word per line; blank lines and '#' comments ignored.
  static StopwordList from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open stopword file: " + path);
    std::unordered_set<std::string> words;
    std::string line;
    while (std::getline(in, line)) {
      while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
      if (line.empty() || line[0] == '#') continue;
      words.insert(line);
    }
    return StopwordList(std::move(words));
  }

  bool contains(std::string_view w) const { return words_.count(std::string(w)) != 0; }
  std::size_t size() const { return words_.size(); }

private:
  std::unordered_set<std::string> words_;
};

/// Lowercase, split on non-alphanumeric code points, drop stopwords and
/// one-character tokens, stem. A stem that lands on a stopword is dropped too.
class Tokenizer {
public:
  Tokenizer() = default;
  explicit Tokenizer(StopwordList stopwords) : stopwords_(std::move(stopwords)) {}

  std::vector<std::string> operator()(std::string_view text) const {
    std::vector<std::string> out;
    icu::UnicodeString u = icu::UnicodeString::fromUTF8(
        icu::StringPiece(text.data(), static_cast<std::int32_t>(text.size())));
    u.toLower(icu::Locale::getRoot());
    icu::UnicodeString current;
    auto flush = [&] {
      if (current.isEmpty()) return;
      std::string token;
      current.toUTF8String(token);
      current.remove();
      keep(std::move(token), out);
    };
    for (std::int32_t i = 0; i < u.length();) {
      UChar32 c = u.char32At(i);
      i += U16_LENGTH(c);
      if (u_isalnum(c)) {
        current.append(c);
      } else {
        flush();
      }
    }
    flush();
    return out;
  }

  const StopwordList& stopwords() const { return stopwords_; }

private:
  static std::size_t code_points(const std::string& s) {
    std::size_t n = 0;
    for (unsigned char c : s) n += (c & 0xC0) != 0x80;
    return n;
  }

  void keep(std::string token, std::vector<std::string>& out) const {
    if (code_points(token) < 2 || stopwords_.contains(token)) return;
    std::string stem = light_stem(std::move(token));
    if (code_points(stem) < 2 || stopwords_.contains(stem)) return;
    out.push_back(std::move(stem));
  }

  StopwordList stopwords_;
};

inline std::vector<std::string> tokenize_and_stem(std::string_view text) {
  static const Tokenizer tokenizer;
  return tokenizer(text);
}

inline std::string join_tokens(const std::vector<std::string>& tokens, std::size_t begin,
                               std::size_t end) {
  std::string out;
  for (std::size_t i = begin; i < end; ++i) {
    if (i > begin) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

}  // namespace utterclust

#endif  // UTTERCLUST_TEXT_HPP
