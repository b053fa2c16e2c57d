#ifndef UTTERCLUST_EMBEDDING_HPP
#define UTTERCLUST_EMBEDDING_HPP

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "utterclust/corpus.hpp"
#include "utterclust/error.hpp"

namespace utterclust {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Records paired with unit-length vectors, one row per record in the same
/// order. Immutable after construction; every downstream module reads the
/// normalized rows, so a dot product is a cosine similarity.
class EmbeddedCorpus {
public:
  EmbeddedCorpus() = default;

  /// Validates and L2-normalizes `raw`. Throws data_error on NaN/inf, on an
  /// all-zero row (naming the record id) and on shape mismatch.
  EmbeddedCorpus(std::vector<UtteranceRecord> records, RowMatrix raw)
      : records_(std::move(records)), vectors_(std::move(raw)) {
    if (static_cast<std::size_t>(vectors_.rows()) != records_.size())
      throw data_error("embedding count " + std::to_string(vectors_.rows()) +
                       " does not match record count " + std::to_string(records_.size()));
    if (!records_.empty() && vectors_.cols() < 2)
      throw data_error("embedding dimension must be at least 2");
    for (std::size_t i = 0; i < records_.size(); ++i) {
      if (records_[i].id != i)
        throw data_error("record ids must be dense and ordered; found id " +
                         std::to_string(records_[i].id) + " at position " + std::to_string(i));
      auto row = vectors_.row(static_cast<Eigen::Index>(i));
      if (!row.allFinite())
        throw data_error("non-finite embedding for record " + std::to_string(records_[i].id));
      double norm = row.norm();
      if (norm == 0.0)
        throw data_error("zero embedding for record " + std::to_string(records_[i].id));
      row /= norm;
      records_[i].precomputed_embedding.clear();
      records_[i].precomputed_embedding.shrink_to_fit();
    }
  }

  const std::vector<UtteranceRecord>& records() const noexcept { return records_; }
  const UtteranceRecord& record(std::size_t i) const { return records_.at(i); }
  const RowMatrix& vectors() const noexcept { return vectors_; }
  auto vector(std::size_t i) const { return vectors_.row(static_cast<Eigen::Index>(i)); }
  std::size_t size() const noexcept { return records_.size(); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(vectors_.cols()); }
  bool empty() const noexcept { return records_.empty(); }

private:
  std::vector<UtteranceRecord> records_;
  RowMatrix vectors_;
};

enum class encoder_kind { precomputed, remote, fallback };

inline encoder_kind parse_encoder_kind(std::string_view name) {
  if (name == "precomputed") return encoder_kind::precomputed;
  if (name == "remote") return encoder_kind::remote;
  if (name == "fallback") return encoder_kind::fallback;
  throw usage_error("unknown encoder kind: " + std::string(name));
}

inline const char* to_string(encoder_kind kind) {
  switch (kind) {
    case encoder_kind::precomputed: return "precomputed";
    case encoder_kind::remote: return "remote";
    case encoder_kind::fallback: return "fallback";
  }
  return "unknown";
}

struct EncoderSpec {
  encoder_kind kind = encoder_kind::fallback;
  std::optional<std::string> endpoint;  // remote only
  std::size_t fallback_dim = 64;
  std::uint64_t fallback_seed = 0;
  std::size_t batch_size = 256;

  void validate() const {
    if (kind == encoder_kind::remote && (!endpoint || endpoint->empty()))
      throw usage_error("remote encoder requires an endpoint");
    if (kind != encoder_kind::remote && endpoint)
      throw usage_error("endpoint is only valid for the remote encoder");
    if (fallback_dim < 2) throw usage_error("fallback_dim must be at least 2");
    if (batch_size == 0) throw usage_error("batch_size must be positive");
  }
};

/// Anything that maps texts to vectors, one row per text, in order.
class Encoder {
public:
  virtual ~Encoder() = default;
  virtual RowMatrix encode(const std::vector<std::string>& texts) = 0;
  virtual std::string name() const = 0;
};

namespace detail {

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Uniform in (0, 1].
inline double unit_open(std::uint64_t& state) {
  return (static_cast<double>(splitmix64(state) >> 11) + 1.0) * 0x1.0p-53;
}

// Unit-length Gaussian direction determined by (token, seed).
inline void token_direction(std::string_view token, std::uint64_t seed, std::size_t dim,
                            Eigen::Ref<Eigen::RowVectorXd> out) {
  std::uint64_t state = fnv1a64(token) ^ (seed * 0x9e3779b97f4a7c15ULL + 0x632be59bd9b4e019ULL);
  constexpr double two_pi = 6.283185307179586476925286766559;
  for (std::size_t j = 0; j < dim; j += 2) {
    double r = std::sqrt(-2.0 * std::log(unit_open(state)));
    double theta = two_pi * unit_open(state);
    out[static_cast<Eigen::Index>(j)] = r * std::cos(theta);
    if (j + 1 < dim) out[static_cast<Eigen::Index>(j + 1)] = r * std::sin(theta);
  }
  out.normalize();
}

}  // namespace detail

/// Deterministic bag-of-tokens encoder: the L2-normalized sum of seeded
/// pseudo-random unit directions, one per whitespace-separated token.
inline Eigen::RowVectorXd fallback_encode(std::string_view text, std::size_t dim,
                                          std::uint64_t seed) {
  if (dim < 2) throw usage_error("fallback dimension must be at least 2");
  Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(dim));
  Eigen::RowVectorXd dir(static_cast<Eigen::Index>(dim));
  std::size_t tokens = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t start = text.find_first_not_of(" \t\n\r\f\v", pos);
    if (start == std::string_view::npos) break;
    std::size_t end = text.find_first_of(" \t\n\r\f\v", start);
    if (end == std::string_view::npos) end = text.size();
    detail::token_direction(text.substr(start, end - start), seed, dim, dir);
    sum += dir;
    ++tokens;
    pos = end;
  }
  if (tokens == 0) throw data_error("cannot encode text without tokens");
  double norm = sum.norm();
  if (norm == 0.0) throw data_error("token directions cancel for text: " + std::string(text));
  return sum / norm;
}

class FallbackEncoder final : public Encoder {
public:
  FallbackEncoder(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
    if (dim_ < 2) throw usage_error("fallback dimension must be at least 2");
  }

  RowMatrix encode(const std::vector<std::string>& texts) override {
    RowMatrix out(static_cast<Eigen::Index>(texts.size()), static_cast<Eigen::Index>(dim_));
    for (std::size_t i = 0; i < texts.size(); ++i)
      out.row(static_cast<Eigen::Index>(i)) = fallback_encode(texts[i], dim_, seed_);
    return out;
  }

  std::string name() const override {
    return "fallback-hash-" + std::to_string(dim_) + "-" + std::to_string(seed_);
  }

private:
  std::size_t dim_;
  std::uint64_t seed_;
};

/// Builds the corpus from per-record vectors supplied in the structured input.
inline EmbeddedCorpus embed_precomputed(std::vector<UtteranceRecord> records) {
  if (records.empty()) throw data_error("no utterances to embed");
  const std::size_t dim = records.front().precomputed_embedding.size();
  RowMatrix raw(static_cast<Eigen::Index>(records.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& v = records[i].precomputed_embedding;
    if (v.empty())
      throw data_error("record " + std::to_string(records[i].id) + " has no precomputed embedding");
    if (v.size() != dim)
      throw data_error("record " + std::to_string(records[i].id) + " has embedding dimension " +
                       std::to_string(v.size()) + ", expected " + std::to_string(dim));
    raw.row(static_cast<Eigen::Index>(i)) =
        Eigen::Map<const Eigen::RowVectorXd>(v.data(), static_cast<Eigen::Index>(dim));
  }
  return EmbeddedCorpus(std::move(records), std::move(raw));
}

inline EmbeddedCorpus embed_with(std::vector<UtteranceRecord> records, Encoder& encoder) {
  if (records.empty()) throw data_error("no utterances to embed");
  std::vector<std::string> texts;
  texts.reserve(records.size());
  for (const auto& r : records) texts.push_back(r.text);
  RowMatrix raw = encoder.encode(texts);
  return EmbeddedCorpus(std::move(records), std::move(raw));
}

inline double cosine(const Eigen::Ref<const Eigen::RowVectorXd>& a,
                     const Eigen::Ref<const Eigen::RowVectorXd>& b) {
  double denom = a.norm() * b.norm();
  return denom == 0.0 ? 0.0 : a.dot(b) / denom;
}

}  // namespace utterclust

#endif  // UTTERCLUST_EMBEDDING_HPP
