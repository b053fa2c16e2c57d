#ifndef UTTERCLUST_REMOTE_ENCODER_HPP
#define UTTERCLUST_REMOTE_ENCODER_HPP

#include <algorithm>
#include <memory>
#include <string>
#include <vector>

#include "utterclust/embedding.hpp"
#include "utterclust/error.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace utterclust {

/// Client for the `/embed` protocol:
///   POST {base}/embed  {"texts": [...]}
///   200  {"embeddings": [[...], ...], "dim": d, "model": "<name>"}
///   4xx  {"error": "..."}
/// Texts are sent in batches; results are concatenated in input order. Every
/// received value is rounded to float32, the declared wire width.
class RemoteEncoder final : public Encoder {
public:
  explicit RemoteEncoder(const std::string& endpoint, std::size_t batch_size = 256,
                         int timeout_seconds = 120)
      : batch_size_(batch_size) {
    if (batch_size_ == 0) throw usage_error("batch_size must be positive");
    auto scheme_end = endpoint.find("://");
    std::string rest = scheme_end == std::string::npos ? endpoint : endpoint.substr(scheme_end + 3);
    std::string scheme = scheme_end == std::string::npos ? "http" : endpoint.substr(0, scheme_end);
    if (scheme != "http") throw usage_error("only http:// endpoints are supported: " + endpoint);
    auto slash = rest.find('/');
    std::string host = rest.substr(0, slash);
    if (host.empty()) throw usage_error("endpoint has no host: " + endpoint);
    path_prefix_ = slash == std::string::npos ? "" : rest.substr(slash);
    while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
    client_ = std::make_unique<httplib::Client>(scheme + "://" + host);
    client_->set_connection_timeout(timeout_seconds, 0);
    client_->set_read_timeout(timeout_seconds, 0);
    client_->set_write_timeout(timeout_seconds, 0);
  }

  RowMatrix encode(const std::vector<std::string>& texts) override {
    std::vector<std::vector<double>> rows;
    rows.reserve(texts.size());
    std::size_t dim = 0;
    for (std::size_t start = 0, batch = 0; start < texts.size(); start += batch_size_, ++batch) {
      std::size_t stop = std::min(texts.size(), start + batch_size_);
      std::vector<std::string> chunk(texts.begin() + static_cast<std::ptrdiff_t>(start),
                                     texts.begin() + static_cast<std::ptrdiff_t>(stop));
      auto vectors = fetch_batch(chunk, batch);
      for (auto& v : vectors) {
        if (dim == 0) dim = v.size();
        if (v.size() != dim)
          throw protocol_error("batch " + std::to_string(batch) + ": dimension " +
                               std::to_string(v.size()) + " differs from earlier dimension " +
                               std::to_string(dim));
        rows.push_back(std::move(v));
      }
    }
    RowMatrix out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < dim; ++j)
        out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    return out;
  }

  std::string name() const override { return model_.empty() ? "remote" : model_; }

private:
  std::vector<std::vector<double>> fetch_batch(const std::vector<std::string>& texts,
                                               std::size_t batch) {
    const std::string where = "batch " + std::to_string(batch);
    nlohmann::json body = {{"texts", texts}};
    auto res = client_->Post(path_prefix_ + "/embed", body.dump(), "application/json");
    if (!res)
      throw transport_error(where + ": request failed: " + httplib::to_string(res.error()));
    if (res->status != 200) {
      std::string detail;
      try {
        auto err = nlohmann::json::parse(res->body);
        if (err.contains("error") && err["error"].is_string()) detail = err["error"];
      } catch (const nlohmann::json::exception&) {
      }
      throw transport_error(where + ": HTTP " + std::to_string(res->status) +
                            (detail.empty() ? "" : ": " + detail));
    }

    nlohmann::json reply;
    try {
      reply = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::parse_error& e) {
      throw transport_error(where + ": malformed response: " + e.what());
    }
    if (!reply.is_object() || !reply.contains("embeddings") || !reply["embeddings"].is_array())
      throw transport_error(where + ": response lacks an \"embeddings\" array");
    const auto& embeddings = reply["embeddings"];
    if (embeddings.size() != texts.size())
      throw transport_error(where + ": expected " + std::to_string(texts.size()) +
                            " embeddings, got " + std::to_string(embeddings.size()));
    if (auto it = reply.find("model"); it != reply.end() && it->is_string()) model_ = *it;

    std::vector<std::vector<double>> out;
    out.reserve(texts.size());
    for (const auto& row : embeddings) {
      if (!row.is_array()) throw transport_error(where + ": embedding row is not an array");
      std::vector<double> v;
      v.reserve(row.size());
      for (const auto& x : row) {
        if (!x.is_number()) throw transport_error(where + ": non-numeric embedding value");
        v.push_back(static_cast<double>(static_cast<float>(x.get<double>())));
      }
      out.push_back(std::move(v));
    }
    if (auto it = reply.find("dim"); it != reply.end()) {
      if (!it->is_number_integer()) throw protocol_error(where + ": \"dim\" is not an integer");
      auto declared = it->get<std::size_t>();
      for (const auto& v : out)
        if (v.size() != declared)
          throw protocol_error(where + ": vector of length " + std::to_string(v.size()) +
                               " but declared dim " + std::to_string(declared));
    }
    return out;
  }

  std::size_t batch_size_;
  std::string path_prefix_;
  std::string model_;
  std::unique_ptr<httplib::Client> client_;
};

/// Encoder for texts outside the corpus (naming, name evaluation).
/// Precomputed vectors cannot encode new text, so that kind returns nullptr.
inline std::unique_ptr<Encoder> make_encoder(const EncoderSpec& spec) {
  spec.validate();
  switch (spec.kind) {
    case encoder_kind::fallback:
      return std::make_unique<FallbackEncoder>(spec.fallback_dim, spec.fallback_seed);
    case encoder_kind::remote:
      return std::make_unique<RemoteEncoder>(*spec.endpoint, spec.batch_size);
    case encoder_kind::precomputed:
      return nullptr;
  }
  return nullptr;
}

inline EmbeddedCorpus embed(std::vector<UtteranceRecord> records, const EncoderSpec& spec) {
  spec.validate();
  if (records.empty()) throw data_error("no utterances to embed");
  if (spec.kind == encoder_kind::precomputed) return embed_precomputed(std::move(records));
  auto encoder = make_encoder(spec);
  return embed_with(std::move(records), *encoder);
}

}  // namespace utterclust

#endif  // UTTERCLUST_REMOTE_ENCODER_HPP
