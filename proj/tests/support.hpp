#ifndef UTTERCLUST_TESTS_SUPPORT_HPP
#define UTTERCLUST_TESTS_SUPPORT_HPP

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "utterclust/embedding.hpp"
#include "utterclust/rbc.hpp"

namespace testsupport {

using utterclust::RowMatrix;

inline Eigen::RowVectorXd gaussian_row(std::size_t d, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Eigen::RowVectorXd v(static_cast<Eigen::Index>(d));
  for (Eigen::Index j = 0; j < v.size(); ++j) v(j) = g(rng);
  return v;
}

inline RowMatrix random_unit_rows(std::size_t n, std::size_t d, std::mt19937_64& rng) {
  RowMatrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < x.rows(); ++i) x.row(i) = gaussian_row(d, rng).normalized();
  return x;
}

// k orthonormal directions in R^d (k <= d).
inline RowMatrix orthonormal_rows(std::size_t k, std::size_t d, std::mt19937_64& rng) {
  RowMatrix x(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    Eigen::RowVectorXd v = gaussian_row(d, rng);
    for (Eigen::Index j = 0; j < i; ++j) v -= v.dot(x.row(j)) * x.row(j);
    x.row(i) = v.normalized();
  }
  return x;
}

// Unit vector at cosine `c` to the unit vector `center`, in a random
// orthogonal direction.
inline Eigen::RowVectorXd at_cosine(const Eigen::RowVectorXd& center, double c, std::mt19937_64& rng) {
  Eigen::RowVectorXd u = gaussian_row(static_cast<std::size_t>(center.size()), rng);
  u -= u.dot(center) * center;
  u.normalize();
  return c * center + std::sqrt(std::max(0.0, 1.0 - c * c)) * u;
}

struct Synthetic {
  RowMatrix x;
  std::vector<int> label;  // bundle index, -1 for isotropic noise
};

// `per` points per center at cosine uniform in [lo, hi] to it, followed by
// `noise` isotropic unit vectors.
inline Synthetic bundles(const RowMatrix& centers, std::size_t per, double lo, double hi, std::size_t noise,
                         std::mt19937_64& rng) {
  const auto k = static_cast<std::size_t>(centers.rows());
  const auto d = static_cast<std::size_t>(centers.cols());
  Synthetic s;
  s.x.resize(static_cast<Eigen::Index>(k * per + noise), static_cast<Eigen::Index>(d));
  std::uniform_real_distribution<double> cos_dist(lo, hi);
  Eigen::Index row = 0;
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t i = 0; i < per; ++i) {
      s.x.row(row++) = at_cosine(centers.row(static_cast<Eigen::Index>(c)), cos_dist(rng), rng);
      s.label.push_back(static_cast<int>(c));
    }
  for (std::size_t i = 0; i < noise; ++i) {
    s.x.row(row++) = gaussian_row(d, rng).normalized();
    s.label.push_back(-1);
  }
  return s;
}

inline utterclust::EmbeddedCorpus corpus_of(const RowMatrix& x, std::vector<std::uint64_t> freqs = {}) {
  std::vector<utterclust::UtteranceRecord> recs;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    utterclust::UtteranceRecord r;
    r.id = static_cast<utterclust::record_id>(i);
    r.text = "r" + std::to_string(i);
    r.frequency = freqs.empty() ? 1 : freqs[static_cast<std::size_t>(i)];
    recs.push_back(std::move(r));
  }
  return utterclust::EmbeddedCorpus(std::move(recs), x);
}

// Cluster index per record, -1 for outliers.
inline std::vector<int> labels_of(const utterclust::Clustering& c, std::size_t n) {
  std::vector<int> out(n, -1);
  for (std::size_t k = 0; k < c.clusters.size(); ++k)
    for (auto id : c.clusters[k].member_ids) out[id] = static_cast<int>(k);
  return out;
}

}  // namespace testsupport

#endif  // UTTERCLUST_TESTS_SUPPORT_HPP
