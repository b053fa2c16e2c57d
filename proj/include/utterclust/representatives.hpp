#ifndef UTTERCLUST_REPRESENTATIVES_HPP
#define UTTERCLUST_REPRESENTATIVES_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "utterclust/embedding.hpp"
#include "utterclust/error.hpp"
#include "utterclust/rbc.hpp"

namespace utterclust {

enum class rep_method { dpp, random, top_frequency };

inline rep_method parse_rep_method(std::string_view name) {
  if (name == "dpp") return rep_method::dpp;
  if (name == "random") return rep_method::random;
  if (name == "top_frequency" || name == "top-frequency") return rep_method::top_frequency;
  throw usage_error("unknown representative method: " + std::string(name));
}

inline const char* to_string(rep_method m) {
  switch (m) {
    case rep_method::dpp: return "dpp";
    case rep_method::random: return "random";
    case rep_method::top_frequency: return "top_frequency";
  }
  return "unknown";
}

struct RepConfig {
  std::size_t k = 3;
  rep_method method = rep_method::dpp;
  std::uint64_t seed = 0;

  void validate() const {
    if (k < 1) throw usage_error("representatives.k must be at least 1");
  }
};

/// L-ensemble kernel over a cluster's members, K = E E^T. Held either as the
/// factor E (rows sqrt(f_i) * unit embedding) or as an explicit matrix.
class DppKernel {
public:
  DppKernel() = default;

  static DppKernel from_factor(RowMatrix factor, std::vector<record_id> ids,
                               std::vector<std::uint64_t> freqs) {
    DppKernel k;
    k.factor_ = std::move(factor);
    k.ids_ = std::move(ids);
    k.freqs_ = std::move(freqs);
    k.check_sizes(static_cast<std::size_t>(k.factor_.rows()));
    return k;
  }

  /// `matrix` must be symmetric positive semi-definite.
  static DppKernel from_matrix(Eigen::MatrixXd matrix, std::vector<record_id> ids = {},
                               std::vector<std::uint64_t> freqs = {}) {
    if (matrix.rows() != matrix.cols()) throw data_error("kernel matrix must be square");
    const auto m = static_cast<std::size_t>(matrix.rows());
    if (ids.empty()) {
      ids.resize(m);
      std::iota(ids.begin(), ids.end(), record_id{0});
    }
    if (freqs.empty())
      for (std::size_t i = 0; i < m; ++i)
        freqs.push_back(static_cast<std::uint64_t>(std::llround(std::max(1.0, matrix(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i))))));
    if ((matrix - matrix.transpose()).cwiseAbs().maxCoeff() > 1e-12)
      throw data_error("kernel matrix is not symmetric");
    DppKernel k;
    k.matrix_ = std::move(matrix);
    k.ids_ = std::move(ids);
    k.freqs_ = std::move(freqs);
    k.check_sizes(m);
    return k;
  }

  std::size_t size() const { return ids_.size(); }
  const std::vector<record_id>& member_ids() const { return ids_; }
  const std::vector<std::uint64_t>& frequencies() const { return freqs_; }
  bool has_factor() const { return factor_.size() > 0; }
  const RowMatrix& factor() const { return factor_; }

  Eigen::MatrixXd matrix() const {
    if (has_factor()) return factor_ * factor_.transpose();
    return matrix_;
  }

  /// det(K_A) for the principal minor on `rows`.
  double minor_determinant(const std::vector<std::size_t>& rows) const {
    const auto n = static_cast<Eigen::Index>(rows.size());
    Eigen::MatrixXd sub(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) sub(i, j) = entry(rows[static_cast<std::size_t>(i)], rows[static_cast<std::size_t>(j)]);
    return n == 0 ? 1.0 : sub.determinant();
  }

  double entry(std::size_t i, std::size_t j) const {
    if (has_factor())
      return factor_.row(static_cast<Eigen::Index>(i)).dot(factor_.row(static_cast<Eigen::Index>(j)));
    return matrix_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }

private:
  void check_sizes(std::size_t m) const {
    if (ids_.size() != m || freqs_.size() != m)
      throw data_error("kernel ids/frequencies do not match kernel size");
  }

  RowMatrix factor_;
  Eigen::MatrixXd matrix_;
  std::vector<record_id> ids_;
  std::vector<std::uint64_t> freqs_;
};

/// Rows sqrt(f_i) * u_i, so K_ij = sqrt(f_i f_j) cos(u_i, u_j) and K_ii = f_i.
inline DppKernel build_kernel(const Cluster& cluster, const EmbeddedCorpus& corpus) {
  if (cluster.member_ids.empty()) throw data_error("cannot build a kernel for an empty cluster");
  const auto m = static_cast<Eigen::Index>(cluster.member_ids.size());
  RowMatrix e(m, static_cast<Eigen::Index>(corpus.dim()));
  std::vector<std::uint64_t> freqs;
  freqs.reserve(cluster.member_ids.size());
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto id = cluster.member_ids[static_cast<std::size_t>(i)];
    if (id >= corpus.size()) throw data_error("cluster member " + std::to_string(id) + " outside corpus");
    const auto f = corpus.record(id).frequency;
    auto v = corpus.vector(id);
    e.row(i) = std::sqrt(static_cast<double>(f)) * v / v.norm();
    freqs.push_back(f);
  }
  return DppKernel::from_factor(std::move(e), cluster.member_ids, std::move(freqs));
}

/// Nonzero part of the kernel spectrum: eigenvalues (ascending) and the
/// matching orthonormal eigenvectors as columns of an m-row matrix. Tall
/// factors go through the d x d dual kernel E^T E.
struct KernelSpectrum {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
};

inline KernelSpectrum spectrum(const DppKernel& kernel, double rel_tol = 1e-10) {
  KernelSpectrum out;
  const bool dual = kernel.has_factor() && kernel.factor().rows() > kernel.factor().cols();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
  if (dual) {
    Eigen::MatrixXd c = kernel.factor().transpose() * kernel.factor();
    solver.compute(c);
  } else {
    solver.compute(kernel.matrix());
  }
  if (solver.info() != Eigen::Success) throw data_error("kernel eigendecomposition failed");
  const Eigen::VectorXd& lambda = solver.eigenvalues();
  const double lmax = lambda.size() ? lambda.maxCoeff() : 0.0;
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < lambda.size(); ++i)
    if (lmax > 0.0 && lambda(i) > rel_tol * lmax) keep.push_back(i);

  const auto m = static_cast<Eigen::Index>(kernel.size());
  out.values.resize(static_cast<Eigen::Index>(keep.size()));
  out.vectors.resize(m, static_cast<Eigen::Index>(keep.size()));
  for (std::size_t c = 0; c < keep.size(); ++c) {
    const auto i = keep[c];
    const auto col = static_cast<Eigen::Index>(c);
    out.values(col) = lambda(i);
    if (dual) {
      Eigen::VectorXd v = kernel.factor() * solver.eigenvectors().col(i);
      out.vectors.col(col) = v / std::sqrt(lambda(i));
    } else {
      out.vectors.col(col) = solver.eigenvectors().col(i);
    }
  }
  return out;
}

struct DppSample {
  std::vector<std::size_t> rows;       // kernel row indices, in draw order
  std::vector<record_id> member_ids;   // same order as rows
  bool padded = false;                 // rank(K) < k or m < k
};

namespace detail {

// e_l(lambda_1..lambda_n) for l <= k, n <= N; table[l][n].
inline std::vector<std::vector<double>> elementary_symmetric(const Eigen::VectorXd& lambda,
                                                             std::size_t k) {
  const auto n = static_cast<std::size_t>(lambda.size());
  std::vector<std::vector<double>> e(k + 1, std::vector<double>(n + 1, 0.0));
  std::fill(e[0].begin(), e[0].end(), 1.0);
  for (std::size_t l = 1; l <= k; ++l)
    for (std::size_t j = 1; j <= n; ++j)
      e[l][j] = e[l][j - 1] + lambda(static_cast<Eigen::Index>(j - 1)) * e[l - 1][j - 1];
  return e;
}

inline std::vector<std::size_t> top_frequency_rows(const std::vector<std::uint64_t>& freqs,
                                                   const std::vector<record_id>& ids,
                                                   std::size_t k,
                                                   const std::vector<std::size_t>& exclude = {}) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < freqs.size(); ++i)
    if (std::find(exclude.begin(), exclude.end(), i) == exclude.end()) rows.push_back(i);
  std::sort(rows.begin(), rows.end(), [&](std::size_t a, std::size_t b) {
    return freqs[a] != freqs[b] ? freqs[a] > freqs[b] : ids[a] < ids[b];
  });
  if (rows.size() > k) rows.resize(k);
  return rows;
}

// Draws one item per column of `v` (orthonormal columns), projecting the
// chosen item out of the span after every draw.
inline std::vector<std::size_t> sample_projection(Eigen::MatrixXd v, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<std::size_t> chosen;
  const Eigen::Index m = v.rows();
  Eigen::VectorXd prob(m);
  while (v.cols() > 0) {
    prob = v.rowwise().squaredNorm();
    for (auto c : chosen) prob(static_cast<Eigen::Index>(c)) = 0.0;
    const double peak = prob.maxCoeff();
    for (Eigen::Index i = 0; i < m; ++i)
      if (prob(i) < 1e-12 * peak) prob(i) = 0.0;
    const double total = prob.sum();
    double u = unif(rng) * total;
    Eigen::Index pick = -1;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (prob(i) == 0.0) continue;
      pick = i;
      u -= prob(i);
      if (u < 0.0) break;
    }
    chosen.push_back(static_cast<std::size_t>(pick));
    if (v.cols() == 1) break;

    Eigen::Index pivot = 0;
    v.row(pick).cwiseAbs().maxCoeff(&pivot);
    Eigen::VectorXd pivot_col = v.col(pivot);
    Eigen::RowVectorXd scaled = v.row(pick) / v(pick, pivot);
    v -= pivot_col * scaled;
    // drop the (now zero) pivot column and re-orthonormalize
    Eigen::MatrixXd rest(m, v.cols() - 1);
    for (Eigen::Index j = 0, c = 0; j < v.cols(); ++j)
      if (j != pivot) rest.col(c++) = v.col(j);
    for (Eigen::Index j = 0; j < rest.cols(); ++j) {
      for (Eigen::Index i = 0; i < j; ++i) rest.col(j) -= rest.col(i).dot(rest.col(j)) * rest.col(i);
      const double norm = rest.col(j).norm();
      if (norm > 0.0) rest.col(j) /= norm;
    }
    v = std::move(rest);
  }
  return chosen;
}

}  // namespace detail

/// Draws a size-k subset from the k-DPP with L-ensemble `kernel`:
/// P(A) = det(K_A) / sum_{|B|=k} det(K_B). Eigenvectors are chosen with
/// elementary-symmetric-polynomial marginals, then items are drawn by
/// sequential projection. If k exceeds rank(K) the rank-many DPP items are
/// topped up by frequency; if k exceeds the member count all members are
/// returned. Both cases set `padded`.
inline DppSample dpp_sample(const DppKernel& kernel, std::size_t k, std::uint64_t seed) {
  if (k < 1) throw usage_error("k must be at least 1");
  const std::size_t m = kernel.size();
  if (m == 0) throw data_error("cannot sample from an empty kernel");
  DppSample out;
  auto finish = [&] {
    for (auto r : out.rows) out.member_ids.push_back(kernel.member_ids()[r]);
    return out;
  };
  if (k >= m) {
    out.rows.resize(m);
    std::iota(out.rows.begin(), out.rows.end(), std::size_t{0});
    out.padded = k > m;
    return finish();
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  KernelSpectrum spec = spectrum(kernel);
  const auto rank = static_cast<std::size_t>(spec.values.size());
  const std::size_t draw = std::min(k, rank);

  std::vector<Eigen::Index> selected;
  if (draw == rank) {
    for (std::size_t i = 0; i < rank; ++i) selected.push_back(static_cast<Eigen::Index>(i));
  } else {
    Eigen::VectorXd lambda = spec.values / spec.values.maxCoeff();
    auto e = detail::elementary_symmetric(lambda, draw);
    std::size_t remaining = draw;
    for (std::size_t n = rank; n >= 1 && remaining > 0; --n) {
      double marg = n == remaining
                        ? 1.0
                        : lambda(static_cast<Eigen::Index>(n - 1)) * e[remaining - 1][n - 1] / e[remaining][n];
      if (unif(rng) < marg) {
        selected.push_back(static_cast<Eigen::Index>(n - 1));
        --remaining;
      }
    }
  }

  Eigen::MatrixXd v(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(selected.size()));
  for (std::size_t c = 0; c < selected.size(); ++c)
    v.col(static_cast<Eigen::Index>(c)) = spec.vectors.col(selected[c]);
  if (v.cols() > 0) out.rows = detail::sample_projection(std::move(v), rng);

  if (out.rows.size() < k) {
    out.padded = true;
    auto extra = detail::top_frequency_rows(kernel.frequencies(), kernel.member_ids(),
                                            k - out.rows.size(), out.rows);
    out.rows.insert(out.rows.end(), extra.begin(), extra.end());
  }
  return finish();
}

struct RepresentativeSet {
  std::vector<UtteranceRecord> records;  // descending frequency, then id
  rep_method method = rep_method::dpp;
  bool padded = false;
};

inline std::uint64_t cluster_seed(std::uint64_t seed, const Cluster& cluster) {
  std::uint64_t state = seed ^ (0x9e3779b97f4a7c15ULL * (cluster.member_ids.empty() ? 0 : cluster.member_ids.front() + 1));
  return detail::splitmix64(state);
}

inline RepresentativeSet select_representatives(const Cluster& cluster, const EmbeddedCorpus& corpus,
                                                const RepConfig& config) {
  config.validate();
  if (cluster.member_ids.empty()) throw data_error("cannot select representatives of an empty cluster");
  const auto& ids = cluster.member_ids;
  std::vector<std::uint64_t> freqs;
  for (auto id : ids) {
    if (id >= corpus.size()) throw data_error("cluster member " + std::to_string(id) + " outside corpus");
    freqs.push_back(corpus.record(id).frequency);
  }

  RepresentativeSet out;
  out.method = config.method;
  std::vector<std::size_t> rows;
  const std::uint64_t seed = cluster_seed(config.seed, cluster);
  switch (config.method) {
    case rep_method::dpp: {
      auto sample = dpp_sample(build_kernel(cluster, corpus), config.k, seed);
      rows = std::move(sample.rows);
      out.padded = sample.padded;
      break;
    }
    case rep_method::random: {
      std::vector<std::size_t> all(ids.size());
      std::iota(all.begin(), all.end(), std::size_t{0});
      std::mt19937_64 rng(seed);
      std::sample(all.begin(), all.end(), std::back_inserter(rows), config.k, rng);
      break;
    }
    case rep_method::top_frequency:
      rows = detail::top_frequency_rows(freqs, ids, config.k);
      break;
  }
  std::sort(rows.begin(), rows.end(), [&](std::size_t a, std::size_t b) {
    return freqs[a] != freqs[b] ? freqs[a] > freqs[b] : ids[a] < ids[b];
  });
  for (auto r : rows) {
    UtteranceRecord rec = corpus.record(ids[r]);
    out.records.push_back(std::move(rec));
  }
  return out;
}

}  // namespace utterclust

#endif  // UTTERCLUST_REPRESENTATIVES_HPP
