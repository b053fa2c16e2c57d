#ifndef UTTERCLUST_RBC_HPP
#define UTTERCLUST_RBC_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "utterclust/embedding.hpp"
#include "utterclust/error.hpp"

namespace utterclust {

struct RbcConfig {
  double min_sim = 0.75;   // cosine "radius" a record must exceed to join a cluster
  std::size_t min_size = 1;   // smallest surviving cluster
  std::size_t max_iter = 10;  // passes over the data
  std::uint64_t seed = 0;     // processing-order shuffle

  void validate() const {
    if (!(min_sim > 0.0 && min_sim < 1.0)) throw usage_error("min_sim must lie in (0, 1)");
    if (min_size < 1) throw usage_error("min_size must be at least 1");
    if (max_iter < 1) throw usage_error("max_iter must be at least 1");
  }
};

struct Cluster {
  std::uint32_t cluster_id = 0;
  std::vector<record_id> member_ids;  // ascending
  Eigen::RowVectorXd centroid;        // arithmetic mean of member vectors
  std::size_t size = 0;
  std::uint64_t weight = 0;           // sum of member frequencies
};

struct Clustering {
  std::vector<Cluster> clusters;
  std::vector<record_id> outlier_ids;  // ascending
  RbcConfig config;
  std::size_t iterations_run = 0;
  bool converged = false;
  // Cosine to the centroid of the cluster a record joined, measured at the
  // moment of that assignment during the last pass (1 for cluster founders).
  std::vector<double> assignment_similarity;

  std::size_t clustered_count() const {
    std::size_t n = 0;
    for (const auto& c : clusters) n += c.size;
    return n;
  }
};

namespace detail {

// Single RBC run over unit-length rows. Clusters live in "slots" ordered by
// creation; slots emptied during a pass stay as zero rows until the next pass
// compacts them, so creation order (the tie-break) is always slot order.
//
// Record similarities are batched: the dot products of a block of records
// against all slots existing at block start come from one matrix product, and
// any slot touched since then is rescored exactly against its current sum.
class RbcRun {
public:
  RbcRun(const RowMatrix& x, double min_sim) : x_(x), min_sim_(min_sim) {
    slot_of_.assign(static_cast<std::size_t>(x.rows()), -1);
    assign_sim_.assign(static_cast<std::size_t>(x.rows()), 0.0);
  }

  // Returns the number of records whose cluster changed.
  std::size_t pass(std::span<const std::size_t> order) {
    compact();
    std::size_t changes = 0;
    const Eigen::Index d = x_.cols();
    RowMatrix block_x;
    RowMatrix scores;
    for (std::size_t begin = 0; begin < order.size(); begin += block_size) {
      const std::size_t end = std::min(order.size(), begin + block_size);
      const auto rows = static_cast<Eigen::Index>(end - begin);
      const std::size_t k0 = slots_;
      block_x.resize(rows, d);
      for (std::size_t j = begin; j < end; ++j)
        block_x.row(static_cast<Eigen::Index>(j - begin)) = x_.row(static_cast<Eigen::Index>(order[j]));
      if (k0 > 0)
        scores.noalias() = block_x * sums_.topRows(static_cast<Eigen::Index>(k0)).transpose();
      ++stamp_;
      for (std::size_t j = begin; j < end; ++j)
        changes += assign(order[j], static_cast<Eigen::Index>(j - begin), k0, scores);
    }
    return changes;
  }

  // Drops emptied slots, preserving creation order.
  void compact() {
    std::vector<int> remap(slots_, -1);
    std::size_t live = 0;
    for (std::size_t s = 0; s < slots_; ++s) {
      if (count_[s] == 0) continue;
      if (live != s) {
        sums_.row(static_cast<Eigen::Index>(live)) = sums_.row(static_cast<Eigen::Index>(s));
        count_[live] = count_[s];
        inv_norm_[live] = inv_norm_[s];
      }
      remap[s] = static_cast<int>(live++);
    }
    for (std::size_t s = live; s < slots_; ++s) {
      sums_.row(static_cast<Eigen::Index>(s)).setZero();
      count_[s] = 0;
      inv_norm_[s] = 0.0;
    }
    slots_ = live;
    for (auto& s : slot_of_)
      if (s >= 0) s = remap[static_cast<std::size_t>(s)];
  }

  const std::vector<int>& slot_of() const { return slot_of_; }
  const std::vector<double>& assignment_similarity() const { return assign_sim_; }
  std::size_t slots() const { return slots_; }
  std::uint32_t count(std::size_t slot) const { return count_[slot]; }
  auto sum(std::size_t slot) const { return sums_.row(static_cast<Eigen::Index>(slot)); }

private:
  static constexpr std::size_t block_size = 128;

  double slot_sim(std::size_t slot, std::size_t rec) const {
    return x_.row(static_cast<Eigen::Index>(rec)).dot(sums_.row(static_cast<Eigen::Index>(slot))) *
           inv_norm_[slot];
  }

  void refresh_norm(std::size_t slot) {
    if (count_[slot] == 0) {
      sums_.row(static_cast<Eigen::Index>(slot)).setZero();
      inv_norm_[slot] = 0.0;
    } else {
      double norm = sums_.row(static_cast<Eigen::Index>(slot)).norm();
      inv_norm_[slot] = norm > 0.0 ? 1.0 / norm : 0.0;
    }
    touched_[slot] = stamp_;
  }

  std::size_t assign(std::size_t rec, Eigen::Index row, std::size_t k0, const RowMatrix& scores) {
    const auto r = static_cast<Eigen::Index>(rec);
    const int old = slot_of_[rec];
    bool old_died = false;
    if (old >= 0) {
      const auto o = static_cast<std::size_t>(old);
      sums_.row(old) -= x_.row(r);
      --count_[o];
      old_died = count_[o] == 0;
      refresh_norm(o);
    }

    int best = -1;
    double best_sim = min_sim_;
    for (std::size_t c = 0; c < k0; ++c) {
      double sim = touched_[c] == stamp_ ? slot_sim(c, rec) : scores(row, static_cast<Eigen::Index>(c)) * inv_norm_[c];
      if (sim > best_sim) {
        best_sim = sim;
        best = static_cast<int>(c);
      }
    }
    for (std::size_t c = k0; c < slots_; ++c) {
      double sim = slot_sim(c, rec);
      if (sim > best_sim) {
        best_sim = sim;
        best = static_cast<int>(c);
      }
    }

    if (best >= 0) {
      const auto b = static_cast<std::size_t>(best);
      sums_.row(best) += x_.row(r);
      ++count_[b];
      refresh_norm(b);
      assign_sim_[rec] = best_sim;
    } else {
      best = static_cast<int>(new_slot(rec));
      assign_sim_[rec] = 1.0;
    }
    slot_of_[rec] = best;
    // A record that left a singleton and founded a new one keeps its cluster.
    const bool unchanged = best == old || (old_died && count_[static_cast<std::size_t>(best)] == 1);
    return unchanged ? 0 : 1;
  }

  std::size_t new_slot(std::size_t rec) {
    if (slots_ == static_cast<std::size_t>(sums_.rows())) {
      const Eigen::Index cap = std::max<Eigen::Index>(64, 2 * sums_.rows());
      sums_.conservativeResize(cap, x_.cols());
      count_.resize(static_cast<std::size_t>(cap), 0);
      inv_norm_.resize(static_cast<std::size_t>(cap), 0.0);
      touched_.resize(static_cast<std::size_t>(cap), 0);
    }
    const std::size_t s = slots_++;
    sums_.row(static_cast<Eigen::Index>(s)) = x_.row(static_cast<Eigen::Index>(rec));
    count_[s] = 1;
    refresh_norm(s);
    return s;
  }

  const RowMatrix& x_;
  double min_sim_;
  RowMatrix sums_;
  std::vector<std::uint32_t> count_;
  std::vector<double> inv_norm_;
  std::vector<std::uint64_t> touched_;
  std::uint64_t stamp_ = 0;
  std::size_t slots_ = 0;
  std::vector<int> slot_of_;
  std::vector<double> assign_sim_;
};

// Orders clusters by descending size, ties by smallest member id, and numbers
// them 0..k-1.
inline void renumber(std::vector<Cluster>& clusters) {
  std::sort(clusters.begin(), clusters.end(), [](const Cluster& a, const Cluster& b) {
    if (a.size != b.size) return a.size > b.size;
    return a.member_ids.front() < b.member_ids.front();
  });
  for (std::size_t i = 0; i < clusters.size(); ++i)
    clusters[i].cluster_id = static_cast<std::uint32_t>(i);
}

}  // namespace detail

/// Radius-based clustering over unit-length rows of `vectors`. `weights`
/// (one per row, may be empty) only feeds Cluster::weight. Row indices are the
/// record ids of the result.
inline Clustering rbc_cluster_rows(const RowMatrix& vectors, std::span<const std::uint64_t> weights,
                                   const RbcConfig& config) {
  config.validate();
  const auto n = static_cast<std::size_t>(vectors.rows());
  if (n == 0) throw data_error("cannot cluster an empty corpus");
  if (!vectors.allFinite()) throw data_error("NaN or infinite value in input vectors");
  if (!weights.empty() && weights.size() != n)
    throw data_error("weight count does not match vector count");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(config.seed);
  std::shuffle(order.begin(), order.end(), rng);

  detail::RbcRun run(vectors, config.min_sim);
  Clustering result;
  result.config = config;
  for (std::size_t it = 0; it < config.max_iter; ++it) {
    std::size_t changes = run.pass(order);
    result.iterations_run = it + 1;
    if (changes == 0) {
      result.converged = true;
      break;
    }
  }

  run.compact();
  std::vector<Cluster> slots(run.slots());
  for (std::size_t rec = 0; rec < n; ++rec) {
    auto& c = slots[static_cast<std::size_t>(run.slot_of()[rec])];
    c.member_ids.push_back(static_cast<record_id>(rec));
    c.weight += weights.empty() ? 1 : weights[rec];
  }
  for (std::size_t s = 0; s < slots.size(); ++s) {
    auto& c = slots[s];
    c.size = c.member_ids.size();
    c.centroid = run.sum(s) / static_cast<double>(run.count(s));
    if (c.size >= config.min_size) {
      result.clusters.push_back(std::move(c));
    } else {
      result.outlier_ids.insert(result.outlier_ids.end(), c.member_ids.begin(), c.member_ids.end());
    }
  }
  std::sort(result.outlier_ids.begin(), result.outlier_ids.end());
  detail::renumber(result.clusters);
  result.assignment_similarity = run.assignment_similarity();
  return result;
}

inline std::vector<std::uint64_t> frequencies(const EmbeddedCorpus& corpus) {
  std::vector<std::uint64_t> w;
  w.reserve(corpus.size());
  for (const auto& r : corpus.records()) w.push_back(r.frequency);
  return w;
}

inline Clustering rbc_cluster(const EmbeddedCorpus& corpus, const RbcConfig& config) {
  auto w = frequencies(corpus);
  return rbc_cluster_rows(corpus.vectors(), w, config);
}

/// Exact mean of the member rows.
inline Eigen::RowVectorXd mean_of(const RowMatrix& vectors, std::span<const record_id> members) {
  Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(vectors.cols());
  for (auto id : members) sum += vectors.row(static_cast<Eigen::Index>(id));
  return sum / static_cast<double>(members.size());
}

/// Throws data_error unless clusters and outliers partition 0..n-1.
inline void check_partition(const Clustering& c, std::size_t n) {
  std::vector<char> seen(n, 0);
  auto mark = [&](record_id id) {
    if (id >= n) throw data_error("record id " + std::to_string(id) + " outside the corpus");
    if (seen[id]) throw data_error("record id " + std::to_string(id) + " appears twice");
    seen[id] = 1;
  };
  for (const auto& cl : c.clusters)
    for (auto id : cl.member_ids) mark(id);
  for (auto id : c.outlier_ids) mark(id);
  for (std::size_t i = 0; i < n; ++i)
    if (!seen[i]) throw data_error("record id " + std::to_string(i) + " is not assigned");
}

inline nlohmann::json to_json(const Clustering& c) {
  nlohmann::json clusters = nlohmann::json::array();
  for (const auto& cl : c.clusters)
    clusters.push_back({{"id", cl.cluster_id},
                        {"member_ids", cl.member_ids},
                        {"size", cl.size},
                        {"weight", cl.weight}});
  return {{"clusters", std::move(clusters)},
          {"outliers", c.outlier_ids},
          {"converged", c.converged},
          {"iterations", c.iterations_run}};
}

/// Binary centroid sidecar: "UCCENT01", u64 cluster count, u64 dim, then the
/// centroids row by row as little-endian float64.
inline void write_centroids(const std::string& path, const Clustering& c) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot write centroid file: " + path);
  const std::uint64_t k = c.clusters.size();
  const std::uint64_t d = k ? static_cast<std::uint64_t>(c.clusters.front().centroid.size()) : 0;
  out.write("UCCENT01", 8);
  out.write(reinterpret_cast<const char*>(&k), sizeof k);
  out.write(reinterpret_cast<const char*>(&d), sizeof d);
  for (const auto& cl : c.clusters)
    out.write(reinterpret_cast<const char*>(cl.centroid.data()),
              static_cast<std::streamsize>(sizeof(double) * d));
}

}  // namespace utterclust

#endif  // UTTERCLUST_RBC_HPP
