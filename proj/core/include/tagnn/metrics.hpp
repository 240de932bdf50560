#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <string>
#include <vector>

#include "tagnn/error.hpp"

namespace tagnn {

/// Ranking quality over a test set, reported as percentages: hit rate of the
/// label inside the top-k list, and mean reciprocal rank where ranks beyond
/// k contribute zero.
struct Metrics {
  double precision_at_k = 0.0;  // percentage in [0, 100]
  double mrr_at_k = 0.0;        // percentage in [0, 100]
  int k = 20;
  size_t examples = 0;
};

/// Indices of the k highest scores, descending; equal scores are ordered by
/// ascending item index so rankings are reproducible.
template <typename T>
std::vector<int> rank_topk(const std::vector<T>& scores, int k) {
  const int m = static_cast<int>(scores.size());
  if (k < 1 || k > m)
    raise(ErrorKind::contract,
          "top-k size " + std::to_string(k) + " out of range [1," + std::to_string(m) + "]");
  for (T s : scores)
    if (!std::isfinite(static_cast<double>(s)))
      raise(ErrorKind::contract, "non-finite score in ranking input");
  std::vector<int> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), [&](int a, int b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  idx.resize(static_cast<size_t>(k));
  return idx;
}

/// Per-example outcome: whether the label made the top-k cut, and its
/// reciprocal rank (1-based; zero when beyond the cut).
struct HitRR {
  int hit = 0;
  double rr = 0.0;
};

inline HitRR metrics_for(const std::vector<int>& ranked, int label, int k) {
  if (static_cast<int>(ranked.size()) < k)
    raise(ErrorKind::contract, "ranked list shorter than k=" + std::to_string(k));
  for (int r = 0; r < k; ++r)
    if (ranked[static_cast<size_t>(r)] == label) return {1, 1.0 / (r + 1)};
  return {0, 0.0};
}

/// Streaming aggregation of per-example outcomes into percentage metrics.
class MetricsAccumulator {
 public:
  explicit MetricsAccumulator(int k) : k_(k) {
    if (k < 1) raise(ErrorKind::config, "metrics cutoff k must be >= 1");
  }

  void add(const HitRR& h) {
    hits_ += h.hit;
    rr_sum_ += h.rr;
    ++n_;
  }

  size_t count() const { return n_; }

  Metrics finish() const {
    if (n_ == 0) raise(ErrorKind::contract, "no test examples to aggregate");
    Metrics m;
    m.k = k_;
    m.examples = n_;
    m.precision_at_k = 100.0 * static_cast<double>(hits_) / static_cast<double>(n_);
    m.mrr_at_k = 100.0 * rr_sum_ / static_cast<double>(n_);
    return m;
  }

 private:
  int k_;
  size_t n_ = 0;
  long long hits_ = 0;
  double rr_sum_ = 0.0;
};

/// Percentage formatted to two decimals, matching the reporting convention.
inline std::string format_pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

/// Human-readable summary table.
inline std::string metrics_table(const Metrics& m) {
  const std::string k = std::to_string(m.k);
  std::string out;
  out += "metric        value\n";
  out += "P@" + k + "          " + format_pct(m.precision_at_k) + "\n";
  out += "MRR@" + k + "        " + format_pct(m.mrr_at_k) + "\n";
  out += "examples      " + std::to_string(m.examples) + "\n";
  return out;
}

/// Machine-readable key=value block.
inline std::string metrics_kv(const Metrics& m) {
  const std::string k = std::to_string(m.k);
  return "precision_at_" + k + "=" + format_pct(m.precision_at_k) + "\n" +   //
         "mrr_at_" + k + "=" + format_pct(m.mrr_at_k) + "\n" +               //
         "examples=" + std::to_string(m.examples) + "\n";
}

}  // namespace tagnn
