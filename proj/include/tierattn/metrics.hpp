#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "tierattn/error.hpp"
#include "tierattn/matrix.hpp"

namespace tierattn {

/// Shannon entropies in nats.
struct EntropySummary {
  std::vector<double> per_token;
  double mean = 0.0;
};

/// H(p) = -sum p ln p per row, with 0 ln 0 = 0.
inline EntropySummary attention_entropy(const RealMatrix& weights, double row_tol = 1e-6) {
  if (weights.rows() == 0) throw MetricError("attention_entropy: empty weights");
  EntropySummary s;
  s.per_token.reserve(weights.rows());
  for (std::size_t r = 0; r < weights.rows(); ++r) {
    double sum = 0.0;
    double h = 0.0;
    for (double p : weights.row(r)) {
      if (!(p >= 0.0)) {
        throw MetricError("attention_entropy: negative or NaN weight in row " + std::to_string(r));
      }
      sum += p;
      if (p > 0.0) h -= p * std::log(p);
    }
    if (std::abs(sum - 1.0) > row_tol) {
      throw MetricError("attention_entropy: row " + std::to_string(r) + " sums to " +
                        std::to_string(sum));
    }
    s.per_token.push_back(h);
  }
  s.mean = std::accumulate(s.per_token.begin(), s.per_token.end(), 0.0) /
           static_cast<double>(s.per_token.size());
  return s;
}

inline double frobenius_norm(std::span<const double> values) {
  double acc = 0.0;
  for (double x : values) acc += x * x;
  return std::sqrt(acc);
}

/// ||probe - orig||_F / ||orig||_F.
inline double attention_logits_difference(const RealMatrix& probe, const RealMatrix& orig) {
  if (probe.rows() != orig.rows() || probe.cols() != orig.cols()) {
    throw DimensionError("attention_logits_difference: shapes differ");
  }
  const double denom = frobenius_norm(orig.values());
  if (denom == 0.0) throw MetricError("attention_logits_difference: original logits have zero norm");
  double acc = 0.0;
  auto p = probe.values();
  auto o = orig.values();
  for (std::size_t i = 0; i < p.size(); ++i) acc += (p[i] - o[i]) * (p[i] - o[i]);
  return std::sqrt(acc) / denom;
}

/// |h_probe - h_orig| / |h_orig| on mean attention entropies.
inline double context_sensitivity_score(double h_probe, double h_orig) {
  if (h_orig == 0.0) throw MetricError("context_sensitivity_score: original entropy is zero");
  return std::abs(h_probe - h_orig) / std::abs(h_orig);
}

/// 1-based ranks; tied values share the average of their positions.
inline std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t t = i; t <= j; ++t) r[idx[t]] = avg;
    i = j + 1;
  }
  return r;
}

/// Pearson correlation of the average-rank vectors.
inline double spearman_rho(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("spearman_rho: length mismatch");
  if (a.size() < 2) throw MetricError("spearman_rho: need at least two values");
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double mean = (static_cast<double>(a.size()) + 1.0) / 2.0;
  double cov = 0.0;
  double va = 0.0;
  double vb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    const double da = ra[i] - mean;
    const double db = rb[i] - mean;
    cov += da * db;
    va += da * da;
    vb += db * db;
  }
  if (va == 0.0 || vb == 0.0) throw MetricError("spearman_rho: constant sequence");
  return cov / std::sqrt(va * vb);
}

}  // namespace tierattn
