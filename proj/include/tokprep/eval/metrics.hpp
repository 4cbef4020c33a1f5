#pragma once

// Similarity and rank-correlation metrics. All reductions run in double in a
// fixed order.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "tokprep/error.hpp"

namespace tokprep::eval {

inline double cosine(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw ShapeError("cosine of vectors with different dimensions");
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += static_cast<double>(a[i]) * b[i];
    aa += static_cast<double>(a[i]) * a[i];
    bb += static_cast<double>(b[i]) * b[i];
  }
  if (aa == 0.0 || bb == 0.0) throw DomainError("cosine of a zero vector");
  // sqrt(aa * bb) makes cosine(v, v) exactly 1.
  return std::clamp(ab / std::sqrt(aa * bb), -1.0, 1.0);
}

// 1-based ranks; tied values share the mean of the ranks they span.
inline std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = r;
    i = j + 1;
  }
  return ranks;
}

inline double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ShapeError("pearson of sequences with different lengths");
  if (x.size() < 2) throw DomainError("correlation needs at least two points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw DomainError("correlation of a constant sequence is undefined");
  return std::clamp(sxy / (std::sqrt(sxx) * std::sqrt(syy)), -1.0, 1.0);
}

// Pearson correlation of average ranks.
inline double spearman(std::span<const double> pred, std::span<const double> gold) {
  if (pred.size() != gold.size()) throw ShapeError("spearman of sequences with different lengths");
  if (pred.size() < 2) throw DomainError("spearman needs at least two points");
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (std::isnan(pred[i]) || std::isnan(gold[i])) throw DomainError("spearman input contains NaN");
  }
  const auto rp = average_ranks(pred);
  const auto rg = average_ranks(gold);
  return pearson(rp, rg);
}

}  // namespace tokprep::eval
