#pragma once

// Brute-force reference computations used as test oracles. They share no
// code with the library beyond plain data types.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <tuple>
#include <utility>
#include <vector>

namespace oracle {

using Dense = std::vector<std::vector<double>>;

/// Dense count matrix of adjacent pairs.
inline Dense transition_counts(const std::vector<std::vector<unsigned>>& sessions, std::size_t n) {
  Dense c(n, std::vector<double>(n, 0.0));
  for (const auto& s : sessions) {
    for (std::size_t t = 1; t < s.size(); ++t) c[s[t - 1]][s[t]] += 1.0;
  }
  return c;
}

inline Dense log1p_dense(const Dense& c) {
  Dense out = c;
  for (auto& row : out) {
    for (double& x : row) x = x > 0.0 ? std::log(1.0 + x) : 0.0;
  }
  return out;
}

inline Dense row_normalize(const Dense& m) {
  Dense out = m;
  for (auto& row : out) {
    double s = 0.0;
    for (double x : row) s += x;
    if (s > 0.0) {
      for (double& x : row) x /= s;
    }
  }
  return out;
}

inline Dense col_normalize(const Dense& m) {
  Dense out = m;
  const std::size_t n = m.size();
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += m[i][j];
    if (s > 0.0) {
      for (std::size_t i = 0; i < n; ++i) out[i][j] /= s;
    }
  }
  return out;
}

/// Per-gap insertion distribution over every track, by direct product.
inline std::vector<double> gap_distribution(const Dense& row_norm, const Dense& col_norm, unsigned src, unsigned tgt) {
  const std::size_t n = row_norm.size();
  std::vector<double> p(n, 0.0);
  double total = 0.0;
  for (std::size_t v = 0; v < n; ++v) {
    p[v] = row_norm[src][v] * col_norm[v][tgt];
    total += p[v];
  }
  if (total > 0.0) {
    for (double& x : p) x /= total;
  }
  return p;
}

/// Rank by sorting (score desc, id asc) and locating the target.
inline std::size_t rank_by_sort(const std::vector<double>& scores, std::size_t target) {
  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] != scores[b] ? scores[a] > scores[b] : a < b;
  });
  return static_cast<std::size_t>(std::find(order.begin(), order.end(), target) - order.begin()) + 1;
}

struct Metrics {
  double recall, mrr, ndcg;
};

/// Metrics from the sorted top-K list.
inline Metrics metrics_from_top_k(const std::vector<double>& scores, std::size_t target, std::size_t k) {
  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  Metrics m{0, 0, 0};
  for (std::size_t pos = 0; pos < std::min(k, order.size()); ++pos) {
    if (order[pos] == target) {
      m.recall = 1.0;
      m.mrr = 1.0 / static_cast<double>(pos + 1);
      m.ndcg = 1.0 / std::log2(static_cast<double>(pos + 2));
    }
  }
  return m;
}

inline double unique_rate(const std::vector<std::vector<unsigned>>& sessions) {
  std::map<std::pair<unsigned, unsigned>, int> count;
  int total = 0;
  for (const auto& s : sessions) {
    for (std::size_t t = 1; t < s.size(); ++t) {
      ++count[{s[t - 1], s[t]}];
      ++total;
    }
  }
  int unique = 0;
  for (const auto& [k, c] : count) unique += c == 1;
  return 100.0 * unique / total;
}

/// VICReg pieces computed with explicit loops.
inline double variance_term(const Eigen::MatrixXd& m, double eps) {
  const auto n = m.rows(), d = m.cols();
  if (n < 2) return 0.0;
  double out = 0.0;
  for (Eigen::Index j = 0; j < d; ++j) {
    double mean = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) mean += m(i, j);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) var += (m(i, j) - mean) * (m(i, j) - mean);
    var /= static_cast<double>(n - 1);
    out += std::max(0.0, 1.0 - std::sqrt(var + eps));
  }
  return out / static_cast<double>(d);
}

inline double covariance_term(const Eigen::MatrixXd& m) {
  const auto n = m.rows(), d = m.cols();
  if (n < 2) return 0.0;
  std::vector<double> mean(static_cast<std::size_t>(d), 0.0);
  for (Eigen::Index j = 0; j < d; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) mean[static_cast<std::size_t>(j)] += m(i, j) / static_cast<double>(n);
  }
  double out = 0.0;
  for (Eigen::Index a = 0; a < d; ++a) {
    for (Eigen::Index b = 0; b < d; ++b) {
      if (a == b) continue;
      double c = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        c += (m(i, a) - mean[static_cast<std::size_t>(a)]) * (m(i, b) - mean[static_cast<std::size_t>(b)]);
      }
      c /= static_cast<double>(n - 1);
      out += c * c;
    }
  }
  return out / static_cast<double>(d);
}

inline double sq_dist(const Eigen::MatrixXd& a, Eigen::Index i, const Eigen::MatrixXd& b, Eigen::Index j) {
  double s = 0.0;
  for (Eigen::Index c = 0; c < a.cols(); ++c) s += (a(i, c) - b(j, c)) * (a(i, c) - b(j, c));
  return s;
}

/// Full distance matrix, then per-row argmin (lowest index on ties), then
/// the kappa smallest by (distance, query row).
inline std::vector<std::pair<std::size_t, std::size_t>> nn_top_kappa(const Eigen::MatrixXd& from,
                                                                     const Eigen::MatrixXd& to, std::size_t kappa) {
  std::vector<std::tuple<double, std::size_t, std::size_t>> best;
  for (Eigen::Index i = 0; i < from.rows(); ++i) {
    Eigen::Index arg = 0;
    for (Eigen::Index j = 1; j < to.rows(); ++j) {
      if (sq_dist(from, i, to, j) < sq_dist(from, i, to, arg)) arg = j;
    }
    best.emplace_back(sq_dist(from, i, to, arg), static_cast<std::size_t>(i), static_cast<std::size_t>(arg));
  }
  std::sort(best.begin(), best.end());
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t k = 0; k < std::min(kappa, best.size()); ++k) out.emplace_back(std::get<1>(best[k]), std::get<2>(best[k]));
  return out;
}

/// Max over entries of |analytic - numeric| / max(|analytic|, |numeric|,
/// floor) with numeric from central differences of `f` around `x`. The
/// floor keeps entries that are zero up to rounding from dominating.
inline double gradient_error(Eigen::MatrixXd& x, const Eigen::MatrixXd& analytic, const std::function<double()>& f,
                             double h = 1e-4, double floor = 1e-3) {
  double worst = 0.0;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      const double keep = x(r, c);
      x(r, c) = keep + h;
      const double up = f();
      x(r, c) = keep - h;
      const double down = f();
      x(r, c) = keep;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic(r, c);
      const double denom = std::max({floor, std::abs(a), std::abs(numeric)});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace oracle
