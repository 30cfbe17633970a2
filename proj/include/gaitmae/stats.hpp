#pragma once

// Scalar statistics for the evaluation harness: correlation and ranking
// metrics, Student t tail probabilities, paired t tests, and
// Benjamini-Hochberg q-values.
//
// Metrics return quiet NaN when undefined (zero variance, single class,
// too few samples) so callers can treat those cells as missing.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace gaitmae {

inline double stats_nan() { return std::numeric_limits<double>::quiet_NaN(); }

inline double vec_mean(const std::vector<double>& v) {
  if (v.empty()) return stats_nan();
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Median of a copy; NaN on empty input.
inline double vec_median(std::vector<double> v) {
  if (v.empty()) return stats_nan();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  if (n % 2 == 1) return v[n / 2];
  return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Pearson correlation; NaN if either side has zero variance or n < 2.
inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size())
    throw std::invalid_argument("pearson: length mismatch");
  const std::size_t n = x.size();
  if (n < 2) return stats_nan();
  const double mx = vec_mean(x), my = vec_mean(y);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) return stats_nan();
  return sxy / std::sqrt(sxx * syy);
}

// Ranks starting at 1; tied values share the average of their rank range.
inline std::vector<double> average_ranks(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double shared = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = shared;
    i = j + 1;
  }
  return ranks;
}

// Spearman correlation: Pearson on average ranks.
inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size())
    throw std::invalid_argument("spearman: length mismatch");
  return pearson(average_ranks(x), average_ranks(y));
}

// Coefficient of determination, 1 - SS_res / SS_tot; NaN when y_true has
// zero variance.
inline double r2_score(const std::vector<double>& y_true,
                       const std::vector<double>& y_pred) {
  if (y_true.size() != y_pred.size())
    throw std::invalid_argument("r2_score: length mismatch");
  const std::size_t n = y_true.size();
  if (n < 2) return stats_nan();
  const double m = vec_mean(y_true);
  double ss_tot = 0.0, ss_res = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ss_tot += (y_true[i] - m) * (y_true[i] - m);
    ss_res += (y_true[i] - y_pred[i]) * (y_true[i] - y_pred[i]);
  }
  if (ss_tot <= 0.0) return stats_nan();
  return 1.0 - ss_res / ss_tot;
}

// Area under the ROC curve via the rank-sum identity with average ranks,
// which counts tied score pairs as one half. Labels must be 0 or 1; NaN
// when only one class is present.
inline double auc_score(const std::vector<double>& labels,
                        const std::vector<double>& scores) {
  if (labels.size() != scores.size())
    throw std::invalid_argument("auc_score: length mismatch");
  double n_pos = 0.0, n_neg = 0.0;
  for (double l : labels) {
    if (l == 1.0)
      n_pos += 1.0;
    else if (l == 0.0)
      n_neg += 1.0;
    else
      throw std::invalid_argument("auc_score: labels must be 0 or 1");
  }
  if (n_pos == 0.0 || n_neg == 0.0) return stats_nan();
  const std::vector<double> ranks = average_ranks(scores);
  double rank_sum_pos = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == 1.0) rank_sum_pos += ranks[i];
  return (rank_sum_pos - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

// Regularized incomplete beta I_x(a, b) by the Lentz continued fraction.
inline double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  // Use the symmetry I_x(a,b) = 1 - I_{1-x}(b,a) where the fraction
  // converges fastest.
  if (x > (a + 1.0) / (a + b + 2.0))
    return 1.0 - incomplete_beta(b, a, 1.0 - x);
  const double log_front = a * std::log(x) + b * std::log1p(-x) +
                           std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b);
  const double tiny = 1e-300;
  double c = 1.0;
  double d = 1.0 - (a + b) * x / (a + 1.0);
  if (std::fabs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 400; ++m) {
    const double dm = static_cast<double>(m);
    double num = dm * (b - dm) * x / ((a + 2.0 * dm - 1.0) * (a + 2.0 * dm));
    d = 1.0 + num * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + num / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    num = -(a + dm) * (a + b + dm) * x / ((a + 2.0 * dm) * (a + 2.0 * dm + 1.0));
    d = 1.0 + num * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + num / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::fabs(delta - 1.0) < 1e-15) break;
  }
  return std::exp(log_front) * h / a;
}

// CDF of Student's t with df degrees of freedom.
inline double student_t_cdf(double t, double df) {
  if (df <= 0.0) throw std::invalid_argument("student_t_cdf: df must be positive");
  if (t == 0.0) return 0.5;
  const double x = df / (df + t * t);
  const double tail = 0.5 * incomplete_beta(df / 2.0, 0.5, x);
  return t > 0.0 ? 1.0 - tail : tail;
}

inline double two_sided_t_pvalue(double t, double df) {
  if (!std::isfinite(t)) return 0.0;
  const double x = df / (df + t * t);
  return incomplete_beta(df / 2.0, 0.5, x);
}

struct TTestResult {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;
};

// Two-sided paired t test on matched samples. Zero-variance differences
// give t = 0, p = 1 when the mean difference is zero, else p = 0.
inline TTestResult paired_t_test(const std::vector<double>& a,
                                 const std::vector<double>& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("paired_t_test: length mismatch");
  const std::size_t n = a.size();
  if (n < 2) throw std::invalid_argument("paired_t_test: need at least 2 pairs");
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
  const double m = vec_mean(d);
  double s2 = 0.0;
  for (double v : d) s2 += (v - m) * (v - m);
  s2 /= static_cast<double>(n - 1);
  TTestResult res;
  res.df = static_cast<double>(n - 1);
  if (s2 <= 0.0) {
    res.t = 0.0;
    res.p = (m == 0.0) ? 1.0 : 0.0;
    return res;
  }
  res.t = m / std::sqrt(s2 / static_cast<double>(n));
  res.p = two_sided_t_pvalue(res.t, res.df);
  return res;
}

// Two-sided p-value for a Pearson correlation of r over n samples, from
// t = r * sqrt((n-2) / (1-r^2)) with n-2 degrees of freedom.
inline double pearson_p_value(double r, std::size_t n) {
  if (n < 3) return stats_nan();
  if (std::isnan(r)) return stats_nan();
  if (std::fabs(r) >= 1.0) return 0.0;
  const double df = static_cast<double>(n - 2);
  const double t = r * std::sqrt(df / (1.0 - r * r));
  return two_sided_t_pvalue(t, df);
}

// Benjamini-Hochberg q-values, returned in the input order:
// q_i = min over j >= i (after sorting p ascending) of m * p_j / j, capped
// at 1. NaN p-values keep NaN q-values and do not count toward m.
inline std::vector<double> bh_fdr(const std::vector<double>& pvalues) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < pvalues.size(); ++i)
    if (!std::isnan(pvalues[i])) idx.push_back(i);
  std::vector<double> q(pvalues.size(), stats_nan());
  const std::size_t m = idx.size();
  if (m == 0) return q;
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t a, std::size_t b) { return pvalues[a] < pvalues[b]; });
  double running = 1.0;
  for (std::size_t k = m; k-- > 0;) {
    // Rank m has factor m/m = 1 exactly; avoid the multiply-divide rounding.
    const double adj = (k + 1 == m)
                           ? pvalues[idx[k]]
                           : static_cast<double>(m) * pvalues[idx[k]] /
                                 static_cast<double>(k + 1);
    running = std::min(running, std::min(adj, 1.0));
    q[idx[k]] = running;
  }
  return q;
}

}  // namespace gaitmae
