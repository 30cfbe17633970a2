#pragma once

// Engineered gait features: event detection (heel strikes), spatiotemporal
// gait parameters, a postural sway battery, and correlation-based redundancy
// reduction. All estimators return NaN when the signal does not support them
// (too few events, too few frames) rather than guessing.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "gaitmae/skeleton.hpp"
#include "gaitmae/taxonomy.hpp"

namespace gaitmae {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

enum class Side { kLeft, kRight };

inline int ankle_joint(Side s) { return s == Side::kLeft ? 14 : 18; }
inline int foot_joint(Side s) { return s == Side::kLeft ? 15 : 19; }

namespace detail {

inline double median_of(std::vector<double> v) {
  if (v.empty()) return kNaN;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double mean_of(const std::vector<double>& v) {
  if (v.empty()) return kNaN;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace detail

// Heel strikes for one side: local minima of smoothed ankle height that fall
// below the median height, thinned to a minimum separation by keeping deeper
// minima first. Smoothing (centered moving average, ~0.25 s) suppresses
// capture noise on the flat stance phase, where raw noise would otherwise
// mint several sub-median minima per stride. Returns ascending frame
// indices. Plateau minima contribute their first frame.
inline std::vector<int> detect_heel_strikes(const SkeletonSequence& seq, Side side,
                                            double min_separation_s = 0.3,
                                            double smooth_window_s = 0.25) {
  seq.validate();
  if (seq.joints != kJointCount)
    throw std::invalid_argument("detect_heel_strikes: expected canonical 26 joints");
  const int j = ankle_joint(side);
  const int n = seq.frames;
  if (n < 3) return {};

  std::vector<double> raw(static_cast<std::size_t>(n));
  for (int f = 0; f < n; ++f) raw[static_cast<std::size_t>(f)] = seq.at(f, j, 1);
  const int half = std::max(1, static_cast<int>(0.5 * smooth_window_s * seq.fps));
  std::vector<double> y(static_cast<std::size_t>(n));
  for (int f = 0; f < n; ++f) {
    const int lo = std::max(0, f - half);
    const int hi = std::min(n - 1, f + half);
    double s = 0.0;
    for (int k = lo; k <= hi; ++k) s += raw[static_cast<std::size_t>(k)];
    y[static_cast<std::size_t>(f)] = s / static_cast<double>(hi - lo + 1);
  }
  const double med = detail::median_of(y);

  std::vector<int> candidates;
  for (int f = 1; f + 1 < n; ++f) {
    const double v = y[static_cast<std::size_t>(f)];
    if (v >= med) continue;
    const double prev = y[static_cast<std::size_t>(f - 1)];
    const double next = y[static_cast<std::size_t>(f + 1)];
    // First frame of a (possibly flat) local minimum.
    if (prev > v && next >= v) candidates.push_back(f);
  }

  // Deepest-first greedy thinning at the separation radius.
  std::vector<int> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    const double va = y[static_cast<std::size_t>(candidates[static_cast<std::size_t>(a)])];
    const double vb = y[static_cast<std::size_t>(candidates[static_cast<std::size_t>(b)])];
    if (va != vb) return va < vb;
    return candidates[static_cast<std::size_t>(a)] < candidates[static_cast<std::size_t>(b)];
  });
  const double min_sep_frames = min_separation_s * seq.fps;
  std::vector<int> accepted;
  for (int oi : order) {
    const int f = candidates[static_cast<std::size_t>(oi)];
    bool ok = true;
    for (int g : accepted)
      if (std::abs(f - g) < min_sep_frames) {
        ok = false;
        break;
      }
    if (ok) accepted.push_back(f);
  }
  std::sort(accepted.begin(), accepted.end());
  return accepted;
}

// Steps per minute from pooled left+right strikes: (count - 1) events per
// spanned interval. NaN when fewer than 4 pooled strikes.
inline double cadence_steps_per_min(const SkeletonSequence& seq,
                                    double min_separation_s = 0.3) {
  auto left = detect_heel_strikes(seq, Side::kLeft, min_separation_s);
  auto right = detect_heel_strikes(seq, Side::kRight, min_separation_s);
  std::vector<int> pooled;
  pooled.reserve(left.size() + right.size());
  pooled.insert(pooled.end(), left.begin(), left.end());
  pooled.insert(pooled.end(), right.begin(), right.end());
  std::sort(pooled.begin(), pooled.end());
  if (pooled.size() < 4) return kNaN;
  const double span_s = static_cast<double>(pooled.back() - pooled.front()) / seq.fps;
  if (span_s <= 0.0) return kNaN;
  return (static_cast<double>(pooled.size()) - 1.0) / span_s * 60.0;
}

// Coefficient of variation of pooled inter-strike intervals; NaN below 4
// strikes or when the mean interval is zero.
inline double step_time_cv(const SkeletonSequence& seq, double min_separation_s = 0.3) {
  auto left = detect_heel_strikes(seq, Side::kLeft, min_separation_s);
  auto right = detect_heel_strikes(seq, Side::kRight, min_separation_s);
  std::vector<int> pooled;
  pooled.insert(pooled.end(), left.begin(), left.end());
  pooled.insert(pooled.end(), right.begin(), right.end());
  std::sort(pooled.begin(), pooled.end());
  if (pooled.size() < 4) return kNaN;
  std::vector<double> iv;
  for (std::size_t i = 1; i < pooled.size(); ++i)
    iv.push_back(static_cast<double>(pooled[i] - pooled[i - 1]) / seq.fps);
  const double m = detail::mean_of(iv);
  if (!(m > 0.0)) return kNaN;
  double ss = 0.0;
  for (double x : iv) ss += (x - m) * (x - m);
  const double sd = std::sqrt(ss / static_cast<double>(iv.size()));
  return sd / m;
}

// Mean per-cycle peak-to-peak anterior excursion of the foot relative to the
// pelvis, cycles delimited by consecutive same-side strikes. NaN below 2
// strikes.
inline double stride_length_m(const SkeletonSequence& seq, Side side,
                              double min_separation_s = 0.3) {
  const auto strikes = detect_heel_strikes(seq, side, min_separation_s);
  if (strikes.size() < 2) return kNaN;
  const int fj = foot_joint(side);
  std::vector<double> p2p;
  for (std::size_t i = 0; i + 1 < strikes.size(); ++i) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (int f = strikes[i]; f <= strikes[i + 1]; ++f) {
      const double rel = seq.at(f, fj, 2) - seq.at(f, kPelvis, 2);
      lo = std::min(lo, rel);
      hi = std::max(hi, rel);
    }
    p2p.push_back(hi - lo);
  }
  return detail::mean_of(p2p);
}

// Mean peak-to-peak anterior wrist excursion relative to the chest.
inline double arm_swing_amp_m(const SkeletonSequence& seq) {
  seq.validate();
  if (seq.joints != kJointCount)
    throw std::invalid_argument("arm_swing_amp_m: expected canonical 26 joints");
  if (seq.frames < 2) return kNaN;
  double amp = 0.0;
  for (int wrist : {7, 11}) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (int f = 0; f < seq.frames; ++f) {
      const double rel = seq.at(f, wrist, 2) - seq.at(f, 2, 2);
      lo = std::min(lo, rel);
      hi = std::max(hi, rel);
    }
    amp += hi - lo;
  }
  return amp / 2.0;
}

// Postural sway battery over a horizontal center-of-mass proxy trace.
// Conventions: displacements are taken about the trace mean; the 95%
// confidence ellipse area uses the chi-square(2 dof) 0.95 quantile with the
// sample covariance.
struct SwayMetrics {
  double rms_distance_m = kNaN;
  double sway_path_m = kNaN;
  double mean_velocity_mps = kNaN;
  double ellipse_area_95_m2 = kNaN;
  double amplitude_ap_m = kNaN;
  double amplitude_ml_m = kNaN;
};

inline constexpr double kChi2Q95Dof2 = 5.991464547107979;

inline SwayMetrics sway_metrics_from_trace(const std::vector<double>& ap,
                                           const std::vector<double>& ml, double fps) {
  if (ap.size() != ml.size())
    throw std::invalid_argument("sway_metrics: trace length mismatch");
  if (!(fps > 0.0)) throw std::invalid_argument("sway_metrics: fps must be positive");
  SwayMetrics m;
  const std::size_t n = ap.size();
  if (n < 2) return m;

  const double map = detail::mean_of(ap);
  const double mml = detail::mean_of(ml);
  double ss = 0.0, saa = 0.0, smm = 0.0, sam = 0.0, path = 0.0;
  double ap_lo = ap[0], ap_hi = ap[0], ml_lo = ml[0], ml_hi = ml[0];
  for (std::size_t i = 0; i < n; ++i) {
    const double a = ap[i] - map;
    const double b = ml[i] - mml;
    ss += a * a + b * b;
    saa += a * a;
    smm += b * b;
    sam += a * b;
    ap_lo = std::min(ap_lo, ap[i]);
    ap_hi = std::max(ap_hi, ap[i]);
    ml_lo = std::min(ml_lo, ml[i]);
    ml_hi = std::max(ml_hi, ml[i]);
    if (i > 0) path += std::hypot(ap[i] - ap[i - 1], ml[i] - ml[i - 1]);
  }
  const double nd = static_cast<double>(n);
  m.rms_distance_m = std::sqrt(ss / nd);
  m.sway_path_m = path;
  m.mean_velocity_mps = path / ((nd - 1.0) / fps);
  const double det =
      (saa / (nd - 1.0)) * (smm / (nd - 1.0)) - (sam / (nd - 1.0)) * (sam / (nd - 1.0));
  m.ellipse_area_95_m2 = 3.14159265358979323846 * kChi2Q95Dof2 * std::sqrt(std::max(0.0, det));
  m.amplitude_ap_m = ap_hi - ap_lo;
  m.amplitude_ml_m = ml_hi - ml_lo;
  return m;
}

// CoM proxy: centroid of the four torso joints, horizontal components.
inline SwayMetrics sway_metrics(const SkeletonSequence& seq) {
  seq.validate();
  if (seq.joints != kJointCount)
    throw std::invalid_argument("sway_metrics: expected canonical 26 joints");
  std::vector<double> ap(static_cast<std::size_t>(seq.frames));
  std::vector<double> ml(static_cast<std::size_t>(seq.frames));
  for (int f = 0; f < seq.frames; ++f) {
    double x = 0.0, z = 0.0;
    for (int j = 0; j < 4; ++j) {
      x += seq.at(f, j, 0);
      z += seq.at(f, j, 2);
    }
    ml[static_cast<std::size_t>(f)] = x / 4.0;
    ap[static_cast<std::size_t>(f)] = z / 4.0;
  }
  return sway_metrics_from_trace(ap, ml, seq.fps);
}

// Repetition count for sit-to-stand: rising zero crossings of the demeaned,
// smoothed torso height.
inline double sit_to_stand_reps(const SkeletonSequence& seq) {
  seq.validate();
  if (seq.joints != kJointCount)
    throw std::invalid_argument("sit_to_stand_reps: expected canonical 26 joints");
  const int n = seq.frames;
  if (n < 3) return kNaN;
  std::vector<double> y(static_cast<std::size_t>(n));
  for (int f = 0; f < n; ++f) {
    double s = 0.0;
    for (int j = 0; j < 4; ++j) s += seq.at(f, j, 1);
    y[static_cast<std::size_t>(f)] = s / 4.0;
  }
  // Moving-average smoothing over ~0.5 s.
  const int half = std::max(1, static_cast<int>(0.25 * seq.fps));
  std::vector<double> sm(static_cast<std::size_t>(n));
  for (int f = 0; f < n; ++f) {
    const int lo = std::max(0, f - half);
    const int hi = std::min(n - 1, f + half);
    double s = 0.0;
    for (int k = lo; k <= hi; ++k) s += y[static_cast<std::size_t>(k)];
    sm[static_cast<std::size_t>(f)] = s / static_cast<double>(hi - lo + 1);
  }
  const double mean = detail::mean_of(sm);
  int reps = 0;
  for (int f = 1; f < n; ++f)
    if (sm[static_cast<std::size_t>(f - 1)] <= mean && sm[static_cast<std::size_t>(f)] > mean)
      ++reps;
  return static_cast<double>(reps);
}

// Peak-to-peak vertical travel of the torso centroid.
inline double vertical_range_m(const SkeletonSequence& seq) {
  seq.validate();
  if (seq.frames < 1) return kNaN;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (int f = 0; f < seq.frames; ++f) {
    double s = 0.0;
    for (int j = 0; j < 4; ++j) s += seq.at(f, j, 1);
    lo = std::min(lo, s / 4.0);
    hi = std::max(hi, s / 4.0);
  }
  return hi - lo;
}

struct NamedFeature {
  std::string name;
  double value;
};

// Activity-specific feature battery. Names are stable identifiers; order is
// deterministic. Gait parameters only make sense for rhythmic activities,
// sway for stance, repetitions for sit-to-stand.
inline std::vector<NamedFeature> extract_features(const SkeletonSequence& seq) {
  seq.validate();
  std::vector<NamedFeature> out;
  const SwayMetrics sw = sway_metrics(seq);
  const bool rhythmic = is_treadmill(seq.activity) ||
                        seq.activity == Activity::kStationaryGait;
  if (rhythmic) {
    out.push_back({"cadence_spm", cadence_steps_per_min(seq)});
    out.push_back({"step_time_cv", step_time_cv(seq)});
    out.push_back({"stride_len_left_m", stride_length_m(seq, Side::kLeft)});
    out.push_back({"stride_len_right_m", stride_length_m(seq, Side::kRight)});
    out.push_back({"arm_swing_amp_m", arm_swing_amp_m(seq)});
    out.push_back({"vertical_range_m", vertical_range_m(seq)});
  }
  if (seq.activity == Activity::kSitToStand) {
    const double reps = sit_to_stand_reps(seq);
    out.push_back({"sts_reps", reps});
    out.push_back({"sts_rate_per_min",
                   seq.frames > 1 ? reps / ((seq.frames - 1) / seq.fps / 60.0) : kNaN});
    out.push_back({"vertical_range_m", vertical_range_m(seq)});
  }
  out.push_back({"sway_rms_m", sw.rms_distance_m});
  out.push_back({"sway_path_m", sw.sway_path_m});
  out.push_back({"sway_velocity_mps", sw.mean_velocity_mps});
  out.push_back({"sway_area95_m2", sw.ellipse_area_95_m2});
  out.push_back({"sway_amp_ap_m", sw.amplitude_ap_m});
  out.push_back({"sway_amp_ml_m", sw.amplitude_ml_m});
  return out;
}

// Redundancy reduction over feature columns. Zero-variance columns (and
// columns with no complete observations) are dropped outright. Remaining
// columns are clustered by complete linkage on distance 1 - |r|, cutting the
// dendrogram so that every within-cluster pair satisfies |r| > threshold;
// each cluster keeps the member with the lowest mean |r| to features outside
// the cluster, ties broken by lexicographically smaller name. Correlations
// use rows with no NaN in either column pair (pairwise deletion).
struct RedundancyResult {
  std::vector<int> kept;                    // ascending original indices
  std::vector<std::vector<int>> clusters;   // final clusters, original indices
  std::vector<int> dropped_zero_variance;   // ascending original indices
};

inline RedundancyResult reduce_redundancy(
    const std::vector<std::vector<double>>& columns,
    const std::vector<std::string>& names, double threshold = 0.85) {
  if (columns.size() != names.size())
    throw std::invalid_argument("reduce_redundancy: names/columns size mismatch");
  if (threshold <= 0.0 || threshold >= 1.0)
    throw std::invalid_argument("reduce_redundancy: threshold outside (0, 1)");
  const int p = static_cast<int>(columns.size());
  RedundancyResult res;
  if (p == 0) return res;
  const std::size_t n = columns[0].size();
  for (const auto& c : columns)
    if (c.size() != n)
      throw std::invalid_argument("reduce_redundancy: ragged columns");

  auto finite_variance = [&](int j) {
    double sum = 0.0, sumsq = 0.0;
    std::size_t cnt = 0;
    for (double v : columns[static_cast<std::size_t>(j)]) {
      if (std::isnan(v)) continue;
      sum += v;
      sumsq += v * v;
      ++cnt;
    }
    if (cnt < 2) return 0.0;
    const double mean = sum / static_cast<double>(cnt);
    return std::max(0.0, sumsq / static_cast<double>(cnt) - mean * mean);
  };

  std::vector<int> active;
  for (int j = 0; j < p; ++j) {
    if (finite_variance(j) > 0.0)
      active.push_back(j);
    else
      res.dropped_zero_variance.push_back(j);
  }
  const int m = static_cast<int>(active.size());
  if (m == 0) return res;

  auto abs_corr = [&](int a, int b) {
    const auto& x = columns[static_cast<std::size_t>(a)];
    const auto& y = columns[static_cast<std::size_t>(b)];
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    std::size_t cnt = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (std::isnan(x[i]) || std::isnan(y[i])) continue;
      sx += x[i];
      sy += y[i];
      sxx += x[i] * x[i];
      syy += y[i] * y[i];
      sxy += x[i] * y[i];
      ++cnt;
    }
    if (cnt < 2) return 0.0;
    const double c = static_cast<double>(cnt);
    const double vx = sxx - sx * sx / c;
    const double vy = syy - sy * sy / c;
    if (vx <= 0.0 || vy <= 0.0) return 0.0;
    const double r = (sxy - sx * sy / c) / std::sqrt(vx * vy);
    return std::abs(std::max(-1.0, std::min(1.0, r)));
  };

  std::vector<std::vector<double>> r(static_cast<std::size_t>(m),
                                     std::vector<double>(static_cast<std::size_t>(m), 1.0));
  for (int a = 0; a < m; ++a)
    for (int b = a + 1; b < m; ++b)
      r[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] =
          r[static_cast<std::size_t>(b)][static_cast<std::size_t>(a)] =
              abs_corr(active[static_cast<std::size_t>(a)], active[static_cast<std::size_t>(b)]);

  // Complete-linkage agglomeration: merge while the closest cluster pair is
  // within the cut distance (1 - threshold, exclusive).
  std::vector<std::vector<int>> clusters;  // member positions into `active`
  for (int a = 0; a < m; ++a) clusters.push_back({a});
  const double cut = 1.0 - threshold;
  auto linkage = [&](const std::vector<int>& A, const std::vector<int>& B) {
    double d = 0.0;
    for (int a : A)
      for (int b : B)
        d = std::max(d, 1.0 - r[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)]);
    return d;
  };
  for (;;) {
    double best = std::numeric_limits<double>::infinity();
    int bi = -1, bj = -1;
    for (std::size_t i = 0; i < clusters.size(); ++i)
      for (std::size_t j = i + 1; j < clusters.size(); ++j) {
        const double d = linkage(clusters[i], clusters[j]);
        if (d < best) {
          best = d;
          bi = static_cast<int>(i);
          bj = static_cast<int>(j);
        }
      }
    if (bi < 0 || best >= cut) break;
    auto merged = clusters[static_cast<std::size_t>(bi)];
    merged.insert(merged.end(), clusters[static_cast<std::size_t>(bj)].begin(),
                  clusters[static_cast<std::size_t>(bj)].end());
    std::sort(merged.begin(), merged.end());
    clusters.erase(clusters.begin() + bj);
    clusters[static_cast<std::size_t>(bi)] = std::move(merged);
  }

  for (const auto& cl : clusters) {
    int best_pos = -1;
    double best_score = std::numeric_limits<double>::infinity();
    std::string best_name;
    for (int a : cl) {
      double sum = 0.0;
      int cnt = 0;
      for (int b = 0; b < m; ++b) {
        if (std::find(cl.begin(), cl.end(), b) != cl.end()) continue;
        sum += r[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)];
        ++cnt;
      }
      const double score = cnt > 0 ? sum / cnt : 0.0;
      const std::string& nm = names[static_cast<std::size_t>(active[static_cast<std::size_t>(a)])];
      if (score < best_score || (score == best_score && nm < best_name)) {
        best_score = score;
        best_pos = a;
        best_name = nm;
      }
    }
    res.kept.push_back(active[static_cast<std::size_t>(best_pos)]);
    std::vector<int> orig;
    for (int a : cl) orig.push_back(active[static_cast<std::size_t>(a)]);
    res.clusters.push_back(std::move(orig));
  }
  std::sort(res.kept.begin(), res.kept.end());
  std::sort(res.clusters.begin(), res.clusters.end());
  return res;
}

}  // namespace gaitmae
