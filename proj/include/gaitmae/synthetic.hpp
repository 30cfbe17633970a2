#pragma once

// Synthetic motion-capture generator. A WalkerParams vector drives a bank of
// sinusoidal joint oscillators on top of a fixed rest pose; a latent trait
// vector in [-1,1]^k maps affinely onto the physical parameters so that
// downstream analyses have known ground truth. Coordinates are meters with
// +x lateral (right), +y vertical, +z anterior.

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

#include "gaitmae/rng.hpp"
#include "gaitmae/skeleton.hpp"
#include "gaitmae/tables.hpp"
#include "gaitmae/taxonomy.hpp"

namespace gaitmae {

inline constexpr std::array<std::array<double, 3>, kJointCount> kRestPose = {{
    {0.000, 0.000, 0.000},    // pelvis
    {0.000, 0.150, 0.010},    // spine_navel
    {0.000, 0.350, 0.020},    // spine_chest
    {0.000, 0.550, 0.010},    // neck
    {-0.050, 0.520, 0.020},   // clavicle_left
    {-0.200, 0.500, 0.000},   // shoulder_left
    {-0.230, 0.240, 0.010},   // elbow_left
    {-0.250, 0.000, 0.020},   // wrist_left
    {0.050, 0.520, 0.020},    // clavicle_right
    {0.200, 0.500, 0.000},    // shoulder_right
    {0.230, 0.240, 0.010},    // elbow_right
    {0.250, 0.000, 0.020},    // wrist_right
    {-0.100, -0.050, 0.000},  // hip_left
    {-0.110, -0.480, 0.010},  // knee_left
    {-0.120, -0.860, -0.020}, // ankle_left
    {-0.120, -0.930, 0.100},  // foot_left
    {0.100, -0.050, 0.000},   // hip_right
    {0.110, -0.480, 0.010},   // knee_right
    {0.120, -0.860, -0.020},  // ankle_right
    {0.120, -0.930, 0.100},   // foot_right
    {0.000, 0.680, 0.020},    // head
    {0.000, 0.640, 0.120},    // nose
    {-0.035, 0.680, 0.100},   // eye_left
    {-0.080, 0.650, 0.020},   // ear_left
    {0.035, 0.680, 0.100},    // eye_right
    {0.080, 0.650, 0.020},    // ear_right
}};

struct WalkerParams {
  double cadence_spm = 100.0;   // steps per minute, both feet pooled
  double stride_len_m = 1.0;    // peak-to-peak anterior foot excursion
  double arm_swing_rad = 0.3;   // sagittal shoulder swing amplitude
  double torso_sway_m = 0.05;   // mediolateral sway at head height
  double head_bob_m = 0.025;    // vertical head oscillation amplitude
  double noise_std_m = 0.01;    // additive coordinate noise
  std::vector<double> traits;   // latent traits in [-1, 1]

  void validate() const {
    auto in = [](double v, double lo, double hi) { return v >= lo && v <= hi; };
    if (!in(cadence_spm, 30.0, 200.0))
      throw std::invalid_argument("walker: cadence_spm outside [30, 200]");
    if (!(stride_len_m > 0.0) || stride_len_m > 2.5)
      throw std::invalid_argument("walker: stride_len_m outside (0, 2.5]");
    if (!in(arm_swing_rad, 0.0, 1.5))
      throw std::invalid_argument("walker: arm_swing_rad outside [0, 1.5]");
    if (!in(torso_sway_m, 0.0, 0.3))
      throw std::invalid_argument("walker: torso_sway_m outside [0, 0.3]");
    if (!in(head_bob_m, 0.0, 0.2))
      throw std::invalid_argument("walker: head_bob_m outside [0, 0.2]");
    if (!in(noise_std_m, 0.0, 0.1))
      throw std::invalid_argument("walker: noise_std_m outside [0, 0.1]");
    for (double t : traits)
      if (!in(t, -1.0, 1.0)) throw std::invalid_argument("walker: trait outside [-1, 1]");
  }

  // Affine trait-to-parameter map; traits beyond index 5 have no kinematic
  // expression and exist as null controls for downstream analyses.
  static WalkerParams from_traits(const std::vector<double>& traits) {
    if (traits.size() < 6)
      throw std::invalid_argument("from_traits: need at least 6 traits");
    WalkerParams p;
    p.traits = traits;
    p.cadence_spm = 100.0 + 20.0 * traits[0];
    p.stride_len_m = 1.0 + 0.4 * traits[1];
    p.arm_swing_rad = 0.3 + 0.25 * traits[2];
    p.torso_sway_m = 0.05 + 0.04 * traits[3];
    p.head_bob_m = 0.025 + 0.02 * traits[4];
    p.noise_std_m = 0.008 + 0.007 * traits[5];
    p.validate();
    return p;
  }
};

namespace detail {

// Height-proportional weight for sway applied to the upper body. Arm joints
// ride on the shoulder girdle, so they inherit the shoulder's weight.
inline double sway_weight(int joint) {
  double y = kRestPose[static_cast<std::size_t>(joint)][1];
  if (joint >= 4 && joint <= 11) y = 0.50;
  const double w = y / 0.68;
  return w < 0.0 ? 0.0 : (w > 1.0 ? 1.0 : w);
}

}  // namespace detail

// Render one recording. Deterministic in (params, activity, frames, fps,
// seed); the seed fixes gait phase and coordinate noise.
inline SkeletonSequence generate_walk(const WalkerParams& params, Activity activity,
                                      int frames, double fps, std::uint64_t seed,
                                      std::string subject_id = "S0001",
                                      std::string visit_id = "V1") {
  params.validate();
  if (frames < 1) throw std::invalid_argument("generate_walk: frames must be >= 1");
  if (!(fps > 0.0)) throw std::invalid_argument("generate_walk: fps must be positive");

  SkeletonSequence seq;
  seq.subject_id = std::move(subject_id);
  seq.visit_id = std::move(visit_id);
  seq.activity = activity;
  seq.fps = fps;
  seq.frames = frames;
  seq.data.assign(seq.expected_size(), 0.0);

  Rng rng(derive_seed(seed, 0x77A1Cu));
  const double two_pi = 6.283185307179586476925286766559;
  const double phase0 = rng.uniform(0.0, two_pi);
  const double sway_ph1 = rng.uniform(0.0, two_pi);
  const double sway_ph2 = rng.uniform(0.0, two_pi);
  Rng noise_rng(derive_seed(seed, 0x4015Eu));

  const double stride_hz = params.cadence_spm / 120.0;  // strides/s per side
  const bool gaitlike =
      is_treadmill(activity) || activity == Activity::kStationaryGait;
  // Walking in place keeps the rhythm but barely travels.
  const double ap_scale = activity == Activity::kStationaryGait ? 0.2 : 1.0;
  const double arm_scale = activity == Activity::kStationaryGait ? 0.6 : 1.0;
  const double lift = 0.12 * params.stride_len_m;
  const double sts_hz = params.cadence_spm / 240.0;

  double phase = phase0;
  for (int f = 0; f < frames; ++f) {
    const double t = static_cast<double>(f) / fps;
    if (f > 0) {
      // Self-paced walking drifts slowly around the nominal cadence.
      double hz = stride_hz;
      if (activity == Activity::kTreadmillSelfPace)
        hz *= 1.0 + 0.03 * std::sin(two_pi * 0.05 * t);
      phase += two_pi * hz / fps;
    }

    double pos[kJointCount][3];
    for (int j = 0; j < kJointCount; ++j)
      for (int c = 0; c < 3; ++c) pos[j][c] = kRestPose[static_cast<std::size_t>(j)][c];

    if (gaitlike) {
      for (int side = 0; side < 2; ++side) {
        const double ph = phase + (side == 1 ? 3.14159265358979323846 : 0.0);
        const int hip = side == 0 ? 12 : 16;
        const double ap = ap_scale * 0.5 * params.stride_len_m * std::sin(ph);
        const double up = lift * 0.5 * (1.0 - std::cos(ph - 1.5707963267948966));
        pos[hip + 1][2] += 0.5 * ap;  // knee
        pos[hip + 1][1] += 0.5 * up;
        pos[hip + 2][2] += ap;  // ankle
        pos[hip + 2][1] += up;
        pos[hip + 3][2] += ap;  // foot
        pos[hip + 3][1] += up;

        // Contralateral arm: rotate elbow/wrist offsets about the shoulder.
        const double theta = arm_scale * params.arm_swing_rad * std::sin(ph + 3.14159265358979323846);
        const int shoulder = side == 0 ? 5 : 9;
        const double ct = std::cos(theta), st = std::sin(theta);
        for (int k = 1; k <= 2; ++k) {
          const int j = shoulder + k;
          const double dy = kRestPose[static_cast<std::size_t>(j)][1] -
                            kRestPose[static_cast<std::size_t>(shoulder)][1];
          const double dz = kRestPose[static_cast<std::size_t>(j)][2] -
                            kRestPose[static_cast<std::size_t>(shoulder)][2];
          pos[j][1] = kRestPose[static_cast<std::size_t>(shoulder)][1] + dy * ct - dz * st;
          pos[j][2] = kRestPose[static_cast<std::size_t>(shoulder)][2] + dy * st + dz * ct;
        }
      }
      // Mediolateral weight shift at stride frequency, growing with height.
      for (int j = 1; j < kJointCount; ++j)
        pos[j][0] += params.torso_sway_m * detail::sway_weight(j) * std::sin(phase);
      // Head bobs once per step (twice per stride).
      for (int j = 20; j < kJointCount; ++j)
        pos[j][1] += params.head_bob_m * std::sin(2.0 * phase);
    } else if (activity == Activity::kSitToStand) {
      const double envelope = 0.5 * (1.0 - std::cos(two_pi * sts_hz * t));
      for (int j = 0; j < kJointCount; ++j) {
        const bool upper = j <= 11 || j >= 20;
        if (upper && j != kPelvis) pos[j][1] += 0.22 * envelope;
      }
      pos[13][2] += 0.15 * envelope;  // knees travel forward out of the chair
      pos[17][2] += 0.15 * envelope;
    } else {  // balance_stand: quiet-stance sway only
      const double ml = 0.8 * std::sin(two_pi * 0.28 * t + sway_ph1) +
                        0.4 * std::sin(two_pi * 0.11 * t + sway_ph2);
      const double ap = 0.8 * (0.8 * std::sin(two_pi * 0.23 * t + sway_ph2) +
                               0.4 * std::sin(two_pi * 0.09 * t + sway_ph1));
      for (int j = 1; j < kJointCount; ++j) {
        const double w = detail::sway_weight(j);
        pos[j][0] += params.torso_sway_m * w * ml;
        pos[j][2] += params.torso_sway_m * w * ap;
      }
    }

    for (int j = 0; j < kJointCount; ++j) {
      for (int c = 0; c < 3; ++c) {
        double v = pos[j][c];
        if (params.noise_std_m > 0.0) v += params.noise_std_m * noise_rng.normal();
        seq.at(f, j, c) = v;
      }
      seq.at(f, j, 3) = 1.0;
    }
  }
  return seq;
}

struct DatasetSpec {
  int subjects = 10;
  int visits = 1;
  std::vector<Activity> activities = {Activity::kTreadmillFixed};
  int frames = 900;
  double fps = 30.0;
  int trait_count = 8;
  double visit_jitter = 0.025;      // max per-component trait drift per visit
  double condition_quantile = 0.8;  // prevalence of condition_proxy is 1 - q

  void validate() const {
    if (subjects < 1) throw std::invalid_argument("dataset: subjects must be >= 1");
    if (visits < 1) throw std::invalid_argument("dataset: visits must be >= 1");
    if (activities.empty()) throw std::invalid_argument("dataset: no activities");
    if (frames < 1) throw std::invalid_argument("dataset: frames must be >= 1");
    if (!(fps > 0.0)) throw std::invalid_argument("dataset: fps must be positive");
    if (trait_count < 6) throw std::invalid_argument("dataset: trait_count must be >= 6");
    if (visit_jitter < 0.0 || visit_jitter > 0.05)
      throw std::invalid_argument("dataset: visit_jitter outside [0, 0.05]");
    if (condition_quantile <= 0.0 || condition_quantile >= 1.0)
      throw std::invalid_argument("dataset: condition_quantile outside (0, 1)");
  }
};

struct SyntheticDataset {
  std::vector<SkeletonSequence> sequences;  // subject-major, visit, activity
  TargetTable targets;                      // one row per (subject, visit)
};

inline std::string format_subject_id(int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "S%04d", i + 1);
  return std::string(buf);
}

inline std::string format_visit_id(int v) {
  return "V" + std::to_string(v + 1);
}

// Ground-truth targets derived from the parameters of the rendered walk.
// age_proxy is affine in cadence and arm swing; condition_proxy thresholds
// the noise trait at the requested quantile of its U(-1,1) prior.
inline std::vector<double> target_row(const WalkerParams& p, double condition_quantile) {
  const double age =
      60.0 - 0.5 * (p.cadence_spm - 100.0) - 25.0 * (p.arm_swing_rad - 0.3);
  const double thresh = 2.0 * condition_quantile - 1.0;
  const double condition = p.traits[5] > thresh ? 1.0 : 0.0;
  std::vector<double> row = {p.cadence_spm, p.stride_len_m,  p.arm_swing_rad,
                             p.torso_sway_m, p.head_bob_m,   p.noise_std_m,
                             age,            condition};
  row.insert(row.end(), p.traits.begin(), p.traits.end());
  return row;
}

inline std::vector<std::string> target_columns(int trait_count) {
  std::vector<std::string> cols = {"cadence_spm", "stride_len_m", "arm_swing_rad",
                                   "torso_sway_m", "head_bob_m",  "noise_std_m",
                                   "age_proxy",    "condition_proxy"};
  for (int k = 0; k < trait_count; ++k) cols.push_back("trait_" + std::to_string(k));
  return cols;
}

inline SyntheticDataset generate_dataset(const DatasetSpec& spec, std::uint64_t seed) {
  spec.validate();
  SyntheticDataset out;
  out.targets.columns = target_columns(spec.trait_count);

  const std::uint64_t root = derive_seed(seed, 0x5D5EEDu);
  for (int i = 0; i < spec.subjects; ++i) {
    const std::uint64_t subj_seed = derive_seed(root, static_cast<std::uint64_t>(i));
    Rng trait_rng(derive_seed(subj_seed, 1));
    std::vector<double> traits(static_cast<std::size_t>(spec.trait_count));
    for (double& t : traits) t = trait_rng.uniform(-1.0, 1.0);

    for (int v = 0; v < spec.visits; ++v) {
      const std::uint64_t visit_seed =
          derive_seed(subj_seed, 100 + static_cast<std::uint64_t>(v));
      Rng visit_rng(derive_seed(visit_seed, 2));
      std::vector<double> visit_traits = traits;
      if (v > 0) {
        for (double& t : visit_traits) {
          t += visit_rng.uniform(-spec.visit_jitter, spec.visit_jitter);
          t = std::min(1.0, std::max(-1.0, t));
        }
      }
      const WalkerParams params = WalkerParams::from_traits(visit_traits);

      TargetTable::Row row;
      row.subject_id = format_subject_id(i);
      row.visit_id = format_visit_id(v);
      row.values = target_row(params, spec.condition_quantile);
      out.targets.rows.push_back(std::move(row));

      for (std::size_t a = 0; a < spec.activities.size(); ++a) {
        const std::uint64_t clip_seed =
            derive_seed(visit_seed, 1000 + static_cast<std::uint64_t>(a));
        out.sequences.push_back(generate_walk(params, spec.activities[a], spec.frames,
                                              spec.fps, clip_seed, format_subject_id(i),
                                              format_visit_id(v)));
      }
    }
  }
  return out;
}

}  // namespace gaitmae
