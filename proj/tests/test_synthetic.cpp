#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "gaitmae/synthetic.hpp"
#include "test_util.hpp"

using namespace gaitmae;

namespace {

std::vector<double> ankle_height(const SkeletonSequence& s, int joint = 14) {
  std::vector<double> y(static_cast<std::size_t>(s.frames));
  for (int f = 0; f < s.frames; ++f) y[static_cast<std::size_t>(f)] = s.at(f, joint, 1);
  return y;
}

double periodogram_cadence(const SkeletonSequence& s) {
  // Ankle height oscillates once per stride; cadence counts steps (2/stride).
  return 120.0 * test_util::dominant_freq_hz(ankle_height(s), s.fps, 0.4, 1.6);
}

}  // namespace

TEST_CASE("generated walks are seed-deterministic") {
  WalkerParams p;
  const auto a = generate_walk(p, Activity::kTreadmillFixed, 120, 30.0, 5);
  const auto b = generate_walk(p, Activity::kTreadmillFixed, 120, 30.0, 5);
  const auto c = generate_walk(p, Activity::kTreadmillFixed, 120, 30.0, 6);
  CHECK(a.data == b.data);
  CHECK(a.data != c.data);
  CHECK(a.frames == 120);
  CHECK(a.joints == kJointCount);
  for (int f = 0; f < a.frames; ++f)
    for (int j = 0; j < a.joints; ++j) REQUIRE(a.at(f, j, 3) == 1.0);
}

TEST_CASE("cadence is recoverable from the periodogram within 3 steps/min") {
  for (double cadence : {80.0, 100.0, 120.0}) {
    WalkerParams p;
    p.cadence_spm = cadence;
    p.noise_std_m = 0.01;
    const auto s = generate_walk(p, Activity::kTreadmillFixed, 900, 30.0, 11);
    const double est = periodogram_cadence(s);
    INFO("cadence " << cadence << " estimated " << est);
    CHECK(std::abs(est - cadence) < 3.0);
  }
}

TEST_CASE("self-paced walking stays near the nominal cadence") {
  WalkerParams p;
  p.noise_std_m = 0.005;
  const auto s = generate_walk(p, Activity::kTreadmillSelfPace, 900, 30.0, 3);
  CHECK(std::abs(periodogram_cadence(s) - p.cadence_spm) < 5.0);
}

TEST_CASE("oscillator amplitudes respond to their parameters") {
  WalkerParams quiet;
  quiet.arm_swing_rad = 0.0;
  quiet.noise_std_m = 0.0;
  const auto s0 = generate_walk(quiet, Activity::kTreadmillFixed, 300, 30.0, 7);

  SECTION("zero arm swing leaves the wrists motionless in the sagittal plane") {
    double lo = 1e9, hi = -1e9;
    for (int f = 0; f < s0.frames; ++f) {
      lo = std::min(lo, s0.at(f, 7, 2));
      hi = std::max(hi, s0.at(f, 7, 2));
    }
    CHECK(hi - lo < 1e-12);
  }

  SECTION("foot excursion relative to the pelvis matches stride length") {
    WalkerParams p;
    p.stride_len_m = 1.1;
    p.noise_std_m = 0.0;
    const auto s = generate_walk(p, Activity::kTreadmillFixed, 300, 30.0, 7);
    double lo = 1e9, hi = -1e9;
    for (int f = 0; f < s.frames; ++f) {
      const double rel = s.at(f, 15, 2) - s.at(f, kPelvis, 2);
      lo = std::min(lo, rel);
      hi = std::max(hi, rel);
    }
    CHECK(hi - lo == Catch::Approx(1.1).margin(0.01));
  }

  SECTION("arm swing amplitude is monotone in the parameter") {
    auto wrist_amp = [](double rad) {
      WalkerParams p;
      p.arm_swing_rad = rad;
      p.noise_std_m = 0.0;
      const auto s = generate_walk(p, Activity::kTreadmillFixed, 300, 30.0, 9);
      double lo = 1e9, hi = -1e9;
      for (int f = 0; f < s.frames; ++f) {
        lo = std::min(lo, s.at(f, 7, 2));
        hi = std::max(hi, s.at(f, 7, 2));
      }
      return hi - lo;
    };
    CHECK(wrist_amp(0.1) < wrist_amp(0.3));
    CHECK(wrist_amp(0.3) < wrist_amp(0.6));
  }
}

TEST_CASE("non-gait activities have the expected gross structure") {
  WalkerParams p;
  p.noise_std_m = 0.0;

  SECTION("quiet stance keeps the ankles still") {
    const auto s = generate_walk(p, Activity::kBalanceStand, 300, 30.0, 13);
    const auto y = ankle_height(s);
    double lo = y[0], hi = y[0];
    for (double v : y) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    CHECK(hi - lo < 1e-9);
  }
  SECTION("sit-to-stand raises the torso by the rep amplitude") {
    const auto s = generate_walk(p, Activity::kSitToStand, 900, 30.0, 13);
    double lo = 1e9, hi = -1e9;
    for (int f = 0; f < s.frames; ++f) {
      lo = std::min(lo, s.at(f, 2, 1));
      hi = std::max(hi, s.at(f, 2, 1));
    }
    CHECK(hi - lo == Catch::Approx(0.22).margin(0.01));
  }
  SECTION("walking in place travels far less than treadmill walking") {
    const auto inplace = generate_walk(p, Activity::kStationaryGait, 300, 30.0, 13);
    const auto tread = generate_walk(p, Activity::kTreadmillFixed, 300, 30.0, 13);
    auto foot_ap_range = [](const SkeletonSequence& s) {
      double lo = 1e9, hi = -1e9;
      for (int f = 0; f < s.frames; ++f) {
        lo = std::min(lo, s.at(f, 15, 2));
        hi = std::max(hi, s.at(f, 15, 2));
      }
      return hi - lo;
    };
    CHECK(foot_ap_range(inplace) < 0.3 * foot_ap_range(tread));
  }
}

TEST_CASE("trait map hits documented ranges and rejects bad parameters") {
  const WalkerParams mid = WalkerParams::from_traits({0, 0, 0, 0, 0, 0});
  CHECK(mid.cadence_spm == 100.0);
  CHECK(mid.stride_len_m == 1.0);
  CHECK(mid.arm_swing_rad == 0.3);

  const WalkerParams lo = WalkerParams::from_traits({-1, -1, -1, -1, -1, -1});
  const WalkerParams hi = WalkerParams::from_traits({1, 1, 1, 1, 1, 1});
  CHECK(lo.cadence_spm == 80.0);
  CHECK(hi.cadence_spm == 120.0);
  CHECK(lo.stride_len_m == Catch::Approx(0.6));
  CHECK(hi.stride_len_m == Catch::Approx(1.4));
  CHECK(lo.noise_std_m > 0.0);

  CHECK_THROWS_AS(WalkerParams::from_traits({0, 0, 0}), std::invalid_argument);
  WalkerParams bad;
  bad.cadence_spm = 250.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = WalkerParams{};
  bad.traits = {2.0};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  CHECK_THROWS_AS(generate_walk(WalkerParams{}, Activity::kTreadmillFixed, 0, 30.0, 1),
                  std::invalid_argument);
}

TEST_CASE("datasets have the declared shape and are reproducible") {
  DatasetSpec spec;
  spec.subjects = 6;
  spec.visits = 2;
  spec.activities = {Activity::kTreadmillFixed, Activity::kBalanceStand};
  spec.frames = 60;
  spec.trait_count = 8;

  const auto a = generate_dataset(spec, 99);
  const auto b = generate_dataset(spec, 99);
  const auto c = generate_dataset(spec, 100);

  REQUIRE(a.sequences.size() == 6 * 2 * 2);
  REQUIRE(a.targets.rows.size() == 6 * 2);
  CHECK(a.targets.columns.size() == 8u + 8u);
  CHECK(a.sequences[0].subject_id == "S0001");
  CHECK(a.sequences[0].visit_id == "V1");
  CHECK(a.targets.rows[1].visit_id == "V2");

  REQUIRE(a.sequences.size() == b.sequences.size());
  for (std::size_t i = 0; i < a.sequences.size(); ++i)
    REQUIRE(a.sequences[i].data == b.sequences[i].data);
  CHECK(render_target_table(a.targets) == render_target_table(b.targets));
  CHECK(render_target_table(a.targets) != render_target_table(c.targets));
}

TEST_CASE("visits drift traits by at most the visit jitter") {
  DatasetSpec spec;
  spec.subjects = 12;
  spec.visits = 3;
  spec.frames = 10;
  spec.visit_jitter = 0.025;
  const auto d = generate_dataset(spec, 7);

  const int t0 = d.targets.column_index("trait_0");
  REQUIRE(t0 >= 0);
  for (int i = 0; i < 12; ++i) {
    const auto& v1 = d.targets.rows[static_cast<std::size_t>(i * 3)];
    for (int v = 1; v < 3; ++v) {
      const auto& row = d.targets.rows[static_cast<std::size_t>(i * 3 + v)];
      for (int k = 0; k < spec.trait_count; ++k) {
        const double dv = std::abs(row.values[static_cast<std::size_t>(t0 + k)] -
                                   v1.values[static_cast<std::size_t>(t0 + k)]);
        REQUIRE(dv <= spec.visit_jitter + 1e-12);
      }
    }
  }
}

TEST_CASE("target table encodes the documented ground truth") {
  DatasetSpec spec;
  spec.subjects = 400;
  spec.visits = 1;
  spec.frames = 2;
  const auto d = generate_dataset(spec, 17);

  const int ic = d.targets.column_index("cadence_spm");
  const int ia = d.targets.column_index("arm_swing_rad");
  const int iage = d.targets.column_index("age_proxy");
  const int icond = d.targets.column_index("condition_proxy");
  const int it5 = d.targets.column_index("trait_5");
  REQUIRE((ic >= 0 && ia >= 0 && iage >= 0 && icond >= 0 && it5 >= 0));

  double prevalence = 0.0;
  for (const auto& row : d.targets.rows) {
    const double age = 60.0 - 0.5 * (row.values[static_cast<std::size_t>(ic)] - 100.0) -
                       25.0 * (row.values[static_cast<std::size_t>(ia)] - 0.3);
    REQUIRE(row.values[static_cast<std::size_t>(iage)] == Catch::Approx(age).margin(1e-12));
    const double cond = row.values[static_cast<std::size_t>(icond)];
    REQUIRE((cond == 0.0 || cond == 1.0));
    REQUIRE(cond == (row.values[static_cast<std::size_t>(it5)] > 0.6 ? 1.0 : 0.0));
    prevalence += cond;
  }
  prevalence /= 400.0;
  CHECK(prevalence == Catch::Approx(0.2).margin(0.06));
}

TEST_CASE("walkers with different cadences are distinguishable") {
  Rng rng(31);
  int correct = 0, total = 0;
  for (int trial = 0; trial < 25; ++trial) {
    WalkerParams a, b;
    a.cadence_spm = rng.uniform(82.0, 118.0);
    b.cadence_spm = a.cadence_spm + (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(5.0, 12.0);
    b.cadence_spm = std::min(120.0, std::max(80.0, b.cadence_spm));
    if (std::abs(a.cadence_spm - b.cadence_spm) < 4.0) continue;
    a.noise_std_m = b.noise_std_m = 0.01;
    const auto sa = generate_walk(a, Activity::kTreadmillFixed, 600, 30.0, 1000 + trial);
    const auto sb = generate_walk(b, Activity::kTreadmillFixed, 600, 30.0, 2000 + trial);
    const bool est_order = periodogram_cadence(sa) < periodogram_cadence(sb);
    const bool true_order = a.cadence_spm < b.cadence_spm;
    correct += (est_order == true_order);
    ++total;
  }
  REQUIRE(total >= 15);
  CHECK(static_cast<double>(correct) / total >= 0.95);
}
