#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "gaitmae/skeleton.hpp"

using namespace gaitmae;

namespace {

SkeletonSequence make_seq(int frames, int joints = kJointCount, double fill = 0.0) {
  SkeletonSequence s;
  s.subject_id = "S0001";
  s.visit_id = "V1";
  s.frames = frames;
  s.joints = joints;
  s.data.assign(s.expected_size(), fill);
  return s;
}

}  // namespace

TEST_CASE("median filter matches the hand-worked example") {
  // Signal 0,10,0,10,0 on one coordinate; window 3 with shrinking edges.
  SkeletonSequence s = make_seq(5);
  const double sig[5] = {0, 10, 0, 10, 0};
  for (int f = 0; f < 5; ++f) s.at(f, 2, 1) = sig[f];
  const SkeletonSequence out = median_filter(s, 3);
  const double expect[5] = {0, 0, 10, 0, 0};
  for (int f = 0; f < 5; ++f) REQUIRE(out.at(f, 2, 1) == expect[f]);
}

TEST_CASE("median filter edge and identity behavior") {
  SkeletonSequence s = make_seq(4);
  for (int f = 0; f < 4; ++f) s.at(f, 0, 0) = f + 1;

  SECTION("window 1 is the identity") {
    CHECK(median_filter(s, 1).data == s.data);
  }
  SECTION("constant signals are unchanged") {
    SkeletonSequence c = make_seq(6, kJointCount, 3.5);
    CHECK(median_filter(c, 3).data == c.data);
  }
  SECTION("monotone signals are unchanged in the interior") {
    const SkeletonSequence out = median_filter(s, 3);
    CHECK(out.at(1, 0, 0) == 2.0);
    CHECK(out.at(2, 0, 0) == 3.0);
    // Shrunken even-sized edge windows take the lower middle.
    CHECK(out.at(0, 0, 0) == 1.0);
    CHECK(out.at(3, 0, 0) == 3.0);
  }
  SECTION("even or non-positive windows are rejected") {
    CHECK_THROWS_AS(median_filter(s, 2), std::invalid_argument);
    CHECK_THROWS_AS(median_filter(s, 0), std::invalid_argument);
    CHECK_THROWS_AS(median_filter(s, -3), std::invalid_argument);
  }
  SECTION("metadata passes through") {
    const SkeletonSequence out = median_filter(s, 3);
    CHECK(out.subject_id == "S0001");
    CHECK(out.fps == s.fps);
    CHECK(out.frames == s.frames);
  }
}

TEST_CASE("normalize centers the pelvis and scales the farthest joint to 1") {
  SkeletonSequence s = make_seq(1);
  // Every joint at (1,1,1) except joint 5 at (1,1,3).
  for (int j = 0; j < kJointCount; ++j) {
    s.at(0, j, 0) = 1.0;
    s.at(0, j, 1) = 1.0;
    s.at(0, j, 2) = 1.0;
    s.at(0, j, 3) = 0.9;
  }
  s.at(0, 5, 2) = 3.0;

  const auto res = normalize_frames(s);
  CHECK(res.degenerate_frames.empty());
  CHECK(res.seq.at(0, kPelvis, 0) == 0.0);
  CHECK(res.seq.at(0, kPelvis, 1) == 0.0);
  CHECK(res.seq.at(0, kPelvis, 2) == 0.0);
  CHECK(res.seq.at(0, 5, 2) == Catch::Approx(1.0).margin(1e-15));
  // Confidence channel untouched.
  CHECK(res.seq.at(0, 7, 3) == 0.9);
}

TEST_CASE("normalize is idempotent and flags degenerate frames") {
  SkeletonSequence s = make_seq(3);
  Rng rng(17);
  for (double& v : s.data) v = rng.uniform(-2.0, 2.0);
  // Frame 1: all joints coincide, so scaling is skipped and the frame flagged.
  for (int j = 0; j < kJointCount; ++j)
    for (int c = 0; c < 3; ++c) s.at(1, j, c) = 4.2;

  const auto once = normalize_frames(s);
  REQUIRE(once.degenerate_frames == std::vector<int>{1});
  for (int j = 0; j < kJointCount; ++j)
    for (int c = 0; c < 3; ++c) REQUIRE(once.seq.at(1, j, c) == 0.0);

  const auto twice = normalize_frames(once.seq);
  for (std::size_t i = 0; i < once.seq.data.size(); ++i)
    REQUIRE(twice.seq.data[i] == Catch::Approx(once.seq.data[i]).margin(1e-12));

  SECTION("per-frame max norm is exactly representable") {
    for (int f = 0; f < 3; ++f) {
      if (f == 1) continue;
      double mx = 0.0;
      for (int j = 0; j < kJointCount; ++j) {
        const double x = once.seq.at(f, j, 0), y = once.seq.at(f, j, 1),
                     z = once.seq.at(f, j, 2);
        mx = std::max(mx, std::sqrt(x * x + y * y + z * z));
      }
      REQUIRE(mx == Catch::Approx(1.0).margin(1e-12));
    }
  }
}

TEST_CASE("window_to_length truncates, pads, and marks padding") {
  SkeletonSequence s = make_seq(5);
  for (int f = 0; f < 5; ++f)
    for (int j = 0; j < kJointCount; ++j) {
      s.at(f, j, 0) = f;
      s.at(f, j, 3) = 1.0;
    }

  SECTION("exact length is a copy") {
    CHECK(window_to_length(s, 5).data == s.data);
  }
  SECTION("truncation keeps the leading frames") {
    const auto out = window_to_length(s, 3);
    REQUIRE(out.frames == 3);
    CHECK(out.at(2, 0, 0) == 2.0);
  }
  SECTION("padding repeats the last frame with confidence zero") {
    const auto out = window_to_length(s, 8);
    REQUIRE(out.frames == 8);
    for (int f = 5; f < 8; ++f) {
      CHECK(out.at(f, 3, 0) == 4.0);
      CHECK(out.at(f, 3, 3) == 0.0);
    }
    CHECK(out.at(4, 3, 3) == 1.0);
  }
  SECTION("invalid target rejected") {
    CHECK_THROWS_AS(window_to_length(s, 0), std::invalid_argument);
  }
}

TEST_CASE("split_windows covers the recording without overlap") {
  SkeletonSequence s = make_seq(23);
  for (int f = 0; f < 23; ++f) s.at(f, 0, 0) = f;

  SECTION("full windows plus a kept half tail") {
    // 23 = 2*10 + 3; tail of 3 < 5 is dropped.
    const auto wins = split_windows(s, 10);
    REQUIRE(wins.size() == 2);
    CHECK(wins[0].sequence_index == 0);
    CHECK(wins[1].sequence_index == 1);
    CHECK(wins[0].at(0, 0, 0) == 0.0);
    CHECK(wins[1].at(0, 0, 0) == 10.0);
    CHECK(wins[1].at(9, 0, 0) == 19.0);
  }
  SECTION("tail of at least half the target is padded and kept") {
    // 23 = 2*9 + 5; tail of 5 >= 4.5 is kept.
    const auto wins = split_windows(s, 9);
    REQUIRE(wins.size() == 3);
    CHECK(wins[2].frames == 9);
    CHECK(wins[2].at(0, 0, 0) == 18.0);
    CHECK(wins[2].at(4, 0, 0) == 22.0);
    CHECK(wins[2].at(5, 0, 0) == 22.0);  // padding repeats the last frame
  }
  SECTION("short recordings yield one padded window") {
    SkeletonSequence tiny = make_seq(3);
    const auto wins = split_windows(tiny, 10);
    REQUIRE(wins.size() == 1);
    CHECK(wins[0].frames == 10);
  }
}

TEST_CASE("gaussian_jitter is seeded, leaves confidence alone, and has the right scale") {
  SkeletonSequence s = make_seq(60, kJointCount, 1.0);

  SECTION("sigma zero is the identity") {
    CHECK(gaussian_jitter(s, 0.0, 7).data == s.data);
  }
  SECTION("same seed, same noise; different seed, different noise") {
    const auto a = gaussian_jitter(s, 0.05, 7);
    const auto b = gaussian_jitter(s, 0.05, 7);
    const auto c = gaussian_jitter(s, 0.05, 8);
    CHECK(a.data == b.data);
    CHECK(a.data != c.data);
  }
  SECTION("confidence channel is untouched") {
    const auto a = gaussian_jitter(s, 0.2, 3);
    for (int f = 0; f < s.frames; ++f)
      for (int j = 0; j < s.joints; ++j) REQUIRE(a.at(f, j, 3) == 1.0);
  }
  SECTION("noise standard deviation matches sigma") {
    // 60*26*3 coordinates per seed, 250 seeds: ~1.2e6 draws.
    double sum = 0.0, sumsq = 0.0;
    std::int64_t n = 0;
    for (int seed = 0; seed < 250; ++seed) {
      const auto a = gaussian_jitter(s, 0.05, static_cast<std::uint64_t>(seed));
      for (int f = 0; f < s.frames; ++f)
        for (int j = 0; j < s.joints; ++j)
          for (int c = 0; c < 3; ++c) {
            const double d = a.at(f, j, c) - 1.0;
            sum += d;
            sumsq += d * d;
            ++n;
          }
    }
    const double mean = sum / static_cast<double>(n);
    const double sd = std::sqrt(sumsq / static_cast<double>(n) - mean * mean);
    CHECK(std::abs(mean) < 5e-4);
    CHECK(std::abs(sd - 0.05) < 1e-3);
  }
  SECTION("negative sigma rejected") {
    CHECK_THROWS_AS(gaussian_jitter(s, -0.1, 1), std::invalid_argument);
  }
}

TEST_CASE("drop_excluded_joints projects 32 joints onto the canonical 26") {
  SkeletonSequence raw = make_seq(2, kSourceJointCount);
  for (int f = 0; f < 2; ++f)
    for (int j = 0; j < kSourceJointCount; ++j)
      for (int c = 0; c < 4; ++c) raw.at(f, j, c) = j + 0.1 * c;

  const auto out = drop_excluded_joints(raw);
  REQUIRE(out.joints == kJointCount);

  // Source order minus {8,9,10,15,16,17}: canonical 8 is source 11,
  // canonical 12 (hip_left) is source 18, canonical 20 (head) is source 26.
  CHECK(out.at(0, 7, 0) == 7.0);
  CHECK(out.at(0, 8, 0) == 11.0);
  CHECK(out.at(1, 12, 0) == 18.0);
  CHECK(out.at(1, 20, 0) == 26.0);
  CHECK(out.at(1, 25, 0) == 31.0);
  CHECK(out.at(1, 25, 2) == 31.2);

  SECTION("projection is rejected on already-canonical data") {
    CHECK_THROWS_AS(drop_excluded_joints(out), std::invalid_argument);
  }
}

TEST_CASE("taxonomy partitions are consistent") {
  std::vector<int> seen(kJointCount, 0);
  std::size_t total = 0;
  for (const auto& g : masking_groups()) {
    total += g.joints.size();
    for (int j : g.joints) seen[static_cast<std::size_t>(j)] += 1;
  }
  CHECK(total == kJointCount);
  for (int c : seen) REQUIRE(c == 1);

  std::fill(seen.begin(), seen.end(), 0);
  total = 0;
  for (const auto& g : attribution_groups()) {
    total += g.joints.size();
    for (int j : g.joints) seen[static_cast<std::size_t>(j)] += 1;
  }
  CHECK(total == kJointCount);
  for (int c : seen) REQUIRE(c == 1);

  CHECK(attribution_groups()[0].name == "Head");
  CHECK(attribution_groups()[3].name == "Legs");
  CHECK(joint_index("pelvis") == 0);
  CHECK(joint_index("ankle_left") == 14);
  CHECK(joint_index("ankle_right") == 18);
  CHECK(joint_index("ear_right") == 25);
  CHECK_THROWS_AS(joint_index("hand_left"), std::invalid_argument);

  CHECK(activity_name(parse_activity("treadmill_fixed")) == "treadmill_fixed");
  CHECK(is_treadmill(Activity::kTreadmillSelfPace));
  CHECK_FALSE(is_treadmill(Activity::kBalanceStand));
}
