#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>

#include "gaitmae/gsk.hpp"
#include "gaitmae/rng.hpp"
#include "gaitmae/tables.hpp"

using namespace gaitmae;

namespace {

std::filesystem::path temp_dir() {
  const auto d = std::filesystem::temp_directory_path() / "gaitmae_test_formats";
  std::filesystem::create_directories(d);
  return d;
}

SkeletonSequence random_seq(int frames, std::uint64_t seed) {
  SkeletonSequence s;
  s.subject_id = "S0042";
  s.visit_id = "V2";
  s.activity = Activity::kBalanceStand;
  s.fps = 30.0;
  s.frames = frames;
  s.data.resize(s.expected_size());
  Rng rng(seed);
  for (double& v : s.data) v = rng.uniform(-1.0, 1.0);
  return s;
}

}  // namespace

TEST_CASE("gsk round trip preserves f32-rounded payload and metadata") {
  const auto path = temp_dir() / "roundtrip.gsk";
  const SkeletonSequence s = random_seq(7, 1);
  write_gsk(path, s);
  const SkeletonSequence r = read_gsk(path);

  CHECK(r.subject_id == s.subject_id);
  CHECK(r.visit_id == s.visit_id);
  CHECK(r.activity == s.activity);
  CHECK(r.fps == s.fps);
  CHECK(r.frames == s.frames);
  REQUIRE(r.data.size() == s.data.size());
  for (std::size_t i = 0; i < s.data.size(); ++i)
    REQUIRE(r.data[i] == static_cast<double>(static_cast<float>(s.data[i])));
}

TEST_CASE("gsk write(read(file)) reproduces the file bytes") {
  const auto path = temp_dir() / "stable.gsk";
  write_gsk(path, random_seq(5, 2));
  const auto bytes1 = read_file_bytes(path);
  const SkeletonSequence r = read_gsk(path);
  CHECK(encode_gsk(r) == bytes1);
}

TEST_CASE("gsk rejects corrupt input") {
  const SkeletonSequence s = random_seq(3, 3);
  auto bytes = encode_gsk(s);

  SECTION("bad magic") {
    bytes[0] = 'X';
    CHECK_THROWS_WITH(decode_gsk(bytes, "t"), Catch::Matchers::ContainsSubstring("GSK1"));
  }
  SECTION("truncated payload") {
    bytes.resize(bytes.size() - 5);
    CHECK_THROWS_WITH(decode_gsk(bytes, "t"),
                      Catch::Matchers::ContainsSubstring("truncated"));
  }
  SECTION("trailing bytes") {
    bytes.push_back(0);
    CHECK_THROWS_WITH(decode_gsk(bytes, "t"),
                      Catch::Matchers::ContainsSubstring("trailing"));
  }
  SECTION("unsupported version") {
    bytes[4] = 9;
    CHECK_THROWS_WITH(decode_gsk(bytes, "t"),
                      Catch::Matchers::ContainsSubstring("version"));
  }
  SECTION("invalid activity code") {
    bytes[16] = 200;  // magic(4) version(2) fps(4) frames(4) joints(1) channels(1)
    CHECK_THROWS_WITH(decode_gsk(bytes, "t"),
                      Catch::Matchers::ContainsSubstring("activity"));
  }
}

TEST_CASE("gsk text rendering is line-per-frame") {
  const SkeletonSequence s = random_seq(4, 4);
  const std::string text = gsk_text(s);
  CHECK(text.rfind("# gsk subject=S0042", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 5);
}

TEST_CASE("target table round trip with missing values") {
  TargetTable t;
  t.columns = {"age_proxy", "cadence"};
  t.rows.push_back({"S0001", "V1", {63.25, 101.5}});
  t.rows.push_back({"S0002", "V1", {std::numeric_limits<double>::quiet_NaN(), 88.0}});

  const auto path = temp_dir() / "targets.tsv";
  write_target_table(path, t);
  const TargetTable r = read_target_table(path);
  REQUIRE(r.columns == t.columns);
  REQUIRE(r.rows.size() == 2);
  CHECK(r.rows[0].values[0] == 63.25);
  CHECK(std::isnan(r.rows[1].values[0]));
  CHECK(r.rows[1].values[1] == 88.0);
  CHECK(r.find("S0002", "V1") != nullptr);
  CHECK(r.find("S0003", "V1") == nullptr);

  SECTION("render is byte-stable") {
    CHECK(render_target_table(r) == render_target_table(t));
  }
  SECTION("width mismatch rejected") {
    auto text = read_file_text(path);
    text += "S0003\tV1\t1.0\n";
    const auto bad = temp_dir() / "bad.tsv";
    write_file_text(bad, text);
    CHECK_THROWS_WITH(read_target_table(bad),
                      Catch::Matchers::ContainsSubstring("width"));
  }
}

TEST_CASE("feature table round trip") {
  FeatureTable t;
  t.columns = {"cadence_spm", "stride_len_m"};
  t.rows.push_back({"S0001", "V1", "treadmill_fixed", 0, {99.5, 1.21}});
  t.rows.push_back({"S0001", "V1", "treadmill_fixed", 1, {100.5, 1.19}});

  const auto path = temp_dir() / "features.tsv";
  write_feature_table(path, t);
  const FeatureTable r = read_feature_table(path);
  REQUIRE(r.columns == t.columns);
  REQUIRE(r.rows.size() == 2);
  CHECK(r.rows[1].sequence_index == 1);
  CHECK(r.rows[1].values[0] == 100.5);
  CHECK(render_feature_table(r) == render_feature_table(t));
}

TEST_CASE("fnv1a64 matches reference values") {
  // Standard FNV-1a test vectors.
  CHECK(fnv1a64("", 0) == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a", 1) == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("foobar", 6) == 0x85944171f73967e8ULL);
}
