#pragma once

// Canonical 26-joint skeleton layout shared by every module. The layout is
// the 32-joint depth-camera skeleton with the six low-confidence hand joints
// removed, preserving source order. Index tables here are frozen: file
// formats, masking groups, and embedding layouts all depend on them.

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace gaitmae {

inline constexpr int kJointCount = 26;
inline constexpr int kSourceJointCount = 32;
inline constexpr int kChannelCount = 4;  // x, y, z, confidence
inline constexpr int kPelvis = 0;

// Source-order indices removed when projecting 32 -> 26.
inline constexpr std::array<int, 6> kDroppedSourceJoints = {8, 9, 10, 15, 16, 17};

inline constexpr std::array<std::string_view, kJointCount> kJointNames = {
    "pelvis",         "spine_navel",    "spine_chest",  "neck",
    "clavicle_left",  "shoulder_left",  "elbow_left",   "wrist_left",
    "clavicle_right", "shoulder_right", "elbow_right",  "wrist_right",
    "hip_left",       "knee_left",      "ankle_left",   "foot_left",
    "hip_right",      "knee_right",     "ankle_right",  "foot_right",
    "head",           "nose",           "eye_left",     "ear_left",
    "eye_right",      "ear_right"};

inline int joint_index(std::string_view name) {
  for (int i = 0; i < kJointCount; ++i)
    if (kJointNames[static_cast<std::size_t>(i)] == name) return i;
  throw std::invalid_argument("unknown joint name: " + std::string(name));
}

struct JointGroup {
  std::string_view name;
  std::vector<int> joints;
};

// Regions used by the masking sampler. Partition of 0..25, sizes 4,4,4,4,4,6.
inline const std::array<JointGroup, 6>& masking_groups() {
  static const std::array<JointGroup, 6> groups = {{
      {"torso", {0, 1, 2, 3}},
      {"left_arm", {4, 5, 6, 7}},
      {"right_arm", {8, 9, 10, 11}},
      {"left_leg", {12, 13, 14, 15}},
      {"right_leg", {16, 17, 18, 19}},
      {"head", {20, 21, 22, 23, 24, 25}},
  }};
  return groups;
}

// Regions used by attribution and by the grouped embedding layout.
// Order is part of the embedding contract and must not change.
inline const std::array<JointGroup, 4>& attribution_groups() {
  static const std::array<JointGroup, 4> groups = {{
      {"Head", {20, 21, 22, 23, 24, 25}},
      {"Torso", {0, 1, 2, 3}},
      {"Arms", {4, 5, 6, 7, 8, 9, 10, 11}},
      {"Legs", {12, 13, 14, 15, 16, 17, 18, 19}},
  }};
  return groups;
}

inline int attribution_group_index(std::string_view name) {
  const auto& groups = attribution_groups();
  for (int i = 0; i < 4; ++i)
    if (groups[static_cast<std::size_t>(i)].name == name) return i;
  throw std::invalid_argument("unknown attribution group: " + std::string(name));
}

// Recording protocols. Numeric codes are persisted in the binary format.
enum class Activity : std::uint8_t {
  kTreadmillFixed = 0,
  kTreadmillSelfPace = 1,
  kSitToStand = 2,
  kStationaryGait = 3,
  kBalanceStand = 4,
};

inline constexpr std::array<Activity, 5> kAllActivities = {
    Activity::kTreadmillFixed, Activity::kTreadmillSelfPace,
    Activity::kSitToStand, Activity::kStationaryGait, Activity::kBalanceStand};

inline std::string_view activity_name(Activity a) {
  switch (a) {
    case Activity::kTreadmillFixed: return "treadmill_fixed";
    case Activity::kTreadmillSelfPace: return "treadmill_selfpace";
    case Activity::kSitToStand: return "sit_to_stand";
    case Activity::kStationaryGait: return "stationary_gait";
    case Activity::kBalanceStand: return "balance_stand";
  }
  throw std::invalid_argument("unknown activity code");
}

inline Activity parse_activity(std::string_view name) {
  for (Activity a : kAllActivities)
    if (activity_name(a) == name) return a;
  throw std::invalid_argument("unknown activity: " + std::string(name));
}

inline Activity parse_activity_code(std::uint8_t code) {
  if (code >= kAllActivities.size())
    throw std::invalid_argument("unknown activity code " + std::to_string(code));
  return static_cast<Activity>(code);
}

inline bool is_treadmill(Activity a) {
  return a == Activity::kTreadmillFixed || a == Activity::kTreadmillSelfPace;
}

}  // namespace gaitmae
