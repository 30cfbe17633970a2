#pragma once

// Binary skeleton clip format (".gsk") and a text debug rendering.
//
// Layout, all little-endian:
//   magic "GSK1" | version u16 | fps f32 | frame_count u32 | joint_count u8 |
//   channel_count u8 | activity u8 | subject_id (u16 len + UTF-8) |
//   visit_id (u16 len + UTF-8) | payload f32, frame-major then joint-major
//   then channel-major.
//
// Payload values are stored as f32; reading back yields the f32-rounded
// values. write(read(file)) reproduces the file byte for byte.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <sstream>
#include <string>

#include "gaitmae/io_util.hpp"
#include "gaitmae/skeleton.hpp"

namespace gaitmae {

inline constexpr char kGskMagic[4] = {'G', 'S', 'K', '1'};
inline constexpr std::uint16_t kGskVersion = 1;

inline std::vector<std::uint8_t> encode_gsk(const SkeletonSequence& seq) {
  seq.validate();
  ByteWriter w;
  w.raw(kGskMagic, 4);
  w.u16(kGskVersion);
  w.f32(static_cast<float>(seq.fps));
  w.u32(static_cast<std::uint32_t>(seq.frames));
  w.u8(static_cast<std::uint8_t>(seq.joints));
  w.u8(static_cast<std::uint8_t>(seq.channels));
  w.u8(static_cast<std::uint8_t>(seq.activity));
  w.str16(seq.subject_id);
  w.str16(seq.visit_id);
  for (double v : seq.data) w.f32(static_cast<float>(v));
  return w.bytes;
}

inline void write_gsk(const std::filesystem::path& path, const SkeletonSequence& seq) {
  write_file_bytes(path, encode_gsk(seq));
}

inline SkeletonSequence decode_gsk(const std::vector<std::uint8_t>& bytes,
                                   const std::string& context) {
  ByteReader r(bytes, context);
  const auto* magic = r.take(4);
  if (std::memcmp(magic, kGskMagic, 4) != 0)
    throw std::runtime_error("not a GSK1 file: " + context);
  const std::uint16_t version = r.u16();
  if (version != kGskVersion)
    throw std::runtime_error("unsupported GSK version " + std::to_string(version) +
                             " in " + context);
  SkeletonSequence seq;
  seq.fps = static_cast<double>(r.f32());
  seq.frames = static_cast<int>(r.u32());
  seq.joints = r.u8();
  seq.channels = r.u8();
  const std::uint8_t act = r.u8();
  if (act > static_cast<std::uint8_t>(Activity::kBalanceStand))
    throw std::runtime_error("invalid activity code in " + context);
  seq.activity = static_cast<Activity>(act);
  seq.subject_id = r.str16();
  seq.visit_id = r.str16();
  if (seq.frames < 0 || (seq.joints != kJointCount && seq.joints != kSourceJointCount) ||
      seq.channels != kChannelCount || !(seq.fps > 0.0f))
    throw std::runtime_error("invalid GSK header in " + context);
  seq.data.resize(seq.expected_size());
  for (double& v : seq.data) v = static_cast<double>(r.f32());
  r.expect_end();
  return seq;
}

inline SkeletonSequence read_gsk(const std::filesystem::path& path) {
  return decode_gsk(read_file_bytes(path), path.string());
}

// Debug rendering: header lines prefixed with '#', then one frame per line,
// values space-separated in the payload order. Inspection only; the binary
// format is the interchange format.
inline std::string gsk_text(const SkeletonSequence& seq) {
  seq.validate();
  std::ostringstream os;
  os << "# gsk subject=" << seq.subject_id << " visit=" << seq.visit_id
     << " activity=" << activity_name(seq.activity) << " fps=" << fmt_double(seq.fps)
     << " frames=" << seq.frames << " joints=" << seq.joints
     << " channels=" << seq.channels << "\n";
  for (int f = 0; f < seq.frames; ++f) {
    for (int j = 0; j < seq.joints; ++j)
      for (int c = 0; c < seq.channels; ++c) {
        if (j != 0 || c != 0) os << ' ';
        os << fmt_double(seq.at(f, j, c));
      }
    os << "\n";
  }
  return os.str();
}

inline void write_gsk_text(const std::filesystem::path& path,
                           const SkeletonSequence& seq) {
  write_file_text(path, gsk_text(seq));
}

}  // namespace gaitmae
