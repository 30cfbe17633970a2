#pragma once

// Skeleton sequence container and the preprocessing operations applied ahead
// of feature extraction and model training. All operations are pure: they
// return a new sequence and never mutate the input.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "gaitmae/rng.hpp"
#include "gaitmae/taxonomy.hpp"

namespace gaitmae {

// Dense motion clip: frames x joints x channels (x, y, z, confidence),
// row-major doubles. joints is 26 for canonical data, 32 for raw capture.
struct SkeletonSequence {
  std::string subject_id;
  std::string visit_id;
  Activity activity = Activity::kTreadmillFixed;
  int sequence_index = 0;  // window index within the source recording
  double fps = 30.0;
  int frames = 0;
  int joints = kJointCount;
  int channels = kChannelCount;
  std::vector<double> data;

  double& at(int f, int j, int c) {
    return data[static_cast<std::size_t>((f * joints + j) * channels + c)];
  }
  double at(int f, int j, int c) const {
    return data[static_cast<std::size_t>((f * joints + j) * channels + c)];
  }

  std::size_t expected_size() const {
    return static_cast<std::size_t>(frames) * static_cast<std::size_t>(joints) *
           static_cast<std::size_t>(channels);
  }

  void validate() const {
    if (frames < 0) throw std::invalid_argument("sequence: negative frame count");
    if (joints != kJointCount && joints != kSourceJointCount)
      throw std::invalid_argument("sequence: joint count must be 26 or 32");
    if (channels != kChannelCount)
      throw std::invalid_argument("sequence: channel count must be 4");
    if (!(fps > 0.0)) throw std::invalid_argument("sequence: fps must be positive");
    if (data.size() != expected_size())
      throw std::invalid_argument("sequence: data size does not match shape");
  }

  SkeletonSequence with_frames(int new_frames) const {
    SkeletonSequence out = *this;
    out.frames = new_frames;
    out.data.assign(out.expected_size(), 0.0);
    return out;
  }
};

// Temporal median filter per joint per channel. Window must be odd; edge
// windows shrink to the valid range. Even-sized edge windows take the lower
// middle of the sorted values so the output is always an input sample.
inline SkeletonSequence median_filter(const SkeletonSequence& seq, int window = 3) {
  seq.validate();
  if (window < 1 || window % 2 == 0)
    throw std::invalid_argument("median_filter: window must be odd and >= 1");
  if (window == 1 || seq.frames == 0) return seq;

  SkeletonSequence out = seq;
  const int half = window / 2;
  std::vector<double> buf;
  buf.reserve(static_cast<std::size_t>(window));
  for (int j = 0; j < seq.joints; ++j) {
    for (int c = 0; c < seq.channels; ++c) {
      for (int f = 0; f < seq.frames; ++f) {
        const int lo = std::max(0, f - half);
        const int hi = std::min(seq.frames - 1, f + half);
        buf.clear();
        for (int k = lo; k <= hi; ++k) buf.push_back(seq.at(k, j, c));
        std::sort(buf.begin(), buf.end());
        out.at(f, j, c) = buf[(buf.size() - 1) / 2];
      }
    }
  }
  return out;
}

struct NormalizeResult {
  SkeletonSequence seq;
  // Frames whose maximum joint distance from the centroid was below the
  // degeneracy threshold; such frames are translated but not scaled.
  std::vector<int> degenerate_frames;
};

// Per-frame canonicalization: translate so the centroid of `center_joints`
// sits at the origin, then scale so the farthest joint lies at distance 1.
// Confidence is untouched. Applying twice is a no-op for non-degenerate data.
inline NormalizeResult normalize_frames(const SkeletonSequence& seq,
                                        const std::vector<int>& center_joints = {kPelvis},
                                        double degenerate_eps = 1e-8) {
  seq.validate();
  if (center_joints.empty())
    throw std::invalid_argument("normalize_frames: empty centroid joint set");
  for (int j : center_joints)
    if (j < 0 || j >= seq.joints)
      throw std::invalid_argument("normalize_frames: centroid joint out of range");

  NormalizeResult res;
  res.seq = seq;
  SkeletonSequence& out = res.seq;
  for (int f = 0; f < seq.frames; ++f) {
    double cx = 0.0, cy = 0.0, cz = 0.0;
    for (int j : center_joints) {
      cx += seq.at(f, j, 0);
      cy += seq.at(f, j, 1);
      cz += seq.at(f, j, 2);
    }
    const double inv = 1.0 / static_cast<double>(center_joints.size());
    cx *= inv;
    cy *= inv;
    cz *= inv;

    double max_norm = 0.0;
    for (int j = 0; j < seq.joints; ++j) {
      const double x = seq.at(f, j, 0) - cx;
      const double y = seq.at(f, j, 1) - cy;
      const double z = seq.at(f, j, 2) - cz;
      max_norm = std::max(max_norm, std::sqrt(x * x + y * y + z * z));
    }
    double scale = 1.0;
    if (max_norm < degenerate_eps) {
      res.degenerate_frames.push_back(f);
    } else {
      scale = 1.0 / max_norm;
    }
    for (int j = 0; j < seq.joints; ++j) {
      out.at(f, j, 0) = (seq.at(f, j, 0) - cx) * scale;
      out.at(f, j, 1) = (seq.at(f, j, 1) - cy) * scale;
      out.at(f, j, 2) = (seq.at(f, j, 2) - cz) * scale;
    }
  }
  return res;
}

// Force a sequence to exactly `target` frames: keep the leading frames when
// too long, or pad by repeating the last frame with confidence zeroed so
// padding is distinguishable from real data. Empty sequences cannot be padded.
inline SkeletonSequence window_to_length(const SkeletonSequence& seq, int target) {
  seq.validate();
  if (target < 1) throw std::invalid_argument("window_to_length: target must be >= 1");
  if (seq.frames == target) return seq;
  if (seq.frames == 0)
    throw std::invalid_argument("window_to_length: cannot pad an empty sequence");

  SkeletonSequence out = seq.with_frames(target);
  const int copy = std::min(seq.frames, target);
  std::copy_n(seq.data.begin(),
              static_cast<std::size_t>(copy) * static_cast<std::size_t>(seq.joints) *
                  static_cast<std::size_t>(seq.channels),
              out.data.begin());
  for (int f = copy; f < target; ++f) {
    for (int j = 0; j < seq.joints; ++j) {
      out.at(f, j, 0) = seq.at(seq.frames - 1, j, 0);
      out.at(f, j, 1) = seq.at(seq.frames - 1, j, 1);
      out.at(f, j, 2) = seq.at(seq.frames - 1, j, 2);
      out.at(f, j, 3) = 0.0;
    }
  }
  return out;
}

// Split a recording into consecutive non-overlapping windows of `target`
// frames. A trailing partial window is kept (padded) when it covers at least
// half the target; a recording shorter than `target` yields one padded
// window. sequence_index numbers the windows from 0.
inline std::vector<SkeletonSequence> split_windows(const SkeletonSequence& seq,
                                                   int target) {
  seq.validate();
  if (target < 1) throw std::invalid_argument("split_windows: target must be >= 1");
  if (seq.frames == 0) return {};

  std::vector<SkeletonSequence> out;
  const int full = seq.frames / target;
  const int remainder = seq.frames - full * target;
  const std::size_t frame_stride =
      static_cast<std::size_t>(seq.joints) * static_cast<std::size_t>(seq.channels);
  for (int w = 0; w < full; ++w) {
    SkeletonSequence win = seq.with_frames(target);
    std::copy_n(seq.data.begin() + static_cast<std::ptrdiff_t>(w) * target *
                                       static_cast<std::ptrdiff_t>(frame_stride),
                static_cast<std::size_t>(target) * frame_stride, win.data.begin());
    win.sequence_index = w;
    out.push_back(std::move(win));
  }
  const bool keep_tail = (full == 0) ? true : remainder * 2 >= target;
  if (remainder > 0 && keep_tail) {
    SkeletonSequence tail = seq.with_frames(remainder);
    std::copy_n(seq.data.begin() + static_cast<std::ptrdiff_t>(full) * target *
                                       static_cast<std::ptrdiff_t>(frame_stride),
                static_cast<std::size_t>(remainder) * frame_stride, tail.data.begin());
    SkeletonSequence win = window_to_length(tail, target);
    win.sequence_index = full;
    out.push_back(std::move(win));
  }
  return out;
}

// Additive Gaussian coordinate noise, confidence untouched. Draws are
// consumed in (frame, joint, axis) order so output is seed-deterministic.
inline SkeletonSequence gaussian_jitter(const SkeletonSequence& seq, double sigma,
                                        std::uint64_t seed) {
  seq.validate();
  if (sigma < 0.0) throw std::invalid_argument("gaussian_jitter: sigma must be >= 0");
  SkeletonSequence out = seq;
  if (sigma == 0.0) return out;
  Rng rng(seed);
  for (int f = 0; f < seq.frames; ++f)
    for (int j = 0; j < seq.joints; ++j)
      for (int c = 0; c < 3; ++c) out.at(f, j, c) += sigma * rng.normal();
  return out;
}

// Project a raw 32-joint capture onto the canonical 26-joint layout by
// removing the six hand joints. Rejects sequences already projected.
inline SkeletonSequence drop_excluded_joints(const SkeletonSequence& seq) {
  seq.validate();
  if (seq.joints != kSourceJointCount)
    throw std::invalid_argument("drop_excluded_joints: expected a 32-joint sequence");

  SkeletonSequence out = seq;
  out.joints = kJointCount;
  out.data.assign(out.expected_size(), 0.0);
  int dst = 0;
  for (int src = 0; src < kSourceJointCount; ++src) {
    if (std::find(kDroppedSourceJoints.begin(), kDroppedSourceJoints.end(), src) !=
        kDroppedSourceJoints.end())
      continue;
    for (int f = 0; f < seq.frames; ++f)
      for (int c = 0; c < seq.channels; ++c) out.at(f, dst, c) = seq.at(f, src, c);
    ++dst;
  }
  return out;
}

}  // namespace gaitmae
