#pragma once

// Pooling variants that turn a frozen-encoder latent (F x J x D) into a
// fixed-length embedding, plus the embedding table with text and binary
// serializations. Vectors are quantized to f32 at creation so the in-memory
// table always equals its serialized form.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

#include "gaitmae/dstformer.hpp"
#include "gaitmae/io_util.hpp"
#include "gaitmae/tables.hpp"
#include "gaitmae/taxonomy.hpp"
#include "gaitmae/tensor.hpp"

namespace gaitmae {

enum class PoolVariant { kV1, kV2, kV3, kV4, kV5 };

inline const char* variant_name(PoolVariant v) {
  switch (v) {
    case PoolVariant::kV1: return "v1";
    case PoolVariant::kV2: return "v2";
    case PoolVariant::kV3: return "v3";
    case PoolVariant::kV4: return "v4";
    case PoolVariant::kV5: return "v5";
  }
  throw std::invalid_argument("unknown pooling variant");
}

inline PoolVariant parse_variant(const std::string& s) {
  if (s == "v1") return PoolVariant::kV1;
  if (s == "v2") return PoolVariant::kV2;
  if (s == "v3") return PoolVariant::kV3;
  if (s == "v4") return PoolVariant::kV4;
  if (s == "v5") return PoolVariant::kV5;
  throw std::invalid_argument("unknown pooling variant '" + s +
                              "' (expected one of v1 v2 v3 v4 v5)");
}

// Embedding width per variant for latent dim D and pre-logit width d'.
inline int pool_dim(PoolVariant v, int dim, int prelogit_dim) {
  switch (v) {
    case PoolVariant::kV1: return 2 * dim;
    case PoolVariant::kV2: return 3 * dim;
    case PoolVariant::kV3: return 6 * dim;
    case PoolVariant::kV4: return kJointCount * prelogit_dim;
    case PoolVariant::kV5: return 8 * dim;
  }
  throw std::invalid_argument("unknown pooling variant");
}

// Percentile by linear interpolation between order statistics:
// rank h = (n-1) * p / 100, value = v[floor(h)] + frac * (v[floor(h)+1] - v[floor(h)]).
inline double interpolated_percentile(std::vector<double> values, double p) {
  if (values.empty()) throw std::invalid_argument("percentile: empty input");
  if (p < 0.0 || p > 100.0) throw std::invalid_argument("percentile: p outside [0,100]");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * p / 100.0;
  const std::size_t lo = static_cast<std::size_t>(h);
  if (lo + 1 >= values.size()) return values.back();
  return values[lo] + (h - static_cast<double>(lo)) * (values[lo + 1] - values[lo]);
}

namespace detail {
inline void check_latent(const Tensor& latent) {
  if (latent.ndim() != 3)
    throw std::invalid_argument("pooling: latent must be F x J x D, got " +
                                shape_str(latent.shape()));
}
}  // namespace detail

// Global mean and max per channel: [mean_D | max_D].
inline std::vector<double> pool_v1(const Tensor& latent) {
  detail::check_latent(latent);
  const int F = latent.dim(0), J = latent.dim(1), D = latent.dim(2);
  std::vector<double> out(2 * static_cast<std::size_t>(D));
  const double* p = latent.data();
  for (int d = 0; d < D; ++d) {
    double sum = 0.0, mx = p[d];
    for (int f = 0; f < F; ++f)
      for (int j = 0; j < J; ++j) {
        const double v = p[(static_cast<std::size_t>(f) * J + j) * D + d];
        sum += v;
        mx = std::max(mx, v);
      }
    out[static_cast<std::size_t>(d)] = sum / (static_cast<double>(F) * J);
    out[static_cast<std::size_t>(D + d)] = mx;
  }
  return out;
}

// Per frame pool joints with (mean, max, population std), then mean over
// frames: [mean_D | max_D | std_D].
inline std::vector<double> pool_v2(const Tensor& latent) {
  detail::check_latent(latent);
  const int F = latent.dim(0), J = latent.dim(1), D = latent.dim(2);
  std::vector<double> out(3 * static_cast<std::size_t>(D), 0.0);
  const double* p = latent.data();
  for (int f = 0; f < F; ++f)
    for (int d = 0; d < D; ++d) {
      double sum = 0.0, mx = p[(static_cast<std::size_t>(f) * J) * D + d];
      for (int j = 0; j < J; ++j) {
        const double v = p[(static_cast<std::size_t>(f) * J + j) * D + d];
        sum += v;
        mx = std::max(mx, v);
      }
      const double mean = sum / J;
      double var = 0.0;
      for (int j = 0; j < J; ++j) {
        const double v = p[(static_cast<std::size_t>(f) * J + j) * D + d] - mean;
        var += v * v;
      }
      out[static_cast<std::size_t>(d)] += mean;
      out[static_cast<std::size_t>(D + d)] += mx;
      out[static_cast<std::size_t>(2 * D + d)] += std::sqrt(var / J);
    }
  for (auto& v : out) v /= F;
  return out;
}

// Mean over frames and joints per region, regions concatenated in the frozen
// order LeftLeg, RightLeg, LeftArm, RightArm, Torso, Head.
inline std::vector<double> pool_v3(const Tensor& latent) {
  detail::check_latent(latent);
  const int F = latent.dim(0), J = latent.dim(1), D = latent.dim(2);
  if (J != kJointCount)
    throw std::invalid_argument("pool_v3: regions cover a 26-joint skeleton");
  static const char* kOrder[6] = {"left_leg", "right_leg", "left_arm",
                                  "right_arm", "torso",    "head"};
  const auto& groups = masking_groups();
  std::vector<double> out;
  out.reserve(6 * static_cast<std::size_t>(D));
  const double* p = latent.data();
  for (const char* name : kOrder) {
    const JointGroup* group = nullptr;
    for (const auto& g : groups)
      if (g.name == name) group = &g;
    for (int d = 0; d < D; ++d) {
      double sum = 0.0;
      for (int f = 0; f < F; ++f)
        for (int j : group->joints)
          sum += p[(static_cast<std::size_t>(f) * J + j) * D + d];
      out.push_back(sum / (static_cast<double>(F) * static_cast<double>(group->joints.size())));
    }
  }
  return out;
}

// Temporal mean of the decoder pre-logit per joint, joints concatenated.
inline std::vector<double> pool_v4(const Tensor& prelogit) {
  detail::check_latent(prelogit);
  const int F = prelogit.dim(0), J = prelogit.dim(1), D = prelogit.dim(2);
  std::vector<double> out(static_cast<std::size_t>(J) * D);
  const double* p = prelogit.data();
  for (int j = 0; j < J; ++j)
    for (int d = 0; d < D; ++d) {
      double sum = 0.0;
      for (int f = 0; f < F; ++f) sum += p[(static_cast<std::size_t>(f) * J + j) * D + d];
      out[static_cast<std::size_t>(j) * D + d] = sum / F;
    }
  return out;
}

// Temporal mean and 99th percentile per (joint, channel), then joint means
// within the four attribution regions, concatenated Head, Torso, Arms, Legs
// as [mean_D | p99_D] per region.
inline std::vector<double> pool_v5(const Tensor& latent) {
  detail::check_latent(latent);
  const int F = latent.dim(0), J = latent.dim(1), D = latent.dim(2);
  if (J != kJointCount)
    throw std::invalid_argument("pool_v5: regions cover a 26-joint skeleton");
  if (F < 2)
    throw std::invalid_argument("pool_v5: needs at least 2 frames for the percentile");
  const double* p = latent.data();
  std::vector<double> tmean(static_cast<std::size_t>(J) * D);
  std::vector<double> tp99(static_cast<std::size_t>(J) * D);
  std::vector<double> trace(static_cast<std::size_t>(F));
  for (int j = 0; j < J; ++j)
    for (int d = 0; d < D; ++d) {
      double sum = 0.0;
      for (int f = 0; f < F; ++f) {
        trace[static_cast<std::size_t>(f)] = p[(static_cast<std::size_t>(f) * J + j) * D + d];
        sum += trace[static_cast<std::size_t>(f)];
      }
      tmean[static_cast<std::size_t>(j) * D + d] = sum / F;
      tp99[static_cast<std::size_t>(j) * D + d] = interpolated_percentile(trace, 99.0);
    }

  std::vector<double> out;
  out.reserve(8 * static_cast<std::size_t>(D));
  for (const auto& group : attribution_groups()) {
    for (int d = 0; d < D; ++d) {
      double sum = 0.0;
      for (int j : group.joints) sum += tmean[static_cast<std::size_t>(j) * D + d];
      out.push_back(sum / static_cast<double>(group.joints.size()));
    }
    for (int d = 0; d < D; ++d) {
      double sum = 0.0;
      for (int j : group.joints) sum += tp99[static_cast<std::size_t>(j) * D + d];
      out.push_back(sum / static_cast<double>(group.joints.size()));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Embedding tables.

struct EmbeddingRecord {
  std::string subject_id;
  std::string visit_id;
  Activity activity = Activity::kTreadmillFixed;
  int sequence_index = 0;
  std::vector<double> vec;
};

struct EmbeddingTable {
  PoolVariant variant = PoolVariant::kV5;
  int dim = 0;
  std::uint64_t encoder_hash = 0;
  std::vector<EmbeddingRecord> rows;
  std::vector<std::string> warnings;
};

// Encode every sequence with the frozen model and pool per `variant`.
// Sequences whose shape does not match the encoder are skipped with a
// warning entry.
inline EmbeddingTable embed_dataset(const DstFormer& model,
                                    const std::vector<SkeletonSequence>& seqs,
                                    PoolVariant variant, std::uint64_t encoder_hash) {
  NoGradGuard ng;
  const EncoderConfig& cfg = model.config();
  EmbeddingTable table;
  table.variant = variant;
  table.dim = pool_dim(variant, cfg.dim, cfg.decoder_hidden2);
  table.encoder_hash = encoder_hash;
  for (const auto& seq : seqs) {
    if (seq.joints != cfg.joints || seq.channels != cfg.in_channels ||
        (variant == PoolVariant::kV5 && seq.frames < 2)) {
      table.warnings.push_back("skipped " + seq.subject_id + " visit " + seq.visit_id + " " +
                               std::string(activity_name(seq.activity)) + " seq " +
                               std::to_string(seq.sequence_index) +
                               ": shape incompatible with encoder/variant");
      continue;
    }
    Tensor latent = model.encode(sequence_to_tensor(seq));
    std::vector<double> vec;
    switch (variant) {
      case PoolVariant::kV1: vec = pool_v1(latent); break;
      case PoolVariant::kV2: vec = pool_v2(latent); break;
      case PoolVariant::kV3: vec = pool_v3(latent); break;
      case PoolVariant::kV4: vec = pool_v4(model.decode_with_prelogit(latent).prelogit); break;
      case PoolVariant::kV5: vec = pool_v5(latent); break;
    }
    quantize_f32(vec);
    table.rows.push_back(
        {seq.subject_id, seq.visit_id, seq.activity, seq.sequence_index, std::move(vec)});
  }
  return table;
}

inline std::string to_hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::uint64_t parse_hex64(const std::string& s) {
  if (s.size() != 16) throw std::invalid_argument("expected 16 hex digits, got '" + s + "'");
  std::uint64_t v = 0;
  for (char c : s) {
    v <<= 4;
    if (c >= '0' && c <= '9') v |= static_cast<std::uint64_t>(c - '0');
    else if (c >= 'a' && c <= 'f') v |= static_cast<std::uint64_t>(c - 'a' + 10);
    else throw std::invalid_argument("bad hex digit in '" + s + "'");
  }
  return v;
}

inline std::string render_embedding_table(const EmbeddingTable& t) {
  std::string out = "# variant=" + std::string(variant_name(t.variant)) +
                    "\tdim=" + std::to_string(t.dim) +
                    "\tencoder_hash=" + to_hex64(t.encoder_hash) + "\n";
  out += "subject_id\tvisit_id\tactivity\tsequence_index";
  char col[16];
  for (int d = 0; d < t.dim; ++d) {
    std::snprintf(col, sizeof col, "\te%04d", d);
    out += col;
  }
  out += "\n";
  for (const auto& r : t.rows) {
    if (static_cast<int>(r.vec.size()) != t.dim)
      throw std::invalid_argument("embedding table: row width mismatch");
    out += r.subject_id + "\t" + r.visit_id + "\t" +
           std::string(activity_name(r.activity)) + "\t" + std::to_string(r.sequence_index);
    for (double v : r.vec) out += "\t" + fmt_double(v);
    out += "\n";
  }
  return out;
}

inline EmbeddingTable parse_embedding_table(const std::string& text) {
  EmbeddingTable t;
  std::size_t pos = 0;
  auto next_line = [&](std::string& line) {
    if (pos >= text.size()) return false;
    const std::size_t nl = text.find('\n', pos);
    line = text.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
    pos = nl == std::string::npos ? text.size() : nl + 1;
    return true;
  };
  std::string line;
  if (!next_line(line) || line.rfind("# ", 0) != 0)
    throw std::runtime_error("embedding table: missing header line");
  std::uint64_t parsed = 0;  // bit 0: variant, 1: dim, 2: hash
  for (const std::string& tok : split_tsv_line(line.substr(2))) {
    const std::size_t eq = tok.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = tok.substr(0, eq), value = tok.substr(eq + 1);
    if (key == "variant") {
      t.variant = parse_variant(value);
      parsed |= 1;
    } else if (key == "dim") {
      t.dim = std::stoi(value);
      parsed |= 2;
    } else if (key == "encoder_hash") {
      t.encoder_hash = parse_hex64(value);
      parsed |= 4;
    }
  }
  if (parsed != 7) throw std::runtime_error("embedding table: incomplete header");
  if (!next_line(line)) throw std::runtime_error("embedding table: missing column header");
  while (next_line(line)) {
    if (line.empty()) continue;
    const auto fields = split_tsv_line(line);
    if (static_cast<int>(fields.size()) != 4 + t.dim)
      throw std::runtime_error("embedding table: expected " + std::to_string(4 + t.dim) +
                               " fields, got " + std::to_string(fields.size()));
    EmbeddingRecord r;
    r.subject_id = fields[0];
    r.visit_id = fields[1];
    r.activity = parse_activity(fields[2]);
    r.sequence_index = std::stoi(fields[3]);
    r.vec.resize(static_cast<std::size_t>(t.dim));
    for (int d = 0; d < t.dim; ++d)
      r.vec[static_cast<std::size_t>(d)] = std::stod(fields[static_cast<std::size_t>(4 + d)]);
    t.rows.push_back(std::move(r));
  }
  return t;
}

constexpr char kEmbeddingMagic[4] = {'G', 'E', 'B', '1'};

inline std::vector<std::uint8_t> encode_embedding_table(const EmbeddingTable& t) {
  ByteWriter w;
  w.raw(kEmbeddingMagic, 4);
  w.u16(1);
  w.u8(static_cast<std::uint8_t>(t.variant));
  w.u32(static_cast<std::uint32_t>(t.dim));
  w.u64(t.encoder_hash);
  w.u32(static_cast<std::uint32_t>(t.rows.size()));
  for (const auto& r : t.rows) {
    if (static_cast<int>(r.vec.size()) != t.dim)
      throw std::invalid_argument("embedding table: row width mismatch");
    w.str16(r.subject_id);
    w.str16(r.visit_id);
    w.u8(static_cast<std::uint8_t>(r.activity));
    w.u32(static_cast<std::uint32_t>(r.sequence_index));
    for (double v : r.vec) w.f32(static_cast<float>(v));
  }
  return std::move(w.bytes);
}

inline EmbeddingTable decode_embedding_table(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes, "embedding table");
  if (std::memcmp(r.take(4), kEmbeddingMagic, 4) != 0)
    throw std::runtime_error("embedding table: bad magic");
  if (r.u16() != 1) throw std::runtime_error("embedding table: unsupported version");
  EmbeddingTable t;
  const int variant = r.u8();
  if (variant < 0 || variant > 4) throw std::runtime_error("embedding table: bad variant");
  t.variant = static_cast<PoolVariant>(variant);
  t.dim = static_cast<int>(r.u32());
  t.encoder_hash = r.u64();
  const std::uint32_t n = r.u32();
  t.rows.resize(n);
  for (auto& row : t.rows) {
    row.subject_id = r.str16();
    row.visit_id = r.str16();
    row.activity = parse_activity_code(r.u8());
    row.sequence_index = static_cast<int>(r.u32());
    row.vec.resize(static_cast<std::size_t>(t.dim));
    for (int d = 0; d < t.dim; ++d)
      row.vec[static_cast<std::size_t>(d)] = static_cast<double>(r.f32());
  }
  r.expect_end();
  return t;
}

inline void write_embedding_table(const std::string& path, const EmbeddingTable& t) {
  write_file_bytes(path, encode_embedding_table(t));
}

inline EmbeddingTable read_embedding_table(const std::string& path) {
  return decode_embedding_table(read_file_bytes(path));
}

}  // namespace gaitmae
