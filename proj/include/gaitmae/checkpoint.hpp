#pragma once

// Model checkpoint format "GMW1". Parameters are stored as f32 little-endian
// payloads; save() first rounds the live doubles to f32 so that a
// save -> load -> forward sequence is bit-identical to continuing with the
// saved model. A trailing FNV-1a hash covers everything before it and doubles
// as the encoder identity recorded in embedding tables.
//
// Layout:
//   magic "GMW1" | u16 version | str16 config_text | u32 param_count
//   per param: str16 name | u8 ndim | u32 dims[ndim] | f32 values[numel]
//   u8 has_optimizer
//   if set: u64 step | f64 beta1 beta2 eps weight_decay
//           per param: f32 m[numel] | f32 v[numel]
//   u64 fnv1a64 of all preceding bytes

#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gaitmae/io_util.hpp"
#include "gaitmae/optim.hpp"
#include "gaitmae/tensor.hpp"

namespace gaitmae {

constexpr char kCheckpointMagic[4] = {'G', 'M', 'W', '1'};
constexpr std::uint16_t kCheckpointVersion = 1;

struct CheckpointParam {
  std::string name;
  Shape shape;
  std::vector<double> values;  // f32-exact
};

struct Checkpoint {
  std::string config_text;
  std::vector<CheckpointParam> params;
  bool has_optimizer = false;
  std::uint64_t step = 0;
  AdamWConfig opt_config;
  std::vector<std::vector<double>> opt_m, opt_v;  // f32-exact, per param
  std::uint64_t hash = 0;                         // filled on encode/decode
};

inline double round_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

inline void quantize_f32(std::vector<double>& values) {
  for (double& v : values) v = round_f32(v);
}

inline std::vector<std::uint8_t> encode_checkpoint(Checkpoint& ck) {
  ByteWriter w;
  w.raw(kCheckpointMagic, 4);
  w.u16(kCheckpointVersion);
  w.str16(ck.config_text);
  w.u32(static_cast<std::uint32_t>(ck.params.size()));
  for (auto& p : ck.params) {
    quantize_f32(p.values);
    w.str16(p.name);
    w.u8(static_cast<std::uint8_t>(p.shape.size()));
    for (int d : p.shape) w.u32(static_cast<std::uint32_t>(d));
    for (double v : p.values) w.f32(static_cast<float>(v));
  }
  w.u8(ck.has_optimizer ? 1 : 0);
  if (ck.has_optimizer) {
    if (ck.opt_m.size() != ck.params.size() || ck.opt_v.size() != ck.params.size())
      throw std::invalid_argument("checkpoint: optimizer moments do not match params");
    w.u64(ck.step);
    w.f64(ck.opt_config.beta1);
    w.f64(ck.opt_config.beta2);
    w.f64(ck.opt_config.eps);
    w.f64(ck.opt_config.weight_decay);
    for (std::size_t i = 0; i < ck.params.size(); ++i) {
      quantize_f32(ck.opt_m[i]);
      quantize_f32(ck.opt_v[i]);
      if (ck.opt_m[i].size() != ck.params[i].values.size() ||
          ck.opt_v[i].size() != ck.params[i].values.size())
        throw std::invalid_argument("checkpoint: moment size mismatch for '" +
                                    ck.params[i].name + "'");
      for (double v : ck.opt_m[i]) w.f32(static_cast<float>(v));
      for (double v : ck.opt_v[i]) w.f32(static_cast<float>(v));
    }
  }
  ck.hash = fnv1a64(w.bytes.data(), w.bytes.size());
  w.u64(ck.hash);
  return std::move(w.bytes);
}

inline Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 12) throw std::runtime_error("checkpoint: truncated file");
  const std::size_t body = bytes.size() - 8;
  const std::uint64_t expect = fnv1a64(bytes.data(), body);

  ByteReader r(bytes, "checkpoint");
  if (std::memcmp(r.take(4), kCheckpointMagic, 4) != 0)
    throw std::runtime_error("checkpoint: bad magic");
  if (r.u16() != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version");

  Checkpoint ck;
  ck.config_text = r.str16();
  const std::uint32_t count = r.u32();
  ck.params.resize(count);
  for (auto& p : ck.params) {
    p.name = r.str16();
    const int nd = r.u8();
    p.shape.resize(static_cast<std::size_t>(nd));
    for (int d = 0; d < nd; ++d) p.shape[static_cast<std::size_t>(d)] = static_cast<int>(r.u32());
    const std::size_t n = shape_numel(p.shape);
    p.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) p.values[i] = static_cast<double>(r.f32());
  }
  ck.has_optimizer = r.u8() != 0;
  if (ck.has_optimizer) {
    ck.step = r.u64();
    ck.opt_config.beta1 = r.f64();
    ck.opt_config.beta2 = r.f64();
    ck.opt_config.eps = r.f64();
    ck.opt_config.weight_decay = r.f64();
    ck.opt_m.resize(count);
    ck.opt_v.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t n = ck.params[i].values.size();
      ck.opt_m[i].resize(n);
      ck.opt_v[i].resize(n);
      for (std::size_t k = 0; k < n; ++k) ck.opt_m[i][k] = static_cast<double>(r.f32());
      for (std::size_t k = 0; k < n; ++k) ck.opt_v[i][k] = static_cast<double>(r.f32());
    }
  }
  ck.hash = r.u64();
  r.expect_end();
  if (ck.hash != expect) throw std::runtime_error("checkpoint: hash mismatch");
  return ck;
}

// Build a checkpoint snapshot from live parameters, rounding the live values
// (and optimizer moments) to f32 in place.
inline Checkpoint snapshot_checkpoint(const std::string& config_text,
                                      std::vector<std::pair<std::string, Tensor>>& params,
                                      AdamW* opt = nullptr) {
  Checkpoint ck;
  ck.config_text = config_text;
  ck.params.reserve(params.size());
  for (auto& [name, t] : params) {
    quantize_f32(t.values());
    ck.params.push_back({name, t.shape(), t.values()});
  }
  if (opt != nullptr) {
    ck.has_optimizer = true;
    ck.step = opt->step_count();
    ck.opt_config = opt->config();
    for (std::size_t i = 0; i < params.size(); ++i) {
      quantize_f32(opt->moment1()[i]);
      quantize_f32(opt->moment2()[i]);
      ck.opt_m.push_back(opt->moment1()[i]);
      ck.opt_v.push_back(opt->moment2()[i]);
    }
  }
  return ck;
}

// Copy checkpoint values into live parameters by name; shapes must agree.
inline void restore_params(const Checkpoint& ck,
                           std::vector<std::pair<std::string, Tensor>>& params,
                           AdamW* opt = nullptr) {
  if (ck.params.size() != params.size())
    throw std::runtime_error("checkpoint: parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& [name, t] = params[i];
    if (ck.params[i].name != name)
      throw std::runtime_error("checkpoint: parameter '" + ck.params[i].name +
                               "' where '" + name + "' expected");
    if (ck.params[i].shape != t.shape())
      throw std::runtime_error("checkpoint: shape mismatch for '" + name + "'");
    t.values() = ck.params[i].values;
  }
  if (opt != nullptr) {
    if (!ck.has_optimizer)
      throw std::runtime_error("checkpoint: no optimizer state to restore");
    opt->set_step_count(ck.step);
    for (std::size_t i = 0; i < params.size(); ++i) {
      opt->moment1()[i] = ck.opt_m[i];
      opt->moment2()[i] = ck.opt_v[i];
    }
  }
}

inline std::uint64_t write_checkpoint(const std::string& path, Checkpoint& ck) {
  write_file_bytes(path, encode_checkpoint(ck));
  return ck.hash;
}

inline Checkpoint read_checkpoint(const std::string& path) {
  return decode_checkpoint(read_file_bytes(path));
}

}  // namespace gaitmae
