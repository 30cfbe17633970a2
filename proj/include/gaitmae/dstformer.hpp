#pragma once

// Dual-stream spatiotemporal transformer encoder with a reconstruction
// decoder, the composite masking sampler, the three-term reconstruction
// loss, and the denoising pretraining loop.
//
// Wiring per block: one spatial MHA (attention over joints within a frame)
// and one temporal MHA (attention over frames per joint, rotary position
// encoding on queries/keys) are each applied twice: the ST stream runs
// spatial then temporal, the TS stream runs the same sublayers in reverse
// order. A per-position linear map on the concatenated stream outputs
// followed by a two-way softmax yields fusion weights; the fused output goes
// through residual + layernorm and a feed-forward MLP with its own residual
// + layernorm. A learned per-joint embedding is added once after the input
// projection; no absolute temporal embedding exists anywhere, so temporal
// position enters only through the rotary rotation (relative offsets).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gaitmae/checkpoint.hpp"
#include "gaitmae/config.hpp"
#include "gaitmae/nn_ops.hpp"
#include "gaitmae/optim.hpp"
#include "gaitmae/rng.hpp"
#include "gaitmae/skeleton.hpp"
#include "gaitmae/taxonomy.hpp"
#include "gaitmae/tensor.hpp"

namespace gaitmae {

struct EncoderConfig {
  int blocks = 8;
  int dim = 128;
  int heads = 8;
  int joints = kJointCount;
  int frames = 900;
  int in_channels = kChannelCount;
  int mlp_ratio = 2;
  int decoder_hidden1 = 32;
  int decoder_hidden2 = 32;
  int attention_chunk = 0;  // query rows per chunk; 0 = all rows at once

  void validate() const {
    if (blocks < 1) throw std::invalid_argument("encoder config: blocks must be >= 1");
    if (dim < 2 || heads < 1 || dim % heads != 0)
      throw std::invalid_argument("encoder config: dim must be a positive multiple of heads");
    if ((dim / heads) % 2 != 0)
      throw std::invalid_argument("encoder config: head dim must be even for rotary encoding");
    if (joints < 1 || frames < 1 || in_channels < 3)
      throw std::invalid_argument("encoder config: bad input dims");
    if (mlp_ratio < 1 || decoder_hidden1 < 1 || decoder_hidden2 < 1)
      throw std::invalid_argument("encoder config: bad hidden sizes");
  }

  std::string to_text() const {
    ConfigMap m;
    m["blocks"] = std::to_string(blocks);
    m["dim"] = std::to_string(dim);
    m["heads"] = std::to_string(heads);
    m["joints"] = std::to_string(joints);
    m["frames"] = std::to_string(frames);
    m["in_channels"] = std::to_string(in_channels);
    m["mlp_ratio"] = std::to_string(mlp_ratio);
    m["decoder_hidden1"] = std::to_string(decoder_hidden1);
    m["decoder_hidden2"] = std::to_string(decoder_hidden2);
    m["attention_chunk"] = std::to_string(attention_chunk);
    return render_config(m);
  }

  static EncoderConfig from_text(const std::string& text) {
    const ConfigMap m = parse_config_text(text);
    reject_unknown_keys(m,
                        {"blocks", "dim", "heads", "joints", "frames", "in_channels",
                         "mlp_ratio", "decoder_hidden1", "decoder_hidden2",
                         "attention_chunk"},
                        "encoder config");
    EncoderConfig c;
    c.blocks = static_cast<int>(config_get_int(m, "blocks", c.blocks));
    c.dim = static_cast<int>(config_get_int(m, "dim", c.dim));
    c.heads = static_cast<int>(config_get_int(m, "heads", c.heads));
    c.joints = static_cast<int>(config_get_int(m, "joints", c.joints));
    c.frames = static_cast<int>(config_get_int(m, "frames", c.frames));
    c.in_channels = static_cast<int>(config_get_int(m, "in_channels", c.in_channels));
    c.mlp_ratio = static_cast<int>(config_get_int(m, "mlp_ratio", c.mlp_ratio));
    c.decoder_hidden1 =
        static_cast<int>(config_get_int(m, "decoder_hidden1", c.decoder_hidden1));
    c.decoder_hidden2 =
        static_cast<int>(config_get_int(m, "decoder_hidden2", c.decoder_hidden2));
    c.attention_chunk =
        static_cast<int>(config_get_int(m, "attention_chunk", c.attention_chunk));
    c.validate();
    return c;
  }
};

// ---------------------------------------------------------------------------
// Masking.

struct MaskConfig {
  int span_length = 16;
  int groups_per_span = 4;
  double frame_mask_prob = 0.05;
};

struct MaskPlan {
  int frames = 0;
  int joints = 0;
  MaskConfig config;
  std::vector<std::uint8_t> masked;  // frames x joints

  bool at(int f, int j) const {
    return masked[static_cast<std::size_t>(f) * static_cast<std::size_t>(joints) +
                  static_cast<std::size_t>(j)] != 0;
  }
  std::size_t masked_count() const {
    std::size_t n = 0;
    for (auto b : masked) n += b;
    return n;
  }
  double masked_fraction() const {
    return masked.empty() ? 0.0
                          : static_cast<double>(masked_count()) /
                                static_cast<double>(masked.size());
  }
};

// Tile the sequence into contiguous spans; per span mask the union of
// `groups_per_span` masking groups drawn uniformly without replacement; then
// mask whole frames independently. Group draws happen span by span, then the
// frame draws, so a seed fixes the plan.
inline MaskPlan sample_mask(int frames, int joints, std::uint64_t seed,
                            MaskConfig cfg = {}) {
  const auto& groups = masking_groups();
  if (joints != kJointCount)
    throw std::invalid_argument("sample_mask: masking groups cover a " +
                                std::to_string(kJointCount) + "-joint skeleton");
  if (frames < 1) throw std::invalid_argument("sample_mask: frames must be >= 1");
  if (cfg.span_length < 1 || cfg.groups_per_span < 0 ||
      cfg.groups_per_span > static_cast<int>(groups.size()) ||
      cfg.frame_mask_prob < 0.0 || cfg.frame_mask_prob > 1.0)
    throw std::invalid_argument("sample_mask: bad mask config");

  MaskPlan plan;
  plan.frames = frames;
  plan.joints = joints;
  plan.config = cfg;
  plan.masked.assign(static_cast<std::size_t>(frames) * static_cast<std::size_t>(joints), 0);

  Rng rng(seed);
  std::vector<int> order(groups.size());
  for (int s = 0; s * cfg.span_length < frames; ++s) {
    for (std::size_t g = 0; g < groups.size(); ++g) order[g] = static_cast<int>(g);
    for (int i = 0; i < cfg.groups_per_span; ++i) {
      const auto j = rng.uniform_int(i, static_cast<std::int64_t>(groups.size()) - 1);
      std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }
    const int f0 = s * cfg.span_length;
    const int f1 = std::min(frames, f0 + cfg.span_length);
    for (int gi = 0; gi < cfg.groups_per_span; ++gi)
      for (int j : groups[static_cast<std::size_t>(order[static_cast<std::size_t>(gi)])].joints)
        for (int f = f0; f < f1; ++f)
          plan.masked[static_cast<std::size_t>(f) * joints + static_cast<std::size_t>(j)] = 1;
  }
  for (int f = 0; f < frames; ++f)
    if (rng.uniform() < cfg.frame_mask_prob)
      for (int j = 0; j < joints; ++j)
        plan.masked[static_cast<std::size_t>(f) * joints + static_cast<std::size_t>(j)] = 1;
  return plan;
}

// Zero every channel of the masked (frame, joint) cells.
inline SkeletonSequence apply_mask(const SkeletonSequence& seq, const MaskPlan& plan) {
  if (seq.frames != plan.frames || seq.joints != plan.joints)
    throw std::invalid_argument("apply_mask: plan shape does not match sequence");
  SkeletonSequence out = seq;
  for (int f = 0; f < seq.frames; ++f)
    for (int j = 0; j < seq.joints; ++j)
      if (plan.at(f, j))
        for (int c = 0; c < seq.channels; ++c) out.at(f, j, c) = 0.0;
  return out;
}

// ---------------------------------------------------------------------------
// Sequence <-> tensor bridges.

inline Tensor sequence_to_tensor(const SkeletonSequence& seq) {
  return Tensor::from_data({seq.frames, seq.joints, seq.channels}, seq.data);
}

// Coordinate channels only; the reconstruction target.
inline Tensor sequence_targets(const SkeletonSequence& seq) {
  std::vector<double> v(static_cast<std::size_t>(seq.frames) * seq.joints * 3);
  std::size_t k = 0;
  for (int f = 0; f < seq.frames; ++f)
    for (int j = 0; j < seq.joints; ++j)
      for (int c = 0; c < 3; ++c) v[k++] = seq.at(f, j, c);
  return Tensor::from_data({seq.frames, seq.joints, 3}, std::move(v));
}

// ---------------------------------------------------------------------------
// Model.

class DstFormer {
 public:
  struct Mha {
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  };
  struct Block {
    Mha spat, temp;
    Tensor fuse_w, fuse_b;
    Tensor n1g, n1b;
    Tensor mlp_w1, mlp_b1, mlp_w2, mlp_b2;
    Tensor n2g, n2b;
  };
  struct DecodeOut {
    Tensor recon;     // F x J x 3
    Tensor prelogit;  // F x J x decoder_hidden2, input of the last linear
  };

  DstFormer(EncoderConfig cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(derive_seed(seed, 0x1017));
    const int D = cfg_.dim;
    auto weight = [&](const std::string& name, Shape shape) {
      std::vector<double> v(shape_numel(shape));
      for (auto& x : v) x = rng.normal() * 0.02;
      return reg(name, Tensor::from_data(std::move(shape), std::move(v), true, name));
    };
    auto zeros = [&](const std::string& name, Shape shape) {
      return reg(name, Tensor::zeros(std::move(shape), true, name));
    };
    auto ones = [&](const std::string& name, Shape shape) {
      return reg(name, Tensor::full(std::move(shape), 1.0, true));
    };

    input_w_ = weight("input.w", {cfg_.in_channels, D});
    input_b_ = zeros("input.b", {D});
    input_pos_ = weight("input.pos", {cfg_.joints, D});

    blocks_.resize(static_cast<std::size_t>(cfg_.blocks));
    for (int k = 0; k < cfg_.blocks; ++k) {
      const std::string p = "blk" + std::to_string(k) + ".";
      Block& b = blocks_[static_cast<std::size_t>(k)];
      auto mha = [&](const std::string& mp) {
        Mha m;
        m.wq = weight(mp + "wq", {D, D});
        m.bq = zeros(mp + "bq", {D});
        m.wk = weight(mp + "wk", {D, D});
        m.bk = zeros(mp + "bk", {D});
        m.wv = weight(mp + "wv", {D, D});
        m.bv = zeros(mp + "bv", {D});
        m.wo = weight(mp + "wo", {D, D});
        m.bo = zeros(mp + "bo", {D});
        return m;
      };
      b.spat = mha(p + "spat.");
      b.temp = mha(p + "temp.");
      b.fuse_w = weight(p + "fuse.w", {2 * D, 2});
      b.fuse_b = zeros(p + "fuse.b", {2});
      b.n1g = ones(p + "norm1.g", {D});
      b.n1b = zeros(p + "norm1.b", {D});
      b.mlp_w1 = weight(p + "mlp.w1", {D, cfg_.mlp_ratio * D});
      b.mlp_b1 = zeros(p + "mlp.b1", {cfg_.mlp_ratio * D});
      b.mlp_w2 = weight(p + "mlp.w2", {cfg_.mlp_ratio * D, D});
      b.mlp_b2 = zeros(p + "mlp.b2", {D});
      b.n2g = ones(p + "norm2.g", {D});
      b.n2b = zeros(p + "norm2.b", {D});
    }

    final_ng_ = ones("final.norm.g", {D});
    final_nb_ = zeros("final.norm.b", {D});
    final_w_ = weight("final.w", {D, D});
    final_b_ = zeros("final.b", {D});

    dec_w1_ = weight("dec.w1", {D, cfg_.decoder_hidden1});
    dec_b1_ = zeros("dec.b1", {cfg_.decoder_hidden1});
    dec_w2_ = weight("dec.w2", {cfg_.decoder_hidden1, cfg_.decoder_hidden2});
    dec_b2_ = zeros("dec.b2", {cfg_.decoder_hidden2});
    dec_w3_ = weight("dec.w3", {cfg_.decoder_hidden2, 3});
    dec_b3_ = zeros("dec.b3", {3});
  }

  const EncoderConfig& config() const { return cfg_; }
  std::vector<std::pair<std::string, Tensor>>& params() { return params_; }
  const std::vector<std::pair<std::string, Tensor>>& params() const { return params_; }

  // x: F x J x C. temporal_offset shifts the rotary frame positions; with no
  // absolute temporal embedding the latent is invariant to it up to float
  // noise. fusion_out, when given, receives each block's F x J x 2 fusion
  // weights.
  Tensor encode(const Tensor& x, double temporal_offset = 0.0,
                std::vector<Tensor>* fusion_out = nullptr) const {
    if (x.ndim() != 3 || x.dim(1) != cfg_.joints || x.dim(2) != cfg_.in_channels)
      throw std::invalid_argument("encode: expected F x " + std::to_string(cfg_.joints) +
                                  " x " + std::to_string(cfg_.in_channels) + " input, got " +
                                  shape_str(x.shape()));
    const int F = x.dim(0), J = cfg_.joints, D = cfg_.dim;
    Tensor h = reshape(add(matmul(reshape(x, {F * J, cfg_.in_channels}), input_w_),
                           input_b_),
                       {F, J, D});
    h = add(h, input_pos_);
    for (int k = 0; k < cfg_.blocks; ++k) {
      const Block& b = blocks_[static_cast<std::size_t>(k)];
      Tensor st = temporal_mha(spatial_mha(h, b.spat), b.temp, temporal_offset);
      Tensor ts = spatial_mha(temporal_mha(h, b.temp, temporal_offset), b.spat);
      Tensor alpha = softmax_lastdim(add(matmul(concat({st, ts}, -1), b.fuse_w), b.fuse_b));
      if (fusion_out != nullptr) fusion_out->push_back(alpha);
      Tensor fused =
          add(mul(st, slice(alpha, -1, 0, 1)), mul(ts, slice(alpha, -1, 1, 1)));
      Tensor u = layernorm(add(h, fused), b.n1g, b.n1b);
      Tensor m = add(matmul(gelu(add(matmul(u, b.mlp_w1), b.mlp_b1)), b.mlp_w2), b.mlp_b2);
      h = layernorm(add(u, m), b.n2g, b.n2b);
      if (!all_finite(h))
        throw std::runtime_error("encode: non-finite activations in block " +
                                 std::to_string(k));
    }
    return tanh_t(add(matmul(layernorm(h, final_ng_, final_nb_), final_w_), final_b_));
  }

  Tensor decode(const Tensor& latent) const { return decode_with_prelogit(latent).recon; }

  DecodeOut decode_with_prelogit(const Tensor& latent) const {
    Tensor h1 = tanh_t(add(matmul(latent, dec_w1_), dec_b1_));
    Tensor h2 = tanh_t(add(matmul(h1, dec_w2_), dec_b2_));
    return {add(matmul(h2, dec_w3_), dec_b3_), h2};
  }

  Checkpoint snapshot(AdamW* opt = nullptr) {
    return snapshot_checkpoint(cfg_.to_text(), params_, opt);
  }

  static DstFormer from_checkpoint(const Checkpoint& ck, AdamW* opt = nullptr) {
    DstFormer model(EncoderConfig::from_text(ck.config_text), 0);
    restore_params(ck, model.params_, opt);
    return model;
  }

 private:
  Tensor reg(const std::string& name, Tensor t) {
    params_.emplace_back(name, t);
    return t;
  }

  // F x J x D -> heads over joints within each frame.
  Tensor spatial_mha(const Tensor& h, const Mha& m) const {
    const int F = h.dim(0), J = h.dim(1), D = cfg_.dim, H = cfg_.heads, dh = D / H;
    auto split = [&](const Tensor& t) {
      return reshape(permute(reshape(t, {F, J, H, dh}), {0, 2, 1, 3}), {F * H, J, dh});
    };
    Tensor q = split(add(matmul(h, m.wq), m.bq));
    Tensor k = split(add(matmul(h, m.wk), m.bk));
    Tensor v = split(add(matmul(h, m.wv), m.bv));
    Tensor o = attention(q, k, v, cfg_.attention_chunk);
    o = reshape(permute(reshape(o, {F, H, J, dh}), {0, 2, 1, 3}), {F, J, D});
    return add(matmul(o, m.wo), m.bo);
  }

  // F x J x D -> heads over frames per joint; rotary encoding on q and k.
  Tensor temporal_mha(const Tensor& h, const Mha& m, double offset) const {
    const int F = h.dim(0), J = h.dim(1), D = cfg_.dim, H = cfg_.heads, dh = D / H;
    auto split = [&](const Tensor& t) {
      return reshape(permute(reshape(t, {F, J, H, dh}), {1, 2, 0, 3}), {J * H, F, dh});
    };
    Tensor q = rope_rotate(split(add(matmul(h, m.wq), m.bq)), offset);
    Tensor k = rope_rotate(split(add(matmul(h, m.wk), m.bk)), offset);
    Tensor v = split(add(matmul(h, m.wv), m.bv));
    Tensor o = attention(q, k, v, cfg_.attention_chunk);
    o = reshape(permute(reshape(o, {J, H, F, dh}), {2, 0, 1, 3}), {F, J, D});
    return add(matmul(o, m.wo), m.bo);
  }

  EncoderConfig cfg_;
  std::vector<std::pair<std::string, Tensor>> params_;
  Tensor input_w_, input_b_, input_pos_;
  std::vector<Block> blocks_;
  Tensor final_ng_, final_nb_, final_w_, final_b_;
  Tensor dec_w1_, dec_b1_, dec_w2_, dec_b2_, dec_w3_, dec_b3_;
};

// ---------------------------------------------------------------------------
// Reconstruction loss.

struct LossWeights {
  double lambda1 = 0.1;  // scale-invariant position term
  double lambda2 = 0.1;  // velocity term
  bool masked_only = false;
};

struct LossBreakdown {
  double mpjpe = 0.0;
  double nmpjpe = 0.0;
  double velocity = 0.0;
  double total = 0.0;
};

namespace detail {

// Mean Euclidean distance over (frame, joint) cells; optionally restricted to
// the plan's masked cells (zero masked cells -> term 0).
inline Tensor mean_joint_distance(const Tensor& pred, const Tensor& target,
                                  const MaskPlan* plan) {
  Tensor d = sub(pred, target);
  Tensor dist = sqrt_t(sum_axis(mul(d, d), -1));  // F x J
  if (plan == nullptr) return mean_all(dist);
  const std::size_t count = plan->masked_count();
  if (count == 0) return Tensor::scalar(0.0);
  std::vector<double> w(plan->masked.size());
  for (std::size_t i = 0; i < w.size(); ++i)
    w[i] = plan->masked[i] ? 1.0 / static_cast<double>(count) : 0.0;
  return sum_all(mul(dist, Tensor::from_data({plan->frames, plan->joints}, std::move(w))));
}

}  // namespace detail

// loss = MPJPE + lambda1 * NMPJPE + lambda2 * VelocityError, where NMPJPE
// rescales the prediction by the per-frame least-squares scale before the
// distance, and the velocity term compares frame-to-frame differences
// (exactly 0 when F < 2). With masked_only the two position terms average
// over masked cells only; the velocity term always spans all frame pairs.
inline Tensor reconstruction_loss(const Tensor& pred, const Tensor& target,
                                  const LossWeights& weights,
                                  const MaskPlan* plan = nullptr,
                                  LossBreakdown* breakdown = nullptr) {
  if (pred.shape() != target.shape() || pred.ndim() != 3 || pred.dim(2) != 3)
    throw std::invalid_argument("reconstruction_loss: expected matching F x J x 3");
  const int F = pred.dim(0);
  const MaskPlan* position_plan = weights.masked_only ? plan : nullptr;
  if (position_plan != nullptr &&
      (position_plan->frames != F || position_plan->joints != pred.dim(1)))
    throw std::invalid_argument("reconstruction_loss: plan shape mismatch");

  Tensor mpjpe = detail::mean_joint_distance(pred, target, position_plan);

  Tensor s = reshape(row_optimal_scale(pred, target), {F, 1, 1});
  Tensor nmpjpe = detail::mean_joint_distance(mul(pred, s), target, position_plan);

  Tensor velocity = Tensor::scalar(0.0);
  if (F >= 2) {
    Tensor dp = sub(slice(pred, 0, 1, F - 1), slice(pred, 0, 0, F - 1));
    Tensor dt = sub(slice(target, 0, 1, F - 1), slice(target, 0, 0, F - 1));
    velocity = detail::mean_joint_distance(dp, dt, nullptr);
  }

  Tensor total = add(mpjpe, add(mul_scalar(nmpjpe, weights.lambda1),
                                mul_scalar(velocity, weights.lambda2)));
  if (breakdown != nullptr) {
    breakdown->mpjpe = mpjpe.item();
    breakdown->nmpjpe = nmpjpe.item();
    breakdown->velocity = velocity.item();
    breakdown->total = total.item();
  }
  return total;
}

// ---------------------------------------------------------------------------
// Pretraining.

struct PretrainConfig {
  std::int64_t steps = 500;
  int batch_size = 2;  // sequences per step; each contributes a clean and a noisy copy
  double lr_max = 1e-3;
  double lr_min = 0.0;
  std::int64_t warmup_steps = -1;  // -1: round(0.3 * steps per epoch)
  double sigma = 0.05;
  LossWeights loss;
  MaskConfig mask;
  double holdout_fraction = 0.1;
  std::int64_t eval_every = 0;  // 0: at each epoch end
  std::uint64_t seed = 42;
};

struct LossCurvePoint {
  std::int64_t step;  // 1-based, after the update
  double lr;
  LossBreakdown loss;
};

struct PretrainResult {
  std::vector<LossCurvePoint> curve;
  std::vector<std::pair<std::int64_t, double>> holdout_mpjpe;
  double final_train_mpjpe = 0.0;
  double final_holdout_mpjpe = std::numeric_limits<double>::quiet_NaN();
  std::int64_t warmup_steps = 0;
  std::size_t held_in_count = 0;
  std::size_t holdout_count = 0;
};

// Masked-reconstruction error on clean inputs under per-sequence masks drawn
// from `mask_seed`; the fixed seed makes repeated evaluations comparable.
inline double evaluate_mpjpe(const DstFormer& model,
                             const std::vector<SkeletonSequence>& seqs,
                             std::uint64_t mask_seed, const MaskConfig& mask_cfg) {
  if (seqs.empty()) throw std::invalid_argument("evaluate_mpjpe: no sequences");
  NoGradGuard ng;
  double sum = 0.0;
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    const MaskPlan plan =
        sample_mask(seqs[i].frames, seqs[i].joints, derive_seed(mask_seed, i), mask_cfg);
    Tensor pred = model.decode(model.encode(sequence_to_tensor(apply_mask(seqs[i], plan))));
    LossBreakdown bd;
    reconstruction_loss(pred, sequence_targets(seqs[i]), LossWeights{0.0, 0.0, false},
                        nullptr, &bd);
    sum += bd.mpjpe;
  }
  return sum / static_cast<double>(seqs.size());
}

// Denoising masked-autoencoder loop. Every step draws a batch from the
// held-in pool (epoch-shuffled), forwards a clean and a sigma-jittered copy
// of each sequence through fresh masks, averages the losses against the
// clean targets, and takes one AdamW step at the scheduled rate. Items are
// backpropagated one at a time (gradients accumulate), so peak memory holds
// one graph. All randomness is keyed off (seed, absolute step), making a
// resumed run consume the same streams as an uninterrupted one.
inline PretrainResult pretrain(DstFormer& model, AdamW& opt,
                               const std::vector<SkeletonSequence>& data,
                               const PretrainConfig& cfg) {
  if (data.empty()) throw std::invalid_argument("pretrain: no sequences");
  if (cfg.batch_size < 1 || cfg.steps < 0 || cfg.sigma < 0.0 ||
      cfg.holdout_fraction < 0.0 || cfg.holdout_fraction >= 1.0)
    throw std::invalid_argument("pretrain: bad config");

  std::vector<std::size_t> shuffled(data.size());
  for (std::size_t i = 0; i < shuffled.size(); ++i) shuffled[i] = i;
  {
    Rng rng(derive_seed(cfg.seed, 0xE7A1));
    rng.shuffle(shuffled);
  }
  std::size_t n_hold = static_cast<std::size_t>(
      std::llround(cfg.holdout_fraction * static_cast<double>(data.size())));
  if (n_hold >= data.size()) n_hold = data.size() - 1;
  std::vector<SkeletonSequence> holdout, held_in;
  for (std::size_t i = 0; i < n_hold; ++i) holdout.push_back(data[shuffled[i]]);
  for (std::size_t i = n_hold; i < shuffled.size(); ++i) held_in.push_back(data[shuffled[i]]);

  const std::int64_t steps_per_epoch = static_cast<std::int64_t>(
      (held_in.size() + static_cast<std::size_t>(cfg.batch_size) - 1) /
      static_cast<std::size_t>(cfg.batch_size));
  const std::int64_t warmup =
      cfg.warmup_steps >= 0 ? cfg.warmup_steps
                            : std::llround(0.3 * static_cast<double>(steps_per_epoch));

  PretrainResult result;
  result.warmup_steps = warmup;
  result.held_in_count = held_in.size();
  result.holdout_count = holdout.size();

  const std::uint64_t eval_seed = derive_seed(cfg.seed, 0xEA17);
  std::vector<std::size_t> epoch_order(held_in.size());
  std::int64_t shuffled_epoch = -1;
  for (std::int64_t t = static_cast<std::int64_t>(opt.step_count()); t < cfg.steps; ++t) {
    const std::int64_t epoch = t / steps_per_epoch;
    const std::int64_t pos = t % steps_per_epoch;
    if (epoch != shuffled_epoch) {
      for (std::size_t i = 0; i < epoch_order.size(); ++i) epoch_order[i] = i;
      Rng rng(derive_seed(derive_seed(cfg.seed, 0xEC0C), static_cast<std::uint64_t>(epoch)));
      rng.shuffle(epoch_order);
      shuffled_epoch = epoch;
    }

    const std::size_t b0 = static_cast<std::size_t>(pos) * cfg.batch_size;
    const std::size_t b1 = std::min(held_in.size(), b0 + cfg.batch_size);
    const std::uint64_t step_seed =
        derive_seed(derive_seed(cfg.seed, 0x57E9), static_cast<std::uint64_t>(t));
    const double item_weight = 1.0 / (2.0 * static_cast<double>(b1 - b0));

    opt.zero_grad();
    LossBreakdown step_loss;
    for (std::size_t bi = b0; bi < b1; ++bi) {
      const SkeletonSequence& clean = held_in[epoch_order[bi]];
      const Tensor target = sequence_targets(clean);
      for (int noisy = 0; noisy < 2; ++noisy) {
        const std::uint64_t item = 2 * (bi - b0) + static_cast<std::uint64_t>(noisy);
        SkeletonSequence input =
            noisy ? gaussian_jitter(clean, cfg.sigma, derive_seed(step_seed, 2 * item + 1))
                  : clean;
        const MaskPlan plan = sample_mask(input.frames, input.joints,
                                          derive_seed(step_seed, 2 * item), cfg.mask);
        input = apply_mask(input, plan);
        LossBreakdown bd;
        Tensor loss = reconstruction_loss(model.decode(model.encode(sequence_to_tensor(input))),
                                          target, cfg.loss, &plan, &bd);
        if (!std::isfinite(bd.total))
          throw std::runtime_error("pretrain: loss diverged at step " + std::to_string(t));
        backward(mul_scalar(loss, item_weight));
        step_loss.mpjpe += bd.mpjpe * item_weight;
        step_loss.nmpjpe += bd.nmpjpe * item_weight;
        step_loss.velocity += bd.velocity * item_weight;
        step_loss.total += bd.total * item_weight;
      }
    }

    const double lr = lr_schedule(t + 1, cfg.steps, warmup, cfg.lr_max, cfg.lr_min);
    opt.step(lr);
    result.curve.push_back({t + 1, lr, step_loss});

    const bool eval_now = cfg.eval_every > 0 ? (t + 1) % cfg.eval_every == 0
                                             : pos == steps_per_epoch - 1;
    if (eval_now && !holdout.empty())
      result.holdout_mpjpe.emplace_back(
          t + 1, evaluate_mpjpe(model, holdout, eval_seed, cfg.mask));
  }

  result.final_train_mpjpe = evaluate_mpjpe(model, held_in, eval_seed, cfg.mask);
  if (!holdout.empty())
    result.final_holdout_mpjpe = evaluate_mpjpe(model, holdout, eval_seed, cfg.mask);
  return result;
}

}  // namespace gaitmae
