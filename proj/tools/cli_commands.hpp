#pragma once

// Subcommand implementations behind the batch front end. Shared contracts:
//   - settings come from flags; --seed falls back to $GAITMAE_SEED, then 42
//   - inputs are validated before any output file is created
//   - every run writes a resolved-config copy next to its outputs
//   - outputs are re-read through their format readers before the command
//     reports success, so exit code 0 implies parseable artifacts
// All writers emit deterministic bytes: rerunning a command with equal flags
// produces byte-identical files.

#include <algorithm>
#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gaitmae/ablation.hpp"
#include "gaitmae/checkpoint.hpp"
#include "gaitmae/config.hpp"
#include "gaitmae/dstformer.hpp"
#include "gaitmae/eval.hpp"
#include "gaitmae/features.hpp"
#include "gaitmae/gsk.hpp"
#include "gaitmae/io_util.hpp"
#include "gaitmae/pooling.hpp"
#include "gaitmae/skeleton.hpp"
#include "gaitmae/synthetic.hpp"
#include "gaitmae/tables.hpp"
#include "gaitmae/taxonomy.hpp"

namespace gaitmae::cli {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Dataset directory layout. A data directory is defined by its manifest:
// one row per stored sequence, with the file path relative to the directory.

struct ManifestRow {
  std::string subject_id;
  std::string visit_id;
  std::string activity;
  int sequence_index = 0;
  std::string file;
};

inline constexpr const char* kManifestHeader =
    "subject_id\tvisit_id\tactivity\tsequence_index\tfile";

inline std::string render_manifest(const std::vector<ManifestRow>& rows) {
  std::string out = std::string(kManifestHeader) + "\n";
  for (const auto& r : rows)
    out += r.subject_id + "\t" + r.visit_id + "\t" + r.activity + "\t" +
           std::to_string(r.sequence_index) + "\t" + r.file + "\n";
  return out;
}

inline std::vector<ManifestRow> read_manifest(const fs::path& path) {
  const std::string text = read_file_text(path);
  std::vector<ManifestRow> rows;
  std::size_t pos = 0;
  int line_no = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    const std::string line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line_no == 1) {
      if (line != kManifestHeader)
        throw std::runtime_error("bad manifest header in " + path.string());
      continue;
    }
    if (line.empty()) continue;
    const auto f = split_tsv_line(line);
    if (f.size() != 5)
      throw std::runtime_error("bad manifest row at line " +
                               std::to_string(line_no) + " in " + path.string());
    rows.push_back({f[0], f[1], f[2],
                    static_cast<int>(parse_double_field(f[3], path.string())), f[4]});
  }
  return rows;
}

// Reads every sequence listed by a data directory's manifest, checking each
// file's identity fields against its manifest row. Window indices are not
// part of the capture format; the manifest is their source of truth.
inline std::vector<SkeletonSequence> load_sequences(const fs::path& dir) {
  if (!fs::is_directory(dir))
    throw std::runtime_error("data directory not found: " + dir.string());
  const fs::path mpath = dir / "manifest.tsv";
  if (!fs::exists(mpath))
    throw std::runtime_error("no manifest.tsv in " + dir.string());
  std::vector<SkeletonSequence> seqs;
  for (const auto& row : read_manifest(mpath)) {
    SkeletonSequence seq = read_gsk(dir / row.file);
    if (seq.subject_id != row.subject_id || seq.visit_id != row.visit_id ||
        std::string(activity_name(seq.activity)) != row.activity)
      throw std::runtime_error("manifest row does not match " + row.file);
    seq.sequence_index = row.sequence_index;
    seqs.push_back(std::move(seq));
  }
  return seqs;
}

inline std::string gsk_filename(const SkeletonSequence& seq, bool windowed) {
  std::string name = seq.subject_id + "_" + seq.visit_id + "_" +
                     std::string(activity_name(seq.activity));
  if (windowed) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "_w%03d", seq.sequence_index);
    name += buf;
  }
  return name + ".gsk";
}

// ---------------------------------------------------------------------------
// Shared option plumbing.

struct CommonArgs {
  std::uint64_t seed = 42;
  int jobs = 1;
  std::string out;
};

inline void add_common(CLI::App* cmd, CommonArgs* c) {
  cmd->add_option("--seed", c->seed, "RNG seed")
      ->envname("GAITMAE_SEED")
      ->capture_default_str();
  cmd->add_option("--jobs", c->jobs, "worker count (1 for bit-reproducible runs)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--out", c->out, "output directory")->required();
}

inline void put(ConfigMap& cfg, const std::string& key, const std::string& v) {
  cfg[key] = v;
}
inline void put(ConfigMap& cfg, const std::string& key, std::int64_t v) {
  cfg[key] = std::to_string(v);
}
inline void put(ConfigMap& cfg, const std::string& key, int v) {
  cfg[key] = std::to_string(v);
}
inline void put(ConfigMap& cfg, const std::string& key, std::uint64_t v) {
  cfg[key] = std::to_string(v);
}
inline void put(ConfigMap& cfg, const std::string& key, double v) {
  cfg[key] = fmt_double(v);
}

inline void write_resolved_config(const fs::path& out, const std::string& command,
                                  ConfigMap cfg, const CommonArgs& c) {
  put(cfg, "command", command);
  put(cfg, "seed", c.seed);
  put(cfg, "jobs", c.jobs);
  write_file_text(out / (command + ".resolved.cfg"), render_config(cfg));
}

inline std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

inline void emit_warnings(const fs::path& out, const std::vector<std::string>& warnings) {
  if (warnings.empty()) return;
  std::string text;
  for (const auto& w : warnings) {
    std::fprintf(stderr, "warning: %s\n", w.c_str());
    text += w + "\n";
  }
  write_file_text(out / "warnings.txt", text);
}

// Target specs for evaluate/ablate: requested columns (default: everything
// that is not a covariate), each mapped to a family ("all" unless a family
// table assigns one).
inline std::vector<TargetSpec> resolve_target_specs(
    const TargetTable& targets, const std::vector<std::string>& requested,
    const std::vector<std::string>& covariates, const std::string& family_file) {
  std::map<std::string, std::string> family_of;
  if (!family_file.empty()) {
    const std::string text = read_file_text(family_file);
    std::size_t pos = 0;
    int line_no = 0;
    while (pos < text.size()) {
      std::size_t end = text.find('\n', pos);
      if (end == std::string::npos) end = text.size();
      const std::string line = text.substr(pos, end - pos);
      pos = end + 1;
      ++line_no;
      if (line.empty()) continue;
      const auto f = split_tsv_line(line);
      if (line_no == 1) {
        if (f.size() != 2 || f[0] != "target" || f[1] != "family")
          throw std::runtime_error("family table must have header target\tfamily: " +
                                   family_file);
        continue;
      }
      if (f.size() != 2)
        throw std::runtime_error("bad family row at line " + std::to_string(line_no) +
                                 " in " + family_file);
      family_of[f[0]] = f[1];
    }
  }
  std::vector<std::string> names = requested;
  if (names.empty()) {
    const std::set<std::string> cov(covariates.begin(), covariates.end());
    for (const auto& c : targets.columns)
      if (!cov.count(c)) names.push_back(c);
  }
  if (names.empty()) throw std::runtime_error("no target columns selected");
  std::vector<TargetSpec> specs;
  for (const auto& n : names) {
    if (targets.column_index(n) < 0)
      throw std::runtime_error("target column '" + n + "' not in target table");
    const auto it = family_of.find(n);
    specs.push_back({n, it == family_of.end() ? std::string("all") : it->second});
  }
  return specs;
}

// ---------------------------------------------------------------------------
// generate: synthesize a cohort and lay it out as a data directory.

struct GenerateArgs {
  CommonArgs common;
  int subjects = 10;
  int visits = 1;
  int frames = 900;
  double fps = 30.0;
  int trait_count = 8;
  std::vector<std::string> activities = {"treadmill_fixed"};
};

inline void cmd_generate(const GenerateArgs& a) {
  DatasetSpec spec;
  spec.subjects = a.subjects;
  spec.visits = a.visits;
  spec.frames = a.frames;
  spec.fps = a.fps;
  spec.trait_count = a.trait_count;
  spec.activities.clear();
  for (const auto& name : a.activities) spec.activities.push_back(parse_activity(name));
  spec.validate();  // reject bad ranges before any file exists

  const SyntheticDataset ds = generate_dataset(spec, a.common.seed);

  const fs::path out(a.common.out);
  fs::create_directories(out / "sequences");
  std::vector<ManifestRow> manifest;
  for (const auto& seq : ds.sequences) {
    const std::string name = gsk_filename(seq, false);
    write_gsk(out / "sequences" / name, seq);
    manifest.push_back({seq.subject_id, seq.visit_id,
                        std::string(activity_name(seq.activity)),
                        seq.sequence_index, "sequences/" + name});
  }
  write_file_text(out / "manifest.tsv", render_manifest(manifest));
  write_target_table(out / "targets.tsv", ds.targets);

  ConfigMap cfg;
  put(cfg, "subjects", a.subjects);
  put(cfg, "visits", a.visits);
  put(cfg, "frames", a.frames);
  put(cfg, "fps", a.fps);
  put(cfg, "trait_count", a.trait_count);
  put(cfg, "activities", join(a.activities, ","));
  put(cfg, "out", a.common.out);
  write_resolved_config(out, "generate", cfg, a.common);

  // Validate: every output must round-trip through its reader.
  const auto reread = load_sequences(out);
  if (reread.size() != ds.sequences.size())
    throw std::runtime_error("generate: sequence count mismatch after write");
  const TargetTable targets = read_target_table(out / "targets.tsv");
  if (targets.rows.size() !=
      static_cast<std::size_t>(a.subjects) * static_cast<std::size_t>(a.visits))
    throw std::runtime_error("generate: target row count mismatch after write");

  std::set<std::string> subject_visits;
  for (const auto& r : manifest) subject_visits.insert(r.subject_id + "/" + r.visit_id);
  std::printf("generate: %zu sequences, %zu subject-visits, %zu target columns -> %s\n",
              reread.size(), subject_visits.size(), targets.columns.size(),
              a.common.out.c_str());
}

// ---------------------------------------------------------------------------
// preprocess: smooth, canonicalize, and window recordings into model inputs.

struct PreprocessArgs {
  CommonArgs common;
  std::string data;
  int window_frames = 900;
  int median_window = 3;
};

inline void cmd_preprocess(const PreprocessArgs& a) {
  const auto recordings = load_sequences(a.data);
  if (a.window_frames < 1) throw std::runtime_error("window frames must be >= 1");

  std::vector<SkeletonSequence> windows;
  std::size_t degenerate = 0;
  for (const auto& rec : recordings) {
    SkeletonSequence seq = rec.joints == 32 ? drop_excluded_joints(rec) : rec;
    seq = median_filter(seq, a.median_window);
    NormalizeResult norm = normalize_frames(seq);
    degenerate += norm.degenerate_frames.size();
    for (auto& w : split_windows(norm.seq, a.window_frames)) windows.push_back(std::move(w));
  }
  if (windows.empty()) throw std::runtime_error("preprocess: no windows produced");

  const fs::path out(a.common.out);
  fs::create_directories(out / "windows");
  std::vector<ManifestRow> manifest;
  std::set<std::string> names;
  for (const auto& w : windows) {
    const std::string name = gsk_filename(w, true);
    if (!names.insert(name).second)
      throw std::runtime_error("preprocess: duplicate window filename " + name);
    write_gsk(out / "windows" / name, w);
    manifest.push_back({w.subject_id, w.visit_id, std::string(activity_name(w.activity)),
                        w.sequence_index, "windows/" + name});
  }
  write_file_text(out / "manifest.tsv", render_manifest(manifest));

  ConfigMap cfg;
  put(cfg, "data", a.data);
  put(cfg, "window_frames", a.window_frames);
  put(cfg, "median_window", a.median_window);
  put(cfg, "out", a.common.out);
  write_resolved_config(out, "preprocess", cfg, a.common);

  if (degenerate > 0)
    std::fprintf(stderr, "warning: %zu degenerate frames left unscaled\n", degenerate);
  const auto reread = load_sequences(out);
  if (reread.size() != windows.size())
    throw std::runtime_error("preprocess: window count mismatch after write");
  std::printf("preprocess: %zu recordings -> %zu windows of %d frames -> %s\n",
              recordings.size(), reread.size(), a.window_frames, a.common.out.c_str());
}

// ---------------------------------------------------------------------------
// features: engineered per-sequence summaries, with optional redundancy
// reduction over the pooled columns.

struct FeaturesArgs {
  CommonArgs common;
  std::string data;
  double redundancy_threshold = 0.85;
  bool no_reduce = false;
};

inline void cmd_features(const FeaturesArgs& a) {
  const auto seqs = load_sequences(a.data);

  FeatureTable table;
  std::vector<std::vector<NamedFeature>> per_seq;
  for (const auto& seq : seqs) {
    per_seq.push_back(extract_features(seq));
    for (const auto& f : per_seq.back())
      if (table.column_index(f.name) < 0) table.columns.push_back(f.name);
  }
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    FeatureTable::Row row;
    row.subject_id = seqs[i].subject_id;
    row.visit_id = seqs[i].visit_id;
    row.activity = std::string(activity_name(seqs[i].activity));
    row.sequence_index = seqs[i].sequence_index;
    row.values.assign(table.columns.size(), stats_nan());
    for (const auto& f : per_seq[i])
      row.values[static_cast<std::size_t>(table.column_index(f.name))] = f.value;
    table.rows.push_back(std::move(row));
  }

  const fs::path out(a.common.out);
  fs::create_directories(out);
  write_feature_table(out / "features.tsv", table);

  std::size_t kept_count = table.columns.size();
  if (!a.no_reduce) {
    std::vector<std::vector<double>> columns(table.columns.size());
    for (std::size_t j = 0; j < table.columns.size(); ++j)
      for (const auto& r : table.rows) columns[j].push_back(r.values[j]);
    const RedundancyResult red =
        reduce_redundancy(columns, table.columns, a.redundancy_threshold);

    FeatureTable reduced;
    for (int j : red.kept) reduced.columns.push_back(table.columns[static_cast<std::size_t>(j)]);
    for (const auto& r : table.rows) {
      FeatureTable::Row row = r;
      row.values.clear();
      for (int j : red.kept) row.values.push_back(r.values[static_cast<std::size_t>(j)]);
      reduced.rows.push_back(std::move(row));
    }
    write_feature_table(out / "features_reduced.tsv", reduced);

    std::string log = "kept:";
    for (int j : red.kept) log += " " + table.columns[static_cast<std::size_t>(j)];
    log += "\ndropped_zero_variance:";
    for (int j : red.dropped_zero_variance)
      log += " " + table.columns[static_cast<std::size_t>(j)];
    log += "\n";
    for (const auto& cluster : red.clusters) {
      log += "cluster:";
      for (int j : cluster) log += " " + table.columns[static_cast<std::size_t>(j)];
      log += "\n";
    }
    write_file_text(out / "redundancy.txt", log);
    kept_count = red.kept.size();
    if (read_feature_table(out / "features_reduced.tsv").columns.size() != kept_count)
      throw std::runtime_error("features: reduced table mismatch after write");
  }

  ConfigMap cfg;
  put(cfg, "data", a.data);
  put(cfg, "redundancy_threshold", a.redundancy_threshold);
  put(cfg, "reduce", a.no_reduce ? "0" : "1");
  put(cfg, "out", a.common.out);
  write_resolved_config(out, "features", cfg, a.common);

  const FeatureTable reread = read_feature_table(out / "features.tsv");
  if (reread.rows.size() != seqs.size())
    throw std::runtime_error("features: row count mismatch after write");
  std::printf("features: %zu rows, %zu columns (%zu after reduction) -> %s\n",
              reread.rows.size(), reread.columns.size(), kept_count,
              a.common.out.c_str());
}

// ---------------------------------------------------------------------------
// pretrain: masked-reconstruction training; emits checkpoint + loss curve.

struct PretrainArgs {
  CommonArgs common;
  std::string data;
  std::string resume;
  std::int64_t steps = 500;
  int batch_size = 2;
  double lr_max = 1e-3;
  double lr_min = 0.0;
  std::int64_t warmup_steps = -1;
  double sigma = 0.05;
  double holdout_fraction = 0.1;
  std::int64_t eval_every = 0;
  int blocks = 8;
  int dim = 128;
  int heads = 8;
  int mlp_ratio = 2;
  int decoder_hidden1 = 32;
  int decoder_hidden2 = 32;
  int attention_chunk = 0;
  int mask_span = 16;
  int mask_groups_per_span = 4;
  double mask_frame_prob = 0.05;
};

inline void cmd_pretrain(const PretrainArgs& a) {
  const auto data = load_sequences(a.data);
  for (const auto& seq : data)
    if (seq.frames != data[0].frames || seq.joints != data[0].joints ||
        seq.channels != data[0].channels)
      throw std::runtime_error(
          "pretrain: sequences disagree in shape; run preprocess with a fixed "
          "window length first");

  std::optional<DstFormer> model;
  std::optional<AdamW> opt;
  if (!a.resume.empty()) {
    const Checkpoint ck = read_checkpoint(a.resume);
    model.emplace(EncoderConfig::from_text(ck.config_text), std::uint64_t{0});
    opt.emplace(model->params());
    restore_params(ck, model->params(), &*opt);
  } else {
    EncoderConfig enc;
    enc.blocks = a.blocks;
    enc.dim = a.dim;
    enc.heads = a.heads;
    enc.joints = data[0].joints;
    enc.frames = data[0].frames;
    enc.in_channels = data[0].channels;
    enc.mlp_ratio = a.mlp_ratio;
    enc.decoder_hidden1 = a.decoder_hidden1;
    enc.decoder_hidden2 = a.decoder_hidden2;
    enc.attention_chunk = a.attention_chunk;
    enc.validate();
    model.emplace(enc, a.common.seed);
    opt.emplace(model->params());
  }
  const std::uint64_t start_step = opt->step_count();
  if (a.steps < static_cast<std::int64_t>(start_step))
    throw std::runtime_error("pretrain: --steps " + std::to_string(a.steps) +
                             " is below the resumed checkpoint step " +
                             std::to_string(start_step));

  PretrainConfig pc;
  pc.steps = a.steps;
  pc.batch_size = a.batch_size;
  pc.lr_max = a.lr_max;
  pc.lr_min = a.lr_min;
  pc.warmup_steps = a.warmup_steps;
  pc.sigma = a.sigma;
  pc.holdout_fraction = a.holdout_fraction;
  pc.eval_every = a.eval_every;
  pc.seed = a.common.seed;
  pc.mask.span_length = a.mask_span;
  pc.mask.groups_per_span = a.mask_groups_per_span;
  pc.mask.frame_mask_prob = a.mask_frame_prob;

  const PretrainResult result = pretrain(*model, *opt, data, pc);

  const fs::path out(a.common.out);
  fs::create_directories(out);
  Checkpoint ck = model->snapshot(&*opt);
  const std::uint64_t hash = write_checkpoint((out / "checkpoint.bin").string(), ck);

  std::string curve = "step\tlr\tmpjpe\tnmpjpe\tvelocity\ttotal\n";
  for (const auto& p : result.curve)
    curve += std::to_string(p.step) + "\t" + fmt_double(p.lr) + "\t" +
             fmt_double(p.loss.mpjpe) + "\t" + fmt_double(p.loss.nmpjpe) + "\t" +
             fmt_double(p.loss.velocity) + "\t" + fmt_double(p.loss.total) + "\n";
  write_file_text(out / "loss_curve.tsv", curve);

  std::string metrics = "metric\tvalue\n";
  metrics += "final_train_mpjpe\t" + fmt_double(result.final_train_mpjpe) + "\n";
  metrics += "final_holdout_mpjpe\t" + fmt_double(result.final_holdout_mpjpe) + "\n";
  metrics += "held_in_count\t" + std::to_string(result.held_in_count) + "\n";
  metrics += "holdout_count\t" + std::to_string(result.holdout_count) + "\n";
  metrics += "warmup_steps\t" + std::to_string(result.warmup_steps) + "\n";
  metrics += "steps\t" + std::to_string(a.steps) + "\n";
  write_file_text(out / "metrics.tsv", metrics);

  ConfigMap cfg = parse_config_text(model->config().to_text());
  put(cfg, "data", a.data);
  put(cfg, "resume", a.resume);
  put(cfg, "steps", a.steps);
  put(cfg, "batch_size", a.batch_size);
  put(cfg, "lr_max", a.lr_max);
  put(cfg, "lr_min", a.lr_min);
  put(cfg, "warmup_steps", a.warmup_steps);
  put(cfg, "sigma", a.sigma);
  put(cfg, "holdout_fraction", a.holdout_fraction);
  put(cfg, "eval_every", a.eval_every);
  put(cfg, "mask_span", a.mask_span);
  put(cfg, "mask_groups_per_span", a.mask_groups_per_span);
  put(cfg, "mask_frame_prob", a.mask_frame_prob);
  put(cfg, "out", a.common.out);
  write_resolved_config(out, "pretrain", cfg, a.common);

  const Checkpoint reread = read_checkpoint((out / "checkpoint.bin").string());
  if (reread.hash != hash || reread.step != static_cast<std::uint64_t>(a.steps))
    throw std::runtime_error("pretrain: checkpoint mismatch after write");
  std::printf("pretrain: steps %" PRIu64 "..%lld, final train mpjpe %s, "
              "final holdout mpjpe %s -> %s\n",
              start_step + 1, static_cast<long long>(a.steps),
              fmt_double(result.final_train_mpjpe).c_str(),
              fmt_double(result.final_holdout_mpjpe).c_str(), a.common.out.c_str());
}

// ---------------------------------------------------------------------------
// embed: pool every sequence through a frozen checkpoint.

struct EmbedArgs {
  CommonArgs common;
  std::string data;
  std::string checkpoint;
  std::string variant = "v5";
};

inline void cmd_embed(const EmbedArgs& a) {
  const PoolVariant variant = parse_variant(a.variant);
  const Checkpoint ck = read_checkpoint(a.checkpoint);
  const DstFormer model = DstFormer::from_checkpoint(ck);
  const auto seqs = load_sequences(a.data);

  const EmbeddingTable table = embed_dataset(model, seqs, variant, ck.hash);
  if (table.rows.empty())
    throw std::runtime_error("embed: no sequences compatible with the encoder");

  const fs::path out(a.common.out);
  fs::create_directories(out);
  write_embedding_table((out / "embeddings.bin").string(), table);
  write_file_text(out / "embeddings.tsv", render_embedding_table(table));
  emit_warnings(out, table.warnings);

  ConfigMap cfg;
  put(cfg, "data", a.data);
  put(cfg, "checkpoint", a.checkpoint);
  put(cfg, "variant", a.variant);
  put(cfg, "encoder_hash", to_hex64(ck.hash));
  put(cfg, "out", a.common.out);
  write_resolved_config(out, "embed", cfg, a.common);

  const EmbeddingTable reread = read_embedding_table((out / "embeddings.bin").string());
  if (reread.rows.size() != table.rows.size() || reread.dim != table.dim ||
      reread.encoder_hash != ck.hash)
    throw std::runtime_error("embed: embedding table mismatch after write");
  std::printf("embed: %zu rows, %d dims, variant %s, encoder %s -> %s\n",
              reread.rows.size(), reread.dim, variant_name(variant),
              to_hex64(ck.hash).c_str(), a.common.out.c_str());
}

// ---------------------------------------------------------------------------
// evaluate: nested cross-validated prediction from embeddings.

struct EvaluateArgs {
  CommonArgs common;
  std::string embeddings;
  std::string targets;
  std::string mode = "direct";
  std::vector<std::string> target_names;
  std::vector<std::string> covariates;
  std::string family_file;
  int outer_folds = 5;
  int inner_folds = 4;
  int eval_seeds = 15;
  int search_draws = 20;
  double q_direct = 0.05;
  double q_gain = 0.1;
};

inline EvalConfig eval_config_from(const EvaluateArgs& a) {
  EvalConfig cfg;
  cfg.outer_folds = a.outer_folds;
  cfg.inner_folds = a.inner_folds;
  cfg.seeds = a.eval_seeds;
  cfg.search_draws = a.search_draws;
  cfg.q_threshold_direct = a.q_direct;
  cfg.q_threshold_gain = a.q_gain;
  cfg.base_seed = a.common.seed;
  cfg.validate();
  return cfg;
}

inline ConfigMap eval_config_map(const EvaluateArgs& a) {
  ConfigMap cfg;
  put(cfg, "embeddings", a.embeddings);
  put(cfg, "targets", a.targets);
  put(cfg, "mode", a.mode);
  put(cfg, "target_names", join(a.target_names, ","));
  put(cfg, "covariates", join(a.covariates, ","));
  put(cfg, "families", a.family_file);
  put(cfg, "outer_folds", a.outer_folds);
  put(cfg, "inner_folds", a.inner_folds);
  put(cfg, "eval_seeds", a.eval_seeds);
  put(cfg, "search_draws", a.search_draws);
  put(cfg, "q_direct", a.q_direct);
  put(cfg, "q_gain", a.q_gain);
  put(cfg, "out", a.common.out);
  return cfg;
}

inline void cmd_evaluate(const EvaluateArgs& a) {
  if (a.mode != "direct" && a.mode != "gain")
    throw std::runtime_error("unknown mode '" + a.mode + "' (expected direct or gain)");
  const EvalConfig cfg = eval_config_from(a);
  const EmbeddingTable emb = read_embedding_table(a.embeddings);
  const TargetTable targets = read_target_table(a.targets);
  const auto specs =
      resolve_target_specs(targets, a.target_names, a.covariates, a.family_file);
  const EvalDataset ds = build_eval_dataset(emb, targets, a.covariates);

  const fs::path out(a.common.out);
  fs::create_directories(out);
  std::map<std::string, std::pair<int, int>> by_family;  // family -> (significant, total)
  if (a.mode == "direct") {
    const DirectReport report = direct_predict(ds, specs, cfg);
    write_file_text(out / "report.tsv", render_direct_report(report));
    for (const auto& r : report.rows) {
      by_family[r.family].second += 1;
      by_family[r.family].first += r.significant ? 1 : 0;
    }
  } else {
    const GainReport report = compare_models(ds, specs, cfg);
    write_file_text(out / "report.tsv", render_gain_report(report));
    write_file_text(out / "cells.tsv", render_cell_log(report, cfg.outer_folds));
    for (const auto& r : report.rows) {
      by_family[r.family].second += 1;
      by_family[r.family].first += r.significant ? 1 : 0;
    }
  }
  write_resolved_config(out, "evaluate", eval_config_map(a), a.common);

  const std::string reread = read_file_text(out / "report.tsv");
  if (reread.compare(0, 7, "target\t") != 0)
    throw std::runtime_error("evaluate: report mismatch after write");
  for (const auto& [family, counts] : by_family)
    std::printf("evaluate(%s): family %s: %d/%d significant\n", a.mode.c_str(),
                family.c_str(), counts.first, counts.second);
  std::printf("evaluate: report -> %s\n", a.common.out.c_str());
}

// ---------------------------------------------------------------------------
// ablate: group-masked re-embedding attribution over treadmill walking.

struct AblateArgs {
  CommonArgs common;
  std::string data;
  std::string checkpoint;
  std::string targets;
  std::string variant = "v5";
  std::vector<std::string> target_names;
  std::vector<std::string> covariates;
  std::string family_file;
  int top_k = 10;
  int outer_folds = 5;
  int inner_folds = 4;
  int eval_seeds = 15;
  int search_draws = 20;
};

inline void cmd_ablate(const AblateArgs& a) {
  AblationConfig acfg;
  acfg.variant = parse_variant(a.variant);
  acfg.covariate_columns = a.covariates;
  acfg.top_k = a.top_k;
  acfg.eval.outer_folds = a.outer_folds;
  acfg.eval.inner_folds = a.inner_folds;
  acfg.eval.seeds = a.eval_seeds;
  acfg.eval.search_draws = a.search_draws;
  acfg.eval.base_seed = a.common.seed;
  acfg.eval.validate();

  const Checkpoint ck = read_checkpoint(a.checkpoint);
  const DstFormer model = DstFormer::from_checkpoint(ck);
  const auto seqs = load_sequences(a.data);
  const TargetTable targets = read_target_table(a.targets);
  const auto specs =
      resolve_target_specs(targets, a.target_names, a.covariates, a.family_file);

  const AblationReport report = run_ablation(model, seqs, targets, specs, acfg, ck.hash);

  const fs::path out(a.common.out);
  fs::create_directories(out);
  write_file_text(out / "importance.tsv", render_ablation_table(report));
  write_file_text(out / "rollup.tsv",
                  render_rollup_pivot(system_rollup(report, a.top_k)));
  std::string controls = "target\tcontrol_drop_delta\tcontrol_isolation_score\n";
  for (const auto& t : report.targets)
    controls += t.target + "\t" + fmt_double(t.control_drop_delta) + "\t" +
                fmt_double(t.control_isolation_score) + "\n";
  write_file_text(out / "controls.tsv", controls);
  emit_warnings(out, report.warnings);

  ConfigMap cfg;
  put(cfg, "data", a.data);
  put(cfg, "checkpoint", a.checkpoint);
  put(cfg, "targets", a.targets);
  put(cfg, "variant", a.variant);
  put(cfg, "target_names", join(a.target_names, ","));
  put(cfg, "covariates", join(a.covariates, ","));
  put(cfg, "families", a.family_file);
  put(cfg, "top_k", a.top_k);
  put(cfg, "outer_folds", a.outer_folds);
  put(cfg, "inner_folds", a.inner_folds);
  put(cfg, "eval_seeds", a.eval_seeds);
  put(cfg, "search_draws", a.search_draws);
  put(cfg, "encoder_hash", to_hex64(ck.hash));
  put(cfg, "out", a.common.out);
  write_resolved_config(out, "ablate", cfg, a.common);

  const std::string reread = read_file_text(out / "importance.tsv");
  if (reread.compare(0, 7, "target\t") != 0)
    throw std::runtime_error("ablate: importance table mismatch after write");
  std::printf("ablate: %zu targets x %zu groups -> %s\n", report.targets.size(),
              attribution_groups().size(), a.common.out.c_str());
}

// ---------------------------------------------------------------------------
// report: convert pipeline outputs into plot-ready CSV summaries.

struct ReportArgs {
  CommonArgs common;
  std::string pretrain_dir;
  std::string evaluate_dir;
  std::string ablate_dir;
};

inline void cmd_report(const ReportArgs& a) {
  if (a.pretrain_dir.empty() && a.evaluate_dir.empty() && a.ablate_dir.empty())
    throw std::runtime_error("report: give at least one of --pretrain, --evaluate, --ablate");

  const fs::path out(a.common.out);
  fs::create_directories(out);
  std::string summary;

  if (!a.pretrain_dir.empty()) {
    const std::string curve = read_file_text(fs::path(a.pretrain_dir) / "loss_curve.tsv");
    std::string csv;
    std::size_t pos = 0, rows = 0;
    std::string last_loss = "NaN";
    while (pos < curve.size()) {
      std::size_t end = curve.find('\n', pos);
      if (end == std::string::npos) end = curve.size();
      const std::string line = curve.substr(pos, end - pos);
      pos = end + 1;
      if (line.empty()) continue;
      const auto f = split_tsv_line(line);
      if (f.size() < 3)
        throw std::runtime_error("report: bad loss curve row in " + a.pretrain_dir);
      if (csv.empty()) {
        if (f[0] != "step")
          throw std::runtime_error("report: bad loss curve header in " + a.pretrain_dir);
      } else {
        ++rows;
        last_loss = f.back();
      }
      csv += join(f, ",") + "\n";
    }
    write_file_text(out / "loss_curve.csv", csv);
    summary += "loss_curve: " + std::to_string(rows) + " steps, final loss " +
               last_loss + "\n";
  }

  if (!a.evaluate_dir.empty()) {
    const std::string text = read_file_text(fs::path(a.evaluate_dir) / "report.tsv");
    std::size_t pos = 0;
    std::vector<std::string> header;
    int family_col = -1, sig_col = -1, delta_col = -1;
    std::map<std::string, std::pair<int, int>> by_family;
    std::map<std::string, std::vector<double>> deltas;
    std::string mode;
    while (pos < text.size()) {
      std::size_t end = text.find('\n', pos);
      if (end == std::string::npos) end = text.size();
      const std::string line = text.substr(pos, end - pos);
      pos = end + 1;
      if (line.empty()) continue;
      const auto f = split_tsv_line(line);
      if (header.empty()) {
        header = f;
        for (std::size_t i = 0; i < f.size(); ++i) {
          if (f[i] == "family") family_col = static_cast<int>(i);
          if (f[i] == "significant") sig_col = static_cast<int>(i);
          if (f[i] == "delta") delta_col = static_cast<int>(i);
        }
        if (family_col < 0 || sig_col < 0)
          throw std::runtime_error("report: unrecognized report header in " +
                                   a.evaluate_dir);
        mode = delta_col >= 0 ? "gain" : "direct";
        continue;
      }
      const std::string& family = f[static_cast<std::size_t>(family_col)];
      by_family[family].second += 1;
      by_family[family].first += f[static_cast<std::size_t>(sig_col)] == "1" ? 1 : 0;
      if (delta_col >= 0)
        deltas[family].push_back(
            parse_double_field(f[static_cast<std::size_t>(delta_col)], "report.tsv"));
    }
    std::string csv = "family,mode,targets,significant\n";
    for (const auto& [family, counts] : by_family)
      csv += family + "," + mode + "," + std::to_string(counts.second) + "," +
             std::to_string(counts.first) + "\n";
    write_file_text(out / "significance_summary.csv", csv);
    if (!deltas.empty()) {
      std::string dcsv = "family,min_delta,median_delta,max_delta\n";
      for (auto& [family, v] : deltas) {
        dcsv += family + "," + fmt_double(*std::min_element(v.begin(), v.end())) +
                "," + fmt_double(vec_median(v)) + "," +
                fmt_double(*std::max_element(v.begin(), v.end())) + "\n";
      }
      write_file_text(out / "gain_deltas.csv", dcsv);
    }
    for (const auto& [family, counts] : by_family)
      summary += "evaluate(" + mode + "): family " + family + ": " +
                 std::to_string(counts.first) + "/" + std::to_string(counts.second) +
                 " significant\n";
  }

  if (!a.ablate_dir.empty()) {
    const std::string pivot = read_file_text(fs::path(a.ablate_dir) / "rollup.tsv");
    std::string csv;
    std::size_t pos = 0, rows = 0;
    while (pos < pivot.size()) {
      std::size_t end = pivot.find('\n', pos);
      if (end == std::string::npos) end = pivot.size();
      const std::string line = pivot.substr(pos, end - pos);
      pos = end + 1;
      if (line.empty()) continue;
      const auto f = split_tsv_line(line);
      if (csv.empty() && f[0] != "family")
        throw std::runtime_error("report: bad rollup header in " + a.ablate_dir);
      if (!csv.empty()) ++rows;
      csv += join(f, ",") + "\n";
    }
    write_file_text(out / "importance_heatmap.csv", csv);
    summary += "importance_heatmap: " + std::to_string(rows) + " families\n";
  }

  write_file_text(out / "summary.txt", summary);
  ConfigMap cfg;
  put(cfg, "pretrain", a.pretrain_dir);
  put(cfg, "evaluate", a.evaluate_dir);
  put(cfg, "ablate", a.ablate_dir);
  put(cfg, "out", a.common.out);
  write_resolved_config(out, "report", cfg, a.common);
  std::printf("report: summaries -> %s\n%s", a.common.out.c_str(), summary.c_str());
}

// ---------------------------------------------------------------------------

inline int run_cli(int argc, char** argv) {
  CLI::App app{"gait skeleton pipeline: synthesize, pretrain, embed, evaluate"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* c_gen = app.add_subcommand("generate", "synthesize a cohort data directory");
  add_common(c_gen, &gen.common);
  c_gen->add_option("--subjects", gen.subjects)->capture_default_str();
  c_gen->add_option("--visits", gen.visits)->capture_default_str();
  c_gen->add_option("--frames", gen.frames)->capture_default_str();
  c_gen->add_option("--fps", gen.fps)->capture_default_str();
  c_gen->add_option("--trait-count", gen.trait_count)->capture_default_str();
  c_gen->add_option("--activities", gen.activities, "comma-separated activity names")
      ->delimiter(',')
      ->capture_default_str();
  c_gen->callback([&] { cmd_generate(gen); });

  PreprocessArgs pre;
  auto* c_pre = app.add_subcommand("preprocess", "filter, normalize, and window recordings");
  add_common(c_pre, &pre.common);
  c_pre->add_option("--data", pre.data, "input data directory")->required();
  c_pre->add_option("--window-frames", pre.window_frames)->capture_default_str();
  c_pre->add_option("--median-window", pre.median_window)->capture_default_str();
  c_pre->callback([&] { cmd_preprocess(pre); });

  FeaturesArgs fea;
  auto* c_fea = app.add_subcommand("features", "engineered per-sequence summaries");
  add_common(c_fea, &fea.common);
  c_fea->add_option("--data", fea.data, "input data directory")->required();
  c_fea->add_option("--redundancy-threshold", fea.redundancy_threshold)
      ->capture_default_str();
  c_fea->add_flag("--no-reduce", fea.no_reduce, "skip redundancy reduction");
  c_fea->callback([&] { cmd_features(fea); });

  PretrainArgs trn;
  auto* c_trn = app.add_subcommand("pretrain", "masked-reconstruction pretraining");
  add_common(c_trn, &trn.common);
  c_trn->add_option("--data", trn.data, "input data directory")->required();
  c_trn->add_option("--resume", trn.resume, "checkpoint to continue from");
  c_trn->add_option("--steps", trn.steps, "total optimizer steps")->capture_default_str();
  c_trn->add_option("--batch-size", trn.batch_size)->capture_default_str();
  c_trn->add_option("--lr-max", trn.lr_max)->capture_default_str();
  c_trn->add_option("--lr-min", trn.lr_min)->capture_default_str();
  c_trn->add_option("--warmup-steps", trn.warmup_steps)->capture_default_str();
  c_trn->add_option("--sigma", trn.sigma)->capture_default_str();
  c_trn->add_option("--holdout-fraction", trn.holdout_fraction)->capture_default_str();
  c_trn->add_option("--eval-every", trn.eval_every)->capture_default_str();
  c_trn->add_option("--blocks", trn.blocks)->capture_default_str();
  c_trn->add_option("--dim", trn.dim)->capture_default_str();
  c_trn->add_option("--heads", trn.heads)->capture_default_str();
  c_trn->add_option("--mlp-ratio", trn.mlp_ratio)->capture_default_str();
  c_trn->add_option("--decoder-hidden1", trn.decoder_hidden1)->capture_default_str();
  c_trn->add_option("--decoder-hidden2", trn.decoder_hidden2)->capture_default_str();
  c_trn->add_option("--attention-chunk", trn.attention_chunk)->capture_default_str();
  c_trn->add_option("--mask-span", trn.mask_span)->capture_default_str();
  c_trn->add_option("--mask-groups-per-span", trn.mask_groups_per_span)
      ->capture_default_str();
  c_trn->add_option("--mask-frame-prob", trn.mask_frame_prob)->capture_default_str();
  c_trn->callback([&] { cmd_pretrain(trn); });

  EmbedArgs emb;
  auto* c_emb = app.add_subcommand("embed", "pool sequences through a frozen checkpoint");
  add_common(c_emb, &emb.common);
  c_emb->add_option("--data", emb.data, "input data directory")->required();
  c_emb->add_option("--checkpoint", emb.checkpoint, "checkpoint file")->required();
  c_emb->add_option("--variant", emb.variant, "pooling variant (v1..v5)")
      ->capture_default_str();
  c_emb->callback([&] { cmd_embed(emb); });

  EvaluateArgs evl;
  auto* c_evl = app.add_subcommand("evaluate", "nested cross-validated prediction");
  add_common(c_evl, &evl.common);
  c_evl->add_option("--embeddings", evl.embeddings, "embedding table file")->required();
  c_evl->add_option("--targets", evl.targets, "target table file")->required();
  c_evl->add_option("--mode", evl.mode, "direct or gain")->capture_default_str();
  c_evl->add_option("--target", evl.target_names, "target column (repeatable)");
  c_evl->add_option("--covariates", evl.covariates, "comma-separated covariate columns")
      ->delimiter(',');
  c_evl->add_option("--families", evl.family_file, "target-to-family table");
  c_evl->add_option("--outer-folds", evl.outer_folds)->capture_default_str();
  c_evl->add_option("--inner-folds", evl.inner_folds)->capture_default_str();
  c_evl->add_option("--eval-seeds", evl.eval_seeds)->capture_default_str();
  c_evl->add_option("--search-draws", evl.search_draws)->capture_default_str();
  c_evl->add_option("--q-direct", evl.q_direct)->capture_default_str();
  c_evl->add_option("--q-gain", evl.q_gain)->capture_default_str();
  c_evl->callback([&] { cmd_evaluate(evl); });

  AblateArgs abl;
  auto* c_abl = app.add_subcommand("ablate", "joint-group masking attribution");
  add_common(c_abl, &abl.common);
  c_abl->add_option("--data", abl.data, "input data directory")->required();
  c_abl->add_option("--checkpoint", abl.checkpoint, "checkpoint file")->required();
  c_abl->add_option("--targets", abl.targets, "target table file")->required();
  c_abl->add_option("--variant", abl.variant, "pooling variant (v1..v5)")
      ->capture_default_str();
  c_abl->add_option("--target", abl.target_names, "target column (repeatable)");
  c_abl->add_option("--covariates", abl.covariates, "comma-separated covariate columns")
      ->delimiter(',');
  c_abl->add_option("--families", abl.family_file, "target-to-family table");
  c_abl->add_option("--top-k", abl.top_k)->capture_default_str();
  c_abl->add_option("--outer-folds", abl.outer_folds)->capture_default_str();
  c_abl->add_option("--inner-folds", abl.inner_folds)->capture_default_str();
  c_abl->add_option("--eval-seeds", abl.eval_seeds)->capture_default_str();
  c_abl->add_option("--search-draws", abl.search_draws)->capture_default_str();
  c_abl->callback([&] { cmd_ablate(abl); });

  ReportArgs rep;
  auto* c_rep = app.add_subcommand("report", "plot-ready CSV summaries of run outputs");
  add_common(c_rep, &rep.common);
  c_rep->add_option("--pretrain", rep.pretrain_dir, "pretrain output directory");
  c_rep->add_option("--evaluate", rep.evaluate_dir, "evaluate output directory");
  c_rep->add_option("--ablate", rep.ablate_dir, "ablate output directory");
  c_rep->callback([&] { cmd_report(rep); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "gaitmae: %s\n", e.what());
    return 1;
  }
  return 0;
}

}  // namespace gaitmae::cli
