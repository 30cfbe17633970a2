#pragma once

// Anatomical attribution over a frozen encoder: necessity by group-masked
// drop, sufficiency by group isolation, and a composite importance score
// from dual min-max normalization.
//
// For every masking condition the group's joints are zeroed across all four
// input channels, the dataset is re-embedded, and the downstream predictor
// is retrained under the identical split plan. Two internal controls run
// every time: masking nothing must reproduce the baseline score exactly,
// and isolating all joints must equal the baseline score exactly.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "gaitmae/dstformer.hpp"
#include "gaitmae/eval.hpp"
#include "gaitmae/pooling.hpp"
#include "gaitmae/taxonomy.hpp"

namespace gaitmae {

struct ImportanceEntry {
  std::string group;
  double delta_drop = 0.0;  // S_baseline - S_masked (necessity)
  double r_solo = 0.0;      // score with only this group visible (sufficiency)
  double delta_hat = 0.0;   // min-max over the four groups
  double r_hat = 0.0;
  double importance = 0.0;  // min-max of (delta_hat + r_hat)
};

struct ImportanceTable {
  std::string target;
  std::string family;
  double s_baseline = 0.0;
  double control_drop_delta = 0.0;      // mask-nothing control, must be 0
  double control_isolation_score = 0.0; // isolate-everything control, = s_baseline
  std::vector<ImportanceEntry> groups;  // attribution-group order
  bool degenerate = false;              // any flat min-max component
};

struct AblationReport {
  std::vector<ImportanceTable> targets;
  std::vector<std::string> warnings;
};

// ---------------------------------------------------------------------------
// Importance arithmetic

namespace detail {

// Min-max to [0,1]; a flat component maps to all zeros and raises the flag.
inline std::vector<double> min_max_scale(const std::vector<double>& v, bool& degenerate) {
  const double lo = *std::min_element(v.begin(), v.end());
  const double hi = *std::max_element(v.begin(), v.end());
  std::vector<double> out(v.size(), 0.0);
  if (!(hi > lo)) {
    degenerate = true;
    return out;
  }
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - lo) / (hi - lo);
  return out;
}

}  // namespace detail

struct ImportanceScores {
  std::vector<double> delta_hat;
  std::vector<double> r_hat;
  std::vector<double> importance;
  bool degenerate = false;
};

// I = MinMax(MinMax(delta) + MinMax(r)), each component normalized
// independently across the groups.
inline ImportanceScores importance_scores(const std::vector<double>& delta_drops,
                                          const std::vector<double>& r_solos) {
  if (delta_drops.size() != r_solos.size() || delta_drops.empty())
    throw std::invalid_argument("importance_scores: mismatched group counts");
  ImportanceScores out;
  out.delta_hat = detail::min_max_scale(delta_drops, out.degenerate);
  out.r_hat = detail::min_max_scale(r_solos, out.degenerate);
  std::vector<double> sums(delta_drops.size());
  for (std::size_t i = 0; i < sums.size(); ++i)
    sums[i] = out.delta_hat[i] + out.r_hat[i];
  out.importance = detail::min_max_scale(sums, out.degenerate);
  return out;
}

// ---------------------------------------------------------------------------
// Input masking

// Copy with the listed joints zeroed in every frame, all channels.
inline SkeletonSequence zero_joints(const SkeletonSequence& seq,
                                    const std::vector<int>& joints) {
  SkeletonSequence out = seq;
  for (int f = 0; f < out.frames; ++f)
    for (int j : joints)
      for (int c = 0; c < out.channels; ++c) out.at(f, j, c) = 0.0;
  return out;
}

inline std::vector<int> complement_joints(const std::vector<int>& joints, int joint_count) {
  std::vector<bool> keep(static_cast<std::size_t>(joint_count), true);
  for (int j : joints) keep[static_cast<std::size_t>(j)] = false;
  std::vector<int> out;
  for (int j = 0; j < joint_count; ++j)
    if (keep[static_cast<std::size_t>(j)]) out.push_back(j);
  return out;
}

// ---------------------------------------------------------------------------
// Full attribution run

struct AblationConfig {
  PoolVariant variant = PoolVariant::kV5;
  std::vector<std::string> covariate_columns;  // included in every condition
  EvalConfig eval;
  int top_k = 10;
};

namespace detail {

// Median-of-seeds score of embeddings (+ configured covariates) for one
// target under a fixed plan.
inline double condition_score(const DstFormer& model,
                              const std::vector<SkeletonSequence>& seqs,
                              const TargetTable& targets, const std::string& target,
                              const SplitPlan& plan, const AblationConfig& cfg,
                              std::uint64_t encoder_hash) {
  const EmbeddingTable emb = embed_dataset(model, seqs, cfg.variant, encoder_hash);
  const EvalDataset ds = build_eval_dataset(emb, targets, cfg.covariate_columns);
  const SingleRun run = score_features(ds, target, !cfg.covariate_columns.empty(),
                                       true, plan, cfg.eval);
  return run.median_score;
}

}  // namespace detail

// Necessity/sufficiency sweep over the attribution groups for each target.
// Only treadmill sequences participate; any other activity is dropped with a
// warning. The per-target SplitPlan is built once and reused across every
// masking condition.
inline AblationReport run_ablation(const DstFormer& model,
                                   const std::vector<SkeletonSequence>& sequences,
                                   const TargetTable& targets,
                                   const std::vector<TargetSpec>& target_specs,
                                   const AblationConfig& cfg,
                                   std::uint64_t encoder_hash) {
  AblationReport report;
  std::vector<SkeletonSequence> kept;
  int dropped = 0;
  for (const auto& seq : sequences) {
    if (is_treadmill(seq.activity))
      kept.push_back(seq);
    else
      ++dropped;
  }
  if (dropped > 0)
    report.warnings.push_back("dropped " + std::to_string(dropped) +
                              " non-treadmill sequences; attribution runs on "
                              "treadmill walking only");
  if (kept.empty()) throw std::invalid_argument("run_ablation: no treadmill sequences");

  const auto& groups = attribution_groups();

  // Baseline embeddings drive both the plan and S_baseline.
  const EmbeddingTable emb_base = embed_dataset(model, kept, cfg.variant, encoder_hash);
  const EvalDataset ds_base = build_eval_dataset(emb_base, targets, cfg.covariate_columns);

  for (const auto& spec : target_specs) {
    std::vector<std::string> subjects;
    const std::vector<double> labels = subject_labels_for(ds_base, spec.name, subjects);
    const SplitPlan plan = make_splits(subjects, labels, cfg.eval);

    ImportanceTable table;
    table.target = spec.name;
    table.family = spec.family;
    table.s_baseline = score_features(ds_base, spec.name,
                                      !cfg.covariate_columns.empty(), true, plan,
                                      cfg.eval)
                           .median_score;

    // Controls: mask nothing, and isolate everything (mask the empty
    // complement). Both re-run the full pipeline on unmodified inputs.
    table.control_drop_delta =
        table.s_baseline - detail::condition_score(model, kept, targets, spec.name,
                                                   plan, cfg, encoder_hash);
    table.control_isolation_score = detail::condition_score(
        model, kept, targets, spec.name, plan, cfg, encoder_hash);
    if (table.control_drop_delta != 0.0)
      throw std::logic_error("run_ablation: mask-nothing control moved the score");
    if (table.control_isolation_score != table.s_baseline)
      throw std::logic_error("run_ablation: isolate-all control moved the score");

    std::vector<double> deltas, solos;
    for (const auto& g : groups) {
      std::vector<SkeletonSequence> masked, isolated;
      for (const auto& seq : kept) {
        masked.push_back(zero_joints(seq, g.joints));
        isolated.push_back(zero_joints(seq, complement_joints(g.joints, seq.joints)));
      }
      const double s_masked = detail::condition_score(model, masked, targets,
                                                      spec.name, plan, cfg, encoder_hash);
      const double s_isolated = detail::condition_score(
          model, isolated, targets, spec.name, plan, cfg, encoder_hash);
      deltas.push_back(table.s_baseline - s_masked);
      solos.push_back(s_isolated);
    }

    const ImportanceScores scores = importance_scores(deltas, solos);
    table.degenerate = scores.degenerate;
    for (std::size_t i = 0; i < groups.size(); ++i)
      table.groups.push_back({std::string(groups[i].name), deltas[i], solos[i],
                              scores.delta_hat[i], scores.r_hat[i],
                              scores.importance[i]});
    report.targets.push_back(std::move(table));
  }
  return report;
}

// ---------------------------------------------------------------------------
// Rollup and rendering

struct RollupRow {
  std::string family;
  std::string group;
  double mean_importance = 0.0;
};

// Mean importance per group over the top_k targets of each family, ranked by
// baseline score (ties broken by target name for determinism).
inline std::vector<RollupRow> system_rollup(const AblationReport& report, int top_k = 10) {
  if (top_k < 1) throw std::invalid_argument("system_rollup: top_k must be >= 1");
  std::map<std::string, std::vector<const ImportanceTable*>> by_family;
  for (const auto& t : report.targets) by_family[t.family].push_back(&t);
  std::vector<RollupRow> rows;
  for (auto& [family, members] : by_family) {
    std::sort(members.begin(), members.end(),
              [](const ImportanceTable* a, const ImportanceTable* b) {
                if (a->s_baseline != b->s_baseline) return a->s_baseline > b->s_baseline;
                return a->target < b->target;
              });
    const std::size_t take = std::min(members.size(), static_cast<std::size_t>(top_k));
    if (take == 0) continue;
    const std::size_t n_groups = members[0]->groups.size();
    for (std::size_t g = 0; g < n_groups; ++g) {
      double total = 0.0;
      for (std::size_t m = 0; m < take; ++m) total += members[m]->groups[g].importance;
      rows.push_back({family, members[0]->groups[g].group,
                      total / static_cast<double>(take)});
    }
  }
  return rows;
}

inline std::string render_ablation_table(const AblationReport& report) {
  std::string out =
      "target\tfamily\tgroup\tdelta_drop\tr_solo\tdelta_hat\tr_hat\timportance\t"
      "degenerate\ts_baseline\n";
  for (const auto& t : report.targets)
    for (const auto& g : t.groups)
      out += t.target + "\t" + t.family + "\t" + g.group + "\t" +
             fmt_double(g.delta_drop) + "\t" + fmt_double(g.r_solo) + "\t" +
             fmt_double(g.delta_hat) + "\t" + fmt_double(g.r_hat) + "\t" +
             fmt_double(g.importance) + "\t" + (t.degenerate ? "1" : "0") + "\t" +
             fmt_double(t.s_baseline) + "\n";
  return out;
}

// Heatmap-ready pivot: one row per family, one column per attribution group.
inline std::string render_rollup_pivot(const std::vector<RollupRow>& rows) {
  std::vector<std::string> group_order;
  for (const auto& g : attribution_groups()) group_order.push_back(std::string(g.name));
  std::map<std::string, std::map<std::string, double>> cells;
  for (const auto& r : rows) cells[r.family][r.group] = r.mean_importance;
  std::string out = "family";
  for (const auto& g : group_order) out += "\t" + g;
  out += "\n";
  for (const auto& [family, per_group] : cells) {
    out += family;
    for (const auto& g : group_order) {
      auto it = per_group.find(g);
      out += "\t" + (it == per_group.end() ? std::string("NaN") : fmt_double(it->second));
    }
    out += "\n";
  }
  return out;
}

}  // namespace gaitmae
