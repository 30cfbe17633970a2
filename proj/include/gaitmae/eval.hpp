#pragma once

// Downstream evaluation harness: subject-level nested cross-validation,
// ridge / logistic predictors with an inner random search over the penalty,
// per-visit late fusion of sequence predictions, and significance reporting
// with Benjamini-Hochberg correction applied independently per target family.
//
// Conventions:
//   - Splits partition subjects, never samples, so all sequences and visits
//     of a subject land on one side. Asserted on every evaluated cell.
//   - Per-seed score = mean over that seed's outer folds; reported score is
//     the median across seeds.
//   - Samples with a missing (NaN) target value are dropped for that target
//     only.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "gaitmae/config.hpp"
#include "gaitmae/io_util.hpp"
#include "gaitmae/linear_models.hpp"
#include "gaitmae/pooling.hpp"
#include "gaitmae/rng.hpp"
#include "gaitmae/stats.hpp"
#include "gaitmae/tables.hpp"
#include "gaitmae/taxonomy.hpp"

namespace gaitmae {

struct EvalConfig {
  int outer_folds = 5;
  int inner_folds = 4;
  int seeds = 15;
  int search_draws = 20;
  double q_threshold_direct = 0.05;
  double q_threshold_gain = 0.1;
  double alpha_min = 1e-3;
  double alpha_max = 1e3;
  std::uint64_t base_seed = 42;  // root for split shuffles and alpha draws

  void validate() const {
    if (outer_folds < 2) throw std::invalid_argument("eval: outer_folds must be >= 2");
    if (inner_folds < 2) throw std::invalid_argument("eval: inner_folds must be >= 2");
    if (seeds < 1) throw std::invalid_argument("eval: seeds must be >= 1");
    if (search_draws < 1) throw std::invalid_argument("eval: search_draws must be >= 1");
    if (!(alpha_min > 0.0) || !(alpha_max >= alpha_min))
      throw std::invalid_argument("eval: invalid alpha range");
  }

  static EvalConfig from_config(const ConfigMap& cfg) {
    reject_unknown_keys(cfg,
                        {"outer_folds", "inner_folds", "seeds", "search_draws",
                         "q_threshold_direct", "q_threshold_gain"},
                        "eval config");
    EvalConfig out;
    out.outer_folds = static_cast<int>(config_get_int(cfg, "outer_folds", out.outer_folds));
    out.inner_folds = static_cast<int>(config_get_int(cfg, "inner_folds", out.inner_folds));
    out.seeds = static_cast<int>(config_get_int(cfg, "seeds", out.seeds));
    out.search_draws = static_cast<int>(config_get_int(cfg, "search_draws", out.search_draws));
    out.q_threshold_direct = config_get_double(cfg, "q_threshold_direct", out.q_threshold_direct);
    out.q_threshold_gain = config_get_double(cfg, "q_threshold_gain", out.q_threshold_gain);
    out.validate();
    return out;
  }
};

// ---------------------------------------------------------------------------
// Splits

struct SplitPlan {
  int outer_folds = 5;
  int inner_folds = 4;
  std::vector<std::uint64_t> seeds;
  bool stratified = false;
  std::vector<std::string> subjects;       // sorted unique
  std::vector<std::vector<int>> fold_of;   // [seed index][subject index]

  int subject_index(const std::string& id) const {
    auto it = std::lower_bound(subjects.begin(), subjects.end(), id);
    if (it == subjects.end() || *it != id)
      throw std::invalid_argument("SplitPlan: unknown subject '" + id + "'");
    return static_cast<int>(it - subjects.begin());
  }
};

// Partition subjects into outer folds once per seed. `labels`, when given,
// is aligned with the unique sorted subject list; stratification activates
// iff the labels are binary with both classes present and the minority class
// below 20%.
inline SplitPlan make_splits(const std::vector<std::string>& subject_ids,
                             const std::vector<double>& labels,
                             const EvalConfig& cfg) {
  cfg.validate();
  SplitPlan plan;
  plan.outer_folds = cfg.outer_folds;
  plan.inner_folds = cfg.inner_folds;
  plan.subjects = subject_ids;
  std::sort(plan.subjects.begin(), plan.subjects.end());
  plan.subjects.erase(std::unique(plan.subjects.begin(), plan.subjects.end()),
                      plan.subjects.end());
  const std::size_t n = plan.subjects.size();
  if (n < static_cast<std::size_t>(cfg.outer_folds))
    throw std::invalid_argument("make_splits: need at least one distinct subject per fold");
  if (!labels.empty() && labels.size() != n)
    throw std::invalid_argument("make_splits: labels must align with distinct subjects");

  std::vector<std::size_t> class1;
  if (!labels.empty()) {
    bool binary = true;
    for (double v : labels)
      if (v != 0.0 && v != 1.0) binary = false;
    if (binary) {
      for (std::size_t i = 0; i < n; ++i)
        if (labels[i] == 1.0) class1.push_back(i);
      const double rate = static_cast<double>(class1.size()) / static_cast<double>(n);
      const double minority = std::min(rate, 1.0 - rate);
      plan.stratified = minority > 0.0 && minority < 0.2;
    }
  }
  if (plan.stratified) {
    const std::size_t minority_count = std::min(class1.size(), n - class1.size());
    if (minority_count < static_cast<std::size_t>(cfg.outer_folds))
      throw std::invalid_argument(
          "make_splits: minority class too small to stratify across folds");
  }

  for (int k = 0; k < cfg.seeds; ++k)
    plan.seeds.push_back(derive_seed(cfg.base_seed, 1000 + static_cast<std::uint64_t>(k)));

  auto deal = [&](std::vector<std::size_t>& members, Rng& rng, std::vector<int>& fold_of) {
    for (std::size_t i = 0; i + 1 < members.size(); ++i) {
      const std::size_t j = static_cast<std::size_t>(
          rng.uniform_int(static_cast<std::int64_t>(i),
                          static_cast<std::int64_t>(members.size() - 1)));
      std::swap(members[i], members[j]);
    }
    const int start = static_cast<int>(rng.uniform_int(0, cfg.outer_folds - 1));
    for (std::size_t i = 0; i < members.size(); ++i)
      fold_of[members[i]] = (start + static_cast<int>(i)) % cfg.outer_folds;
  };

  for (std::uint64_t seed : plan.seeds) {
    Rng rng(derive_seed(seed, 0x57AB));
    std::vector<int> fold_of(n, 0);
    if (plan.stratified) {
      std::vector<std::size_t> zeros, ones;
      for (std::size_t i = 0; i < n; ++i)
        (labels[i] == 1.0 ? ones : zeros).push_back(i);
      deal(zeros, rng, fold_of);
      deal(ones, rng, fold_of);
    } else {
      std::vector<std::size_t> all(n);
      std::iota(all.begin(), all.end(), std::size_t{0});
      deal(all, rng, fold_of);
    }
    plan.fold_of.push_back(std::move(fold_of));
  }
  return plan;
}

// Deterministic inner partition of the given train subjects for one
// (seed, outer fold) cell. Returns inner fold per train subject.
inline std::vector<int> inner_fold_assignment(const SplitPlan& plan,
                                              std::size_t seed_idx, int outer_fold,
                                              std::size_t n_train_subjects) {
  if (n_train_subjects < static_cast<std::size_t>(plan.inner_folds))
    throw std::invalid_argument("inner folds: too few train subjects");
  Rng rng(derive_seed(derive_seed(plan.seeds.at(seed_idx), 0x1CF0),
                      static_cast<std::uint64_t>(outer_fold)));
  std::vector<std::size_t> order(n_train_subjects);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = 0; i + 1 < order.size(); ++i) {
    const std::size_t j = static_cast<std::size_t>(rng.uniform_int(
        static_cast<std::int64_t>(i), static_cast<std::int64_t>(order.size() - 1)));
    std::swap(order[i], order[j]);
  }
  std::vector<int> fold(n_train_subjects, 0);
  for (std::size_t i = 0; i < order.size(); ++i)
    fold[order[i]] = static_cast<int>(i % static_cast<std::size_t>(plan.inner_folds));
  return fold;
}

// ---------------------------------------------------------------------------
// Inner hyperparameter search

// Mean validation score of one candidate penalty across inner folds. The
// inner score is negative mean squared error for continuous targets and
// negative mean log-loss for binary ones: both strictly prefer calibrated
// shrinkage on noise, unlike correlation, whose sign is arbitrary there.
inline double inner_search(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                           const std::vector<int>& inner_fold_of_row,
                           int inner_folds, bool binary, int draws,
                           double alpha_min, double alpha_max, Rng& rng) {
  if (x.rows() != y.size() ||
      static_cast<std::size_t>(x.rows()) != inner_fold_of_row.size())
    throw std::invalid_argument("inner_search: row count mismatch");
  std::vector<double> alphas(static_cast<std::size_t>(draws));
  const double lo = std::log(alpha_min), hi = std::log(alpha_max);
  for (auto& a : alphas) a = std::exp(rng.uniform(lo, hi));
  std::sort(alphas.begin(), alphas.end());

  std::vector<double> total(alphas.size(), 0.0);
  std::vector<int> counted(alphas.size(), 0);
  for (int f = 0; f < inner_folds; ++f) {
    std::vector<Eigen::Index> tr, te;
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      (inner_fold_of_row[static_cast<std::size_t>(i)] == f ? te : tr).push_back(i);
    if (tr.size() < 2 || te.empty()) continue;
    Eigen::MatrixXd xtr(static_cast<Eigen::Index>(tr.size()), x.cols());
    Eigen::MatrixXd xte(static_cast<Eigen::Index>(te.size()), x.cols());
    Eigen::VectorXd ytr(static_cast<Eigen::Index>(tr.size()));
    Eigen::VectorXd yte(static_cast<Eigen::Index>(te.size()));
    for (std::size_t i = 0; i < tr.size(); ++i) {
      xtr.row(static_cast<Eigen::Index>(i)) = x.row(tr[i]);
      ytr[static_cast<Eigen::Index>(i)] = y[tr[i]];
    }
    for (std::size_t i = 0; i < te.size(); ++i) {
      xte.row(static_cast<Eigen::Index>(i)) = x.row(te[i]);
      yte[static_cast<Eigen::Index>(i)] = y[te[i]];
    }
    if (binary) {
      bool has0 = false, has1 = false;
      for (Eigen::Index i = 0; i < ytr.size(); ++i)
        (ytr[i] == 1.0 ? has1 : has0) = true;
      if (!has0 || !has1) continue;
      for (std::size_t a = 0; a < alphas.size(); ++a) {
        const LogisticModel m = logistic_fit(xtr, ytr, alphas[a]);
        const Eigen::VectorXd p = m.predict_proba(xte);
        double loss = 0.0;
        for (Eigen::Index i = 0; i < p.size(); ++i) {
          const double pi = std::min(std::max(p[i], 1e-12), 1.0 - 1e-12);
          loss -= yte[i] * std::log(pi) + (1.0 - yte[i]) * std::log1p(-pi);
        }
        total[a] += -loss / static_cast<double>(p.size());
        counted[a] += 1;
      }
    } else {
      const RidgeSweep sweep(xtr, xte);
      for (std::size_t a = 0; a < alphas.size(); ++a) {
        const Eigen::VectorXd pred = sweep.predict(ytr, alphas[a]);
        total[a] += -(pred - yte).squaredNorm() / static_cast<double>(yte.size());
        counted[a] += 1;
      }
    }
  }

  double best = alphas.front();
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < alphas.size(); ++a) {
    if (counted[a] == 0) continue;
    const double mean_score = total[a] / counted[a];
    if (mean_score > best_score) {  // strict: ties keep the smaller alpha
      best_score = mean_score;
      best = alphas[a];
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Dataset assembly

struct EvalSample {
  std::string subject_id;
  std::string visit_id;
  Activity activity = Activity::kTreadmillFixed;
  std::vector<double> embedding;
  std::vector<double> covariates;  // visit covariates plus one-hot activity
};

struct EvalDataset {
  std::vector<EvalSample> samples;              // embedding-table order
  std::vector<std::string> covariate_names;
  std::vector<std::string> visit_keys;          // sorted "subject\tvisit"
  std::vector<std::string> subject_of_visit;
  std::vector<int> visit_of_sample;
  std::map<std::string, std::vector<double>> target_values;  // per visit, NaN = missing
  int embedding_dim = 0;
};

// Join embeddings to the target table. Covariate columns are read from the
// target table per visit; when samples span more than one activity, one-hot
// activity indicators extend the covariates.
inline EvalDataset build_eval_dataset(const EmbeddingTable& emb,
                                      const TargetTable& targets,
                                      const std::vector<std::string>& covariate_columns) {
  EvalDataset ds;
  ds.embedding_dim = emb.dim;
  std::vector<int> cov_idx;
  for (const auto& name : covariate_columns) {
    const int idx = targets.column_index(name);
    if (idx < 0)
      throw std::invalid_argument("eval dataset: covariate column '" + name +
                                  "' not in target table");
    cov_idx.push_back(idx);
  }

  std::set<Activity> activities;
  for (const auto& row : emb.rows) activities.insert(row.activity);
  const bool one_hot = activities.size() > 1;

  std::map<std::string, int> visit_index;
  for (const auto& row : emb.rows) {
    const TargetTable::Row* trow = targets.find(row.subject_id, row.visit_id);
    if (trow == nullptr)
      throw std::invalid_argument("eval dataset: no target row for " + row.subject_id +
                                  " " + row.visit_id);
    EvalSample s;
    s.subject_id = row.subject_id;
    s.visit_id = row.visit_id;
    s.activity = row.activity;
    s.embedding = row.vec;
    for (int idx : cov_idx) {
      const double v = trow->values[static_cast<std::size_t>(idx)];
      if (std::isnan(v))
        throw std::invalid_argument("eval dataset: missing covariate for " +
                                    row.subject_id + " " + row.visit_id);
      s.covariates.push_back(v);
    }
    if (one_hot)
      for (Activity a : activities)
        s.covariates.push_back(s.activity == a ? 1.0 : 0.0);
    const std::string key = row.subject_id + "\t" + row.visit_id;
    if (!visit_index.count(key)) visit_index.emplace(key, 0);
    ds.samples.push_back(std::move(s));
  }

  ds.covariate_names = covariate_columns;
  if (one_hot)
    for (Activity a : activities) {
      std::string name = "activity_";
      name += activity_name(a);
      ds.covariate_names.push_back(std::move(name));
    }

  int next = 0;
  for (auto& [key, idx] : visit_index) {
    idx = next++;
    ds.visit_keys.push_back(key);
    ds.subject_of_visit.push_back(key.substr(0, key.find('\t')));
  }
  for (auto& s : ds.samples)
    ds.visit_of_sample.push_back(visit_index.at(s.subject_id + "\t" + s.visit_id));

  for (std::size_t c = 0; c < targets.columns.size(); ++c) {
    std::vector<double> vals(ds.visit_keys.size(), stats_nan());
    for (std::size_t v = 0; v < ds.visit_keys.size(); ++v) {
      const std::string& key = ds.visit_keys[v];
      const std::string subject = key.substr(0, key.find('\t'));
      const std::string visit = key.substr(key.find('\t') + 1);
      const TargetTable::Row* trow = targets.find(subject, visit);
      if (trow != nullptr) vals[v] = trow->values[c];
    }
    ds.target_values.emplace(targets.columns[c], std::move(vals));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Late fusion

struct FusedPrediction {
  std::string subject_id;
  std::string visit_id;
  double prediction = 0.0;
  int count = 0;  // how many sequence predictions were available
};

// Arithmetic mean of the available per-sequence predictions per subject-visit.
inline std::vector<FusedPrediction> late_fuse(
    const std::vector<EvalSample>& samples, const std::vector<double>& predictions) {
  if (samples.size() != predictions.size())
    throw std::invalid_argument("late_fuse: prediction count mismatch");
  std::map<std::pair<std::string, std::string>, std::pair<double, int>> acc;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    auto& slot = acc[{samples[i].subject_id, samples[i].visit_id}];
    slot.first += predictions[i];
    slot.second += 1;
  }
  std::vector<FusedPrediction> out;
  for (const auto& [key, sum_count] : acc)
    out.push_back({key.first, key.second, sum_count.first / sum_count.second,
                   sum_count.second});
  return out;
}

// ---------------------------------------------------------------------------
// Single-model nested CV

struct SingleRun {
  bool binary = false;
  std::vector<double> per_seed_scores;  // mean over outer folds, one per seed
  double median_score = 0.0;
  std::vector<double> consensus_pred;   // per kept visit, averaged over seeds
  std::vector<double> y_true;           // per kept visit
  std::vector<std::string> visit_keys;  // kept visits
  std::vector<double> cell_scores;      // seed-major [seed * outer_folds + fold]
};

namespace detail {

inline bool values_are_binary(const std::vector<double>& v) {
  bool has0 = false, has1 = false;
  for (double x : v) {
    if (x == 0.0)
      has0 = true;
    else if (x == 1.0)
      has1 = true;
    else if (!std::isnan(x))
      return false;
  }
  return has0 && has1;
}

}  // namespace detail

// Nested-CV evaluation of one target with one feature set. Every (seed,
// fold) cell verifies the subject-level leakage invariant before fitting.
inline SingleRun score_features(const EvalDataset& ds, const std::string& target,
                                bool use_covariates, bool use_embeddings,
                                const SplitPlan& plan, const EvalConfig& cfg) {
  auto it = ds.target_values.find(target);
  if (it == ds.target_values.end())
    throw std::invalid_argument("score_features: unknown target '" + target + "'");
  if (!use_covariates && !use_embeddings)
    throw std::invalid_argument("score_features: empty feature set");
  const std::vector<double>& y_visit = it->second;

  SingleRun run;
  std::vector<int> kept_index(ds.visit_keys.size(), -1);
  for (std::size_t v = 0; v < ds.visit_keys.size(); ++v) {
    if (std::isnan(y_visit[v])) continue;
    kept_index[v] = static_cast<int>(run.visit_keys.size());
    run.visit_keys.push_back(ds.visit_keys[v]);
    run.y_true.push_back(y_visit[v]);
  }
  if (run.visit_keys.size() < 2)
    throw std::invalid_argument("score_features: fewer than 2 visits with target '" +
                                target + "'");
  run.binary = detail::values_are_binary(run.y_true);

  // Sample rows that participate: visit kept.
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < ds.samples.size(); ++i)
    if (kept_index[static_cast<std::size_t>(ds.visit_of_sample[i])] >= 0)
      rows.push_back(i);

  const std::size_t n_feat =
      (use_covariates ? (ds.samples.empty() ? 0 : ds.samples[0].covariates.size()) : 0) +
      (use_embeddings ? static_cast<std::size_t>(ds.embedding_dim) : 0);
  if (n_feat == 0) throw std::invalid_argument("score_features: zero feature columns");

  auto fill_row = [&](std::size_t sample_idx, Eigen::MatrixXd& m, Eigen::Index r) {
    const EvalSample& s = ds.samples[sample_idx];
    Eigen::Index c = 0;
    if (use_covariates)
      for (double v : s.covariates) m(r, c++) = v;
    if (use_embeddings)
      for (double v : s.embedding) m(r, c++) = v;
  };

  run.consensus_pred.assign(run.visit_keys.size(), 0.0);
  std::vector<int> consensus_count(run.visit_keys.size(), 0);

  for (std::size_t s_idx = 0; s_idx < plan.seeds.size(); ++s_idx) {
    std::vector<double> fold_scores;
    for (int fold = 0; fold < plan.outer_folds; ++fold) {
      std::vector<std::size_t> train_rows, test_rows;
      std::set<std::string> train_subjects, test_subjects;
      for (std::size_t ri : rows) {
        const EvalSample& s = ds.samples[ri];
        const int f = plan.fold_of[s_idx][static_cast<std::size_t>(
            plan.subject_index(s.subject_id))];
        if (f == fold) {
          test_rows.push_back(ri);
          test_subjects.insert(s.subject_id);
        } else {
          train_rows.push_back(ri);
          train_subjects.insert(s.subject_id);
        }
      }
      // Leakage invariant: a subject never appears on both sides of a cell.
      for (const auto& subj : test_subjects)
        if (train_subjects.count(subj))
          throw std::logic_error("leakage: subject '" + subj +
                                 "' in both train and test");
      if (train_rows.empty() || test_rows.empty()) {
        fold_scores.push_back(stats_nan());
        run.cell_scores.push_back(stats_nan());
        continue;
      }

      Eigen::MatrixXd xtr(static_cast<Eigen::Index>(train_rows.size()),
                          static_cast<Eigen::Index>(n_feat));
      Eigen::MatrixXd xte(static_cast<Eigen::Index>(test_rows.size()),
                          static_cast<Eigen::Index>(n_feat));
      Eigen::VectorXd ytr(static_cast<Eigen::Index>(train_rows.size()));
      for (std::size_t i = 0; i < train_rows.size(); ++i) {
        fill_row(train_rows[i], xtr, static_cast<Eigen::Index>(i));
        ytr[static_cast<Eigen::Index>(i)] =
            y_visit[static_cast<std::size_t>(ds.visit_of_sample[train_rows[i]])];
      }
      for (std::size_t i = 0; i < test_rows.size(); ++i)
        fill_row(test_rows[i], xte, static_cast<Eigen::Index>(i));

      // Inner split by subject within the train side.
      std::vector<std::string> train_subject_list(train_subjects.begin(),
                                                  train_subjects.end());
      const std::vector<int> inner_of_subject = inner_fold_assignment(
          plan, s_idx, fold, train_subject_list.size());
      std::map<std::string, int> inner_lookup;
      for (std::size_t i = 0; i < train_subject_list.size(); ++i)
        inner_lookup.emplace(train_subject_list[i], inner_of_subject[i]);
      std::vector<int> inner_fold_of_row;
      for (std::size_t ri : train_rows)
        inner_fold_of_row.push_back(inner_lookup.at(ds.samples[ri].subject_id));

      Rng search_rng(derive_seed(derive_seed(plan.seeds[s_idx], 0xA1FA),
                                 static_cast<std::uint64_t>(fold)));
      const double alpha =
          inner_search(xtr, ytr, inner_fold_of_row, plan.inner_folds, run.binary,
                       cfg.search_draws, cfg.alpha_min, cfg.alpha_max, search_rng);

      Eigen::VectorXd pred;
      if (run.binary) {
        const LogisticModel m = logistic_fit(xtr, ytr, alpha);
        pred = m.predict_proba(xte);
      } else {
        const RidgeModel m = ridge_fit(xtr, ytr, alpha);
        pred = m.predict(xte);
      }

      std::vector<EvalSample> test_samples;
      std::vector<double> test_preds;
      for (std::size_t i = 0; i < test_rows.size(); ++i) {
        test_samples.push_back(ds.samples[test_rows[i]]);
        test_preds.push_back(pred[static_cast<Eigen::Index>(i)]);
      }
      const std::vector<FusedPrediction> fused = late_fuse(test_samples, test_preds);

      std::vector<double> f_pred, f_true;
      for (const auto& fp : fused) {
        const std::string key = fp.subject_id + "\t" + fp.visit_id;
        const auto kit = std::lower_bound(run.visit_keys.begin(), run.visit_keys.end(), key);
        const std::size_t vi = static_cast<std::size_t>(kit - run.visit_keys.begin());
        f_pred.push_back(fp.prediction);
        f_true.push_back(run.y_true[vi]);
        run.consensus_pred[vi] += fp.prediction;
        consensus_count[vi] += 1;
      }
      fold_scores.push_back(run.binary ? auc_score(f_true, f_pred)
                                       : pearson(f_true, f_pred));
      run.cell_scores.push_back(fold_scores.back());
    }
    double total = 0.0;
    int counted = 0;
    for (double v : fold_scores)
      if (!std::isnan(v)) {
        total += v;
        ++counted;
      }
    run.per_seed_scores.push_back(counted > 0 ? total / counted : stats_nan());
  }

  for (std::size_t v = 0; v < run.consensus_pred.size(); ++v)
    if (consensus_count[v] > 0) run.consensus_pred[v] /= consensus_count[v];
  run.median_score = vec_median(run.per_seed_scores);
  return run;
}

// ---------------------------------------------------------------------------
// Reports

struct TargetSpec {
  std::string name;
  std::string family;
};

// Stratification labels: one per distinct subject (sorted order), from the
// subject's first kept visit; empty when the target is not binary.
inline std::vector<double> subject_labels_for(const EvalDataset& ds,
                                              const std::string& target,
                                              std::vector<std::string>& subjects_out) {
  const std::vector<double>& y_visit = ds.target_values.at(target);
  std::map<std::string, double> first_label;
  for (std::size_t v = 0; v < ds.visit_keys.size(); ++v) {
    if (std::isnan(y_visit[v])) continue;
    first_label.emplace(ds.subject_of_visit[v], y_visit[v]);
  }
  subjects_out.clear();
  std::vector<double> labels;
  for (const auto& [subj, lab] : first_label) {
    subjects_out.push_back(subj);
    labels.push_back(lab);
  }
  bool binary = !labels.empty();
  bool has0 = false, has1 = false;
  for (double v : labels) {
    if (v == 0.0)
      has0 = true;
    else if (v == 1.0)
      has1 = true;
    else
      binary = false;
  }
  if (!binary || !has0 || !has1) labels.clear();
  return labels;
}

struct DirectRow {
  std::string target;
  std::string family;
  bool binary = false;
  double score = 0.0;    // median-of-seeds r (continuous) or AUC (binary)
  double r_pooled = 0.0; // Pearson r of seed-averaged predictions vs target
  double p_value = 1.0;
  double q_value = 1.0;
  bool significant = false;
  int n_visits = 0;
  std::vector<double> per_seed_scores;
};

struct DirectReport {
  std::vector<DirectRow> rows;  // one per requested target
};

struct GainRow {
  std::string target;
  std::string family;
  bool binary = false;
  double baseline_median = 0.0;
  double full_median = 0.0;
  double delta = 0.0;  // full_median - baseline_median
  double t_stat = 0.0;
  double p_value = 1.0;
  double q_value = 1.0;
  bool significant = false;
  std::vector<double> baseline_per_seed;
  std::vector<double> full_per_seed;
  std::vector<double> baseline_cells;  // seed-major per-fold scores
  std::vector<double> full_cells;
};

struct GainReport {
  std::vector<GainRow> rows;
};

namespace detail {

// Family-wise BH correction over row p-values; writes q and the reject flag.
template <typename Row>
void apply_family_fdr(std::vector<Row>& rows, double threshold) {
  std::map<std::string, std::vector<std::size_t>> families;
  for (std::size_t i = 0; i < rows.size(); ++i)
    families[rows[i].family].push_back(i);
  for (const auto& [family, idx] : families) {
    (void)family;
    std::vector<double> p;
    for (std::size_t i : idx) p.push_back(rows[i].p_value);
    const std::vector<double> q = bh_fdr(p);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      rows[idx[k]].q_value = q[k];
      rows[idx[k]].significant = !std::isnan(q[k]) && q[k] <= threshold;
    }
  }
}

}  // namespace detail

// Embeddings as the sole features; significance from the Pearson p-value of
// the seed-averaged (pooled) predictions, BH-corrected per family.
inline DirectReport direct_predict(const EvalDataset& ds,
                                   const std::vector<TargetSpec>& targets,
                                   const EvalConfig& cfg) {
  DirectReport report;
  for (const auto& spec : targets) {
    std::vector<std::string> subjects;
    const std::vector<double> labels = subject_labels_for(ds, spec.name, subjects);
    const SplitPlan plan = make_splits(subjects, labels, cfg);
    const SingleRun run = score_features(ds, spec.name, false, true, plan, cfg);
    DirectRow row;
    row.target = spec.name;
    row.family = spec.family;
    row.binary = run.binary;
    row.score = run.median_score;
    row.n_visits = static_cast<int>(run.visit_keys.size());
    row.per_seed_scores = run.per_seed_scores;
    row.r_pooled = pearson(run.y_true, run.consensus_pred);
    row.p_value = pearson_p_value(row.r_pooled, run.y_true.size());
    report.rows.push_back(std::move(row));
  }
  detail::apply_family_fdr(report.rows, cfg.q_threshold_direct);
  return report;
}

// Baseline (covariates only) versus full (covariates plus embeddings) under
// identical splits; paired t-test across per-seed scores.
inline GainReport compare_models(const EvalDataset& ds,
                                 const std::vector<TargetSpec>& targets,
                                 const EvalConfig& cfg) {
  if (ds.covariate_names.empty())
    throw std::invalid_argument("compare_models: no covariate columns configured");
  GainReport report;
  for (const auto& spec : targets) {
    std::vector<std::string> subjects;
    const std::vector<double> labels = subject_labels_for(ds, spec.name, subjects);
    const SplitPlan plan = make_splits(subjects, labels, cfg);
    const SingleRun base = score_features(ds, spec.name, true, false, plan, cfg);
    const SingleRun full = score_features(ds, spec.name, true, true, plan, cfg);
    for (double v : base.per_seed_scores)
      if (std::isnan(v))
        throw std::runtime_error("compare_models: undefined baseline score for '" +
                                 spec.name + "'");
    for (double v : full.per_seed_scores)
      if (std::isnan(v))
        throw std::runtime_error("compare_models: undefined full-model score for '" +
                                 spec.name + "'");
    GainRow row;
    row.target = spec.name;
    row.family = spec.family;
    row.binary = full.binary;
    row.baseline_median = base.median_score;
    row.full_median = full.median_score;
    row.delta = row.full_median - row.baseline_median;
    const TTestResult tt = paired_t_test(full.per_seed_scores, base.per_seed_scores);
    row.t_stat = tt.t;
    row.p_value = tt.p;
    row.baseline_per_seed = base.per_seed_scores;
    row.full_per_seed = full.per_seed_scores;
    row.baseline_cells = base.cell_scores;
    row.full_cells = full.cell_scores;
    report.rows.push_back(std::move(row));
  }
  detail::apply_family_fdr(report.rows, cfg.q_threshold_gain);
  return report;
}

// ---------------------------------------------------------------------------
// Deterministic renderings

inline std::string render_direct_report(const DirectReport& report) {
  std::string out = "target\tfamily\tkind\tscore\tr_pooled\tp\tq\tsignificant\tn_visits\n";
  for (const auto& r : report.rows) {
    out += r.target + "\t" + r.family + "\t" + (r.binary ? "binary" : "continuous") +
           "\t" + fmt_double(r.score) + "\t" + fmt_double(r.r_pooled) + "\t" +
           fmt_double(r.p_value) + "\t" + fmt_double(r.q_value) + "\t" +
           (r.significant ? "1" : "0") + "\t" + std::to_string(r.n_visits) + "\n";
  }
  return out;
}

inline std::string render_gain_report(const GainReport& report) {
  std::string out =
      "target\tfamily\tkind\tbaseline_median\tfull_median\tdelta\tt\tp\tq\tsignificant\n";
  for (const auto& r : report.rows) {
    out += r.target + "\t" + r.family + "\t" + (r.binary ? "binary" : "continuous") +
           "\t" + fmt_double(r.baseline_median) + "\t" + fmt_double(r.full_median) +
           "\t" + fmt_double(r.delta) + "\t" + fmt_double(r.t_stat) + "\t" +
           fmt_double(r.p_value) + "\t" + fmt_double(r.q_value) + "\t" +
           (r.significant ? "1" : "0") + "\n";
  }
  return out;
}

// Per-cell score log: one row per (target, model, seed, fold).
inline std::string render_cell_log(const GainReport& report, int outer_folds) {
  const std::size_t k = static_cast<std::size_t>(outer_folds);
  std::string out = "target\tmodel\tseed_index\tfold\tscore\n";
  for (const auto& r : report.rows) {
    for (std::size_t c = 0; c < r.baseline_cells.size(); ++c)
      out += r.target + "\tbaseline\t" + std::to_string(c / k) + "\t" +
             std::to_string(c % k) + "\t" + fmt_double(r.baseline_cells[c]) + "\n";
    for (std::size_t c = 0; c < r.full_cells.size(); ++c)
      out += r.target + "\tfull\t" + std::to_string(c / k) + "\t" +
             std::to_string(c % k) + "\t" + fmt_double(r.full_cells[c]) + "\n";
  }
  return out;
}

}  // namespace gaitmae
