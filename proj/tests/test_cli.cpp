// Drives the installed command-line binary end to end through std::system.
// Each case works inside its own scratch directory under the test cwd; the
// binary path is injected by the build as GAITMAE_CLI_PATH.

#include <sys/wait.h>

#include <catch2/catch_amalgamated.hpp>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "gaitmae/checkpoint.hpp"
#include "gaitmae/gsk.hpp"
#include "gaitmae/io_util.hpp"
#include "gaitmae/pooling.hpp"
#include "gaitmae/tables.hpp"

namespace fs = std::filesystem;
using namespace gaitmae;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string output;  // stdout + stderr
};

fs::path scratch_root(const std::string& name) {
  const fs::path dir = fs::path("cli_scratch") / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

RunResult run_cli(const fs::path& dir, const std::string& args,
                  const std::string& env_prefix = "") {
  static int counter = 0;
  const fs::path log = dir / ("run" + std::to_string(counter++) + ".log");
  const std::string cmd = env_prefix + std::string(GAITMAE_CLI_PATH) + " " + args +
                          " >" + log.string() + " 2>&1";
  const int rc = std::system(cmd.c_str());
  RunResult res;
  res.exit_code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  res.output = read_file_text(log);
  return res;
}

int count_lines(const std::string& text) {
  int n = 0;
  for (char c : text)
    if (c == '\n') ++n;
  return n;
}

std::vector<std::uint8_t> file_bytes(const fs::path& p) { return read_file_bytes(p); }

}  // namespace

TEST_CASE("cli generate writes a loadable cohort, byte-identical across reruns") {
  const fs::path dir = scratch_root("generate");
  const std::string flags =
      "generate --subjects 4 --visits 2 --frames 30 --seed 7 --out " +
      (dir / "a").string();

  const RunResult first = run_cli(dir, flags);
  INFO(first.output);
  REQUIRE(first.exit_code == 0);

  const std::string manifest = read_file_text(dir / "a" / "manifest.tsv");
  CHECK(count_lines(manifest) == 1 + 4 * 2);  // header + one row per subject-visit
  const TargetTable targets = read_target_table(dir / "a" / "targets.tsv");
  CHECK(targets.rows.size() == 8);
  CHECK(targets.column_index("cadence_spm") >= 0);

  const SkeletonSequence seq =
      read_gsk(dir / "a" / "sequences" / "S0001_V1_treadmill_fixed.gsk");
  CHECK(seq.frames == 30);
  CHECK(seq.joints == kJointCount);
  CHECK(fs::exists(dir / "a" / "generate.resolved.cfg"));

  // Rerun with equal flags into the same directory: every byte must survive.
  const auto targets_before = file_bytes(dir / "a" / "targets.tsv");
  const auto manifest_before = file_bytes(dir / "a" / "manifest.tsv");
  const auto seq_before = file_bytes(dir / "a" / "sequences" / "S0001_V1_treadmill_fixed.gsk");
  const auto cfg_before = file_bytes(dir / "a" / "generate.resolved.cfg");
  REQUIRE(run_cli(dir, flags).exit_code == 0);
  CHECK(file_bytes(dir / "a" / "targets.tsv") == targets_before);
  CHECK(file_bytes(dir / "a" / "manifest.tsv") == manifest_before);
  CHECK(file_bytes(dir / "a" / "sequences" / "S0001_V1_treadmill_fixed.gsk") == seq_before);
  CHECK(file_bytes(dir / "a" / "generate.resolved.cfg") == cfg_before);

  // GAITMAE_SEED is the fallback when --seed is absent.
  const RunResult env_run = run_cli(
      dir,
      "generate --subjects 4 --visits 2 --frames 30 --out " + (dir / "b").string(),
      "GAITMAE_SEED=7 ");
  INFO(env_run.output);
  REQUIRE(env_run.exit_code == 0);
  CHECK(file_bytes(dir / "b" / "targets.tsv") == targets_before);
  CHECK(file_bytes(dir / "b" / "manifest.tsv") == manifest_before);
}

TEST_CASE("cli generate rejects invalid ranges without partial outputs") {
  const fs::path dir = scratch_root("generate_invalid");

  RunResult bad = run_cli(dir, "generate --subjects 0 --out " + (dir / "x").string());
  CHECK(bad.exit_code != 0);
  CHECK(!fs::exists(dir / "x"));

  bad = run_cli(dir, "generate --subjects 2 --activities hopping --out " +
                         (dir / "y").string());
  CHECK(bad.exit_code != 0);
  CHECK(bad.output.find("unknown activity") != std::string::npos);
  CHECK(!fs::exists(dir / "y"));

  bad = run_cli(dir, "generate --subjects 2 --bogus-flag 1 --out " + (dir / "z").string());
  CHECK(bad.exit_code != 0);
  CHECK(!fs::exists(dir / "z"));
}

TEST_CASE("cli preprocess windows recordings with indexed filenames") {
  const fs::path dir = scratch_root("preprocess");
  REQUIRE(run_cli(dir, "generate --subjects 3 --frames 25 --seed 11 --out " +
                           (dir / "gen").string())
              .exit_code == 0);

  const RunResult res =
      run_cli(dir, "preprocess --data " + (dir / "gen").string() +
                       " --window-frames 10 --out " + (dir / "pre").string());
  INFO(res.output);
  REQUIRE(res.exit_code == 0);

  // 25 frames -> two full windows plus a padded 5-frame tail.
  const std::string manifest = read_file_text(dir / "pre" / "manifest.tsv");
  CHECK(count_lines(manifest) == 1 + 3 * 3);
  CHECK(manifest.find("S0002\tV1\ttreadmill_fixed\t2\twindows/"
                      "S0002_V1_treadmill_fixed_w002.gsk") != std::string::npos);
  const SkeletonSequence w2 =
      read_gsk(dir / "pre" / "windows" / "S0002_V1_treadmill_fixed_w002.gsk");
  CHECK(w2.frames == 10);

  const RunResult missing =
      run_cli(dir, "preprocess --data " + (dir / "nope").string() + " --out " +
                       (dir / "p2").string());
  CHECK(missing.exit_code != 0);
  CHECK(missing.output.find("data directory not found") != std::string::npos);
}

TEST_CASE("cli features emits per-sequence tables and a redundancy log") {
  const fs::path dir = scratch_root("features");
  REQUIRE(run_cli(dir, "generate --subjects 5 --frames 120 --seed 3 --out " +
                           (dir / "gen").string())
              .exit_code == 0);

  const RunResult res = run_cli(dir, "features --data " + (dir / "gen").string() +
                                         " --out " + (dir / "feat").string());
  INFO(res.output);
  REQUIRE(res.exit_code == 0);
  const FeatureTable table = read_feature_table(dir / "feat" / "features.tsv");
  CHECK(table.rows.size() == 5);
  CHECK(table.column_index("cadence_spm") >= 0);
  const FeatureTable reduced = read_feature_table(dir / "feat" / "features_reduced.tsv");
  CHECK(reduced.columns.size() <= table.columns.size());
  CHECK(!reduced.columns.empty());
  CHECK(fs::exists(dir / "feat" / "redundancy.txt"));

  // Mixed activities: the column union holds, absent batteries stay NaN.
  REQUIRE(run_cli(dir, "generate --subjects 3 --frames 120 --seed 3 "
                       "--activities treadmill_fixed,balance_stand --out " +
                           (dir / "gen2").string())
              .exit_code == 0);
  REQUIRE(run_cli(dir, "features --no-reduce --data " + (dir / "gen2").string() +
                           " --out " + (dir / "feat2").string())
              .exit_code == 0);
  const FeatureTable mixed = read_feature_table(dir / "feat2" / "features.tsv");
  CHECK(mixed.rows.size() == 6);
  bool has_nan = false;
  for (const auto& r : mixed.rows)
    for (double v : r.values)
      if (std::isnan(v)) has_nan = true;
  CHECK(has_nan);
}

TEST_CASE("cli pretrain writes checkpoint plus loss curve and resume continues steps") {
  const fs::path dir = scratch_root("pretrain");
  REQUIRE(run_cli(dir, "generate --subjects 4 --frames 24 --seed 9 --out " +
                           (dir / "gen").string())
              .exit_code == 0);
  const std::string tiny =
      " --blocks 1 --dim 8 --heads 2 --decoder-hidden1 8 --decoder-hidden2 8"
      " --batch-size 2 --holdout-fraction 0.25 --seed 9 --data " +
      (dir / "gen").string();

  const RunResult first =
      run_cli(dir, "pretrain --steps 3" + tiny + " --out " + (dir / "t1").string());
  INFO(first.output);
  REQUIRE(first.exit_code == 0);
  const Checkpoint ck1 = read_checkpoint((dir / "t1" / "checkpoint.bin").string());
  CHECK(ck1.step == 3);
  const std::string curve1 = read_file_text(dir / "t1" / "loss_curve.tsv");
  CHECK(count_lines(curve1) == 1 + 3);
  CHECK(curve1.find("\n1\t") != std::string::npos);
  CHECK(fs::exists(dir / "t1" / "metrics.tsv"));

  // Resumption keeps absolute step numbering: the new curve starts at 4.
  const RunResult resumed =
      run_cli(dir, "pretrain --steps 5 --resume " +
                       (dir / "t1" / "checkpoint.bin").string() + tiny + " --out " +
                       (dir / "t2").string());
  INFO(resumed.output);
  REQUIRE(resumed.exit_code == 0);
  const Checkpoint ck2 = read_checkpoint((dir / "t2" / "checkpoint.bin").string());
  CHECK(ck2.step == 5);
  const std::string curve2 = read_file_text(dir / "t2" / "loss_curve.tsv");
  CHECK(count_lines(curve2) == 1 + 2);
  CHECK(curve2.find("\n4\t") != std::string::npos);
  CHECK(curve2.find("\n1\t") == std::string::npos);

  const RunResult shrunk =
      run_cli(dir, "pretrain --steps 2 --resume " +
                       (dir / "t1" / "checkpoint.bin").string() + tiny + " --out " +
                       (dir / "t3").string());
  CHECK(shrunk.exit_code != 0);
  CHECK(shrunk.output.find("below the resumed checkpoint step") != std::string::npos);

  const RunResult missing = run_cli(
      dir, "pretrain --steps 1 --data " + (dir / "absent").string() + " --out " +
               (dir / "t4").string());
  CHECK(missing.exit_code != 0);
  CHECK(missing.output.find("data directory not found") != std::string::npos);
}

TEST_CASE("cli embed records the checkpoint hash and rejects unknown variants") {
  const fs::path dir = scratch_root("embed");
  REQUIRE(run_cli(dir, "generate --subjects 4 --frames 24 --seed 9 --out " +
                           (dir / "gen").string())
              .exit_code == 0);
  REQUIRE(run_cli(dir,
                  "pretrain --steps 2 --blocks 1 --dim 8 --heads 2 --decoder-hidden1 8"
                  " --decoder-hidden2 8 --holdout-fraction 0.25 --seed 9 --data " +
                      (dir / "gen").string() + " --out " + (dir / "ck").string())
              .exit_code == 0);
  const Checkpoint ck = read_checkpoint((dir / "ck" / "checkpoint.bin").string());

  const RunResult res =
      run_cli(dir, "embed --variant v1 --data " + (dir / "gen").string() +
                       " --checkpoint " + (dir / "ck" / "checkpoint.bin").string() +
                       " --out " + (dir / "e1").string());
  INFO(res.output);
  REQUIRE(res.exit_code == 0);
  const EmbeddingTable table = read_embedding_table((dir / "e1" / "embeddings.bin").string());
  CHECK(table.rows.size() == 4);
  CHECK(table.dim == pool_dim(PoolVariant::kV1, 8, 8));
  CHECK(table.encoder_hash == ck.hash);
  const std::string text = read_file_text(dir / "e1" / "embeddings.tsv");
  CHECK(text.find("encoder_hash=" + to_hex64(ck.hash)) != std::string::npos);

  REQUIRE(run_cli(dir, "embed --variant v5 --data " + (dir / "gen").string() +
                           " --checkpoint " + (dir / "ck" / "checkpoint.bin").string() +
                           " --out " + (dir / "e5").string())
              .exit_code == 0);
  CHECK(read_embedding_table((dir / "e5" / "embeddings.bin").string()).dim ==
        pool_dim(PoolVariant::kV5, 8, 8));

  const RunResult bad =
      run_cli(dir, "embed --variant v9 --data " + (dir / "gen").string() +
                       " --checkpoint " + (dir / "ck" / "checkpoint.bin").string() +
                       " --out " + (dir / "e9").string());
  CHECK(bad.exit_code != 0);
  CHECK(bad.output.find("v1 v2 v3 v4 v5") != std::string::npos);
}

TEST_CASE("cli evaluate writes deterministic reports in both modes") {
  const fs::path dir = scratch_root("evaluate");
  REQUIRE(run_cli(dir, "generate --subjects 24 --frames 24 --seed 5 --out " +
                           (dir / "gen").string())
              .exit_code == 0);
  REQUIRE(run_cli(dir,
                  "pretrain --steps 2 --blocks 1 --dim 8 --heads 2 --decoder-hidden1 8"
                  " --decoder-hidden2 8 --holdout-fraction 0.25 --seed 5 --data " +
                      (dir / "gen").string() + " --out " + (dir / "ck").string())
              .exit_code == 0);
  REQUIRE(run_cli(dir, "embed --variant v1 --data " + (dir / "gen").string() +
                           " --checkpoint " + (dir / "ck" / "checkpoint.bin").string() +
                           " --out " + (dir / "emb").string())
              .exit_code == 0);
  const std::string shared =
      " --embeddings " + (dir / "emb" / "embeddings.bin").string() + " --targets " +
      (dir / "gen" / "targets.tsv").string() +
      " --outer-folds 3 --inner-folds 2 --eval-seeds 3 --search-draws 4 --seed 2";

  const RunResult direct =
      run_cli(dir, "evaluate --mode direct --target cadence_spm --target trait_0" +
                       shared + " --out " + (dir / "d1").string());
  INFO(direct.output);
  REQUIRE(direct.exit_code == 0);
  const std::string report = read_file_text(dir / "d1" / "report.tsv");
  CHECK(count_lines(report) == 1 + 2);
  CHECK(report.starts_with("target\tfamily\tkind\tscore\tr_pooled\t"));
  CHECK(direct.output.find("significant") != std::string::npos);

  REQUIRE(run_cli(dir, "evaluate --mode direct --target cadence_spm --target trait_0" +
                           shared + " --out " + (dir / "d2").string())
              .exit_code == 0);
  CHECK(file_bytes(dir / "d2" / "report.tsv") == file_bytes(dir / "d1" / "report.tsv"));

  const RunResult gain =
      run_cli(dir, "evaluate --mode gain --target cadence_spm --covariates age_proxy" +
                       shared + " --out " + (dir / "g1").string());
  INFO(gain.output);
  REQUIRE(gain.exit_code == 0);
  const std::string gain_report = read_file_text(dir / "g1" / "report.tsv");
  CHECK(gain_report.find("\tdelta\t") != std::string::npos);
  CHECK(fs::exists(dir / "g1" / "cells.tsv"));
  REQUIRE(run_cli(dir, "evaluate --mode gain --target cadence_spm --covariates age_proxy" +
                           shared + " --out " + (dir / "g2").string())
              .exit_code == 0);
  CHECK(file_bytes(dir / "g2" / "report.tsv") == file_bytes(dir / "g1" / "report.tsv"));

  const RunResult bad = run_cli(dir, "evaluate --mode ranking" + shared + " --out " +
                                         (dir / "g3").string());
  CHECK(bad.exit_code != 0);
  CHECK(bad.output.find("expected direct or gain") != std::string::npos);
}

TEST_CASE("cli ablate emits four rows per target and logs exact controls") {
  const fs::path dir = scratch_root("ablate");
  REQUIRE(run_cli(dir,
                  "generate --subjects 10 --frames 24 --seed 13 "
                  "--activities treadmill_fixed,balance_stand --out " +
                      (dir / "gen").string())
              .exit_code == 0);
  REQUIRE(run_cli(dir,
                  "pretrain --steps 2 --blocks 1 --dim 8 --heads 2 --decoder-hidden1 8"
                  " --decoder-hidden2 8 --holdout-fraction 0.25 --seed 13 --data " +
                      (dir / "gen").string() + " --out " + (dir / "ck").string())
              .exit_code == 0);

  const RunResult res = run_cli(
      dir, "ablate --variant v1 --target cadence_spm --target trait_0"
           " --outer-folds 3 --inner-folds 2 --eval-seeds 2 --search-draws 3"
           " --seed 4 --data " +
               (dir / "gen").string() + " --checkpoint " +
               (dir / "ck" / "checkpoint.bin").string() + " --targets " +
               (dir / "gen" / "targets.tsv").string() + " --out " +
               (dir / "abl").string());
  INFO(res.output);
  REQUIRE(res.exit_code == 0);

  CHECK(res.output.find("non-treadmill") != std::string::npos);
  CHECK(fs::exists(dir / "abl" / "warnings.txt"));

  const std::string importance = read_file_text(dir / "abl" / "importance.tsv");
  CHECK(count_lines(importance) == 1 + 2 * 4);  // 4 group rows per target
  for (const char* group : {"\tHead\t", "\tTorso\t", "\tArms\t", "\tLegs\t"})
    CHECK(importance.find(group) != std::string::npos);

  const std::string controls = read_file_text(dir / "abl" / "controls.tsv");
  CHECK(count_lines(controls) == 1 + 2);
  CHECK(controls.find("cadence_spm\t0\t") != std::string::npos);

  const std::string rollup = read_file_text(dir / "abl" / "rollup.tsv");
  CHECK(rollup.starts_with("family\tHead\tTorso\tArms\tLegs\n"));
}

TEST_CASE("cli report converts run outputs into plot-ready CSV summaries") {
  const fs::path dir = scratch_root("report");
  REQUIRE(run_cli(dir, "generate --subjects 8 --frames 24 --seed 6 --out " +
                           (dir / "gen").string())
              .exit_code == 0);
  REQUIRE(run_cli(dir,
                  "pretrain --steps 2 --blocks 1 --dim 8 --heads 2 --decoder-hidden1 8"
                  " --decoder-hidden2 8 --holdout-fraction 0.25 --seed 6 --data " +
                      (dir / "gen").string() + " --out " + (dir / "ck").string())
              .exit_code == 0);
  REQUIRE(run_cli(dir, "embed --variant v1 --data " + (dir / "gen").string() +
                           " --checkpoint " + (dir / "ck" / "checkpoint.bin").string() +
                           " --out " + (dir / "emb").string())
              .exit_code == 0);
  REQUIRE(run_cli(dir,
                  "evaluate --mode gain --target cadence_spm --covariates age_proxy"
                  " --embeddings " +
                      (dir / "emb" / "embeddings.bin").string() + " --targets " +
                      (dir / "gen" / "targets.tsv").string() +
                      " --outer-folds 2 --inner-folds 2 --eval-seeds 2 "
                      "--search-draws 3 --seed 2 --out " +
                      (dir / "ev").string())
              .exit_code == 0);

  const RunResult res =
      run_cli(dir, "report --pretrain " + (dir / "ck").string() + " --evaluate " +
                       (dir / "ev").string() + " --out " + (dir / "rep").string());
  INFO(res.output);
  REQUIRE(res.exit_code == 0);
  const std::string curve = read_file_text(dir / "rep" / "loss_curve.csv");
  CHECK(curve.starts_with("step,lr,mpjpe,nmpjpe,velocity,total\n1,"));
  CHECK(count_lines(curve) == 1 + 2);
  const std::string sig = read_file_text(dir / "rep" / "significance_summary.csv");
  CHECK(sig.starts_with("family,mode,targets,significant\n"));
  CHECK(sig.find("all,gain,1,") != std::string::npos);
  CHECK(fs::exists(dir / "rep" / "gain_deltas.csv"));
  CHECK(read_file_text(dir / "rep" / "summary.txt").find("evaluate(gain)") !=
        std::string::npos);

  const RunResult none = run_cli(dir, "report --out " + (dir / "rep2").string());
  CHECK(none.exit_code != 0);
}

TEST_CASE("cli pipeline reruns produce byte-identical artifacts") {
  const fs::path dir = scratch_root("pipeline");
  auto pipeline = [&](const std::string& root) {
    const fs::path r = dir / root;
    REQUIRE(run_cli(dir, "generate --subjects 8 --frames 24 --seed 3 --out " +
                             (r / "gen").string())
                .exit_code == 0);
    REQUIRE(run_cli(dir,
                    "pretrain --steps 2 --blocks 1 --dim 8 --heads 2 --decoder-hidden1 8"
                    " --decoder-hidden2 8 --holdout-fraction 0.25 --seed 3 --data " +
                        (r / "gen").string() + " --out " + (r / "ck").string())
                .exit_code == 0);
    REQUIRE(run_cli(dir, "embed --variant v2 --data " + (r / "gen").string() +
                             " --checkpoint " + (r / "ck" / "checkpoint.bin").string() +
                             " --out " + (r / "emb").string())
                .exit_code == 0);
    REQUIRE(run_cli(dir,
                    "evaluate --mode direct --target cadence_spm --embeddings " +
                        (r / "emb" / "embeddings.bin").string() + " --targets " +
                        (r / "gen" / "targets.tsv").string() +
                        " --outer-folds 2 --inner-folds 2 --eval-seeds 2 "
                        "--search-draws 3 --seed 3 --out " +
                        (r / "ev").string())
                .exit_code == 0);
  };
  pipeline("p1");
  pipeline("p2");
  for (const char* artifact :
       {"gen/targets.tsv", "gen/manifest.tsv", "ck/checkpoint.bin", "ck/loss_curve.tsv",
        "emb/embeddings.bin", "ev/report.tsv"})
    CHECK(file_bytes(dir / "p1" / artifact) == file_bytes(dir / "p2" / artifact));
}
