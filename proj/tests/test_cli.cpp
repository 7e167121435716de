// End-to-end tests driving the fer binary (path injected as FER_CLI_PATH).
#include <algorithm>
#include <cstdio>
#include <string>
#include <vector>

#include "doctest.h"
#include "fer/dataset.hpp"
#include "fer/evaluation.hpp"
#include "fer/fusion.hpp"
#include "fer/imaging.hpp"
#include "fer/learner.hpp"
#include "testutil.hpp"

using namespace fer;
using testutil::run_cli;
using testutil::TempDir;

TEST_CASE("edges: constant image exports an all-zero map") {
  TempDir dir("edges-const");
  imaging::Image img(5, 5);
  for (double& s : img.samples) s = 200.0;
  imaging::write_pgm_file(img, dir.str("in.pgm"));

  const auto result = run_cli("edges " + dir.str("in.pgm") + " " + dir.str("out.pgm"));
  CHECK(result.exit_code == 0);
  const auto out = imaging::load_pgm_file(dir.str("out.pgm"));
  for (double s : out.samples) CHECK(s == 0.0);
}

TEST_CASE("edges: vertical step matches the hand-computed golden PGM") {
  TempDir dir("edges-step");
  imaging::Image img(4, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) img.at(x, y) = x < 2 ? 0.0 : 255.0;
  imaging::write_pgm_file(img, dir.str("in.pgm"));

  const auto result = run_cli("edges " + dir.str("in.pgm") + " " + dir.str("out.pgm"));
  REQUIRE(result.exit_code == 0);

  // magnitude 1020 on the two central columns; 1020 * 255 / 1442.5 = 180.31
  // rounds half-up to 180.
  std::vector<std::uint8_t> raster;
  for (int y = 0; y < 4; ++y) {
    raster.push_back(0);
    raster.push_back(180);
    raster.push_back(180);
    raster.push_back(0);
  }
  const std::string golden(reinterpret_cast<const char*>(testutil::pgm_bytes(4, 4, raster).data()),
                           testutil::pgm_bytes(4, 4, raster).size());
  CHECK(testutil::read_file(dir.str("out.pgm")) == golden);

  // and the output is valid PGM
  const auto reloaded = imaging::load_pgm_file(dir.str("out.pgm"));
  CHECK(reloaded.width == 4);
  CHECK(reloaded.at(1, 2) == 180.0);
}

TEST_CASE("edges: unreadable input exits 1") {
  const auto result = run_cli("edges /nonexistent/img.pgm /tmp/out.pgm");
  CHECK(result.exit_code == 1);
  CHECK(result.err.find("/nonexistent/img.pgm") != std::string::npos);
}

TEST_CASE("train-expr writes a reloadable checkpoint and history") {
  TempDir dir("train-expr");
  const std::string manifest = testutil::generate_expression_corpus(dir.path() / "corpus", 4, 12, 5);

  const std::string flags = " --train-manifest " + manifest + " --out " + dir.str("run") +
                            " --epochs 2 --channels 2,4 --input-size 12 --batch-size 8 --seed 3" +
                            " --lr 1e-3 --val-fraction 0.25";
  const auto result = run_cli("train-expr" + flags);
  CAPTURE(result.err);
  REQUIRE(result.exit_code == 0);

  const std::string ckpt = dir.str("run/expr.ckpt");
  const auto params = learner::load_checkpoint(ckpt);
  CHECK(params.config.head_classes == 6);
  CHECK(params.config.channels == std::vector<int>{2, 4});

  // reloaded parameters serialize to the identical bytes
  TempDir second("train-expr-resave");
  learner::save_checkpoint(params, second.str("again.ckpt"));
  CHECK(testutil::read_file(second.str("again.ckpt")) == testutil::read_file(ckpt));

  const std::string history = testutil::read_file(dir.str("run/expr-history.csv"));
  CHECK(history.rfind("epoch,loss,val_macro_f1\n", 0) == 0);
  CHECK(std::count(history.begin(), history.end(), '\n') == 3);  // header + 2 epochs

  // the identical invocation is bit-reproducible: same checkpoint bytes,
  // same history, same stdout
  const std::string ckpt_bytes = testutil::read_file(ckpt);
  const auto result2 = run_cli("train-expr" + flags);
  REQUIRE(result2.exit_code == 0);
  CHECK(testutil::read_file(ckpt) == ckpt_bytes);
  CHECK(testutil::read_file(dir.str("run/expr-history.csv")) == history);
  CHECK(result2.out == result.out);
}

TEST_CASE("train-expr with a pretrain manifest marks the phase boundary") {
  TempDir dir("train-expr-pre");
  const std::string manifest = testutil::generate_expression_corpus(dir.path() / "corpus", 3, 12, 6);
  const std::string pre = testutil::generate_expression_corpus(dir.path() / "pre", 3, 12, 7);

  const auto result = run_cli("train-expr --train-manifest " + manifest + " --pretrain-manifest " +
                              pre + " --out " + dir.str("run") +
                              " --epochs 1 --channels 2 --input-size 12 --batch-size 8 --seed 1" +
                              " --val-fraction 0.34");
  CAPTURE(result.err);
  REQUIRE(result.exit_code == 0);
  const std::string history = testutil::read_file(dir.str("run/expr-history.csv"));
  CHECK(history.find("# phase 2\n") != std::string::npos);
}

TEST_CASE("train-expr without the manifest fails naming the path") {
  const auto result = run_cli("train-expr --train-manifest /no/such/manifest.csv --epochs 1");
  CHECK(result.exit_code == 1);
  CHECK(result.err.find("/no/such/manifest.csv") != std::string::npos);
}

TEST_CASE("train-hand produces a binary head and rejects unlabeled flags") {
  TempDir dir("train-hand");
  const std::string manifest = testutil::generate_hand_corpus(dir.path() / "corpus", 10, 12, 8);

  const auto result = run_cli("train-hand --train-manifest " + manifest + " --out " +
                              dir.str("run") +
                              " --epochs 2 --channels 2,4 --input-size 12 --batch-size 8 --seed 2"
                              " --lr 1e-3 --val-fraction 0.2");
  CAPTURE(result.err);
  REQUIRE(result.exit_code == 0);
  const auto params = learner::load_checkpoint(dir.str("run/hand.ckpt"));
  CHECK(params.config.head_classes == 2);

  // a manifest with `?` hand flags is rejected up front
  auto entries = dataset::load_manifest(manifest);
  entries[3].hand = dataset::HandFlag::Unlabeled;
  testutil::write_file(dir.str("corpus/unlabeled.csv"), dataset::write_manifest(entries));
  const auto bad = run_cli("train-hand --train-manifest " + dir.str("corpus/unlabeled.csv") +
                           " --out " + dir.str("run2") + " --epochs 1 --channels 2 --input-size 12");
  CHECK(bad.exit_code == 1);
  CHECK(bad.err.find("unlabeled") != std::string::npos);
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

namespace {

// Brute-force per-class F1 from raw label lists; no ConfusionMatrix involved.
std::vector<double> brute_force_f1(const std::vector<int>& preds, const std::vector<int>& truths) {
  std::vector<double> f1(6, 0.0);
  for (int c = 0; c < 6; ++c) {
    long tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      if (preds[i] == c && truths[i] == c) ++tp;
      if (preds[i] == c && truths[i] != c) ++fp;
      if (preds[i] != c && truths[i] == c) ++fn;
    }
    f1[c] = (2 * tp + fp + fn) == 0 ? 0.0 : 2.0 * tp / static_cast<double>(2 * tp + fp + fn);
  }
  return f1;
}

}  // namespace

TEST_CASE("evaluate emits the oracle's golden CSV byte-for-byte") {
  TempDir dir("evaluate");
  const std::string manifest = testutil::generate_hand_corpus(dir.path() / "corpus", 12, 12, 9);

  // Deterministic untrained checkpoints; the oracle recomputes the report
  // from the same predictions the CLI makes.
  learner::ModelConfig expr_cfg;
  expr_cfg.input_width = expr_cfg.input_height = 12;
  expr_cfg.channels = {2, 4};
  expr_cfg.head_classes = 6;
  expr_cfg.rng_seed = 31;
  learner::save_checkpoint(learner::init_model(expr_cfg), dir.str("expr.ckpt"));

  learner::ModelConfig hand_cfg = expr_cfg;
  hand_cfg.head_classes = 2;
  hand_cfg.rng_seed = 32;
  learner::save_checkpoint(learner::init_model(hand_cfg), dir.str("hand.ckpt"));

  const auto result = run_cli("evaluate --expr-checkpoint " + dir.str("expr.ckpt") +
                              " --hand-checkpoint " + dir.str("hand.ckpt") + " --val-manifest " +
                              manifest + " --out " + dir.str("out"));
  CAPTURE(result.err);
  REQUIRE(result.exit_code == 0);
  const std::string report = testutil::read_file(dir.str("out/report.csv"));

  // oracle: same predictions, independent F1 arithmetic, same formatting
  const auto entries = dataset::load_manifest(manifest);
  const auto expr_params = learner::load_checkpoint(dir.str("expr.ckpt"));
  const auto hand_params = learner::load_checkpoint(dir.str("hand.ckpt"));
  std::vector<int> truths;
  std::vector<dataset::ExpressionLabel> expr_preds;
  std::vector<bool> hand_preds;
  for (const auto& e : entries) {
    const auto raw = imaging::load_pgm_file((dir.path() / "corpus" / e.path).string());
    expr_preds.push_back(
        learner::predict_expression(expr_params, learner::prepare_expression_input(raw, expr_cfg)).label);
    hand_preds.push_back(
        learner::predict_hand(hand_params, learner::prepare_hand_input(raw, hand_cfg)).hand);
    truths.push_back(static_cast<int>(e.expression));
  }

  std::string golden =
      "mode,macro_f1,f1_anger,f1_disgust,f1_fear,f1_happiness,f1_sadness,f1_surprise,"
      "support_anger,support_disgust,support_fear,support_happiness,support_sadness,"
      "support_surprise\n";
  std::vector<long> support(6, 0);
  for (int t : truths) ++support[t];
  for (fusion::FusionMode mode : fusion::kAllModes) {
    std::vector<int> fused;
    for (std::size_t i = 0; i < entries.size(); ++i) {
      fused.push_back(static_cast<int>(fusion::fuse(expr_preds[i], hand_preds[i], mode)));
    }
    const auto f1 = brute_force_f1(fused, truths);
    double macro = 0.0;
    for (double f : f1) macro += f / 6.0;
    char buf[64];
    golden += fusion::mode_name(mode);
    std::snprintf(buf, sizeof buf, ",%.6f", macro);
    golden += buf;
    for (double f : f1) {
      std::snprintf(buf, sizeof buf, ",%.6f", f);
      golden += buf;
    }
    for (long s : support) {
      std::snprintf(buf, sizeof buf, ",%ld", s);
      golden += buf;
    }
    golden += '\n';
  }
  CHECK(report == golden);
  CHECK(std::count(report.begin(), report.end(), '\n') == 4);  // header + 3 modes
}

TEST_CASE("evaluate rejects hand modes without a hand checkpoint") {
  TempDir dir("evaluate-nohand");
  const std::string manifest = testutil::generate_hand_corpus(dir.path() / "corpus", 3, 12, 10);
  learner::ModelConfig cfg;
  cfg.input_width = cfg.input_height = 12;
  cfg.channels = {2};
  cfg.head_classes = 6;
  learner::save_checkpoint(learner::init_model(cfg), dir.str("expr.ckpt"));

  const auto bad = run_cli("evaluate --expr-checkpoint " + dir.str("expr.ckpt") +
                           " --val-manifest " + manifest + " --modes hand-override --out " +
                           dir.str("out"));
  CHECK(bad.exit_code == 1);
  CHECK(bad.err.find("hand") != std::string::npos);

  const auto ok = run_cli("evaluate --expr-checkpoint " + dir.str("expr.ckpt") +
                          " --val-manifest " + manifest + " --modes expression-only --out " +
                          dir.str("out"));
  CHECK(ok.exit_code == 0);
}

TEST_CASE("evaluate reports checkpoint corruption") {
  TempDir dir("evaluate-corrupt");
  const std::string manifest = testutil::generate_hand_corpus(dir.path() / "corpus", 2, 12, 11);
  testutil::write_file(dir.str("broken.ckpt"), "fer-checkpoint-v1 input_width=12\nnot-a-directory\n");
  const auto result = run_cli("evaluate --expr-checkpoint " + dir.str("broken.ckpt") +
                              " --val-manifest " + manifest + " --out " + dir.str("out"));
  CHECK(result.exit_code == 1);
  CHECK(result.err.find("checkpoint") != std::string::npos);
}

// ---------------------------------------------------------------------------
// predict
// ---------------------------------------------------------------------------

TEST_CASE("predict prints a deterministic, well-formed report") {
  TempDir dir("predict");
  learner::ModelConfig expr_cfg;
  expr_cfg.input_width = expr_cfg.input_height = 12;
  expr_cfg.channels = {2, 4};
  expr_cfg.head_classes = 6;
  expr_cfg.rng_seed = 41;
  learner::save_checkpoint(learner::init_model(expr_cfg), dir.str("expr.ckpt"));
  learner::ModelConfig hand_cfg = expr_cfg;
  hand_cfg.head_classes = 2;
  hand_cfg.rng_seed = 42;
  learner::save_checkpoint(learner::init_model(hand_cfg), dir.str("hand.ckpt"));

  Rng rng(43);
  imaging::Image img(12, 12);
  for (double& s : img.samples) s = std::floor(rng.uniform() * 256.0);
  imaging::write_pgm_file(img, dir.str("img.pgm"));

  const std::string cmd = "predict --expr-checkpoint " + dir.str("expr.ckpt") +
                          " --hand-checkpoint " + dir.str("hand.ckpt") + " --image " +
                          dir.str("img.pgm") + " --mode hand-override-except-happiness";
  const auto a = run_cli(cmd);
  const auto b = run_cli(cmd);
  CAPTURE(a.err);
  REQUIRE(a.exit_code == 0);
  CHECK(a.out == b.out);
  CHECK(a.out.rfind("expression: ", 0) == 0);
  CHECK(a.out.find("expression_probs: ") != std::string::npos);
  CHECK(a.out.find("hand: ") != std::string::npos);
  CHECK(a.out.find("hand_prob: ") != std::string::npos);
  CHECK(a.out.find("label: ") != std::string::npos);

  // expression-only ignores the hand checkpoint entirely
  const auto solo = run_cli("predict --expr-checkpoint " + dir.str("expr.ckpt") + " --image " +
                            dir.str("img.pgm") + " --mode expression-only");
  CHECK(solo.exit_code == 0);
  CHECK(solo.out.find("hand:") == std::string::npos);
  CHECK(solo.out.find("label: ") != std::string::npos);

  const auto missing = run_cli("predict --expr-checkpoint " + dir.str("expr.ckpt") + " --image " +
                               dir.str("missing.pgm") + " --mode expression-only");
  CHECK(missing.exit_code == 1);
}

// ---------------------------------------------------------------------------
// config file precedence
// ---------------------------------------------------------------------------

TEST_CASE("config file keys apply and CLI flags override them") {
  TempDir dir("config");
  const std::string manifest = testutil::generate_expression_corpus(dir.path() / "corpus", 3, 12, 12);
  testutil::write_file(dir.str("run.conf"),
                       "# run settings\n"
                       "train-manifest = " + manifest + "\n"
                       "epochs = 1\n"
                       "channels = 2\n"
                       "input-size = 12\n"
                       "val-fraction = 0.34\n"
                       "seed = 9\n");

  const auto from_file = run_cli("train-expr --config " + dir.str("run.conf") + " --out " +
                                 dir.str("a"));
  CAPTURE(from_file.err);
  REQUIRE(from_file.exit_code == 0);
  const std::string history_a = testutil::read_file(dir.str("a/expr-history.csv"));
  CHECK(std::count(history_a.begin(), history_a.end(), '\n') == 2);  // header + 1 epoch

  const auto overridden = run_cli("train-expr --config " + dir.str("run.conf") + " --epochs 2 --out " +
                                  dir.str("b"));
  REQUIRE(overridden.exit_code == 0);
  const std::string history_b = testutil::read_file(dir.str("b/expr-history.csv"));
  CHECK(std::count(history_b.begin(), history_b.end(), '\n') == 3);  // header + 2 epochs
}
