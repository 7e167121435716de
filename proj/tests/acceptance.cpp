// Acceptance suite: one criterion per check, one PASS/FAIL line each.
// Exits nonzero if any criterion fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "fer/dataset.hpp"
#include "fer/evaluation.hpp"
#include "fer/fusion.hpp"
#include "fer/imaging.hpp"
#include "fer/kernels.hpp"
#include "fer/learner.hpp"
#include "fer/rng.hpp"
#include "testutil.hpp"

using namespace fer;
using dataset::ExpressionLabel;
using dataset::HandFlag;
using dataset::ManifestEntry;
using fusion::FusionMode;

namespace {

struct Failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw Failure(what);
}

// ---------------------------------------------------------------------------
// C1: exhaustive fusion truth table against the recognition procedure
// written out step by step.
// ---------------------------------------------------------------------------

ExpressionLabel recognition_procedure(ExpressionLabel y_e, bool y_h, FusionMode mode) {
  switch (mode) {
    case FusionMode::ExpressionOnly:
      return y_e;
    case FusionMode::HandOverride:
      if (y_h) return ExpressionLabel::Fear;
      return y_e;
    case FusionMode::HandOverrideExceptHappiness:
      if (y_h && y_e != ExpressionLabel::Happiness) return ExpressionLabel::Fear;
      return y_e;
  }
  return y_e;
}

std::string c1_fusion_truth_table() {
  int cases = 0;
  for (int e = 0; e < 6; ++e) {
    for (bool h : {false, true}) {
      for (FusionMode mode : fusion::kAllModes) {
        const auto label = static_cast<ExpressionLabel>(e);
        const auto expected = recognition_procedure(label, h, mode);
        const auto got = fusion::fuse(label, h, mode);
        require(got == expected,
                std::string("fuse(") + dataset::expression_name(label) + ", " +
                    (h ? "hand" : "no-hand") + ", " + fusion::mode_name(mode) + ") returned " +
                    dataset::expression_name(got) + ", expected " +
                    dataset::expression_name(expected));
        ++cases;
      }
    }
  }
  require(fusion::fuse(ExpressionLabel::Happiness, true, FusionMode::HandOverrideExceptHappiness) ==
              ExpressionLabel::Happiness,
          "post-pruning must keep Happiness");
  require(fusion::fuse(ExpressionLabel::Happiness, true, FusionMode::HandOverride) ==
              ExpressionLabel::Fear,
          "plain override must replace Happiness");
  return std::to_string(cases) + "/36 cases match";
}

// ---------------------------------------------------------------------------
// C2: backprop vs central finite differences (f64) on a 5-block toy config.
// ---------------------------------------------------------------------------

std::string c2_gradient_oracle() {
  learner::ModelConfig cfg;
  cfg.input_width = cfg.input_height = 8;
  cfg.channels = {3, 3, 3, 3, 3};
  cfg.head_classes = 6;
  cfg.rng_seed = 2024;
  auto params = learner::init_model(cfg);

  // Zero-init biases park every dead unit exactly on the rectifier kink,
  // where the one-sided derivative and a central difference legitimately
  // disagree; the identity is checked at a generic point instead.
  Rng bias_rng(2025);
  for (auto& t : params.tensors) {
    if (t.name.find("bias") != std::string::npos) {
      for (double& v : t.data) v = bias_rng.uniform() * 0.1 - 0.05;
    }
  }

  Rng rng(5);
  const int n = 4;
  learner::BatchInput batch{n, 8, 8, {}};
  batch.data.resize(static_cast<std::size_t>(n) * 64);
  for (double& v : batch.data) v = rng.uniform();
  std::vector<int> targets;
  for (int i = 0; i < n; ++i) targets.push_back(static_cast<int>(rng.below(6)));

  learner::ForwardCache cache;
  const auto logits = learner::forward(params, batch, &cache);
  const auto lg = learner::softmax_cross_entropy(logits, targets, 6);
  const auto grads = learner::backward(params, cache, lg.dlogits);

  auto loss_at = [&]() {
    const auto l = learner::forward(params, batch);
    return learner::softmax_cross_entropy(l, targets, 6).loss;
  };

  const double h = 1e-4;
  double worst_rel = 0.0;
  std::size_t checked = 0;
  for (std::size_t t = 0; t < params.tensors.size(); ++t) {
    for (std::size_t j = 0; j < params.tensors[t].data.size(); ++j) {
      const double saved = params.tensors[t].data[j];
      params.tensors[t].data[j] = saved + h;
      const double up = loss_at();
      params.tensors[t].data[j] = saved - h;
      const double down = loss_at();
      params.tensors[t].data[j] = saved;

      const double fd = (up - down) / (2.0 * h);
      const double got = grads.tensors[t][j];
      const double abs_err = std::abs(got - fd);
      const double rel = abs_err / std::max(std::abs(fd), 1e-12);
      if (abs_err > 1e-6) {  // relative criterion, absolute floor for ~zero grads
        require(rel <= 1e-3, "gradient mismatch in " + params.tensors[t].name + "[" +
                                 std::to_string(j) + "]: backprop " + std::to_string(got) +
                                 " vs finite difference " + std::to_string(fd));
        worst_rel = std::max(worst_rel, rel);
      }
      ++checked;
    }
  }
  std::ostringstream detail;
  detail << checked << " parameters checked, worst relative error " << worst_rel;
  return detail.str();
}

// ---------------------------------------------------------------------------
// C3: macro_f1 against a brute-force recount.
// ---------------------------------------------------------------------------

double brute_force_macro_f1(const std::vector<int>& preds, const std::vector<int>& truths, int k) {
  double sum = 0.0;
  for (int c = 0; c < k; ++c) {
    long tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      if (preds[i] == c && truths[i] == c) ++tp;
      if (preds[i] == c && truths[i] != c) ++fp;
      if (preds[i] != c && truths[i] == c) ++fn;
    }
    const long denom = 2 * tp + fp + fn;
    sum += denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
  }
  return sum / k;
}

std::string c3_metric_oracle() {
  // the worked example first
  const auto worked = eval::macro_f1(eval::confusion({0, 1, 1}, {0, 0, 1}, 6));
  require(std::abs(worked.macro - 2.0 / 9.0) < 1e-12, "worked example macro != 2/9");
  require(std::abs(worked.macro - 0.222222) < 1e-6, "worked example macro != 0.222222");

  Rng rng(303);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(50));
    std::vector<int> preds(n), truths(n);
    for (int i = 0; i < n; ++i) {
      preds[i] = static_cast<int>(rng.below(6));
      truths[i] = static_cast<int>(rng.below(6));
    }
    const double lib = eval::macro_f1(eval::confusion(preds, truths, 6)).macro;
    const double oracle = brute_force_macro_f1(preds, truths, 6);
    worst = std::max(worst, std::abs(lib - oracle));
    require(std::abs(lib - oracle) <= 1e-12,
            "macro F1 deviates from the recount at trial " + std::to_string(trial));
  }
  std::ostringstream detail;
  detail << "1000 instances, worst deviation " << worst;
  return detail.str();
}

// ---------------------------------------------------------------------------
// C4: weighted sampler balances the reported corpus counts.
// ---------------------------------------------------------------------------

std::string c4_sampler_balance() {
  const std::int64_t corpus_counts[6] = {18286, 15150, 10923, 73285, 144631, 14976};
  std::vector<ManifestEntry> entries;
  entries.reserve(277251);
  for (int c = 0; c < 6; ++c) {
    for (std::int64_t i = 0; i < corpus_counts[c]; ++i) {
      entries.push_back({"img.pgm", static_cast<ExpressionLabel>(c), HandFlag::Unlabeled});
    }
  }
  const auto counts = dataset::class_counts(entries);
  require(counts.total() == 277251, "corpus total != 277251");

  const auto weights = dataset::sampling_weights(counts);
  const auto draws = dataset::weighted_sample(entries, weights, 424242, 100000);
  std::array<std::int64_t, 6> hits{};
  for (auto idx : draws) ++hits[static_cast<int>(entries[idx].expression)];

  std::ostringstream detail;
  detail << "frequencies";
  for (int c = 0; c < 6; ++c) {
    const double freq = static_cast<double>(hits[c]) / 100000.0;
    detail << " " << freq;
    require(std::abs(freq - 1.0 / 6.0) <= 0.01,
            std::string("class ") + dataset::expression_name(static_cast<ExpressionLabel>(c)) +
                " frequency " + std::to_string(freq) + " outside 1/6 +- 0.01");
  }
  return detail.str();
}

// ---------------------------------------------------------------------------
// C5: directional reproduction of the ablation ordering on a corpus built so
// the hand module must help and post-pruning must help more.
// ---------------------------------------------------------------------------

std::string c5_ablation_ordering() {
  // 600 samples, 100 per class. Every fear sample carries a hand and the
  // expression model mistakes it for sadness/surprise; 30% of happiness
  // samples carry hands; everything else is predicted correctly, hand-free.
  std::vector<ManifestEntry> entries;
  std::map<std::string, ExpressionLabel> expr_prediction;
  std::map<std::string, bool> hand_truth;
  int serial = 0;
  for (int c = 0; c < 6; ++c) {
    for (int i = 0; i < 100; ++i) {
      const std::string path = "s" + std::to_string(serial++);
      const auto label = static_cast<ExpressionLabel>(c);
      bool hand = false;
      ExpressionLabel predicted = label;
      if (label == ExpressionLabel::Fear) {
        hand = true;
        predicted = (i % 2 == 0) ? ExpressionLabel::Sadness : ExpressionLabel::Surprise;
      } else if (label == ExpressionLabel::Happiness && i < 30) {
        hand = true;
      }
      entries.push_back({path, label, hand ? HandFlag::Present : HandFlag::Absent});
      expr_prediction[path] = predicted;
      hand_truth[path] = hand;
    }
  }

  const eval::ExpressionPredictor expr_model = [&](const ManifestEntry& e) {
    return expr_prediction.at(e.path);
  };
  const eval::HandPredictor hand_model = [&](const ManifestEntry& e) {
    return hand_truth.at(e.path);  // perfect detector
  };

  const std::vector<FusionMode> modes(fusion::kAllModes, fusion::kAllModes + 3);
  const auto rows = eval::ablation_report(entries, expr_model, hand_model, modes);
  require(rows.size() == 3, "expected three ablation rows");

  std::map<FusionMode, double> macro;
  for (const auto& row : rows) macro[row.mode] = row.report.macro;

  // verify every row against the brute-force oracle
  std::vector<int> truths;
  for (const auto& e : entries) truths.push_back(static_cast<int>(e.expression));
  for (FusionMode mode : modes) {
    std::vector<int> fused;
    for (const auto& e : entries) {
      fused.push_back(static_cast<int>(fusion::fuse(expr_prediction.at(e.path),
                                                    hand_truth.at(e.path), mode)));
    }
    const double oracle = brute_force_macro_f1(fused, truths, 6);
    require(std::abs(macro.at(mode) - oracle) <= 1e-12,
            std::string("report row for ") + fusion::mode_name(mode) + " deviates from the oracle");
  }

  const double expr_only = macro.at(FusionMode::ExpressionOnly);
  const double override_all = macro.at(FusionMode::HandOverride);
  const double post_pruning = macro.at(FusionMode::HandOverrideExceptHappiness);
  require(post_pruning > override_all && override_all > expr_only,
          "ablation ordering violated");
  require(post_pruning - override_all >= 0.02, "post-pruning gap below 2 F1 points");
  require(override_all - expr_only >= 0.02, "hand-override gap below 2 F1 points");

  std::ostringstream detail;
  detail << "macro F1: expression-only " << expr_only << ", hand-override " << override_all
         << ", post-pruning " << post_pruning;
  return detail.str();
}

// ---------------------------------------------------------------------------
// C6: end-to-end trainability through the CLI.
// ---------------------------------------------------------------------------

double best_val_f1_from_history(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  double best = -1.0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("epoch", 0) == 0) continue;
    const auto last_comma = line.rfind(',');
    best = std::max(best, std::stod(line.substr(last_comma + 1)));
  }
  return best;
}

std::string c6_end_to_end_training() {
  testutil::TempDir dir("acceptance-c6");

  // expression: 600 training images, separate validation manifest
  const std::string train_manifest =
      testutil::generate_expression_corpus(dir.path() / "expr-train", 100, 16, 61);
  const std::string val_manifest =
      testutil::generate_expression_corpus(dir.path() / "expr-val", 25, 16, 62);

  const auto expr_run = testutil::run_cli(
      "train-expr --train-manifest " + train_manifest + " --val-manifest " + val_manifest +
      " --out " + dir.str("expr-run") +
      " --epochs 20 --lr 1e-3 --batch-size 8 --channels 8,16 --input-size 16 --seed 6");
  require(expr_run.exit_code == 0, "train-expr failed: " + expr_run.err);
  const double expr_best = best_val_f1_from_history(testutil::read_file(dir.str("expr-run/expr-history.csv")));
  require(expr_best >= 0.95,
          "expression validation macro-F1 " + std::to_string(expr_best) + " below 0.95");

  // hand: edge-separable corpus
  const std::string hand_train =
      testutil::generate_hand_corpus(dir.path() / "hand-train", 100, 16, 63);
  const std::string hand_val = testutil::generate_hand_corpus(dir.path() / "hand-val", 30, 16, 64);

  const auto hand_run = testutil::run_cli(
      "train-hand --train-manifest " + hand_train + " --val-manifest " + hand_val + " --out " +
      dir.str("hand-run") +
      " --epochs 20 --lr 1e-3 --batch-size 8 --channels 8,16 --input-size 16 --seed 7");
  require(hand_run.exit_code == 0, "train-hand failed: " + hand_run.err);

  const auto hand_params = learner::load_checkpoint(dir.str("hand-run/hand.ckpt"));
  const auto val_entries = dataset::load_manifest(hand_val);
  int correct = 0;
  for (const auto& e : val_entries) {
    const auto raw = imaging::load_pgm_file((dir.path() / "hand-val" / e.path).string());
    const auto pred = learner::predict_hand(hand_params,
                                            learner::prepare_hand_input(raw, hand_params.config));
    correct += pred.hand == (e.hand == HandFlag::Present);
  }
  const double accuracy = static_cast<double>(correct) / val_entries.size();
  require(accuracy >= 0.95, "hand validation accuracy " + std::to_string(accuracy) + " below 0.95");

  std::ostringstream detail;
  detail << "expression best val macro-F1 " << expr_best << ", hand val accuracy " << accuracy;
  return detail.str();
}

// ---------------------------------------------------------------------------
// C7: freeze protocol on a 10-block two-phase run.
// ---------------------------------------------------------------------------

std::string c7_freeze_protocol() {
  // In-memory 2-class corpus; what matters is that phase 2 moves unfrozen
  // tensors while blocks 0..7 stay bit-identical.
  auto images = std::make_shared<std::map<std::string, imaging::Image>>();
  auto make_set = [&](const std::string& tag, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<ManifestEntry> entries;
    for (int cls = 0; cls < 2; ++cls) {
      for (int i = 0; i < 24; ++i) {
        const std::string path = tag + std::to_string(cls) + "_" + std::to_string(i);
        imaging::Image img(16, 16);
        const double base = cls == 0 ? 60.0 : 190.0;
        for (double& s : img.samples) {
          s = std::max(0.0, std::min(255.0, base + rng.uniform() * 40.0 - 20.0));
        }
        (*images)[path] = img;
        entries.push_back({path, static_cast<ExpressionLabel>(cls), HandFlag::Unlabeled});
      }
    }
    return entries;
  };
  const auto pretrain = make_set("p", 71);
  const auto finetune = make_set("f", 72);
  const learner::ImageLoader loader = [images](const ManifestEntry& e) {
    return images->at(e.path);
  };

  learner::ModelConfig mcfg;
  mcfg.input_width = mcfg.input_height = 16;
  // Wide enough that the deep 1x1 blocks keep live rectifier units; a width
  // of 2 can go fully dead, which would stall the bias tensors this check
  // wants to see move.
  mcfg.channels.assign(10, 4);
  mcfg.head_classes = 6;
  mcfg.rng_seed = 73;
  learner::TrainConfig tcfg;
  tcfg.learning_rate = 1e-3;
  tcfg.epochs = 2;
  tcfg.batch_size = 16;
  tcfg.freeze_fraction = 0.8;
  tcfg.seed = 74;

  const auto result = learner::train(mcfg, tcfg, learner::TrainTask::Expression, finetune,
                                     finetune, pretrain, loader);
  require(result.pretrain_params.has_value(), "two-phase run must keep phase-1 parameters");

  int frozen_same = 0, unfrozen_changed = 0;
  for (std::size_t i = 0; i < result.params.tensors.size(); ++i) {
    const auto& t = result.params.tensors[i];
    const auto& p1 = result.pretrain_params->tensors[i];
    const bool identical = t.data.size() == p1.data.size() &&
                           std::memcmp(t.data.data(), p1.data.data(),
                                       t.data.size() * sizeof(double)) == 0;
    if (t.block_index >= 0 && t.block_index < 8) {
      require(t.frozen, t.name + " should be frozen");
      require(identical, t.name + " changed despite being frozen");
      ++frozen_same;
    } else {
      require(!t.frozen, t.name + " should not be frozen");
      require(!identical, t.name + " did not move in phase 2");
      ++unfrozen_changed;
    }
  }
  std::ostringstream detail;
  detail << frozen_same << " frozen tensors bit-identical, " << unfrozen_changed
         << " trainable tensors updated";
  return detail.str();
}

// ---------------------------------------------------------------------------
// C8: Sobel fixtures and properties.
// ---------------------------------------------------------------------------

std::string c8_sobel_fixtures() {
  imaging::Image constant(7, 7);
  for (double& s : constant.samples) s = 42.0;
  for (double m : imaging::sobel_edges(constant).magnitudes) {
    require(m == 0.0, "constant image produced a nonzero edge response");
  }

  imaging::Image step(4, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) step.at(x, y) = x < 2 ? 0.0 : 255.0;
  const auto edges = imaging::sobel_edges(step);
  for (int y = 0; y < 4; ++y) {
    require(std::abs(edges.at(1, y) - 1020.0) < 1e-9, "step edge magnitude != 1020");
    require(std::abs(edges.at(2, y) - 1020.0) < 1e-9, "step edge magnitude != 1020");
    require(std::abs(edges.at(0, y)) < 1e-9, "replicated border must be flat");
    require(std::abs(edges.at(3, y)) < 1e-9, "replicated border must be flat");
  }

  Rng rng(88);
  for (int trial = 0; trial < 100; ++trial) {
    const int w = 2 + static_cast<int>(rng.below(14));
    const int h = 2 + static_cast<int>(rng.below(14));
    imaging::Image img(w, h);
    for (double& s : img.samples) s = std::floor(rng.uniform() * 256.0);

    const auto once = imaging::sobel_edges(img);
    const auto twice = imaging::sobel_edges(img);
    require(once.magnitudes == twice.magnitudes, "sobel_edges is not deterministic");

    kernels::set_backend(kernels::Backend::Serial);
    const auto serial = imaging::sobel_edges(img);
    kernels::set_backend(kernels::Backend::Parallel);
    require(serial.magnitudes == once.magnitudes, "serial and parallel Sobel disagree");

    imaging::Image shifted = img;
    const double c = rng.uniform() * 60.0 - 30.0;
    for (double& s : shifted.samples) s += c;
    const auto moved = imaging::sobel_edges(shifted);
    for (std::size_t i = 0; i < once.magnitudes.size(); ++i) {
      require(std::abs(once.magnitudes[i] - moved.magnitudes[i]) < 1e-9,
              "sobel response changed under a constant shift");
    }
  }
  return "fixtures, determinism, backend equality and shift invariance on 100 images";
}

}  // namespace

int main() {
  struct Criterion {
    const char* id;
    const char* title;
    std::function<std::string()> run;
  };
  const std::vector<Criterion> criteria = {
      {"C1", "fusion truth table", c1_fusion_truth_table},
      {"C2", "gradient oracle", c2_gradient_oracle},
      {"C3", "metric oracle", c3_metric_oracle},
      {"C4", "sampler balance", c4_sampler_balance},
      {"C5", "ablation ordering", c5_ablation_ordering},
      {"C6", "end-to-end trainability", c6_end_to_end_training},
      {"C7", "freeze protocol", c7_freeze_protocol},
      {"C8", "sobel fixtures", c8_sobel_fixtures},
  };

  int failures = 0;
  for (const auto& criterion : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    std::string detail;
    bool passed = false;
    try {
      detail = criterion.run();
      passed = true;
    } catch (const std::exception& e) {
      detail = e.what();
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s %-24s %s (%.2fs) %s\n", criterion.id, criterion.title,
                passed ? "PASS" : "FAIL", seconds, detail.c_str());
    std::fflush(stdout);
    failures += !passed;
  }

  std::printf("%zu/%zu criteria passed\n", criteria.size() - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
