// fer: train, evaluate and run the hand-assisted expression recognition
// pipeline. Subcommands: train-expr, train-hand, evaluate, predict, edges.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fer/config_file.hpp"
#include "fer/dataset.hpp"
#include "fer/evaluation.hpp"
#include "fer/fusion.hpp"
#include "fer/imaging.hpp"
#include "fer/learner.hpp"

namespace fs = std::filesystem;
using namespace fer;

namespace {

void print_usage(std::ostream& out) {
  out << "usage: fer <subcommand> [--flag value]...\n"
         "\n"
         "subcommands:\n"
         "  train-expr  --train-manifest M [--val-manifest M] [--pretrain-manifest M]\n"
         "  train-hand  --train-manifest M [--val-manifest M] [--pretrain-manifest M]\n"
         "  evaluate    --expr-checkpoint C --val-manifest M [--hand-checkpoint C] [--modes LIST]\n"
         "  predict     --expr-checkpoint C --image I [--hand-checkpoint C] [--mode NAME]\n"
         "  edges       <input.pgm> <output.pgm>\n"
         "\n"
         "shared flags: --config PATH   flat key=value file, '#' comments; flags override it\n"
         "              --seed N        sampler and init seed (default 0)\n"
         "              --out DIR       output directory (default .)\n"
         "\n"
         "training flags: --epochs N --lr X --weight-decay X --batch-size N\n"
         "                --freeze-fraction X --val-fraction X --channels 8,16,...\n"
         "                --input-size N|WxH\n"
         "fusion modes:   expression-only, hand-override, hand-override-except-happiness\n";
}

// Option lookup with CLI-over-config-over-default precedence.
class Options {
 public:
  Options(int argc, char** argv, int first) {
    for (int i = first; i < argc; ++i) {
      const std::string arg = argv[i];
      if (arg.rfind("--", 0) == 0) {
        if (i + 1 >= argc) throw std::runtime_error("flag " + arg + " needs a value");
        cli_[arg.substr(2)] = argv[++i];
      } else {
        positionals_.push_back(arg);
      }
    }
    if (auto path = find("config")) file_ = cli::load_config(*path);
  }

  std::optional<std::string> find(const std::string& key) const {
    if (auto it = cli_.find(key); it != cli_.end()) return it->second;
    if (auto it = file_.find(key); it != file_.end()) return it->second;
    return std::nullopt;
  }

  std::string get(const std::string& key, const std::string& fallback) const {
    auto v = find(key);
    return v ? *v : fallback;
  }

  std::string require(const std::string& key) const {
    auto v = find(key);
    if (!v) throw std::runtime_error("missing required flag --" + key);
    return *v;
  }

  double get_double(const std::string& key, double fallback) const {
    auto v = find(key);
    if (!v) return fallback;
    try {
      std::size_t used;
      const double parsed = std::stod(*v, &used);
      if (used != v->size()) throw std::invalid_argument("");
      return parsed;
    } catch (const std::exception&) {
      throw std::runtime_error("flag --" + key + ": `" + *v + "` is not a number");
    }
  }

  long get_long(const std::string& key, long fallback) const {
    auto v = find(key);
    if (!v) return fallback;
    try {
      std::size_t used;
      const long parsed = std::stol(*v, &used);
      if (used != v->size()) throw std::invalid_argument("");
      return parsed;
    } catch (const std::exception&) {
      throw std::runtime_error("flag --" + key + ": `" + *v + "` is not an integer");
    }
  }

  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
    auto v = find(key);
    if (!v) return fallback;
    try {
      return std::stoull(*v);
    } catch (const std::exception&) {
      throw std::runtime_error("flag --" + key + ": `" + *v + "` is not an integer");
    }
  }

  const std::vector<std::string>& positionals() const { return positionals_; }

 private:
  std::map<std::string, std::string> cli_;
  std::map<std::string, std::string> file_;
  std::vector<std::string> positionals_;
};

std::vector<int> parse_channels(const std::string& list) {
  std::vector<int> channels;
  std::string cur;
  for (char c : list + ",") {
    if (c == ',') {
      if (cur.empty()) throw std::runtime_error("--channels: empty entry in `" + list + "`");
      channels.push_back(std::stoi(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  return channels;
}

learner::ModelConfig model_config_from(const Options& opts, int head_classes) {
  learner::ModelConfig cfg;
  const std::string size = opts.get("input-size", "128");
  const std::size_t x = size.find('x');
  if (x == std::string::npos) {
    cfg.input_width = cfg.input_height = std::stoi(size);
  } else {
    cfg.input_width = std::stoi(size.substr(0, x));
    cfg.input_height = std::stoi(size.substr(x + 1));
  }
  cfg.channels = parse_channels(opts.get("channels", "8,16,32,64,64"));
  cfg.head_classes = head_classes;
  cfg.rng_seed = opts.get_u64("seed", 0);
  return cfg;
}

learner::TrainConfig train_config_from(const Options& opts) {
  learner::TrainConfig cfg;
  cfg.learning_rate = opts.get_double("lr", cfg.learning_rate);
  cfg.weight_decay = opts.get_double("weight-decay", cfg.weight_decay);
  cfg.epochs = static_cast<int>(opts.get_long("epochs", cfg.epochs));
  cfg.batch_size = static_cast<int>(opts.get_long("batch-size", cfg.batch_size));
  cfg.freeze_fraction = opts.get_double("freeze-fraction", cfg.freeze_fraction);
  cfg.seed = opts.get_u64("seed", 0);
  return cfg;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open output file: " + path);
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path);
}

int cmd_train(const Options& opts, learner::TrainTask task) {
  const std::string train_path = opts.require("train-manifest");
  auto train_entries = dataset::load_manifest(train_path);

  std::vector<dataset::ManifestEntry> val_entries;
  std::string val_path = train_path;
  if (auto vm = opts.find("val-manifest")) {
    val_path = *vm;
    val_entries = dataset::load_manifest(val_path);
  } else {
    const double fraction = opts.get_double("val-fraction", 0.2);
    auto parts = dataset::split(train_entries, fraction, opts.get_u64("seed", 0));
    train_entries = std::move(parts.train);
    val_entries = std::move(parts.val);
  }

  std::vector<dataset::ManifestEntry> pretrain_entries;
  std::string pretrain_path;
  if (auto pm = opts.find("pretrain-manifest")) {
    pretrain_path = *pm;
    pretrain_entries = dataset::load_manifest(pretrain_path);
  }

  const bool expr = task == learner::TrainTask::Expression;
  const auto mcfg = model_config_from(opts, expr ? 6 : 2);
  const auto tcfg = train_config_from(opts);

  // Each manifest resolves image paths against its own directory; train()
  // takes a single loader, so rewrite paths up front.
  auto resolve_against = [](std::vector<dataset::ManifestEntry>& entries, const std::string& manifest) {
    const fs::path base = fs::path(manifest).parent_path();
    for (auto& e : entries) e.path = (base / e.path).string();
  };
  resolve_against(train_entries, train_path);
  resolve_against(val_entries, val_path);
  if (!pretrain_path.empty()) resolve_against(pretrain_entries, pretrain_path);
  const learner::ImageLoader loader = [](const dataset::ManifestEntry& e) {
    return imaging::load_pgm_file(e.path);
  };

  const auto result = learner::train(mcfg, tcfg, task, train_entries, val_entries,
                                     pretrain_entries, loader);

  const fs::path out_dir = opts.get("out", ".");
  fs::create_directories(out_dir);
  const std::string stem = expr ? "expr" : "hand";
  const std::string ckpt = (out_dir / (stem + ".ckpt")).string();
  const std::string history = (out_dir / (stem + "-history.csv")).string();
  learner::save_checkpoint(result.params, ckpt);
  write_text(history, learner::history_csv(result.history));

  double best = 0.0;
  for (const auto& s : result.history) {
    if ((s.phase == result.history.back().phase) && s.val_macro_f1 > best) best = s.val_macro_f1;
  }
  std::printf("wrote %s (best val macro-F1 %.6f)\n", ckpt.c_str(), best);
  std::printf("wrote %s\n", history.c_str());
  return 0;
}

int cmd_evaluate(const Options& opts) {
  const auto expr_params = learner::load_checkpoint(opts.require("expr-checkpoint"));
  std::optional<learner::ModelParameters> hand_params;
  if (auto hc = opts.find("hand-checkpoint")) hand_params = learner::load_checkpoint(*hc);

  const std::string val_path = opts.require("val-manifest");
  const auto entries = dataset::load_manifest(val_path);
  const fs::path base = fs::path(val_path).parent_path();

  std::vector<fusion::FusionMode> modes;
  const std::string mode_list = opts.get(
      "modes", "expression-only,hand-override,hand-override-except-happiness");
  std::string cur;
  for (char c : mode_list + ",") {
    if (c == ',') {
      if (cur.empty()) continue;
      const auto mode = fusion::parse_mode(cur);
      if (!mode) throw std::runtime_error("unknown fusion mode `" + cur + "`");
      modes.push_back(*mode);
      cur.clear();
    } else {
      cur += c;
    }
  }

  eval::ExpressionPredictor expr_model = [&](const dataset::ManifestEntry& e) {
    const auto raw = imaging::load_pgm_file((base / e.path).string());
    return learner::predict_expression(expr_params,
                                       learner::prepare_expression_input(raw, expr_params.config))
        .label;
  };
  eval::HandPredictor hand_model;
  if (hand_params) {
    hand_model = [&](const dataset::ManifestEntry& e) {
      const auto raw = imaging::load_pgm_file((base / e.path).string());
      return learner::predict_hand(*hand_params,
                                   learner::prepare_hand_input(raw, hand_params->config))
          .hand;
    };
  }

  const auto rows = eval::ablation_report(entries, expr_model, hand_model, modes);

  const fs::path out_dir = opts.get("out", ".");
  fs::create_directories(out_dir);
  const std::string report_path = (out_dir / "report.csv").string();
  write_text(report_path, eval::report_csv(rows));
  std::fputs(eval::report_table(rows).c_str(), stdout);
  std::printf("wrote %s\n", report_path.c_str());
  return 0;
}

int cmd_predict(const Options& opts) {
  const auto expr_params = learner::load_checkpoint(opts.require("expr-checkpoint"));
  const std::string mode_name = opts.get("mode", "hand-override-except-happiness");
  const auto mode = fusion::parse_mode(mode_name);
  if (!mode) throw std::runtime_error("unknown fusion mode `" + mode_name + "`");

  const auto raw = imaging::load_pgm_file(opts.require("image"));
  const auto expr =
      learner::predict_expression(expr_params, learner::prepare_expression_input(raw, expr_params.config));

  std::printf("expression: %s\n", dataset::expression_name(expr.label));
  std::printf("expression_probs:");
  for (double p : expr.probabilities) std::printf(" %.6f", p);
  std::printf("\n");

  bool hand = false;
  if (*mode != fusion::FusionMode::ExpressionOnly) {
    const auto hand_params = learner::load_checkpoint(opts.require("hand-checkpoint"));
    const auto pred =
        learner::predict_hand(hand_params, learner::prepare_hand_input(raw, hand_params.config));
    hand = pred.hand;
    std::printf("hand: %s\n", pred.hand ? "present" : "absent");
    std::printf("hand_prob: %.6f\n", pred.probability);
  }

  std::printf("label: %s\n", dataset::expression_name(fusion::fuse(expr.label, hand, *mode)));
  return 0;
}

int cmd_edges(const Options& opts) {
  const auto& pos = opts.positionals();
  if (pos.size() != 2) throw std::runtime_error("edges expects: fer edges <input.pgm> <output.pgm>");
  const auto img = imaging::load_pgm_file(pos[0]);
  imaging::write_pgm_file(imaging::edge_export_image(imaging::sobel_edges(img)), pos[1]);
  std::printf("wrote %s\n", pos[1].c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    print_usage(std::cerr);
    return 1;
  }
  const std::string cmd = argv[1];
  if (cmd == "--help" || cmd == "-h" || cmd == "help") {
    print_usage(std::cout);
    return 0;
  }
  try {
    Options opts(argc, argv, 2);
    if (cmd == "train-expr") return cmd_train(opts, learner::TrainTask::Expression);
    if (cmd == "train-hand") return cmd_train(opts, learner::TrainTask::Hand);
    if (cmd == "evaluate") return cmd_evaluate(opts);
    if (cmd == "predict") return cmd_predict(opts);
    if (cmd == "edges") return cmd_edges(opts);
    std::cerr << "fer: unknown subcommand `" << cmd << "`\n";
    print_usage(std::cerr);
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "fer: " << e.what() << "\n";
    return 1;
  }
}
