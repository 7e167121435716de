#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fer/dataset.hpp"
#include "fer/imaging.hpp"

namespace fer::learner {

// Compact plain-CNN backbone: one 3x3 conv block per `channels` entry
// (replicate pad, ReLU, clipped 2x2 average pool), a global average pool,
// then a dense head with 2 or 6 classes. Small enough to train on a CPU in
// seconds while keeping the levers that matter (depth, block-prefix
// freezing, head size).
struct ModelConfig {
  int input_width = 128;
  int input_height = 128;
  std::vector<int> channels = {8, 16, 32, 64, 64};
  int head_classes = 6;
  std::uint64_t rng_seed = 0;

  int block_count() const { return static_cast<int>(channels.size()); }
  int feature_dim() const { return channels.empty() ? 0 : channels.back(); }
};

struct Tensor {
  std::string name;
  std::vector<int> shape;
  int block_index = -1;  // -1 for head tensors; the head is never frozen
  bool frozen = false;
  std::vector<double> data;

  std::size_t size() const { return data.size(); }
};

// Flat ordered tensor collection: block-major, kernel before bias, head last.
// The order is fixed; checkpoints serialize tensors in this order.
struct ModelParameters {
  ModelConfig config;
  std::vector<Tensor> tensors;

  const Tensor& find(const std::string& name) const;
};

struct TrainConfig {
  double learning_rate = 5e-5;
  double weight_decay = 1e-4;
  int epochs = 20;
  int batch_size = 32;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double freeze_fraction = 0.8;  // applied between pretrain and fine-tune
  std::uint64_t seed = 0;        // sampler seed
};

// Per-tensor Adam moments, aligned with ModelParameters::tensors. Frozen
// tensors keep zero moments; `step` advances once per adam_step call.
struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::int64_t step = 0;
};

AdamState init_adam(const ModelParameters& params);

// Batch of single-channel inputs, (n, height, width) row-major.
struct BatchInput {
  int n = 0;
  int height = 0;
  int width = 0;
  std::vector<double> data;
};

// Activations recorded by forward() for backward(). Holding one of these
// alive keeps a full set of intermediate tensors; scope it per batch.
struct ForwardCache {
  BatchInput input;
  std::vector<std::vector<double>> conv_pre;  // per block, pre-activation
  std::vector<std::vector<double>> relu_out;  // per block
  std::vector<std::vector<double>> pool_out;  // per block
  std::vector<int> widths;                    // spatial dims entering each block
  std::vector<int> heights;
  std::vector<double> features;  // after global average pool, (n, d)
  bool valid = false;
};

// Per-tensor gradients aligned with ModelParameters::tensors. Frozen tensors
// receive gradients too; freezing is enforced by the optimizer.
struct Gradients {
  std::vector<std::vector<double>> tensors;
};

struct LossGrad {
  double loss = 0.0;
  std::vector<double> dlogits;
};

// Deterministic He-style initialization from config.rng_seed; biases zero,
// nothing frozen. Throws on non-positive channel counts or head sizes.
ModelParameters init_model(const ModelConfig& config);

// Returns logits (n, head_classes). Pass a cache to enable backward().
// Throws on input dimension mismatch.
std::vector<double> forward(const ModelParameters& params, const BatchInput& batch,
                            ForwardCache* cache = nullptr);

// Mean softmax cross-entropy over the batch with one target class per row
// (the one-hot target, given as class indices). Log-sum-exp is stabilized by
// the row max. dlogits = (softmax - onehot) / n.
LossGrad softmax_cross_entropy(const std::vector<double>& logits, const std::vector<int>& targets,
                               int classes);

// Backprop through the cached forward pass. Throws without a valid cache.
Gradients backward(const ModelParameters& params, const ForwardCache& cache,
                   const std::vector<double>& dlogits);

// One Adam step with bias correction. Decoupled weight decay shrinks the
// parameter by lr * wd before the Adam delta. Frozen tensors are untouched
// and their moments do not advance.
void adam_step(ModelParameters& params, const Gradients& grads, AdamState& state,
               const TrainConfig& cfg);

// Freezes every tensor of the first floor(fraction * block_count) blocks.
void freeze_prefix(ModelParameters& params, double fraction);

struct Prediction {
  dataset::ExpressionLabel label;
  std::array<double, 6> probabilities;
};

struct HandPrediction {
  bool hand = false;
  double probability = 0.0;  // P(hand present)
};

// Argmax of the 6-way softmax; ties break to the lowest class index. The
// image must already be normalized to [0, 1] at the config dimensions.
Prediction predict_expression(const ModelParameters& params, const imaging::Image& img);

// hand = P(hand) > 0.5 over the 2-way softmax (class 1 = hand present);
// exactly 0.5 predicts absent. The edge map must already be scaled by 1/1020.
HandPrediction predict_hand(const ModelParameters& params, const imaging::EdgeMap& edges);

// Preprocessing used by both training and prediction: resize to the config
// dimensions, then /255 for the expression net or Sobel + /1020 for the hand
// net. Input samples are 8-bit range.
imaging::Image prepare_expression_input(const imaging::Image& raw, const ModelConfig& config);
imaging::EdgeMap prepare_hand_input(const imaging::Image& raw, const ModelConfig& config);

enum class TrainTask { Expression, Hand };

struct EpochStats {
  int phase = 1;  // 1 = pretrain when a pretrain manifest is given, else main
  int epoch = 0;  // 1-based within its phase
  double mean_loss = 0.0;
  double val_macro_f1 = 0.0;
};

// Resolves a manifest entry to its raw 8-bit-range image.
using ImageLoader = std::function<imaging::Image(const dataset::ManifestEntry&)>;

struct TrainResult {
  ModelParameters params;  // best validation macro-F1, ties to earlier epoch
  std::vector<EpochStats> history;
  std::optional<ModelParameters> pretrain_params;  // phase-1 final state
};

// Trains a classifier: optional phase 1 over pretrain_entries with nothing
// frozen, then freeze_prefix(cfg.freeze_fraction), then the main phase over
// train_entries. One epoch draws manifest-length weighted samples (inverse
// expression frequency; inverse hand frequency for the hand task). Throws on
// empty manifests or, in hand mode, unlabeled hand flags.
TrainResult train(const ModelConfig& mcfg, const TrainConfig& cfg, TrainTask task,
                  const std::vector<dataset::ManifestEntry>& train_entries,
                  const std::vector<dataset::ManifestEntry>& val_entries,
                  const std::vector<dataset::ManifestEntry>& pretrain_entries,
                  const ImageLoader& load_image);

// History CSV (epoch,loss,val_macro_f1); a `# phase 2` comment line separates
// the fine-tune rows of a two-phase run.
std::string history_csv(const std::vector<EpochStats>& history);

// Checkpoint format: line 1 = version + config as comma-separated key=value;
// line 2 = tensor directory name:shape:frozen entries joined by semicolons;
// then every tensor element as little-endian 32-bit floats in directory
// order. Loading widens exactly to double.
std::vector<std::uint8_t> serialize_checkpoint(const ModelParameters& params);
ModelParameters parse_checkpoint(const std::vector<std::uint8_t>& bytes);
void save_checkpoint(const ModelParameters& params, const std::string& path);
ModelParameters load_checkpoint(const std::string& path);

}  // namespace fer::learner
