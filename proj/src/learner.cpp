#include "fer/learner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "fer/evaluation.hpp"
#include "fer/kernels.hpp"
#include "fer/rng.hpp"

namespace fer::learner {

namespace {

void validate_config(const ModelConfig& config) {
  if (config.input_width < 1 || config.input_height < 1) {
    throw std::runtime_error("model config: input dimensions must be positive");
  }
  if (config.channels.empty()) throw std::runtime_error("model config: at least one block required");
  for (int c : config.channels) {
    if (c < 1) throw std::runtime_error("model config: zero-sized layer");
  }
  if (config.head_classes != 2 && config.head_classes != 6) {
    throw std::runtime_error("model config: head_classes must be 2 or 6");
  }
}

std::size_t tensor_elements(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

// Tensor layout: tensors[2b] = block kernel, tensors[2b+1] = block bias,
// then head.weight, head.bias.
const Tensor& kernel_of(const ModelParameters& p, int block) { return p.tensors[2 * block]; }
const Tensor& bias_of(const ModelParameters& p, int block) { return p.tensors[2 * block + 1]; }
const Tensor& head_weight(const ModelParameters& p) { return p.tensors[p.tensors.size() - 2]; }
const Tensor& head_bias(const ModelParameters& p) { return p.tensors[p.tensors.size() - 1]; }

int argmax_tie_low(const double* row, int k) {
  int best = 0;
  for (int i = 1; i < k; ++i) {
    if (row[i] > row[best]) best = i;
  }
  return best;
}

std::vector<double> softmax_row(const double* logits, int k) {
  double mx = logits[0];
  for (int i = 1; i < k; ++i) mx = std::max(mx, logits[i]);
  std::vector<double> p(k);
  double sum = 0.0;
  for (int i = 0; i < k; ++i) {
    p[i] = std::exp(logits[i] - mx);
    sum += p[i];
  }
  for (int i = 0; i < k; ++i) p[i] /= sum;
  return p;
}

}  // namespace

const Tensor& ModelParameters::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t;
  }
  throw std::runtime_error("no tensor named " + name);
}

ModelParameters init_model(const ModelConfig& config) {
  validate_config(config);
  ModelParameters params;
  params.config = config;
  Rng rng(config.rng_seed);

  int in_ch = 1;
  for (int b = 0; b < config.block_count(); ++b) {
    const int out_ch = config.channels[b];
    Tensor kernel;
    kernel.name = "block" + std::to_string(b) + ".kernel";
    kernel.shape = {out_ch, in_ch, 3, 3};
    kernel.block_index = b;
    kernel.data.resize(tensor_elements(kernel.shape));
    const double stddev = std::sqrt(2.0 / (in_ch * 9));
    for (double& v : kernel.data) v = rng.normal() * stddev;
    params.tensors.push_back(std::move(kernel));

    Tensor bias;
    bias.name = "block" + std::to_string(b) + ".bias";
    bias.shape = {out_ch};
    bias.block_index = b;
    bias.data.assign(static_cast<std::size_t>(out_ch), 0.0);
    params.tensors.push_back(std::move(bias));
    in_ch = out_ch;
  }

  const int d = config.feature_dim();
  Tensor weight;
  weight.name = "head.weight";
  weight.shape = {d, config.head_classes};
  weight.data.resize(tensor_elements(weight.shape));
  const double stddev = std::sqrt(1.0 / d);
  for (double& v : weight.data) v = rng.normal() * stddev;
  params.tensors.push_back(std::move(weight));

  Tensor bias;
  bias.name = "head.bias";
  bias.shape = {config.head_classes};
  bias.data.assign(static_cast<std::size_t>(config.head_classes), 0.0);
  params.tensors.push_back(std::move(bias));
  return params;
}

std::vector<double> forward(const ModelParameters& params, const BatchInput& batch,
                            ForwardCache* cache) {
  const ModelConfig& cfg = params.config;
  if (batch.n < 1) throw std::runtime_error("forward: empty batch");
  if (batch.width != cfg.input_width || batch.height != cfg.input_height) {
    throw std::runtime_error("forward: batch is " + std::to_string(batch.width) + "x" +
                             std::to_string(batch.height) + ", model expects " +
                             std::to_string(cfg.input_width) + "x" + std::to_string(cfg.input_height));
  }
  if (batch.data.size() != static_cast<std::size_t>(batch.n) * batch.width * batch.height) {
    throw std::runtime_error("forward: batch data size mismatch");
  }

  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  c = ForwardCache{};
  c.input = batch;
  const int blocks = cfg.block_count();
  const int n = batch.n;
  c.conv_pre.resize(blocks);
  c.relu_out.resize(blocks);
  c.pool_out.resize(blocks);
  c.heights.resize(blocks + 1);
  c.widths.resize(blocks + 1);

  int h = cfg.input_height, w = cfg.input_width, ch = 1;
  const double* cur = c.input.data.data();
  for (int b = 0; b < blocks; ++b) {
    c.heights[b] = h;
    c.widths[b] = w;
    const int oc = cfg.channels[b];
    const std::size_t len = static_cast<std::size_t>(n) * oc * h * w;
    c.conv_pre[b].resize(len);
    kernels::conv3x3_forward(cur, n, ch, h, w, kernel_of(params, b).data.data(),
                             bias_of(params, b).data.data(), oc, c.conv_pre[b].data());
    c.relu_out[b].resize(len);
    kernels::relu_forward(c.conv_pre[b].data(), len, c.relu_out[b].data());
    const int ph = kernels::pooled_dim(h), pw = kernels::pooled_dim(w);
    c.pool_out[b].resize(static_cast<std::size_t>(n) * oc * ph * pw);
    kernels::avgpool2_forward(c.relu_out[b].data(), n, oc, h, w, c.pool_out[b].data());
    cur = c.pool_out[b].data();
    ch = oc;
    h = ph;
    w = pw;
  }
  c.heights[blocks] = h;
  c.widths[blocks] = w;

  c.features.resize(static_cast<std::size_t>(n) * ch);
  kernels::global_avgpool_forward(cur, n, ch, h, w, c.features.data());

  std::vector<double> logits(static_cast<std::size_t>(n) * cfg.head_classes);
  kernels::dense_forward(c.features.data(), n, ch, head_weight(params).data.data(),
                         head_bias(params).data.data(), cfg.head_classes, logits.data());
  c.valid = true;
  return logits;
}

LossGrad softmax_cross_entropy(const std::vector<double>& logits, const std::vector<int>& targets,
                               int classes) {
  const std::size_t n = targets.size();
  if (n == 0 || logits.size() != n * static_cast<std::size_t>(classes)) {
    throw std::runtime_error("softmax_cross_entropy: logits/targets size mismatch");
  }
  LossGrad out;
  out.dlogits.resize(logits.size());
  double total = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    if (targets[s] < 0 || targets[s] >= classes) {
      throw std::runtime_error("softmax_cross_entropy: target out of range");
    }
    const double* row = logits.data() + s * classes;
    double mx = row[0];
    for (int i = 1; i < classes; ++i) mx = std::max(mx, row[i]);
    double sum = 0.0;
    for (int i = 0; i < classes; ++i) sum += std::exp(row[i] - mx);
    const double lse = std::log(sum);
    total += lse - (row[targets[s]] - mx);
    for (int i = 0; i < classes; ++i) {
      const double p = std::exp(row[i] - mx) / sum;
      out.dlogits[s * classes + i] = (p - (i == targets[s] ? 1.0 : 0.0)) / static_cast<double>(n);
    }
  }
  out.loss = total / static_cast<double>(n);
  return out;
}

Gradients backward(const ModelParameters& params, const ForwardCache& cache,
                   const std::vector<double>& dlogits) {
  if (!cache.valid) throw std::runtime_error("backward: missing forward cache");
  const ModelConfig& cfg = params.config;
  const int n = cache.input.n;
  const int blocks = cfg.block_count();
  const int d = cfg.feature_dim();
  const int k = cfg.head_classes;
  if (dlogits.size() != static_cast<std::size_t>(n) * k) {
    throw std::runtime_error("backward: dlogits size mismatch");
  }

  Gradients grads;
  grads.tensors.resize(params.tensors.size());
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    grads.tensors[i].assign(params.tensors[i].size(), 0.0);
  }
  auto& g_head_w = grads.tensors[params.tensors.size() - 2];
  auto& g_head_b = grads.tensors[params.tensors.size() - 1];

  std::vector<double> dfeat(static_cast<std::size_t>(n) * d);
  kernels::dense_backward(cache.features.data(), dlogits.data(), n, d, k,
                          head_weight(params).data.data(), dfeat.data(), g_head_w.data(),
                          g_head_b.data());

  int h = cache.heights[blocks], w = cache.widths[blocks];
  int ch = cfg.channels[blocks - 1];
  std::vector<double> dcur(static_cast<std::size_t>(n) * ch * h * w);
  kernels::global_avgpool_backward(dfeat.data(), n, ch, h, w, dcur.data());

  for (int b = blocks - 1; b >= 0; --b) {
    const int ih = cache.heights[b], iw = cache.widths[b];
    const int oc = cfg.channels[b];
    const int ic = b > 0 ? cfg.channels[b - 1] : 1;
    const std::size_t len = static_cast<std::size_t>(n) * oc * ih * iw;

    std::vector<double> drelu(len);
    kernels::avgpool2_backward(dcur.data(), n, oc, ih, iw, drelu.data());
    std::vector<double> dconv(len);
    kernels::relu_backward(cache.conv_pre[b].data(), drelu.data(), len, dconv.data());

    const double* block_in = b > 0 ? cache.pool_out[b - 1].data() : cache.input.data.data();
    kernels::conv3x3_backward_params(block_in, dconv.data(), n, ic, oc, ih, iw,
                                     grads.tensors[2 * b].data(), grads.tensors[2 * b + 1].data());
    if (b > 0) {
      dcur.assign(static_cast<std::size_t>(n) * ic * ih * iw, 0.0);
      kernels::conv3x3_backward_input(dconv.data(), n, oc, ih, iw,
                                      kernel_of(params, b).data.data(), ic, dcur.data());
    }
  }
  return grads;
}

AdamState init_adam(const ModelParameters& params) {
  AdamState state;
  state.m.resize(params.tensors.size());
  state.v.resize(params.tensors.size());
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    state.m[i].assign(params.tensors[i].size(), 0.0);
    state.v[i].assign(params.tensors[i].size(), 0.0);
  }
  return state;
}

void adam_step(ModelParameters& params, const Gradients& grads, AdamState& state,
               const TrainConfig& cfg) {
  if (grads.tensors.size() != params.tensors.size() || state.m.size() != params.tensors.size()) {
    throw std::runtime_error("adam_step: tensor count mismatch");
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    Tensor& t = params.tensors[i];
    if (grads.tensors[i].size() != t.size() || state.m[i].size() != t.size()) {
      throw std::runtime_error("adam_step: shape mismatch in " + t.name);
    }
    if (t.frozen) continue;
    const auto& g = grads.tensors[i];
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < t.data.size(); ++j) {
      double theta = t.data[j] - cfg.learning_rate * cfg.weight_decay * t.data[j];
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      t.data[j] = theta - cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
  }
}

void freeze_prefix(ModelParameters& params, double fraction) {
  if (fraction < 0.0 || fraction > 1.0) {
    throw std::runtime_error("freeze_prefix: fraction must be in [0, 1]");
  }
  // Tiny epsilon counters binary representation error in fraction * count
  // (e.g. 0.3 * 10 evaluating just below 3).
  const int frozen_blocks =
      static_cast<int>(std::floor(fraction * params.config.block_count() + 1e-9));
  for (Tensor& t : params.tensors) {
    t.frozen = t.block_index >= 0 && t.block_index < frozen_blocks;
  }
}

Prediction predict_expression(const ModelParameters& params, const imaging::Image& img) {
  if (params.config.head_classes != 6) {
    throw std::runtime_error("predict_expression: checkpoint head has " +
                             std::to_string(params.config.head_classes) + " classes, expected 6");
  }
  BatchInput batch{1, img.height, img.width, img.samples};
  const auto logits = forward(params, batch);
  const auto probs = softmax_row(logits.data(), 6);
  Prediction out;
  out.label = static_cast<dataset::ExpressionLabel>(argmax_tie_low(logits.data(), 6));
  std::copy(probs.begin(), probs.end(), out.probabilities.begin());
  return out;
}

HandPrediction predict_hand(const ModelParameters& params, const imaging::EdgeMap& edges) {
  if (params.config.head_classes != 2) {
    throw std::runtime_error("predict_hand: checkpoint head has " +
                             std::to_string(params.config.head_classes) + " classes, expected 2");
  }
  BatchInput batch{1, edges.height, edges.width, edges.magnitudes};
  const auto logits = forward(params, batch);
  const auto probs = softmax_row(logits.data(), 2);
  return {probs[1] > 0.5, probs[1]};
}

imaging::Image prepare_expression_input(const imaging::Image& raw, const ModelConfig& config) {
  return imaging::normalize(imaging::resize_bilinear(raw, config.input_width, config.input_height));
}

imaging::EdgeMap prepare_hand_input(const imaging::Image& raw, const ModelConfig& config) {
  return imaging::normalize_edges(
      imaging::sobel_edges(imaging::resize_bilinear(raw, config.input_width, config.input_height)));
}

// ---------------------------------------------------------------------------
// Training loop.
// ---------------------------------------------------------------------------

namespace {

struct PreparedSet {
  std::vector<std::vector<double>> inputs;  // flattened, config dimensions
  std::vector<int> labels;
};

int entry_label(const dataset::ManifestEntry& e, TrainTask task) {
  if (task == TrainTask::Expression) return static_cast<int>(e.expression);
  return e.hand == dataset::HandFlag::Present ? 1 : 0;
}

PreparedSet prepare_set(const std::vector<dataset::ManifestEntry>& entries, TrainTask task,
                        const ModelConfig& cfg, const ImageLoader& load_image) {
  PreparedSet set;
  set.inputs.reserve(entries.size());
  set.labels.reserve(entries.size());
  for (const auto& e : entries) {
    const imaging::Image raw = load_image(e);
    if (task == TrainTask::Expression) {
      set.inputs.push_back(prepare_expression_input(raw, cfg).samples);
    } else {
      set.inputs.push_back(prepare_hand_input(raw, cfg).magnitudes);
    }
    set.labels.push_back(entry_label(e, task));
  }
  return set;
}

// Inverse-frequency draw weight per entry: N / (K * n_class).
std::vector<double> draw_weights(const std::vector<int>& labels, int classes) {
  std::vector<std::int64_t> counts(classes, 0);
  for (int l : labels) ++counts[l];
  const double total = static_cast<double>(labels.size());
  std::vector<double> weights(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    weights[i] = total / (classes * static_cast<double>(counts[labels[i]]));
  }
  return weights;
}

double validation_macro_f1(const ModelParameters& params, const PreparedSet& val,
                           const TrainConfig& cfg) {
  const int k = params.config.head_classes;
  std::vector<int> preds;
  preds.reserve(val.labels.size());
  const std::size_t total = val.inputs.size();
  for (std::size_t start = 0; start < total; start += cfg.batch_size) {
    const int bn = static_cast<int>(std::min<std::size_t>(cfg.batch_size, total - start));
    BatchInput batch{bn, params.config.input_height, params.config.input_width, {}};
    batch.data.reserve(static_cast<std::size_t>(bn) * val.inputs[0].size());
    for (int i = 0; i < bn; ++i) {
      batch.data.insert(batch.data.end(), val.inputs[start + i].begin(), val.inputs[start + i].end());
    }
    const auto logits = forward(params, batch);
    for (int i = 0; i < bn; ++i) preds.push_back(argmax_tie_low(logits.data() + i * k, k));
  }
  return eval::macro_f1(eval::confusion(preds, val.labels, k)).macro;
}

void run_phase(ModelParameters& params, const TrainConfig& cfg, int phase,
               const PreparedSet& train_set, const PreparedSet& val_set, int classes,
               std::vector<EpochStats>& history, ModelParameters* best_params,
               double* best_f1) {
  const std::vector<double> weights = draw_weights(train_set.labels, classes);
  AdamState state = init_adam(params);
  const std::size_t epoch_len = train_set.inputs.size();
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const std::uint64_t epoch_seed =
        Rng::derive(cfg.seed, static_cast<std::uint64_t>(phase) * 1000000 + epoch);
    const auto order = dataset::weighted_sample_indices(weights, epoch_seed, epoch_len);

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const int bn = static_cast<int>(std::min<std::size_t>(cfg.batch_size, order.size() - start));
      BatchInput batch{bn, params.config.input_height, params.config.input_width, {}};
      batch.data.reserve(static_cast<std::size_t>(bn) * train_set.inputs[0].size());
      std::vector<int> targets(bn);
      for (int i = 0; i < bn; ++i) {
        const std::size_t idx = order[start + i];
        batch.data.insert(batch.data.end(), train_set.inputs[idx].begin(), train_set.inputs[idx].end());
        targets[i] = train_set.labels[idx];
      }
      ForwardCache cache;
      const auto logits = forward(params, batch, &cache);
      const LossGrad lg = softmax_cross_entropy(logits, targets, classes);
      const Gradients grads = backward(params, cache, lg.dlogits);
      adam_step(params, grads, state, cfg);
      loss_sum += lg.loss * bn;
    }

    EpochStats stats;
    stats.phase = phase;
    stats.epoch = epoch;
    stats.mean_loss = loss_sum / static_cast<double>(epoch_len);
    stats.val_macro_f1 = validation_macro_f1(params, val_set, cfg);
    history.push_back(stats);

    if (best_params && stats.val_macro_f1 > *best_f1) {
      *best_f1 = stats.val_macro_f1;
      *best_params = params;
    }
  }
}

void require_hand_labels(const std::vector<dataset::ManifestEntry>& entries, const char* which) {
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].hand == dataset::HandFlag::Unlabeled) {
      throw std::runtime_error(std::string("hand training requires labeled hand flags; ") + which +
                               " entry " + std::to_string(i + 1) + " (" + entries[i].path +
                               ") is unlabeled");
    }
  }
}

}  // namespace

TrainResult train(const ModelConfig& mcfg, const TrainConfig& cfg, TrainTask task,
                  const std::vector<dataset::ManifestEntry>& train_entries,
                  const std::vector<dataset::ManifestEntry>& val_entries,
                  const std::vector<dataset::ManifestEntry>& pretrain_entries,
                  const ImageLoader& load_image) {
  if (train_entries.empty()) throw std::runtime_error("train: empty training manifest");
  if (val_entries.empty()) throw std::runtime_error("train: empty validation set");
  if (cfg.epochs < 1) throw std::runtime_error("train: epochs must be positive");
  if (cfg.batch_size < 1) throw std::runtime_error("train: batch_size must be positive");
  if (!(cfg.learning_rate > 0.0)) throw std::runtime_error("train: learning_rate must be positive");
  if (cfg.freeze_fraction < 0.0 || cfg.freeze_fraction > 1.0) {
    throw std::runtime_error("train: freeze_fraction must be in [0, 1]");
  }
  const int classes = task == TrainTask::Expression ? dataset::kExpressionClasses : 2;
  if (classes != mcfg.head_classes) {
    throw std::runtime_error("train: model head has " + std::to_string(mcfg.head_classes) +
                             " classes but the task needs " + std::to_string(classes));
  }
  if (task == TrainTask::Hand) {
    require_hand_labels(train_entries, "train");
    require_hand_labels(val_entries, "validation");
    require_hand_labels(pretrain_entries, "pretrain");
  }

  TrainResult result;
  result.params = init_model(mcfg);
  const PreparedSet val_set = prepare_set(val_entries, task, mcfg, load_image);

  if (!pretrain_entries.empty()) {
    const PreparedSet pre_set = prepare_set(pretrain_entries, task, mcfg, load_image);
    run_phase(result.params, cfg, 1, pre_set, val_set, classes, result.history, nullptr, nullptr);
    result.pretrain_params = result.params;
    freeze_prefix(result.params, cfg.freeze_fraction);
  }

  const PreparedSet train_set = prepare_set(train_entries, task, mcfg, load_image);
  const int main_phase = pretrain_entries.empty() ? 1 : 2;
  ModelParameters best = result.params;
  double best_f1 = -1.0;
  run_phase(result.params, cfg, main_phase, train_set, val_set, classes, result.history, &best,
            &best_f1);
  result.params = std::move(best);
  return result;
}

std::string history_csv(const std::vector<EpochStats>& history) {
  std::string out = "epoch,loss,val_macro_f1\n";
  char buf[96];
  int last_phase = history.empty() ? 1 : history.front().phase;
  for (const auto& s : history) {
    if (s.phase != last_phase) {
      out += "# phase 2\n";
      last_phase = s.phase;
    }
    std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f\n", s.epoch, s.mean_loss, s.val_macro_f1);
    out += buf;
  }
  return out;
}

}  // namespace fer::learner
