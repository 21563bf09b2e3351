// SPDX-License-Identifier: Apache-2.0
#include "harness/trainer.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "core/error.hpp"
#include "core/rng.hpp"
#include "tensor/ops.hpp"

namespace phonebench {

TrainConfig TrainConfig::paper() {
  TrainConfig c;
  c.iterations = 25000;
  c.batch_size = 128;
  return c;
}

TrainConfig TrainConfig::desk() { return TrainConfig{}; }

std::size_t TrainConfig::warmup_iters() const {
  return static_cast<std::size_t>(std::llround(warmup_fraction * static_cast<double>(iterations)));
}

void TrainConfig::validate() const {
  if (batch_size == 0) fail(ErrorCode::Config, "batch_size must be positive");
  if (!(max_lr >= 0.0) || !(weight_decay >= 0.0)) fail(ErrorCode::Config, "max_lr and weight_decay must be >= 0");
  if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) fail(ErrorCode::Config, "warmup_fraction must lie in [0, 1)");
  if (!(clip_norm >= 0.0)) fail(ErrorCode::Config, "clip_norm must be >= 0");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"iterations", iterations},
          {"batch_size", batch_size},
          {"max_lr", max_lr},
          {"weight_decay", weight_decay},
          {"warmup_fraction", warmup_fraction},
          {"clip_norm", clip_norm},
          {"augment", augment},
          {"n_freq_masks", augment_cfg.n_freq_masks},
          {"freq_width_max", augment_cfg.freq_width_max},
          {"n_time_masks", augment_cfg.n_time_masks},
          {"time_width_max", augment_cfg.time_width_max},
          {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j, const TrainConfig& base) {
  if (!j.is_object()) fail(ErrorCode::Config, "train config must be a JSON object");
  TrainConfig c = base;
  for (const auto& [k, v] : j.items()) {
    try {
      if (k == "iterations") c.iterations = v.get<std::size_t>();
      else if (k == "batch_size") c.batch_size = v.get<std::size_t>();
      else if (k == "max_lr") c.max_lr = v.get<double>();
      else if (k == "weight_decay") c.weight_decay = v.get<double>();
      else if (k == "warmup_fraction") c.warmup_fraction = v.get<double>();
      else if (k == "clip_norm") c.clip_norm = v.get<double>();
      else if (k == "augment") c.augment = v.get<bool>();
      else if (k == "n_freq_masks") c.augment_cfg.n_freq_masks = v.get<std::size_t>();
      else if (k == "freq_width_max") c.augment_cfg.freq_width_max = v.get<std::size_t>();
      else if (k == "n_time_masks") c.augment_cfg.n_time_masks = v.get<std::size_t>();
      else if (k == "time_width_max") c.augment_cfg.time_width_max = v.get<std::size_t>();
      else if (k == "seed") c.seed = v.get<std::uint64_t>();
      else fail(ErrorCode::Config, "unknown train key '" + k + "'");
    } catch (const nlohmann::json::exception&) {
      fail(ErrorCode::Config, "train key '" + k + "' has the wrong type");
    }
  }
  c.validate();
  return c;
}

double EvalResult::class_accuracy(std::size_t c) const {
  if (class_total.at(c) == 0) return std::numeric_limits<double>::quiet_NaN();
  return static_cast<double>(class_correct[c]) / static_cast<double>(class_total[c]);
}

namespace {

Tensor batch_objective(const Model& model, const Batch& batch, const ForwardContext& base) {
  Tensor total;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    ForwardContext ctx = base.with_valid(batch.valid[i]);
    const Tensor logits = model.forward(batch.features[i], ctx);
    const std::span<const int> labels(batch.labels[i].data(), batch.valid_out[i]);
    Tensor loss = ops::cross_entropy_frames(logits, labels);
    total = total.defined() ? ops::add(total, loss) : loss;
  }
  return ops::scale(total, 1.0 / static_cast<double>(batch.size()));
}

}  // namespace

double batch_loss(const Model& model, const Batch& batch) {
  NoGradGuard guard;
  return batch_objective(model, batch, {}).item();
}

TrainResult train(Model& model, const FrameCorpus& corpus, const TrainConfig& cfg) {
  cfg.validate();
  if (corpus.empty()) fail(ErrorCode::InvalidArgument, "training corpus is empty");
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(cfg.seed);
  AdamWConfig opt;
  opt.weight_decay = cfg.weight_decay;
  AdamWState state;
  TrainResult result;
  result.history.reserve(cfg.iterations);

  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();

  const auto params = model.parameters();
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    FrameCorpus picked;
    picked.reserve(cfg.batch_size);
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      if (cursor == order.size()) {
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
        cursor = 0;
      }
      Utterance u = corpus[order[cursor++]];
      if (cfg.augment) u.features = spec_augment(u.features, cfg.augment_cfg, rng);
      picked.push_back(std::move(u));
    }
    std::vector<std::size_t> idx(picked.size());
    std::iota(idx.begin(), idx.end(), 0);
    const Batch batch = batch_pad(picked, idx);

    for (const auto& p : params) Tensor(p.tensor).zero_grad();
    std::vector<BatchNormRecord> records;
    ForwardContext ctx;
    ctx.training = true;
    ctx.bn_records = &records;
    Tensor loss;
    try {
      loss = batch_objective(model, batch, ctx);
      if (!std::isfinite(loss.item())) fail(ErrorCode::Numeric, "loss is not finite");
      backward(loss);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::Numeric) throw;
      fail(ErrorCode::Numeric, "training diverged at iteration " + std::to_string(it) + ": " + e.what());
    }
    const double norm = cfg.clip_norm > 0 ? clip_grad_norm(params, cfg.clip_norm) : clip_grad_norm(params, std::numeric_limits<double>::infinity());
    const double lr = learning_rate(it, cfg.iterations, cfg.warmup_iters(), cfg.max_lr);
    try {
      adamw_step(params, state, lr, opt);
    } catch (const Error& e) {
      fail(e.code(), "training diverged at iteration " + std::to_string(it) + ": " + e.what());
    }
    model.commit_batch_norm(records);
    result.history.push_back({it, lr, loss.item(), norm});
  }
  for (const auto& p : params) Tensor(p.tensor).zero_grad();
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

EvalResult evaluate(const Model& model, const FrameCorpus& corpus, std::optional<AttentionRange> range_override) {
  NoGradGuard guard;
  EvalResult r;
  ForwardContext ctx;
  ctx.range_override = range_override;
  for (const auto& u : corpus) {
    const Tensor logits = model.forward(u.features, ctx);
    const auto pred = predict(logits);
    const auto labels = subsample_labels(u.labels, pred.size());
    for (std::size_t t = 0; t < pred.size(); ++t) {
      const auto y = static_cast<std::size_t>(labels[t]);
      ++r.total;
      ++r.class_total.at(y);
      if (pred[t] == labels[t]) {
        ++r.correct;
        ++r.class_correct[y];
      }
    }
  }
  return r;
}

TransferMatrix range_transfer_matrix(std::span<const Model* const> models, std::span<const AttentionRange> train_ranges,
                                     const FrameCorpus& corpus, std::span<const AttentionRange> infer_ranges) {
  if (models.size() != train_ranges.size()) {
    fail(ErrorCode::InvalidArgument, "one model is needed per training range");
  }
  TransferMatrix m;
  m.train_ranges.assign(train_ranges.begin(), train_ranges.end());
  m.infer_ranges.assign(infer_ranges.begin(), infer_ranges.end());
  for (const Model* model : models) {
    if (!is_attention(model->config().arch)) {
      fail(ErrorCode::Config, "range transfer needs attention models, got " + std::string(arch_name(model->config().arch)));
    }
    auto& row = m.accuracy.emplace_back();
    for (const auto& r : infer_ranges) row.push_back(evaluate(*model, corpus, r).accuracy());
  }
  return m;
}

}  // namespace phonebench
