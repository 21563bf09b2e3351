// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "core/attention_range.hpp"
#include "data/augment.hpp"
#include "data/batch.hpp"
#include "harness/optim.hpp"
#include "models/model.hpp"

namespace phonebench {

struct TrainConfig {
  std::size_t iterations = 2000;
  std::size_t batch_size = 16;
  double max_lr = 0.001;
  double weight_decay = 0.001;
  double warmup_fraction = 0.05;
  double clip_norm = 5.0;  // 0 disables clipping
  bool augment = true;
  AugmentConfig augment_cfg;
  std::uint64_t seed = 0;

  static TrainConfig paper();  // 25K iterations, batch 128
  static TrainConfig desk();   // 2K iterations, batch 16

  std::size_t warmup_iters() const;
  void validate() const;
  nlohmann::json to_json() const;
  // Starts from `base`; unknown keys are rejected.
  static TrainConfig from_json(const nlohmann::json& j, const TrainConfig& base);
  static TrainConfig from_json(const nlohmann::json& j) { return from_json(j, TrainConfig{}); }
};

struct IterationRecord {
  std::size_t iteration;
  double lr;
  double loss;
  double grad_norm;
};

struct EvalResult {
  std::size_t correct = 0;
  std::size_t total = 0;
  std::array<std::size_t, 37> class_correct{};
  std::array<std::size_t, 37> class_total{};

  double accuracy() const { return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0; }
  // NaN for classes that never occur.
  double class_accuracy(std::size_t c) const;
};

struct TrainResult {
  std::vector<IterationRecord> history;
  double seconds = 0.0;  // wall clock, not part of any deterministic payload
};

// Trains in place. SpecAugment is applied to each utterance before padding;
// the batch loss is the mean of per-utterance frame-averaged losses.
TrainResult train(Model& model, const FrameCorpus& corpus, const TrainConfig& cfg);

// Loss of one padded batch without touching parameters (no augmentation).
double batch_loss(const Model& model, const Batch& batch);

// Frame accuracy at the encoder rate. Never augments.
EvalResult evaluate(const Model& model, const FrameCorpus& corpus,
                    std::optional<AttentionRange> range_override = std::nullopt);

struct TransferMatrix {
  std::vector<AttentionRange> train_ranges;
  std::vector<AttentionRange> infer_ranges;
  std::vector<std::vector<double>> accuracy;  // [train][infer]
};

TransferMatrix range_transfer_matrix(std::span<const Model* const> models, std::span<const AttentionRange> train_ranges,
                                     const FrameCorpus& corpus, std::span<const AttentionRange> infer_ranges);

}  // namespace phonebench
