// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "layers/attention.hpp"
#include "layers/contextnet.hpp"
#include "layers/recurrent.hpp"
#include "layers/subsample.hpp"
#include "models/config.hpp"

namespace phonebench {

// Subsampling frontend -> encoder stack -> per-frame linear classifier.
class Model {
 public:
  // Parameters are drawn from Rng(seed) in build order.
  Model(const ArchConfig& cfg, std::uint64_t seed);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ArchConfig& config() const { return cfg_; }

  // fbank[n_mels x T] -> logits[T' x n_classes]. ctx.valid counts input
  // frames; the encoder sees the subsampled count.
  Tensor forward(const Tensor& fbank, const ForwardContext& ctx = {}) const;
  // Frontend output [T' x d] (positions added for attention models).
  Tensor frontend(const Tensor& fbank, const ForwardContext& ctx = {}) const;
  // Encoder stack on [T' x d] with ctx.valid at the encoder rate.
  Tensor encode(const Tensor& x, const ForwardContext& ctx = {}) const;

  std::span<const NamedParameter> parameters() const { return collector_.parameters; }
  std::span<const NamedBuffer> buffers() const { return collector_.buffers; }
  std::size_t parameter_count() const;

  // Fold one batch worth of BatchNorm statistics into running averages.
  void commit_batch_norm(const std::vector<BatchNormRecord>& records);

  void save(const std::filesystem::path& path) const;
  static std::unique_ptr<Model> load(const std::filesystem::path& path);

 private:
  ArchConfig cfg_;
  std::unique_ptr<SubsampleFrontend> frontend_;
  std::vector<std::unique_ptr<ContextNetBlock>> contextnet_;
  std::vector<std::unique_ptr<BiLSTMLayer>> lstm_;
  std::vector<std::unique_ptr<TransformerLayer>> transformer_;
  std::vector<std::unique_ptr<ConformerLayer>> conformer_;
  Linear classifier_;
  ParamCollector collector_;
};

std::unique_ptr<Model> build_model(const ArchConfig& cfg, std::uint64_t seed);

// Per-frame argmax; ties go to the lowest class index.
std::vector<int> predict(const Tensor& logits);

}  // namespace phonebench
