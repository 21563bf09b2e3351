// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "core/attention_range.hpp"
#include "core/rng.hpp"
#include "tensor/ops.hpp"
#include "tensor/tensor.hpp"

namespace phonebench {

class BatchNorm;

// Batch statistics produced by one training-mode BatchNorm call. Layers are
// const during forward; the trainer folds these into running averages.
struct BatchNormRecord {
  const BatchNorm* layer = nullptr;
  std::vector<double> mean;
  std::vector<double> var;  // biased
  std::size_t count = 0;
};

struct ForwardContext {
  bool training = false;
  // Valid (unpadded) frames at the rate of the tensor being processed;
  // 0 means the whole sequence is valid.
  std::size_t valid = 0;
  std::optional<AttentionRange> range_override;
  std::vector<BatchNormRecord>* bn_records = nullptr;

  std::size_t valid_frames(std::size_t len) const;
  ForwardContext with_valid(std::size_t v) const {
    ForwardContext c = *this;
    c.valid = v;
    return c;
  }
};

struct NamedParameter {
  std::string name;
  Tensor tensor;
};

struct NamedBuffer {
  std::string name;
  std::vector<double>* values;
};

// Flattened view of a module tree in build order.
struct ParamCollector {
  std::vector<NamedParameter> parameters;
  std::vector<NamedBuffer> buffers;
  std::vector<BatchNorm*> batch_norms;

  void add(const std::string& name, Tensor& t) { parameters.push_back({name, t}); }
};

// uniform(-s, s) with s = sqrt(1 / fan_in).
Tensor init_uniform(Shape shape, std::size_t fan_in, Rng& rng);

class Linear {
 public:
  Linear() = default;
  Linear(std::size_t in, std::size_t out, bool bias, Rng& rng);

  // x[T x in] -> [T x out]
  Tensor forward(const Tensor& x) const { return ops::linear(x, weight, bias); }
  void collect(const std::string& prefix, ParamCollector& out);
  std::size_t in_features() const { return weight.dim(0); }
  std::size_t out_features() const { return weight.dim(1); }

  Tensor weight;  // [in x out]
  Tensor bias;    // [out] or undefined
};

class LayerNorm {
 public:
  LayerNorm() = default;
  explicit LayerNorm(std::size_t d);

  Tensor forward(const Tensor& x) const { return ops::layer_norm(x, gamma, beta, eps); }
  void collect(const std::string& prefix, ParamCollector& out);

  Tensor gamma, beta;
  double eps = 1e-5;
};

class BatchNorm {
 public:
  BatchNorm() = default;
  explicit BatchNorm(std::size_t channels);

  // x[C x T]; batch statistics over valid frames in training, running
  // statistics otherwise.
  Tensor forward(const Tensor& x, const ForwardContext& ctx) const;
  void collect(const std::string& prefix, ParamCollector& out);
  // Exponential moving average update from the records of one batch.
  void commit(const std::vector<const BatchNormRecord*>& records);

  Tensor gamma, beta;
  std::vector<double> running_mean, running_var;
  double eps = 1e-5;
  double momentum = 0.1;
};

// d -> hidden -> d position-wise MLP with the given activation.
class FeedForward {
 public:
  enum class Activation { Relu, Swish };

  FeedForward() = default;
  FeedForward(std::size_t d, std::size_t hidden, Activation act, Rng& rng);

  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, ParamCollector& out);

  Linear up, down;
  Activation act = Activation::Relu;
};

// Sinusoidal absolute position table [T x d].
Tensor sinusoidal_positions(std::size_t len, std::size_t d);

}  // namespace phonebench
