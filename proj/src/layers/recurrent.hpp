// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "layers/module.hpp"

namespace phonebench {

struct LstmDirection {
  Linear input;      // d_in -> 4h, gate blocks i, f, g, o, with bias
  Tensor recurrent;  // [h x 4h]
};

// Bidirectional LSTM, time-major [T x d_in] -> [T x d]; each direction has
// d/2 hidden units and the two outputs are concatenated.
class BiLSTMLayer {
 public:
  BiLSTMLayer(std::size_t d_in, std::size_t d, Rng& rng);

  Tensor forward(const Tensor& x, const ForwardContext& ctx) const;
  Tensor forward_direction(const Tensor& x, const ForwardContext& ctx, bool reverse) const;
  void collect(const std::string& prefix, ParamCollector& out);

  std::size_t hidden;
  LstmDirection fwd, bwd;
};

}  // namespace phonebench
