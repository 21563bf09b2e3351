// SPDX-License-Identifier: Apache-2.0
#include "layers/recurrent.hpp"

#include "core/error.hpp"

namespace phonebench {

BiLSTMLayer::BiLSTMLayer(std::size_t d_in, std::size_t d, Rng& rng) : hidden(d / 2) {
  if (d < 2 || d % 2 != 0) fail(ErrorCode::Config, "LSTM width must be even, got " + std::to_string(d));
  for (LstmDirection* dir : {&fwd, &bwd}) {
    dir->input = Linear(d_in, 4 * hidden, true, rng);
    dir->recurrent = init_uniform({hidden, 4 * hidden}, hidden, rng);
  }
}

Tensor BiLSTMLayer::forward_direction(const Tensor& x, const ForwardContext& ctx, bool reverse) const {
  const LstmDirection& dir = reverse ? bwd : fwd;
  return ops::lstm_scan(dir.input.forward(x), dir.recurrent, ctx.valid_frames(x.dim(0)), reverse);
}

Tensor BiLSTMLayer::forward(const Tensor& x, const ForwardContext& ctx) const {
  return ops::concat(forward_direction(x, ctx, false), forward_direction(x, ctx, true), 1);
}

void BiLSTMLayer::collect(const std::string& prefix, ParamCollector& out) {
  fwd.input.collect(prefix + ".fwd.input", out);
  out.add(prefix + ".fwd.recurrent", fwd.recurrent);
  bwd.input.collect(prefix + ".bwd.input", out);
  out.add(prefix + ".bwd.recurrent", bwd.recurrent);
}

}  // namespace phonebench
