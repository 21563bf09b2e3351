// SPDX-License-Identifier: Apache-2.0
#include "data/batch.hpp"

#include <algorithm>
#include <numeric>

#include "core/error.hpp"
#include "layers/subsample.hpp"

namespace phonebench {

std::vector<unsigned char> Batch::mask(std::size_t i) const {
  std::vector<unsigned char> m(padded_frames, 0);
  std::fill_n(m.begin(), valid.at(i), 1);
  return m;
}

Batch batch_pad(const FrameCorpus& corpus, std::span<const std::size_t> indices) {
  if (indices.empty()) fail(ErrorCode::InvalidArgument, "cannot build an empty batch");
  Batch b;
  for (std::size_t i : indices) b.padded_frames = std::max(b.padded_frames, corpus.at(i).frames());
  b.padded_out_frames = SubsampleFrontend::output_length(b.padded_frames);
  for (std::size_t i : indices) {
    const Utterance& u = corpus[i];
    const std::size_t mels = u.features.dim(0), frames = u.frames();
    std::vector<double> x(mels * b.padded_frames, 0.0);
    for (std::size_t m = 0; m < mels; ++m) {
      std::copy_n(u.features.values().begin() + m * frames, frames, x.begin() + m * b.padded_frames);
    }
    b.features.push_back(Tensor::from({mels, b.padded_frames}, std::move(x)));
    const std::size_t out = SubsampleFrontend::output_length(frames);
    auto labels = subsample_labels(u.labels, out);
    labels.resize(b.padded_out_frames, 0);
    b.labels.push_back(std::move(labels));
    b.valid.push_back(frames);
    b.valid_out.push_back(out);
  }
  return b;
}

std::vector<Batch> make_batches(const FrameCorpus& corpus, std::size_t batch_size) {
  if (batch_size == 0) fail(ErrorCode::InvalidArgument, "batch size must be positive");
  std::vector<Batch> out;
  std::vector<std::size_t> idx(corpus.size());
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t s = 0; s < idx.size(); s += batch_size) {
    const std::size_t e = std::min(idx.size(), s + batch_size);
    out.push_back(batch_pad(corpus, std::span(idx).subspan(s, e - s)));
  }
  return out;
}

}  // namespace phonebench
