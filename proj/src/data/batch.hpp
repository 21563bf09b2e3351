// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "data/corpus.hpp"

namespace phonebench {

// Utterances zero-padded to a common input length. Labels are already at the
// encoder rate and padded with 0; `valid` counts real input frames.
struct Batch {
  std::vector<Tensor> features;             // each [n_mels x padded_frames]
  std::vector<std::vector<int>> labels;     // each padded_out_frames long
  std::vector<std::size_t> valid;           // input frames per utterance
  std::vector<std::size_t> valid_out;       // encoder frames per utterance
  std::size_t padded_frames = 0;
  std::size_t padded_out_frames = 0;

  std::size_t size() const { return features.size(); }
  // 1 on real input frames, 0 on padding.
  std::vector<unsigned char> mask(std::size_t i) const;
};

Batch batch_pad(const FrameCorpus& corpus, std::span<const std::size_t> indices);

// Consecutive batches over the corpus in order; the last one may be short.
std::vector<Batch> make_batches(const FrameCorpus& corpus, std::size_t batch_size);

}  // namespace phonebench
