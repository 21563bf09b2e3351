// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <json.hpp>

#include "data/corpus.hpp"

namespace phonebench {

// Generator for a frame-labelled corpus with an optional planted long-range
// dependency. Ordinary frames carry a class template; a cue segment carries a
// key, and frames of a later marker run are labelled (class + key) mod 37, so
// their label needs both the local template and the cue placed
// cue_distance frames earlier.
struct SynthSpec {
  std::size_t n_utts = 64;
  std::size_t t_min = 160;
  std::size_t t_max = 224;
  std::size_t n_classes = 37;
  double long_range_fraction = 0.0;  // share of frames in marker runs
  std::size_t cue_distance = 48;     // frames from cue end to marker start
  std::size_t cue_length = 8;
  std::size_t n_keys = 2;
  double noise = 0.0;  // std of additive Gaussian noise
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static SynthSpec from_json(const nlohmann::json& j);
};

// Per-frame generative identity: template class plus overlay kind.
enum class FrameKind : std::uint8_t { Plain = 0, Cue = 1, Marker = 2 };

struct SynthFrame {
  int template_class;
  FrameKind kind;
  friend bool operator==(const SynthFrame&, const SynthFrame&) = default;
};

struct SynthCorpus {
  FrameCorpus corpus;
  std::vector<std::vector<SynthFrame>> frames;  // noise-free identity per frame
};

SynthCorpus synth_corpus_detailed(const SynthSpec& spec);
FrameCorpus synth_corpus(const SynthSpec& spec);

// Fixed spectral template of a class (independent of the corpus seed).
const std::vector<double>& class_template(int c);

// Accuracy of a majority-vote classifier over noise-free frame identities
// within +-radius, fitted on even utterances and scored on odd ones.
double windowed_bayes_accuracy(const SynthCorpus& sc, std::size_t radius);

}  // namespace phonebench
