// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "tensor/tensor.hpp"

namespace phonebench {

// Frame-level labelled utterance at the 10 ms input rate.
struct Utterance {
  std::string id;
  Tensor features;          // [n_mels x T]
  std::vector<int> labels;  // T entries in [0, 37)

  std::size_t frames() const { return labels.size(); }
};

using FrameCorpus = std::vector<Utterance>;

// Checks label range and feature/label agreement; errors name the utterance.
void validate_utterance(const Utterance& u, std::size_t n_classes = 37);

// PBFK: "PBFK", u32 version, u32 n_mels, u32 T, f32 data mel-major.
void write_features(const std::filesystem::path& path, const Tensor& features);
Tensor read_features(const std::filesystem::path& path);
// PBLB: "PBLB", u32 version, u32 T, u8 labels.
void write_labels(const std::filesystem::path& path, const std::vector<int>& labels);
std::vector<int> read_labels(const std::filesystem::path& path);

// Manifest lines are "<id>\t<feature_file>\t<label_file>"; relative paths
// resolve against the manifest's directory.
FrameCorpus load_corpus(const std::filesystem::path& manifest);
// Writes <dir>/<id>.pbfk, <dir>/<id>.pblb and <dir>/manifest.tsv.
std::filesystem::path save_corpus(const std::filesystem::path& dir, const FrameCorpus& corpus);

// 10 ms labels to the 40 ms encoder rate by picking frame 4t'.
std::vector<int> subsample_labels(const std::vector<int>& labels, std::size_t out_frames);

// Ordered class names; index 0 is silence.
class ClassMap {
 public:
  static ClassMap placeholder();
  static ClassMap load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  explicit ClassMap(std::vector<std::string> names);
  const std::vector<std::string>& names() const { return names_; }
  std::size_t size() const { return names_.size(); }
  const std::string& name(std::size_t i) const { return names_.at(i); }

 private:
  std::vector<std::string> names_;
};

}  // namespace phonebench
