// SPDX-License-Identifier: Apache-2.0
#include "data/synth.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>

#include "core/error.hpp"
#include "core/rng.hpp"
#include "models/config.hpp"

namespace phonebench {

namespace {

constexpr std::size_t kMels = 80;
constexpr double kOverlay = 2.0;
constexpr std::size_t kSegmentLengths[] = {8, 12, 16};

std::vector<std::vector<double>> make_templates() {
  // Fixed seed: templates are a property of the task, not of a corpus draw.
  Rng rng(0x5eed7e3a);
  std::vector<std::vector<double>> out(kNumClasses, std::vector<double>(kMels, 0.0));
  for (std::size_t c = 1; c < kNumClasses; ++c) {
    for (;;) {
      std::vector<double> t(kMels, 0.0);
      for (int bump = 0; bump < 2; ++bump) {
        const double center = rng.uniform(6.0, 73.0), amp = rng.uniform(1.0, 2.0);
        for (std::size_t m = 0; m < kMels; ++m) {
          const double z = (static_cast<double>(m) - center) / 2.0;
          t[m] += amp * std::exp(-0.5 * z * z);
        }
      }
      double closest = 1e300;
      for (std::size_t o = 0; o < c; ++o) {
        double d2 = 0.0;
        for (std::size_t m = 0; m < kMels; ++m) d2 += (t[m] - out[o][m]) * (t[m] - out[o][m]);
        closest = std::min(closest, d2);
      }
      if (closest >= 1.0) {
        out[c] = std::move(t);
        break;
      }
    }
  }
  return out;
}

void render(Tensor& x, std::size_t frames, std::size_t t, const SynthFrame& f, double noise, Rng& rng) {
  const auto& tpl = class_template(f.template_class);
  auto v = x.mutable_values();
  for (std::size_t m = 0; m < kMels; ++m) {
    double s = tpl[m];
    if (f.kind == FrameKind::Cue && m < 4) s += kOverlay;
    if (f.kind == FrameKind::Marker && m >= kMels - 4) s += kOverlay;
    if (noise > 0) s += noise * rng.normal();
    v[m * frames + t] = static_cast<float>(s);
  }
}

void fill_plain(std::vector<SynthFrame>& fr, std::vector<int>& labels, std::size_t end, Rng& rng) {
  std::size_t t = 0;
  while (t < end) {
    const std::size_t len = kSegmentLengths[rng.below(3)];
    const int c = static_cast<int>(rng.below(kNumClasses));
    for (std::size_t i = t; i < std::min(end, t + len); ++i) {
      fr[i] = {c, FrameKind::Plain};
      labels[i] = c;
    }
    t += len;
  }
}

}  // namespace

const std::vector<double>& class_template(int c) {
  static const auto templates = make_templates();
  return templates.at(static_cast<std::size_t>(c));
}

void SynthSpec::validate() const {
  if (n_classes != kNumClasses) fail(ErrorCode::Config, "synthetic corpus has exactly 37 classes");
  if (t_min < 7 || t_max < t_min) fail(ErrorCode::Config, "need 7 <= t_min <= t_max");
  if (!(long_range_fraction >= 0.0 && long_range_fraction < 1.0)) {
    fail(ErrorCode::Config, "long_range_fraction must lie in [0, 1)");
  }
  if (cue_distance >= t_min) {
    fail(ErrorCode::Config, "cue_distance " + std::to_string(cue_distance) + " must be below t_min " +
                                std::to_string(t_min));
  }
  if (long_range_fraction > 0.0) {
    if (cue_length == 0) fail(ErrorCode::Config, "cue_length must be positive");
    if (n_keys < 2 || n_keys >= kNumClasses) fail(ErrorCode::Config, "n_keys must lie in [2, 36]");
    if (cue_length + cue_distance >= t_min) fail(ErrorCode::Config, "cue plus distance leaves no room for a marker");
  }
  if (!(noise >= 0.0)) fail(ErrorCode::Config, "noise must be non-negative");
}

nlohmann::json SynthSpec::to_json() const {
  return {{"n_utts", n_utts},         {"t_min", t_min},
          {"t_max", t_max},           {"n_classes", n_classes},
          {"long_range_fraction", long_range_fraction},
          {"cue_distance", cue_distance},
          {"cue_length", cue_length}, {"n_keys", n_keys},
          {"noise", noise},           {"seed", seed}};
}

SynthSpec SynthSpec::from_json(const nlohmann::json& j) {
  if (!j.is_object()) fail(ErrorCode::Config, "synth spec must be a JSON object");
  SynthSpec s;
  for (const auto& [k, v] : j.items()) {
    try {
      if (k == "n_utts") s.n_utts = v.get<std::size_t>();
      else if (k == "t_min") s.t_min = v.get<std::size_t>();
      else if (k == "t_max") s.t_max = v.get<std::size_t>();
      else if (k == "n_classes") s.n_classes = v.get<std::size_t>();
      else if (k == "long_range_fraction") s.long_range_fraction = v.get<double>();
      else if (k == "cue_distance") s.cue_distance = v.get<std::size_t>();
      else if (k == "cue_length") s.cue_length = v.get<std::size_t>();
      else if (k == "n_keys") s.n_keys = v.get<std::size_t>();
      else if (k == "noise") s.noise = v.get<double>();
      else if (k == "seed") s.seed = v.get<std::uint64_t>();
      else fail(ErrorCode::Config, "unknown synth key '" + k + "'");
    } catch (const nlohmann::json::exception&) {
      fail(ErrorCode::Config, "synth key '" + k + "' has the wrong type");
    }
  }
  s.validate();
  return s;
}

SynthCorpus synth_corpus_detailed(const SynthSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  SynthCorpus out;
  out.corpus.reserve(spec.n_utts);
  for (std::size_t u = 0; u < spec.n_utts; ++u) {
    const std::size_t frames = spec.t_min + rng.below(spec.t_max - spec.t_min + 1);
    std::vector<SynthFrame> fr(frames, SynthFrame{0, FrameKind::Plain});
    std::vector<int> labels(frames, 0);
    fill_plain(fr, labels, frames, rng);

    if (spec.long_range_fraction > 0.0) {
      const std::size_t room = frames - spec.cue_length - spec.cue_distance;
      const auto want = static_cast<std::size_t>(std::lround(spec.long_range_fraction * static_cast<double>(frames)));
      const std::size_t run = std::clamp<std::size_t>(want, 1, room);
      const std::size_t start = rng.below(room - run + 1);
      const int key = static_cast<int>(rng.below(spec.n_keys));
      for (std::size_t t = start; t < start + spec.cue_length; ++t) {
        fr[t] = {1 + key, FrameKind::Cue};
        labels[t] = 1 + key;
      }
      // One template class across the run keeps every interior window
      // identical, so the key is the only thing a local view is missing.
      const int c = static_cast<int>(rng.below(kNumClasses));
      const std::size_t mstart = start + spec.cue_length + spec.cue_distance;
      for (std::size_t t = mstart; t < mstart + run; ++t) {
        fr[t] = {c, FrameKind::Marker};
        labels[t] = (c + key) % static_cast<int>(kNumClasses);
      }
    }

    Utterance utt;
    char id[32];
    std::snprintf(id, sizeof id, "synth-%05zu", u);
    utt.id = id;
    utt.features = Tensor::zeros({kMels, frames});
    for (std::size_t t = 0; t < frames; ++t) render(utt.features, frames, t, fr[t], spec.noise, rng);
    utt.labels = std::move(labels);
    out.corpus.push_back(std::move(utt));
    out.frames.push_back(std::move(fr));
  }
  return out;
}

FrameCorpus synth_corpus(const SynthSpec& spec) { return synth_corpus_detailed(spec).corpus; }

double windowed_bayes_accuracy(const SynthCorpus& sc, std::size_t radius) {
  // Window key: identities at offsets -radius..radius, with a sentinel past
  // either edge so utterance boundaries are visible to the classifier.
  const auto window = [&](const std::vector<SynthFrame>& fr, long t, long r) {
    std::vector<int> key;
    key.reserve(static_cast<std::size_t>(2 * r + 1));
    const auto n = static_cast<long>(fr.size());
    for (long o = -r; o <= r; ++o) {
      const long i = t + o;
      key.push_back(i < 0 || i >= n ? -1 : fr[i].template_class * 3 + static_cast<int>(fr[i].kind));
    }
    return key;
  };
  using Votes = std::map<std::vector<int>, std::map<int, std::size_t>>;
  const auto majority = [](const Votes& v, const std::vector<int>& key) -> std::optional<int> {
    const auto it = v.find(key);
    if (it == v.end()) return std::nullopt;
    int best = 0;
    std::size_t count = 0;
    for (const auto& [label, n] : it->second) {
      if (n > count) {
        best = label;
        count = n;
      }
    }
    return best;
  };

  // Votes come from even utterances and are scored on odd ones, so a window
  // seen once cannot be memorised. Unseen windows fall back to the centre.
  const std::size_t n_utts = sc.frames.size();
  const bool split = n_utts > 1;
  Votes wide, centre;
  for (std::size_t u = 0; u < n_utts; u += split ? 2 : 1) {
    const auto& fr = sc.frames[u];
    for (long t = 0; t < static_cast<long>(fr.size()); ++t) {
      const int y = sc.corpus[u].labels[static_cast<std::size_t>(t)];
      ++wide[window(fr, t, static_cast<long>(radius))][y];
      ++centre[window(fr, t, 0)][y];
    }
  }
  std::size_t correct = 0, total = 0;
  for (std::size_t u = split ? 1 : 0; u < n_utts; u += split ? 2 : 1) {
    const auto& fr = sc.frames[u];
    for (long t = 0; t < static_cast<long>(fr.size()); ++t) {
      auto guess = majority(wide, window(fr, t, static_cast<long>(radius)));
      if (!guess) guess = majority(centre, window(fr, t, 0));
      correct += guess.value_or(0) == sc.corpus[u].labels[static_cast<std::size_t>(t)];
      ++total;
    }
  }
  return total ? static_cast<double>(correct) / static_cast<double>(total) : 1.0;
}

}  // namespace phonebench
