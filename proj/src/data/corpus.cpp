// SPDX-License-Identifier: Apache-2.0
#include "data/corpus.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "core/error.hpp"

namespace phonebench {

namespace {

constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : path_(path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail(ErrorCode::Io, "cannot open " + path.string());
    bytes_.assign(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
  }

  void magic(const char* m) {
    need(4);
    if (std::memcmp(bytes_.data() + pos_, m, 4) != 0) bad(std::string("bad magic, expected ") + m);
    pos_ += 4;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() {
    const std::uint32_t bits = u32();
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(bytes_[pos_++]);
  }
  void finish() const {
    if (pos_ != bytes_.size()) bad("trailing bytes after payload");
  }
  [[noreturn]] void bad(const std::string& why) const { fail(ErrorCode::Format, path_.string() + ": " + why); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) bad("truncated file");
  }
  std::filesystem::path path_;
  std::string bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void validate_utterance(const Utterance& u, std::size_t n_classes) {
  if (!u.features.defined() || u.features.rank() != 2) {
    fail(ErrorCode::Format, "utterance " + u.id + ": features must be a 2-D [mels x T] array");
  }
  if (u.features.dim(1) != u.labels.size()) {
    fail(ErrorCode::Dimension, "utterance " + u.id + ": " + std::to_string(u.features.dim(1)) +
                                   " feature frames but " + std::to_string(u.labels.size()) + " labels");
  }
  for (std::size_t t = 0; t < u.labels.size(); ++t) {
    const int y = u.labels[t];
    if (y < 0 || static_cast<std::size_t>(y) >= n_classes) {
      fail(ErrorCode::Label, "utterance " + u.id + ": label " + std::to_string(y) + " at frame " +
                                 std::to_string(t) + " is outside [0, " + std::to_string(n_classes) + ")");
    }
  }
}

void write_features(const std::filesystem::path& path, const Tensor& features) {
  if (features.rank() != 2) fail(ErrorCode::Dimension, "features must be [mels x T]");
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorCode::Io, "cannot write " + path.string());
  os.write("PBFK", 4);
  put_u32(os, kVersion);
  put_u32(os, static_cast<std::uint32_t>(features.dim(0)));
  put_u32(os, static_cast<std::uint32_t>(features.dim(1)));
  for (double v : features.values()) {
    const float f = static_cast<float>(v);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(os, bits);
  }
  if (!os) fail(ErrorCode::Io, "write failed for " + path.string());
}

Tensor read_features(const std::filesystem::path& path) {
  Reader r(path);
  r.magic("PBFK");
  if (const auto v = r.u32(); v != kVersion) r.bad("unsupported version " + std::to_string(v));
  const std::size_t mels = r.u32(), frames = r.u32();
  if (mels == 0) r.bad("zero mel bins");
  std::vector<double> data(mels * frames);
  for (auto& x : data) x = r.f32();
  r.finish();
  return Tensor::from({mels, frames}, std::move(data));
}

void write_labels(const std::filesystem::path& path, const std::vector<int>& labels) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorCode::Io, "cannot write " + path.string());
  os.write("PBLB", 4);
  put_u32(os, kVersion);
  put_u32(os, static_cast<std::uint32_t>(labels.size()));
  for (int y : labels) {
    if (y < 0 || y > 255) fail(ErrorCode::Label, "label " + std::to_string(y) + " does not fit in a byte");
    os.put(static_cast<char>(y));
  }
  if (!os) fail(ErrorCode::Io, "write failed for " + path.string());
}

std::vector<int> read_labels(const std::filesystem::path& path) {
  Reader r(path);
  r.magic("PBLB");
  if (const auto v = r.u32(); v != kVersion) r.bad("unsupported version " + std::to_string(v));
  std::vector<int> labels(r.u32());
  for (auto& y : labels) y = r.u8();
  r.finish();
  return labels;
}

FrameCorpus load_corpus(const std::filesystem::path& manifest) {
  std::ifstream is(manifest);
  if (!is) fail(ErrorCode::Io, "cannot open manifest " + manifest.string());
  const auto base = manifest.parent_path();
  FrameCorpus corpus;
  std::set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, '\t');) cols.push_back(c);
    if (cols.size() != 3 || cols[0].empty()) {
      fail(ErrorCode::Format, manifest.string() + ":" + std::to_string(lineno) +
                                  ": expected <id>\\t<feature_file>\\t<label_file>");
    }
    if (!seen.insert(cols[0]).second) fail(ErrorCode::Format, "duplicate utterance id " + cols[0]);
    const auto resolve = [&](const std::string& p) {
      std::filesystem::path fp(p);
      return fp.is_absolute() ? fp : base / fp;
    };
    Utterance u;
    u.id = cols[0];
    try {
      u.features = read_features(resolve(cols[1]));
      u.labels = read_labels(resolve(cols[2]));
    } catch (const Error& e) {
      fail(e.code(), "utterance " + u.id + ": " + e.what());
    }
    validate_utterance(u);
    corpus.push_back(std::move(u));
  }
  return corpus;
}

std::filesystem::path save_corpus(const std::filesystem::path& dir, const FrameCorpus& corpus) {
  std::filesystem::create_directories(dir);
  const auto manifest = dir / "manifest.tsv";
  std::ofstream os(manifest);
  if (!os) fail(ErrorCode::Io, "cannot write " + manifest.string());
  for (const auto& u : corpus) {
    validate_utterance(u);
    write_features(dir / (u.id + ".pbfk"), u.features);
    write_labels(dir / (u.id + ".pblb"), u.labels);
    os << u.id << '\t' << u.id << ".pbfk\t" << u.id << ".pblb\n";
  }
  if (!os) fail(ErrorCode::Io, "write failed for " + manifest.string());
  return manifest;
}

std::vector<int> subsample_labels(const std::vector<int>& labels, std::size_t out_frames) {
  if (out_frames > 0 && 4 * (out_frames - 1) >= labels.size()) {
    fail(ErrorCode::Dimension, std::to_string(out_frames) + " output frames need more than " +
                                   std::to_string(labels.size()) + " input labels");
  }
  std::vector<int> out(out_frames);
  for (std::size_t t = 0; t < out_frames; ++t) out[t] = labels[4 * t];
  return out;
}

ClassMap::ClassMap(std::vector<std::string> names) : names_(std::move(names)) {
  if (names_.size() != 37) {
    fail(ErrorCode::Config, "class map must list 37 classes, got " + std::to_string(names_.size()));
  }
  std::set<std::string> uniq;
  for (const auto& n : names_) {
    if (n.empty() || n.find_first_of(" \t") != std::string::npos) {
      fail(ErrorCode::Config, "class names must be non-empty without whitespace: '" + n + "'");
    }
    if (!uniq.insert(n).second) fail(ErrorCode::Config, "duplicate class name " + n);
  }
}

ClassMap ClassMap::placeholder() {
  return ClassMap({"sil", "aa", "ae", "ah", "ao", "aw", "ay", "b",  "ch", "d",  "dh", "eh", "er",
                   "ey",  "f",  "g",  "hh", "ih", "iy", "jh", "k",  "l",  "m",  "n",  "ng", "ow",
                   "oy",  "p",  "r",  "s",  "sh", "t",  "th", "uh", "uw", "v",  "z"});
}

ClassMap ClassMap::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorCode::Io, "cannot open class map " + path.string());
  std::vector<std::string> names;
  for (std::string line; std::getline(is, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) names.push_back(line);
  }
  return ClassMap(std::move(names));
}

void ClassMap::save(const std::filesystem::path& path) const {
  std::ofstream os(path);
  if (!os) fail(ErrorCode::Io, "cannot write " + path.string());
  for (const auto& n : names_) os << n << '\n';
}

}  // namespace phonebench
