// SPDX-License-Identifier: Apache-2.0
#include "models/model.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <unordered_map>

#include "core/error.hpp"

namespace phonebench {

namespace {

constexpr char kMagic[4] = {'P', 'B', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T read_pod(std::istream& is, const std::string& path) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) fail(ErrorCode::Format, "truncated checkpoint " + path);
  return v;
}

}  // namespace

Model::Model(const ArchConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  const std::size_t d = cfg_.width;
  frontend_ = std::make_unique<SubsampleFrontend>(cfg_.n_mels, cfg_.subsample_channels, d, rng);
  for (std::size_t i = 0; i < cfg_.depth; ++i) {
    switch (cfg_.arch) {
      case Arch::ContextNet: {
        ContextNetBlockOptions opt;
        opt.in_channels = d;
        opt.out_channels = d;
        opt.kernel = cfg_.kernel;
        opt.use_ds = cfg_.use_ds;
        opt.use_se = cfg_.use_se;
        opt.se_reduction = cfg_.se_reduction;
        contextnet_.push_back(std::make_unique<ContextNetBlock>(opt, rng));
        break;
      }
      case Arch::Lstm:
        lstm_.push_back(std::make_unique<BiLSTMLayer>(d, d, rng));
        break;
      case Arch::Transformer:
        transformer_.push_back(std::make_unique<TransformerLayer>(d, cfg_.heads, cfg_.range, rng));
        break;
      case Arch::Conformer:
        conformer_.push_back(std::make_unique<ConformerLayer>(d, cfg_.heads, cfg_.range, cfg_.kernel, rng));
        break;
    }
  }
  classifier_ = Linear(d, cfg_.n_classes, true, rng);

  frontend_->collect("frontend", collector_);
  for (std::size_t i = 0; i < contextnet_.size(); ++i) contextnet_[i]->collect("encoder." + std::to_string(i), collector_);
  for (std::size_t i = 0; i < lstm_.size(); ++i) lstm_[i]->collect("encoder." + std::to_string(i), collector_);
  for (std::size_t i = 0; i < transformer_.size(); ++i) {
    transformer_[i]->collect("encoder." + std::to_string(i), collector_);
  }
  for (std::size_t i = 0; i < conformer_.size(); ++i) conformer_[i]->collect("encoder." + std::to_string(i), collector_);
  classifier_.collect("classifier", collector_);
}

Tensor Model::frontend(const Tensor& fbank, const ForwardContext& ctx) const {
  Tensor x = frontend_->forward(fbank, ctx);
  if (is_attention(cfg_.arch)) x = ops::add(x, sinusoidal_positions(x.dim(0), x.dim(1)));
  return x;
}

Tensor Model::encode(const Tensor& x, const ForwardContext& ctx) const {
  Tensor h = x;
  if (cfg_.arch == Arch::ContextNet) {
    h = ops::transpose(h);
    for (const auto& b : contextnet_) h = b->forward(h, ctx);
    return ops::transpose(h);
  }
  for (const auto& l : lstm_) h = l->forward(h, ctx);
  for (const auto& l : transformer_) h = l->forward(h, ctx);
  for (const auto& l : conformer_) h = l->forward(h, ctx);
  return h;
}

Tensor Model::forward(const Tensor& fbank, const ForwardContext& ctx) const {
  const std::size_t valid = ctx.valid_frames(fbank.dim(1));
  Tensor x = frontend(fbank, ctx.with_valid(valid));
  Tensor h = encode(x, ctx.with_valid(SubsampleFrontend::output_length(valid)));
  return classifier_.forward(h);
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : collector_.parameters) n += p.tensor.numel();
  return n;
}

void Model::commit_batch_norm(const std::vector<BatchNormRecord>& records) {
  std::unordered_map<const BatchNorm*, std::vector<const BatchNormRecord*>> by_layer;
  for (const auto& r : records) by_layer[r.layer].push_back(&r);
  for (BatchNorm* bn : collector_.batch_norms) {
    auto it = by_layer.find(bn);
    if (it != by_layer.end()) bn->commit(it->second);
  }
}

void Model::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(ErrorCode::Io, "cannot open checkpoint for writing: " + path.string());
  const std::string cfg = cfg_.canonical();
  os.write(kMagic, 4);
  write_pod<std::uint32_t>(os, kVersion);
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(cfg.size()));
  os.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  write_pod<std::uint64_t>(os, collector_.parameters.size() + collector_.buffers.size());
  auto write_tensor = [&](const Shape& shape, std::span<const double> values) {
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(shape.size()));
    for (auto dim : shape) write_pod<std::uint64_t>(os, dim);
    os.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
  };
  for (const auto& p : collector_.parameters) write_tensor(p.tensor.shape(), p.tensor.values());
  for (const auto& b : collector_.buffers) write_tensor({b.values->size()}, *b.values);
  if (!os) fail(ErrorCode::Io, "failed writing checkpoint " + path.string());
}

std::unique_ptr<Model> Model::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorCode::Io, "cannot open checkpoint: " + path.string());
  const std::string p = path.string();
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) fail(ErrorCode::Format, "not a checkpoint: " + p);
  const auto version = read_pod<std::uint32_t>(is, p);
  if (version != kVersion) fail(ErrorCode::Format, "unsupported checkpoint version " + std::to_string(version));
  const auto cfg_len = read_pod<std::uint32_t>(is, p);
  std::string cfg_text(cfg_len, '\0');
  if (!is.read(cfg_text.data(), cfg_len)) fail(ErrorCode::Format, "truncated checkpoint " + p);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(cfg_text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Format, "corrupt config in checkpoint " + p + ": " + e.what());
  }
  auto model = std::make_unique<Model>(ArchConfig::from_json(j), 0);
  const auto count = read_pod<std::uint64_t>(is, p);
  auto& col = model->collector_;
  if (count != col.parameters.size() + col.buffers.size()) {
    fail(ErrorCode::Format, "checkpoint " + p + " holds " + std::to_string(count) + " tensors, model expects " +
                                std::to_string(col.parameters.size() + col.buffers.size()));
  }
  auto read_tensor = [&](const std::string& name, const Shape& expect, std::span<double> dst) {
    const auto ndim = read_pod<std::uint32_t>(is, p);
    Shape shape(ndim);
    for (auto& dim : shape) dim = read_pod<std::uint64_t>(is, p);
    if (shape != expect) {
      fail(ErrorCode::Format, "checkpoint tensor " + name + " has shape " + shape_str(shape) + ", expected " +
                                  shape_str(expect));
    }
    if (!is.read(reinterpret_cast<char*>(dst.data()), static_cast<std::streamsize>(dst.size_bytes()))) {
      fail(ErrorCode::Format, "truncated checkpoint " + p);
    }
  };
  for (auto& param : col.parameters) read_tensor(param.name, param.tensor.shape(), param.tensor.mutable_values());
  for (auto& buf : col.buffers) read_tensor(buf.name, {buf.values->size()}, *buf.values);
  return model;
}

std::unique_ptr<Model> build_model(const ArchConfig& cfg, std::uint64_t seed) {
  return std::make_unique<Model>(cfg, seed);
}

std::vector<int> predict(const Tensor& logits) {
  if (logits.rank() != 2) fail(ErrorCode::Dimension, "predict expects [T x classes] logits");
  const std::size_t len = logits.dim(0), classes = logits.dim(1);
  std::vector<int> out(len);
  for (std::size_t t = 0; t < len; ++t) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < classes; ++k) {
      if (logits[t * classes + k] > logits[t * classes + best]) best = k;
    }
    out[t] = static_cast<int>(best);
  }
  return out;
}

}  // namespace phonebench
