// SPDX-License-Identifier: Apache-2.0
#include "models/config.hpp"

#include <cstdint>
#include <cstdio>
#include <set>

#include "core/error.hpp"

namespace phonebench {

std::string_view arch_name(Arch a) {
  switch (a) {
    case Arch::ContextNet: return "contextnet";
    case Arch::Lstm: return "lstm";
    case Arch::Transformer: return "transformer";
    case Arch::Conformer: return "conformer";
  }
  return "unknown";
}

Arch parse_arch(std::string_view name) {
  for (Arch a : {Arch::ContextNet, Arch::Lstm, Arch::Transformer, Arch::Conformer}) {
    if (arch_name(a) == name) return a;
  }
  fail(ErrorCode::Config, "unknown architecture '" + std::string(name) +
                              "' (expected contextnet, lstm, transformer or conformer)");
}

bool is_attention(Arch a) { return a == Arch::Transformer || a == Arch::Conformer; }

void ArchConfig::validate() const {
  auto bad = [](const std::string& msg) { fail(ErrorCode::Config, msg); };
  if (depth < 1) bad("depth must be >= 1");
  if (width < 1) bad("width must be >= 1");
  if (n_classes != kNumClasses) bad("n_classes must be " + std::to_string(kNumClasses));
  if (n_mels < 4) bad("n_mels must be >= 4");
  if (subsample_channels < 1) bad("subsample_channels must be >= 1");
  const bool uses_kernel = arch == Arch::ContextNet || arch == Arch::Conformer;
  if (uses_kernel && (kernel < 1 || kernel % 2 == 0)) {
    bad("kernel must be odd and >= 1, got " + std::to_string(kernel));
  }
  if (is_attention(arch)) {
    if (heads < 1) bad("heads must be >= 1");
    if (width % heads != 0) {
      bad("width " + std::to_string(width) + " is not divisible by " + std::to_string(heads) + " heads");
    }
  }
  if (arch == Arch::Lstm && width % 2 != 0) bad("lstm width must be even, got " + std::to_string(width));
  if (arch == Arch::ContextNet && use_se && se_reduction < 1) bad("se_reduction must be >= 1");
}

nlohmann::json ArchConfig::to_json() const {
  nlohmann::json j;
  j["arch"] = std::string(arch_name(arch));
  j["depth"] = depth;
  j["width"] = width;
  j["kernel"] = kernel;
  if (range.bounded()) {
    j["range"] = range.radius();
  } else {
    j["range"] = "unlimited";
  }
  j["heads"] = heads;
  j["use_ds"] = use_ds;
  j["use_se"] = use_se;
  j["se_reduction"] = se_reduction;
  j["subsample_channels"] = subsample_channels;
  j["n_mels"] = n_mels;
  j["n_classes"] = n_classes;
  return j;
}

namespace {

std::size_t get_size(const nlohmann::json& j, const char* key) {
  const auto& v = j.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    fail(ErrorCode::Config, std::string("'") + key + "' must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

bool get_bool(const nlohmann::json& j, const char* key) {
  const auto& v = j.at(key);
  if (!v.is_boolean()) fail(ErrorCode::Config, std::string("'") + key + "' must be a boolean");
  return v.get<bool>();
}

}  // namespace

ArchConfig ArchConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) fail(ErrorCode::Config, "model config must be a JSON object");
  static const std::set<std::string> known = {"arch",   "depth",        "width",
                                              "kernel", "range",        "heads",
                                              "use_ds", "use_se",       "se_reduction",
                                              "n_mels", "n_classes",    "subsample_channels"};
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) fail(ErrorCode::Config, "unknown model config key '" + key + "'");
  }
  ArchConfig c;
  if (j.contains("arch")) {
    if (!j["arch"].is_string()) fail(ErrorCode::Config, "'arch' must be a string");
    c.arch = parse_arch(j["arch"].get<std::string>());
  }
  if (j.contains("depth")) c.depth = get_size(j, "depth");
  if (j.contains("width")) c.width = get_size(j, "width");
  if (j.contains("kernel")) c.kernel = get_size(j, "kernel");
  if (j.contains("range")) {
    const auto& r = j["range"];
    if (r.is_string()) {
      c.range = AttentionRange::parse(r.get<std::string>());
    } else if (r.is_number_integer() && r.get<long long>() >= 0) {
      c.range = AttentionRange::frames(r.get<std::size_t>());
    } else {
      fail(ErrorCode::Config, "'range' must be a non-negative integer or \"unlimited\"");
    }
  }
  if (j.contains("heads")) c.heads = get_size(j, "heads");
  if (j.contains("use_ds")) c.use_ds = get_bool(j, "use_ds");
  if (j.contains("use_se")) c.use_se = get_bool(j, "use_se");
  if (j.contains("se_reduction")) c.se_reduction = get_size(j, "se_reduction");
  if (j.contains("subsample_channels")) c.subsample_channels = get_size(j, "subsample_channels");
  if (j.contains("n_mels")) c.n_mels = get_size(j, "n_mels");
  if (j.contains("n_classes")) c.n_classes = get_size(j, "n_classes");
  return c;
}

std::string ArchConfig::canonical() const { return to_json().dump(); }

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace phonebench
