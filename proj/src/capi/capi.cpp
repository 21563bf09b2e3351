// SPDX-License-Identifier: Apache-2.0
#include "phonebench/phonebench.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <memory>
#include <string>

#include <json.hpp>

#include "core/error.hpp"
#include "data/corpus.hpp"
#include "data/fbank.hpp"
#include "data/synth.hpp"
#include "data/wav.hpp"
#include "harness/bench.hpp"
#include "harness/report.hpp"
#include "harness/trainer.hpp"
#include "models/model.hpp"
#include "params/params.hpp"
#include "rf/receptive_field.hpp"

using namespace phonebench;

struct pb_model {
  std::unique_ptr<Model> impl;
};

struct pb_corpus {
  FrameCorpus impl;
};

namespace {

thread_local std::string g_last_error;

pb_status to_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return PB_ERR_INVALID_ARGUMENT;
    case ErrorCode::Dimension: return PB_ERR_DIMENSION;
    case ErrorCode::Config: return PB_ERR_CONFIG;
    case ErrorCode::Io: return PB_ERR_IO;
    case ErrorCode::Format: return PB_ERR_FORMAT;
    case ErrorCode::Label: return PB_ERR_LABEL;
    case ErrorCode::TooShort: return PB_ERR_TOO_SHORT;
    case ErrorCode::Contract: return PB_ERR_CONTRACT;
    case ErrorCode::Numeric: return PB_ERR_NUMERIC;
    case ErrorCode::Infeasible: return PB_ERR_INFEASIBLE;
    case ErrorCode::Inconclusive: return PB_ERR_INCONCLUSIVE;
    case ErrorCode::EmptyOutput: return PB_ERR_EMPTY_OUTPUT;
    case ErrorCode::InvalidStatistics: return PB_ERR_INVALID_STATISTICS;
  }
  return PB_ERR_INTERNAL;
}

template <typename F>
pb_status guarded(F&& f) {
  g_last_error.clear();
  try {
    f();
    return PB_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const nlohmann::json::exception& e) {
    g_last_error = std::string("invalid JSON: ") + e.what();
    return PB_ERR_CONFIG;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return PB_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return PB_ERR_INTERNAL;
  }
}

void require(const void* p, const char* what) {
  if (p == nullptr) fail(ErrorCode::InvalidArgument, std::string(what) + " must not be NULL");
}

char* dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

nlohmann::json parse(const char* text, const char* what) {
  require(text, what);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorCode::Config, std::string(what) + " is not valid JSON: " + e.what());
  }
}

std::vector<ArchConfig> config_list(const char* text) {
  const auto j = parse(text, "configs_json");
  if (!j.is_array()) fail(ErrorCode::Config, "expected a JSON array of architecture configs");
  std::vector<ArchConfig> out;
  for (const auto& item : j) out.push_back(ArchConfig::from_json(item));
  return out;
}

std::string hash_or_empty(const char* hash) { return hash ? hash : ""; }

std::optional<AttentionRange> range_from_json(const nlohmann::json& v) {
  if (v.is_string()) return AttentionRange::parse(v.get<std::string>());
  if (v.is_number_unsigned()) return AttentionRange::frames(v.get<std::size_t>());
  fail(ErrorCode::Config, "a range must be \"unlimited\" or a non-negative integer");
}

}  // namespace

extern "C" {

const char* pb_version(void) { return "0.1.0"; }

const char* pb_status_name(pb_status status) {
  switch (status) {
    case PB_OK: return "ok";
    case PB_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case PB_ERR_DIMENSION: return "dimension";
    case PB_ERR_CONFIG: return "config";
    case PB_ERR_IO: return "io";
    case PB_ERR_FORMAT: return "format";
    case PB_ERR_LABEL: return "label";
    case PB_ERR_TOO_SHORT: return "too_short";
    case PB_ERR_CONTRACT: return "contract";
    case PB_ERR_NUMERIC: return "numeric";
    case PB_ERR_INFEASIBLE: return "infeasible";
    case PB_ERR_INCONCLUSIVE: return "inconclusive";
    case PB_ERR_EMPTY_OUTPUT: return "empty_output";
    case PB_ERR_INVALID_STATISTICS: return "invalid_statistics";
    case PB_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* pb_last_error(void) { return g_last_error.c_str(); }

void pb_string_free(char* s) { std::free(s); }

pb_status pb_config_hash(const char* json, char** hash_out) {
  return guarded([&] {
    require(hash_out, "hash_out");
    *hash_out = dup(config_hash(parse(json, "json")));
  });
}

pb_status pb_rf_csv(const char* configs_json, int exact, const char* hash, char** csv_out) {
  return guarded([&] {
    require(csv_out, "csv_out");
    CsvTable t{hash_or_empty(hash), {"arch", "k", "r", "l", "frames", "seconds", "bounded"}, {}};
    for (const auto& c : config_list(configs_json)) {
      c.validate();
      const auto rf = model_receptive_field(c);
      const bool has_kernel = c.arch == Arch::ContextNet || c.arch == Arch::Conformer;
      const auto frames = rf.length_frames();
      t.rows.push_back({std::string(arch_name(c.arch)), has_kernel ? std::to_string(c.kernel) : "-",
                        is_attention(c.arch) ? c.range.to_string() : "-", std::to_string(c.depth),
                        frames ? std::to_string(*frames) : "-",
                        frames ? (exact ? rf.exact_seconds() : rf.seconds()) : "-", rf.bounded ? "true" : "false"});
    }
    *csv_out = dup(t.str());
  });
}

pb_status pb_rf_empirical(const pb_model* model, size_t input_frames, uint64_t seed, int* bounded, size_t* radius) {
  return guarded([&] {
    require(model, "model");
    require(bounded, "bounded");
    require(radius, "radius");
    const auto r = empirical_receptive_field(*model->impl, input_frames, seed);
    *bounded = r.bounded ? 1 : 0;
    *radius = r.radius;
  });
}

pb_status pb_params_csv(const char* configs_json, const char* hash, char** csv_out) {
  return guarded([&] {
    require(csv_out, "csv_out");
    CsvTable t{hash_or_empty(hash),
               {"arch", "depth", "width", "kernel", "subsampler", "encoder", "classifier", "total"},
               {}};
    for (const auto& c : config_list(configs_json)) {
      c.validate();
      const auto b = count_params_breakdown(c);
      t.rows.push_back({std::string(arch_name(c.arch)), std::to_string(c.depth), std::to_string(c.width),
                        std::to_string(c.kernel), std::to_string(b.components[0].count),
                        std::to_string(b.components[1].count), std::to_string(b.components[2].count),
                        std::to_string(b.total)});
    }
    *csv_out = dup(t.str());
  });
}

pb_status pb_solve_width(const char* config_json, uint64_t target, double tolerance, size_t* width_out) {
  return guarded([&] {
    require(width_out, "width_out");
    const auto c = ArchConfig::from_json(parse(config_json, "config_json"));
    if (target == 0 || !(tolerance >= 0.0)) fail(ErrorCode::Config, "budget needs target > 0 and tolerance >= 0");
    *width_out = solve_width(c, ParamBudget{target, tolerance});
  });
}

pb_status pb_model_create(const char* config_json, uint64_t seed, pb_model** out) {
  return guarded([&] {
    require(out, "out");
    *out = nullptr;
    auto m = std::make_unique<pb_model>();
    m->impl = build_model(ArchConfig::from_json(parse(config_json, "config_json")), seed);
    *out = m.release();
  });
}

pb_status pb_model_load(const char* path, pb_model** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = nullptr;
    auto m = std::make_unique<pb_model>();
    m->impl = Model::load(path);
    *out = m.release();
  });
}

pb_status pb_model_save(const pb_model* model, const char* path) {
  return guarded([&] {
    require(model, "model");
    require(path, "path");
    model->impl->save(path);
  });
}

void pb_model_free(pb_model* model) { delete model; }

pb_status pb_model_config(const pb_model* model, char** json_out) {
  return guarded([&] {
    require(model, "model");
    require(json_out, "json_out");
    *json_out = dup(model->impl->config().canonical());
  });
}

pb_status pb_model_param_count(const pb_model* model, uint64_t* count_out) {
  return guarded([&] {
    require(model, "model");
    require(count_out, "count_out");
    *count_out = model->impl->parameter_count();
  });
}

pb_status pb_model_forward(const pb_model* model, const double* fbank, size_t n_mels, size_t frames, double* logits,
                           size_t capacity, size_t* out_frames) {
  return guarded([&] {
    require(model, "model");
    require(fbank, "fbank");
    require(out_frames, "out_frames");
    if (n_mels != model->impl->config().n_mels) {
      fail(ErrorCode::Dimension, "model expects " + std::to_string(model->impl->config().n_mels) + " mel bins, got " +
                                     std::to_string(n_mels));
    }
    NoGradGuard guard;
    const Tensor y = model->impl->forward(Tensor::from({n_mels, frames}, std::vector<double>(fbank, fbank + n_mels * frames)));
    *out_frames = y.dim(0);
    if (logits) std::copy_n(y.values().begin(), std::min(capacity, y.numel()), logits);
  });
}

pb_status pb_corpus_load(const char* manifest_path, pb_corpus** out) {
  return guarded([&] {
    require(manifest_path, "manifest_path");
    require(out, "out");
    *out = nullptr;
    auto c = std::make_unique<pb_corpus>();
    c->impl = load_corpus(manifest_path);
    *out = c.release();
  });
}

pb_status pb_corpus_synth(const char* spec_json, pb_corpus** out) {
  return guarded([&] {
    require(out, "out");
    *out = nullptr;
    auto c = std::make_unique<pb_corpus>();
    c->impl = synth_corpus(SynthSpec::from_json(parse(spec_json, "spec_json")));
    *out = c.release();
  });
}

pb_status pb_corpus_save(const pb_corpus* corpus, const char* dir) {
  return guarded([&] {
    require(corpus, "corpus");
    require(dir, "dir");
    save_corpus(dir, corpus->impl);
  });
}

size_t pb_corpus_size(const pb_corpus* corpus) { return corpus ? corpus->impl.size() : 0; }

void pb_corpus_free(pb_corpus* corpus) { delete corpus; }

pb_status pb_fbank_wav(const char* wav_path, const char* out_path, size_t* frames_out) {
  return guarded([&] {
    require(wav_path, "wav_path");
    require(out_path, "out_path");
    const auto wav = read_wav(wav_path);
    FbankConfig cfg;
    if (wav.sample_rate != static_cast<std::uint32_t>(cfg.sample_rate)) {
      fail(ErrorCode::Format, std::string(wav_path) + ": expected 16000 Hz audio, got " + std::to_string(wav.sample_rate));
    }
    const Tensor f = compute_fbank(wav.samples, cfg);
    write_features(out_path, f);
    if (frames_out) *frames_out = f.dim(1);
  });
}

pb_status pb_train_profile(const char* name, char** json_out) {
  return guarded([&] {
    require(name, "name");
    require(json_out, "json_out");
    const std::string n = name;
    if (n == "paper") *json_out = dup(TrainConfig::paper().to_json().dump());
    else if (n == "desk") *json_out = dup(TrainConfig::desk().to_json().dump());
    else fail(ErrorCode::Config, "unknown profile '" + n + "' (expected paper or desk)");
  });
}

pb_status pb_train(pb_model* model, const pb_corpus* corpus, const char* train_json, const char* hash,
                   char** history_csv_out, char** summary_json_out) {
  return guarded([&] {
    require(model, "model");
    require(corpus, "corpus");
    const auto cfg = TrainConfig::from_json(train_json ? parse(train_json, "train_json") : nlohmann::json::object());
    const auto r = train(*model->impl, corpus->impl, cfg);
    const std::string h = hash_or_empty(hash);
    if (history_csv_out) *history_csv_out = dup(history_table(h, r).str());
    if (summary_json_out) {
      nlohmann::json s = {{"config_hash", h},
                          {"train", cfg.to_json()},
                          {"model", model->impl->config().to_json()},
                          {"iterations", r.history.size()},
                          {"final_loss", r.history.empty() ? 0.0 : r.history.back().loss},
                          {"wall_clock_seconds", r.seconds}};
      *summary_json_out = dup(s.dump(2));
    }
  });
}

pb_status pb_evaluate(const pb_model* model, const pb_corpus* corpus, const char* range, const char* class_map,
                      const char* hash, double* accuracy_out, char** csv_out) {
  return guarded([&] {
    require(model, "model");
    require(corpus, "corpus");
    std::optional<AttentionRange> r;
    if (range) r = AttentionRange::parse(range);
    const auto names = class_map ? ClassMap::load(class_map) : ClassMap::placeholder();
    const auto res = evaluate(*model->impl, corpus->impl, r);
    if (accuracy_out) *accuracy_out = res.accuracy();
    if (csv_out) *csv_out = dup(eval_table(hash_or_empty(hash), res, names.names()).str());
  });
}

pb_status pb_transfer(const pb_model* const* models, size_t n_models, const pb_corpus* corpus, const char* ranges_json,
                      const char* hash, char** csv_out) {
  return guarded([&] {
    require(models, "models");
    require(corpus, "corpus");
    require(csv_out, "csv_out");
    const auto j = parse(ranges_json, "ranges_json");
    if (!j.is_array()) fail(ErrorCode::Config, "ranges must be a JSON array");
    std::vector<AttentionRange> infer;
    for (const auto& v : j) infer.push_back(*range_from_json(v));
    std::vector<const Model*> ms;
    std::vector<AttentionRange> trained;
    for (size_t i = 0; i < n_models; ++i) {
      require(models[i], "models[i]");
      ms.push_back(models[i]->impl.get());
      trained.push_back(models[i]->impl->config().range);
    }
    *csv_out = dup(transfer_table(hash_or_empty(hash), range_transfer_matrix(ms, trained, corpus->impl, infer)).str());
  });
}

pb_status pb_bench(const pb_model* model, const char* bench_json, const char* hash, char** csv_out,
                   double* exponent_out) {
  return guarded([&] {
    require(model, "model");
    BenchConfig cfg;
    const auto j = bench_json ? parse(bench_json, "bench_json") : nlohmann::json::object();
    if (!j.is_object()) fail(ErrorCode::Config, "bench config must be a JSON object");
    for (const auto& [k, v] : j.items()) {
      if (k == "input_frames") cfg.input_frames = v.get<std::vector<std::size_t>>();
      else if (k == "batch") cfg.batch = v.get<std::size_t>();
      else if (k == "repeats") cfg.repeats = v.get<std::size_t>();
      else if (k == "warmup") cfg.warmup = v.get<std::size_t>();
      else if (k == "seed") cfg.seed = v.get<std::uint64_t>();
      else fail(ErrorCode::Config, "unknown bench key '" + k + "'");
    }
    const auto pts = time_inference(*model->impl, cfg);
    if (csv_out) *csv_out = dup(timing_table(hash_or_empty(hash), pts).str());
    if (exponent_out) {
      std::vector<double> ts, ms;
      for (const auto& p : pts) {
        ts.push_back(static_cast<double>(p.input_frames));
        ms.push_back(p.ms_per_sequence);
      }
      *exponent_out = pts.size() >= 4 ? fit_scaling_exponent(ts, ms) : std::nan("");
    }
  });
}

pb_status pb_fit_exponent(const double* lengths, const double* times, size_t n, double* exponent_out) {
  return guarded([&] {
    require(lengths, "lengths");
    require(times, "times");
    require(exponent_out, "exponent_out");
    *exponent_out = fit_scaling_exponent(std::span(lengths, n), std::span(times, n));
  });
}

}  // extern "C"
