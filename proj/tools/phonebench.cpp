// SPDX-License-Identifier: Apache-2.0
// Command-line front end. Everything below goes through the C API.
#include <phonebench/phonebench.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Failure {
  pb_status status;
  std::string message;
};

[[noreturn]] void usage_error(const std::string& message) { throw Failure{PB_ERR_CONFIG, message}; }

void check(pb_status s) {
  if (s != PB_OK) throw Failure{s, pb_last_error()};
}

std::string take(char* s) {
  std::string out = s ? s : "";
  pb_string_free(s);
  return out;
}

struct ModelFree {
  void operator()(pb_model* m) const { pb_model_free(m); }
};
struct CorpusFree {
  void operator()(pb_corpus* c) const { pb_corpus_free(c); }
};
using ModelPtr = std::unique_ptr<pb_model, ModelFree>;
using CorpusPtr = std::unique_ptr<pb_corpus, CorpusFree>;

// ---- configuration ------------------------------------------------------

const std::vector<std::string> kTopKeys = {"profile", "seed",   "model",     "budget",  "train",  "corpus",
                                           "eval_corpus", "sweep", "configs", "preset", "bench", "ranges",
                                           "class_map", "exact", "range"};

const std::vector<std::string> kModelKeys = {"arch",   "depth",  "width",        "kernel",             "range",  "heads",
                                             "use_ds", "use_se", "se_reduction", "subsample_channels", "n_mels", "n_classes"};

bool contains(const std::vector<std::string>& v, const std::string& s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

json read_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Failure{PB_ERR_IO, "cannot open config file " + path};
  try {
    return json::parse(is);
  } catch (const json::parse_error& e) {
    throw Failure{PB_ERR_CONFIG, path + ": " + e.what()};
  }
}

json parse_value(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error&) {
    return text;
  }
}

// "a.b.c=value" sets j["a"]["b"]["c"]; the value is JSON when it parses as such.
void apply_set(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) usage_error("--set expects key.path=value, got '" + assignment + "'");
  json* node = &j;
  std::stringstream path(assignment.substr(0, eq));
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(path, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->contains(parts[i]) || !(*node)[parts[i]].is_object()) (*node)[parts[i]] = json::object();
    node = &(*node)[parts[i]];
  }
  (*node)[parts.back()] = parse_value(assignment.substr(eq + 1));
}

json arch(const char* name, json extra) {
  extra["arch"] = name;
  return extra;
}

json preset_configs(const std::string& name) {
  json out = json::array();
  if (name == "table1") {
    out.push_back(arch("lstm", {{"depth", 4}, {"width", 336}}));
    for (json r : {json(8), json(16), json(32), json(64), json("unlimited")})
      out.push_back(arch("transformer", {{"depth", 4}, {"width", 248}, {"range", r}}));
    for (json r : {json(4), json(12), json(28), json(60), json("unlimited")})
      out.push_back(arch("conformer", {{"depth", 4}, {"width", 192}, {"kernel", 9}, {"range", r}}));
  } else if (name == "table2") {
    for (bool se : {true, false})
      for (int k : {3, 5, 9, 17, 33})
        out.push_back(arch("contextnet", {{"depth", 4}, {"width", 352}, {"kernel", k}, {"use_se", se}}));
    for (int l : {4, 8, 12, 16})
      out.push_back(arch("contextnet", {{"depth", l}, {"width", 352}, {"kernel", 5}, {"use_se", false}}));
  } else if (name == "table3") {
    const int depths[] = {2, 4, 6, 8};
    const int lstm[] = {432, 336, 288, 256}, trans[] = {328, 248, 208, 184}, conf[] = {256, 192, 160, 140};
    const int conf_k[] = {17, 9, 7, 5};
    for (int i = 0; i < 4; ++i) out.push_back(arch("lstm", {{"depth", depths[i]}, {"width", lstm[i]}}));
    for (int i = 0; i < 4; ++i) out.push_back(arch("transformer", {{"depth", depths[i]}, {"width", trans[i]}}));
    for (int i = 0; i < 4; ++i)
      out.push_back(arch("conformer", {{"depth", depths[i]}, {"width", conf[i]}, {"kernel", conf_k[i]}}));
  } else if (name == "table4") {
    for (int d : {248, 416, 448}) out.push_back(arch("contextnet", {{"depth", 2}, {"width", d}, {"kernel", 9}}));
    for (int d : {240, 392, 432}) out.push_back(arch("lstm", {{"depth", 2}, {"width", d}}));
    for (int d : {168, 288, 328}) out.push_back(arch("transformer", {{"depth", 2}, {"width", d}}));
    for (int d : {128, 216, 256}) out.push_back(arch("conformer", {{"depth", 2}, {"width", d}, {"kernel", 9}}));
  } else {
    usage_error("unknown preset '" + name + "' (expected table1, table2, table3 or table4)");
  }
  return out;
}

struct Common {
  std::string config_path;
  std::string profile;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> sets;
  std::string out;
  bool quiet = false;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("-c,--config", c.config_path, "JSON experiment config");
  sub->add_option("--profile", c.profile, "Named defaults: paper or desk")->check(CLI::IsMember({"paper", "desk"}));
  sub->add_option("--seed", c.seed, "Seed for model init and training");
  sub->add_option("--set", c.sets, "Override a config key, e.g. model.depth=6")->take_all();
  sub->add_option("-o,--out", c.out, "Output file (stdout when omitted)");
  sub->add_flag("-q,--quiet", c.quiet, "Do not echo the resolved config");
}

// File keys, then profile defaults for anything still unset, then the seed
// from PHONEBENCH_SEED, then flags.
json resolve(const Common& c, const std::string& command) {
  json j = c.config_path.empty() ? json::object() : read_json_file(c.config_path);
  if (!j.is_object()) usage_error("config must be a JSON object");
  for (const auto& s : c.sets) apply_set(j, s);
  if (!c.profile.empty()) j["profile"] = c.profile;
  for (const auto& [k, _] : j.items())
    if (!contains(kTopKeys, k)) usage_error("unknown config key '" + k + "'");

  const std::string profile = j.value("profile", std::string("desk"));
  if (profile != "paper" && profile != "desk") usage_error("profile must be paper or desk");
  j["profile"] = profile;

  if (!j.contains("model")) j["model"] = json::object();
  if (!j["model"].is_object()) usage_error("'model' must be an object");
  if (profile == "desk" && !j["model"].contains("subsample_channels")) j["model"]["subsample_channels"] = 16;
  if (!j.contains("budget"))
    j["budget"] = {{"target", profile == "desk" ? 100000 : 5000000}, {"tolerance", 0.03}};

  json train = json::parse(take([&] {
    char* s = nullptr;
    check(pb_train_profile(profile.c_str(), &s));
    return s;
  }()));
  if (j.contains("train")) {
    if (!j["train"].is_object()) usage_error("'train' must be an object");
    for (const auto& [k, v] : j["train"].items()) train[k] = v;
  }
  j["train"] = train;

  if (!j.contains("seed")) j["seed"] = 0;
  if (const char* env = std::getenv("PHONEBENCH_SEED")) {
    try {
      j["seed"] = std::stoull(env);
    } catch (const std::exception&) {
      usage_error(std::string("PHONEBENCH_SEED is not an unsigned integer: ") + env);
    }
  }
  if (c.seed) j["seed"] = *c.seed;
  if (!j["seed"].is_number_integer() || j["seed"].get<long long>() < 0) usage_error("'seed' must be a non-negative integer");
  j["train"]["seed"] = j["seed"];
  j["command"] = command;
  return j;
}

std::string hash_of(const json& resolved) {
  char* h = nullptr;
  check(pb_config_hash(resolved.dump().c_str(), &h));
  return take(h);
}

void echo(const Common& c, const json& resolved) {
  if (!c.quiet) std::cerr << json{{"resolved_config", resolved}}.dump() << '\n';
}

void emit(const std::string& path, const std::string& payload) {
  if (path.empty() || path == "-") {
    std::cout << payload;
    return;
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Failure{PB_ERR_IO, "cannot write " + path};
  os << payload;
  if (!os) throw Failure{PB_ERR_IO, "failed writing " + path};
}

json merged(const json& base, const json& over) {
  json out = base;
  for (const auto& [k, v] : over.items()) out[k] = v;
  return out;
}

// One model config per row. Sweep keys are model keys plus "budget" (a
// parameter target solved for width).
std::vector<json> expand(const json& resolved, bool solve) {
  std::vector<json> items;
  const bool has_sweep = resolved.contains("sweep");
  const int sources = resolved.contains("preset") + resolved.contains("configs") + has_sweep;
  if (sources > 1) usage_error("use only one of preset, configs and sweep");
  if (resolved.contains("preset")) {
    for (const auto& c : preset_configs(resolved["preset"].get<std::string>())) items.push_back(c);
    return items;  // published widths; the budget does not apply
  }
  if (resolved.contains("configs")) {
    if (!resolved["configs"].is_array()) usage_error("'configs' must be an array");
    for (const auto& c : resolved["configs"]) items.push_back(merged(resolved["model"], c));
  } else if (has_sweep) {
    const json& sweep = resolved["sweep"];
    if (!sweep.is_object()) usage_error("'sweep' must be an object of lists");
    items.push_back(resolved["model"]);
    for (const auto& [k, values] : sweep.items()) {
      if (k != "budget" && !contains(kModelKeys, k)) usage_error("unknown sweep key '" + k + "'");
      if (!values.is_array()) usage_error("sweep key '" + k + "' must be a list");
      std::vector<json> next;
      for (const auto& item : items)
        for (const auto& v : values) {
          json n = item;
          if (k == "budget") n["$budget"] = v;
          else n[k] = v;
          next.push_back(n);
        }
      items = std::move(next);
    }
  } else {
    items.push_back(resolved["model"]);
  }
  for (auto& item : items) {
    json budget = resolved["budget"];
    if (item.contains("$budget")) {
      if (budget.is_null()) budget = {{"tolerance", 0.03}};
      budget["target"] = item["$budget"];
      item.erase("$budget");
    }
    if (!solve || item.contains("width") || budget.is_null()) continue;
    if (!budget.is_object()) usage_error("'budget' must be an object or null");
    for (const auto& [k, _] : budget.items())
      if (k != "target" && k != "tolerance") usage_error("unknown budget key '" + k + "'");
    if (!budget.contains("target") || !budget["target"].is_number_integer() || budget["target"].get<long long>() <= 0)
      usage_error("budget.target must be a positive integer");
    std::size_t width = 0;
    check(pb_solve_width(item.dump().c_str(), budget["target"].get<std::uint64_t>(), budget.value("tolerance", 0.03),
                         &width));
    item["width"] = width;
  }
  return items;
}

json single_model(const json& resolved) {
  auto items = expand(resolved, true);
  if (items.size() != 1) usage_error("this command takes exactly one model config");
  return items.front();
}

CorpusPtr open_corpus(const json& resolved, const char* key) {
  if (!resolved.contains(key)) usage_error(std::string("missing '") + key + "' (set manifest or synth)");
  const json& c = resolved[key];
  if (!c.is_object() || c.size() != 1 || !(c.contains("manifest") || c.contains("synth")))
    usage_error(std::string("'") + key + "' must be {\"manifest\": path} or {\"synth\": spec}");
  pb_corpus* out = nullptr;
  if (c.contains("manifest")) check(pb_corpus_load(c["manifest"].get<std::string>().c_str(), &out));
  else check(pb_corpus_synth(c["synth"].dump().c_str(), &out));
  return CorpusPtr(out);
}

ModelPtr create_model(const json& config, std::uint64_t seed) {
  pb_model* m = nullptr;
  check(pb_model_create(config.dump().c_str(), seed, &m));
  return ModelPtr(m);
}

ModelPtr load_model(const std::string& path) {
  pb_model* m = nullptr;
  check(pb_model_load(path.c_str(), &m));
  return ModelPtr(m);
}

std::optional<std::string> range_arg(const json& resolved) {
  if (!resolved.contains("range") || resolved["range"].is_null()) return std::nullopt;
  const json& r = resolved["range"];
  return r.is_string() ? r.get<std::string>() : r.dump();
}

// ---- commands -----------------------------------------------------------

void cmd_rf(const Common& c, bool exact) {
  json r = resolve(c, "rf");
  if (exact) r["exact"] = true;
  echo(c, r);
  json list = json::array();
  for (auto& item : expand(r, false)) list.push_back(item);
  char* csv = nullptr;
  check(pb_rf_csv(list.dump().c_str(), r.value("exact", false) ? 1 : 0, hash_of(r).c_str(), &csv));
  emit(c.out, take(csv));
}

void cmd_params(const Common& c, const std::string& mode) {
  json r = resolve(c, "params " + mode);
  echo(c, r);
  json list = json::array();
  for (auto& item : expand(r, mode == "solve")) list.push_back(item);
  char* csv = nullptr;
  check(pb_params_csv(list.dump().c_str(), hash_of(r).c_str(), &csv));
  emit(c.out, take(csv));
}

void cmd_train(const Common& c, const std::string& out_dir) {
  if (out_dir.empty()) usage_error("train needs --out-dir");
  json r = resolve(c, "train");
  r["model"] = single_model(r);
  r.erase("budget");
  echo(c, r);
  const std::string hash = hash_of(r);
  auto corpus = open_corpus(r, "corpus");
  auto model = create_model(r["model"], r["seed"].get<std::uint64_t>());
  char* history = nullptr;
  char* summary = nullptr;
  check(pb_train(model.get(), corpus.get(), r["train"].dump().c_str(), hash.c_str(), &history, &summary));
  const std::string history_csv = take(history);
  json s = json::parse(take(summary));
  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  check(pb_model_save(model.get(), (dir / "model.pbck").c_str()));
  emit((dir / "history.csv").string(), history_csv);
  emit((dir / "config.json").string(), r.dump(2) + "\n");
  if (r.contains("eval_corpus")) {
    auto eval_corpus = open_corpus(r, "eval_corpus");
    double acc = 0.0;
    char* csv = nullptr;
    const std::string cm = r.value("class_map", std::string());
    check(pb_evaluate(model.get(), eval_corpus.get(), nullptr, cm.empty() ? nullptr : cm.c_str(), hash.c_str(), &acc,
                      &csv));
    emit((dir / "eval.csv").string(), take(csv));
    s["eval_accuracy"] = acc;
  }
  emit((dir / "summary.json").string(), s.dump(2) + "\n");
  if (!c.out.empty()) emit(c.out, history_csv);
}

void cmd_eval(const Common& c, const std::string& checkpoint) {
  json r = resolve(c, "eval");
  r["checkpoint"] = checkpoint;
  echo(c, r);
  r.erase("checkpoint");
  auto model = load_model(checkpoint);
  auto corpus = open_corpus(r, "corpus");
  const auto range = range_arg(r);
  const std::string cm = r.value("class_map", std::string());
  double acc = 0.0;
  char* csv = nullptr;
  json hashed = r;
  hashed["checkpoint"] = fs::path(checkpoint).filename().string();
  check(pb_evaluate(model.get(), corpus.get(), range ? range->c_str() : nullptr, cm.empty() ? nullptr : cm.c_str(),
                    hash_of(hashed).c_str(), &acc, &csv));
  emit(c.out, take(csv));
}

void cmd_transfer(const Common& c, const std::vector<std::string>& checkpoints) {
  if (checkpoints.empty()) usage_error("transfer needs at least one --checkpoint");
  json r = resolve(c, "transfer");
  if (!r.contains("ranges")) r["ranges"] = json::array({2, 8, "unlimited"});
  echo(c, r);
  std::vector<ModelPtr> owned;
  std::vector<const pb_model*> models;
  json names = json::array();
  for (const auto& p : checkpoints) {
    owned.push_back(load_model(p));
    models.push_back(owned.back().get());
    names.push_back(fs::path(p).filename().string());
  }
  auto corpus = open_corpus(r, "corpus");
  json hashed = r;
  hashed["checkpoints"] = names;
  char* csv = nullptr;
  check(pb_transfer(models.data(), models.size(), corpus.get(), r["ranges"].dump().c_str(), hash_of(hashed).c_str(),
                    &csv));
  emit(c.out, take(csv));
}

void cmd_bench(const Common& c, const std::string& checkpoint, const std::string& summary_path) {
  json r = resolve(c, "bench");
  ModelPtr model;
  if (checkpoint.empty()) {
    r["model"] = single_model(r);
    model = create_model(r["model"], r["seed"].get<std::uint64_t>());
  } else {
    model = load_model(checkpoint);
    char* cfg = nullptr;
    check(pb_model_config(model.get(), &cfg));
    r["model"] = json::parse(take(cfg));
  }
  r.erase("budget");
  json bench = r.value("bench", json::object());
  if (!bench.contains("seed")) bench["seed"] = r["seed"];
  r["bench"] = bench;
  echo(c, r);
  const std::string hash = hash_of(r);
  char* csv = nullptr;
  double exponent = 0.0;
  check(pb_bench(model.get(), bench.dump().c_str(), hash.c_str(), &csv, &exponent));
  emit(c.out, take(csv));
  if (!summary_path.empty()) {
    json s = {{"config_hash", hash}, {"scaling_exponent", exponent}};
    emit(summary_path, s.dump(2) + "\n");
  }
}

void cmd_synth(const Common& c, const std::string& out_dir) {
  if (out_dir.empty()) usage_error("synth needs --out-dir");
  json r = resolve(c, "synth");
  if (!r.contains("corpus")) r["corpus"] = {{"synth", json::object()}};
  if (!r["corpus"].contains("synth")) usage_error("synth needs corpus.synth");
  echo(c, r);
  auto corpus = open_corpus(r, "corpus");
  check(pb_corpus_save(corpus.get(), out_dir.c_str()));
  const json s = {{"config_hash", hash_of(r)},
                  {"utterances", pb_corpus_size(corpus.get())},
                  {"manifest", (fs::path(out_dir) / "manifest.tsv").string()}};
  emit(c.out, s.dump(2) + "\n");
}

void cmd_fbank(const Common& c, const std::string& wav, const std::string& features) {
  if (wav.empty() || features.empty()) usage_error("fbank needs --wav and --features");
  std::size_t frames = 0;
  check(pb_fbank_wav(wav.c_str(), features.c_str(), &frames));
  emit(c.out, json{{"features", features}, {"frames", frames}}.dump() + "\n");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Phoneme-recognition architecture benchmark"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(pb_version()));

  Common common;
  bool exact = false;
  std::string out_dir, checkpoint, summary, wav, features;
  std::vector<std::string> checkpoints;

  auto* rf = app.add_subcommand("rf", "Receptive-field table as CSV");
  add_common(rf, common);
  rf->add_flag("--exact", exact, "Include the frontend halo and analysis window");
  std::string preset;
  for (auto* sub : {rf}) sub->add_option("--preset", preset, "table1 or table2");

  auto* params = app.add_subcommand("params", "Parameter counts");
  params->require_subcommand(1);
  auto* count = params->add_subcommand("count", "Per-component counts for each config");
  auto* solve = params->add_subcommand("solve", "Solve width for the budget, then count");
  for (auto* sub : {count, solve}) {
    add_common(sub, common);
    sub->add_option("--preset", preset, "table1, table2, table3 or table4");
  }

  auto* train = app.add_subcommand("train", "Train one model");
  add_common(train, common);
  train->add_option("--out-dir", out_dir, "Directory for checkpoint, history and summary")->required();

  auto* eval = app.add_subcommand("eval", "Frame accuracy of a checkpoint");
  add_common(eval, common);
  eval->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
  std::string range;
  eval->add_option("--range", range, "Inference attention range (frames or unlimited)");

  auto* transfer = app.add_subcommand("transfer", "Train-range by infer-range accuracy matrix");
  add_common(transfer, common);
  transfer->add_option("--checkpoint", checkpoints, "Checkpoints, one per row")->required();

  auto* bench = app.add_subcommand("bench", "Encoder inference time against input length");
  add_common(bench, common);
  bench->add_option("--checkpoint", checkpoint, "Model checkpoint (random init from config when omitted)");
  bench->add_option("--summary", summary, "JSON file for the fitted exponent");

  auto* synth = app.add_subcommand("synth", "Write a synthetic corpus");
  add_common(synth, common);
  synth->add_option("--out-dir", out_dir, "Corpus directory")->required();

  auto* fbank = app.add_subcommand("fbank", "Log-mel features from a WAV file");
  add_common(fbank, common);
  fbank->add_option("--wav", wav, "16 kHz 16-bit mono WAV")->required();
  fbank->add_option("--features", features, "Output feature file")->required();

  CLI11_PARSE(app, argc, argv);

  std::string command = "unknown";
  try {
    if (!preset.empty()) common.sets.push_back("preset=" + json(preset).dump());
    if (!range.empty()) common.sets.push_back("range=" + json(range).dump());
    if (rf->parsed()) command = "rf", cmd_rf(common, exact);
    else if (count->parsed()) command = "params count", cmd_params(common, "count");
    else if (solve->parsed()) command = "params solve", cmd_params(common, "solve");
    else if (train->parsed()) command = "train", cmd_train(common, out_dir);
    else if (eval->parsed()) command = "eval", cmd_eval(common, checkpoint);
    else if (transfer->parsed()) command = "transfer", cmd_transfer(common, checkpoints);
    else if (bench->parsed()) command = "bench", cmd_bench(common, checkpoint, summary);
    else if (synth->parsed()) command = "synth", cmd_synth(common, out_dir);
    else if (fbank->parsed()) command = "fbank", cmd_fbank(common, wav, features);
    std::cout.flush();
    if (!std::cout) throw Failure{PB_ERR_IO, "failed writing standard output"};
    return 0;
  } catch (const Failure& f) {
    std::cerr << json{{"error", pb_status_name(f.status)}, {"code", static_cast<int>(f.status)}, {"command", command},
                      {"message", f.message}}
                     .dump()
              << '\n';
    return static_cast<int>(f.status);
  } catch (const json::exception& e) {
    std::cerr << json{{"error", "config"}, {"code", static_cast<int>(PB_ERR_CONFIG)}, {"command", command},
                      {"message", e.what()}}
                     .dump()
              << '\n';
    return static_cast<int>(PB_ERR_CONFIG);
  } catch (const std::exception& e) {
    std::cerr << json{{"error", "internal"}, {"code", static_cast<int>(PB_ERR_INTERNAL)}, {"command", command},
                      {"message", e.what()}}
                     .dump()
              << '\n';
    return static_cast<int>(PB_ERR_INTERNAL);
  }
}
