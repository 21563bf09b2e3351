// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "harness/bench.hpp"
#include "harness/trainer.hpp"

namespace phonebench {

// FNV-1a of the compact, key-sorted dump of a resolved config.
std::string config_hash(const nlohmann::json& resolved);

// Shortest round-trip decimal form; identical bits give identical text.
std::string format_number(double v);

// CSV with a leading "# config_hash=<hash>" comment and a header row.
struct CsvTable {
  std::string hash;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::string str() const;
  void write(const std::filesystem::path& path) const;
};

CsvTable history_table(const std::string& hash, const TrainResult& r);
// One "all" row then one row per class that occurs.
CsvTable eval_table(const std::string& hash, const EvalResult& r, const std::vector<std::string>& class_names);
CsvTable transfer_table(const std::string& hash, const TransferMatrix& m);
CsvTable timing_table(const std::string& hash, const std::vector<TimingPoint>& points);

void write_json(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace phonebench
