// SPDX-License-Identifier: Apache-2.0
#include "harness/report.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "core/error.hpp"
#include "models/config.hpp"

namespace phonebench {

std::string config_hash(const nlohmann::json& resolved) { return fnv1a_hex(resolved.dump()); }

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string CsvTable::str() const {
  std::ostringstream os;
  os << "# config_hash=" << hash << '\n';
  const auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) os << (i ? "," : "") << cells[i];
    os << '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
  return os.str();
}

void CsvTable::write(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorCode::Io, "cannot write " + path.string());
  os << str();
  if (!os) fail(ErrorCode::Io, "write failed for " + path.string());
}

CsvTable history_table(const std::string& hash, const TrainResult& r) {
  CsvTable t{hash, {"iteration", "lr", "loss", "grad_norm"}, {}};
  for (const auto& h : r.history) {
    t.rows.push_back({std::to_string(h.iteration), format_number(h.lr), format_number(h.loss), format_number(h.grad_norm)});
  }
  return t;
}

CsvTable eval_table(const std::string& hash, const EvalResult& r, const std::vector<std::string>& class_names) {
  CsvTable t{hash, {"class", "name", "correct", "total", "accuracy"}, {}};
  t.rows.push_back({"all", "all", std::to_string(r.correct), std::to_string(r.total), format_number(r.accuracy())});
  for (std::size_t c = 0; c < r.class_total.size(); ++c) {
    if (r.class_total[c] == 0) continue;
    t.rows.push_back({std::to_string(c), c < class_names.size() ? class_names[c] : std::to_string(c),
                      std::to_string(r.class_correct[c]), std::to_string(r.class_total[c]),
                      format_number(r.class_accuracy(c))});
  }
  return t;
}

CsvTable transfer_table(const std::string& hash, const TransferMatrix& m) {
  CsvTable t{hash, {"train_range"}, {}};
  for (const auto& r : m.infer_ranges) t.header.push_back("infer_" + r.to_string());
  for (std::size_t i = 0; i < m.train_ranges.size(); ++i) {
    std::vector<std::string> row{m.train_ranges[i].to_string()};
    for (double a : m.accuracy[i]) row.push_back(format_number(a));
    t.rows.push_back(std::move(row));
  }
  return t;
}

CsvTable timing_table(const std::string& hash, const std::vector<TimingPoint>& points) {
  CsvTable t{hash, {"T", "T_encoder", "ms"}, {}};
  for (const auto& p : points) {
    t.rows.push_back({std::to_string(p.input_frames), std::to_string(p.encoder_frames), format_number(p.ms_per_sequence)});
  }
  return t;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorCode::Io, "cannot write " + path.string());
  os << j.dump(2) << '\n';
  if (!os) fail(ErrorCode::Io, "write failed for " + path.string());
}

}  // namespace phonebench
