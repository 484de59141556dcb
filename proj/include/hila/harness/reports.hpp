#pragma once

#include <cstdio>
#include <cstdlib>
#include <optional>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hila/harness/train.hpp"

namespace hila::harness {

namespace fs = std::filesystem;

inline constexpr const char* kRiskConvention =
    "risk = -sum_{t=1..T} S(t), the negative expected discrete survival; higher means riskier";

/// Shortest text that parses back to the same double.
inline std::string fmt_double(double x) {
  char buf[32];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, x);
    if (std::strtod(buf, nullptr) == x) break;
  }
  return buf;
}

inline std::string fmt_optional(const std::optional<double>& x) { return x ? fmt_double(*x) : "NA"; }

class CsvWriter {
 public:
  CsvWriter(const fs::path& path, const std::vector<std::string>& header) : path_(path), out_(path) {
    if (!out_) throw IoError("cannot write " + path.string());
    row(header);
  }

  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
    out_ << '\n';
    if (!out_) throw IoError("write failed for " + path_.string());
  }

 private:
  fs::path path_;
  std::ofstream out_;
};

/// Minimal reader for the CSVs written here (no quoting).
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw IoError("missing CSV column '" + name + "'");
  }
};

inline CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("missing CSV file " + path.string());
  const auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) {
      if (!cell.empty() && cell.back() == '\r') cell.pop_back();
      cells.push_back(cell);
    }
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
  };
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty CSV file " + path.string());
  t.header = split(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split(line);
    if (cells.size() != t.header.size()) throw IoError("ragged row in " + path.string());
    t.rows.push_back(std::move(cells));
  }
  return t;
}

inline void write_km_rows(CsvWriter& w, const std::vector<std::string>& prefix, const std::string& stratum,
                          const metrics::KMCurve& km, long n) {
  for (const auto& pt : metrics::step_points(km, n)) {
    auto cells = prefix;
    cells.insert(cells.end(), {stratum, fmt_double(pt.time), fmt_double(pt.survival), std::to_string(pt.at_risk)});
    w.row(cells);
  }
}

/// Writes summary.csv, folds.csv, risks.csv, km.csv, losses.csv and
/// metadata.json. Output depends only on the inputs (no timestamps).
inline void emit_reports(const std::vector<CrossValidation>& runs, const TrainConfig& cfg,
                         const nlohmann::json& cohort_info, const fs::path& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + out_dir.string() + ": " + ec.message());

  CsvWriter summary(out_dir / "summary.csv", {"variant", "folds_used", "mean_c_index", "std_c_index", "formatted"});
  CsvWriter folds(out_dir / "folds.csv",
                  {"variant", "fold", "c_index", "logrank_chi_square", "logrank_p", "steps", "final_loss"});
  CsvWriter risks(out_dir / "risks.csv", {"variant", "fold", "patient_id", "time", "censor", "risk"});
  CsvWriter km(out_dir / "km.csv", {"variant", "fold", "stratum", "time", "survival", "at_risk"});
  CsvWriter losses(out_dir / "losses.csv", {"variant", "fold", "epoch", "loss"});

  nlohmann::json variants = nlohmann::json::array();
  for (const auto& run : runs) {
    const std::string v = to_string(run.variant);
    summary.row({v, std::to_string(run.summary.folds_used), fmt_optional(run.summary.mean),
                 fmt_optional(run.summary.std), run.summary.formatted()});
    for (const auto& f : run.folds) {
      const std::string k = std::to_string(f.fold);
      folds.row({v, k, fmt_optional(f.c_index),
                 f.logrank ? fmt_double(f.logrank->chi_square) : "NA", f.logrank ? fmt_double(f.logrank->p_value) : "NA",
                 std::to_string(f.steps), f.epoch_loss.empty() ? "NA" : fmt_double(f.epoch_loss.back())});
      for (const auto& r : f.risks)
        risks.row({v, k, r.patient_id, fmt_double(r.time), std::to_string(r.censor), fmt_double(r.risk)});
      if (f.n_low > 0) write_km_rows(km, {v, k}, "low", f.km_low, f.n_low);
      if (f.n_high > 0) write_km_rows(km, {v, k}, "high", f.km_high, f.n_high);
      for (std::size_t e = 0; e < f.epoch_loss.size(); ++e)
        losses.row({v, k, std::to_string(e + 1), fmt_double(f.epoch_loss[e])});
    }
    variants.push_back({{"variant", v},
                        {"description", describe(run.variant)},
                        {"patch_scorer", static_cast<int>(run.switches.patch_scorer)},
                        {"region_tokens", run.switches.region_tokens},
                        {"cross_level", run.switches.cross_level},
                        {"contrastive", run.switches.contrastive},
                        {"summary", run.summary.formatted()}});
  }

  nlohmann::json meta{{"config", to_json(cfg)},
                      {"risk_score_convention", kRiskConvention},
                      {"censor_convention", "censor = 1 means right-censored, 0 means event observed"},
                      {"variants", variants},
                      {"cohort", cohort_info}};
  std::ofstream m(out_dir / "metadata.json");
  if (!m) throw IoError("cannot write " + (out_dir / "metadata.json").string());
  m << meta.dump(2) << '\n';
}

}  // namespace hila::harness
