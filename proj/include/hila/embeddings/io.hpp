#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hila/embeddings/types.hpp"

namespace hila {

namespace fs = std::filesystem;

namespace detail {
inline std::uint64_t swap_bytes(std::uint64_t x) {
  std::uint64_t r = 0;
  for (int i = 0; i < 8; ++i) r = (r << 8) | ((x >> (8 * i)) & 0xFF);
  return r;
}
}  // namespace detail

// Embedding file: ASCII header line "rows cols\n", then rows*cols
// little-endian IEEE-754 binary64 values in row-major order.

inline void write_embedding(const fs::path& path, const Matrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << m.rows() << ' ' << m.cols() << '\n';
  for (double x : m.data()) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(x);
    if constexpr (std::endian::native == std::endian::big) bits = detail::swap_bytes(bits);
    char buf[8];
    std::memcpy(buf, &bits, 8);
    out.write(buf, 8);
  }
  if (!out) throw IoError("write failed for " + path.string());
}

inline Matrix read_embedding(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("missing embedding file " + path.string());
  std::string header;
  if (!std::getline(in, header)) throw IoError("empty embedding file " + path.string());
  std::istringstream hs(header);
  long long rows = -1, cols = -1;
  if (!(hs >> rows >> cols) || rows < 0 || cols < 0) {
    throw IoError("malformed header '" + header + "' in " + path.string());
  }
  const auto n = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
  std::vector<double> data(n);
  for (std::size_t i = 0; i < n; ++i) {
    char buf[8];
    if (!in.read(buf, 8)) throw IoError("truncated embedding file " + path.string());
    std::uint64_t bits;
    std::memcpy(&bits, buf, 8);
    if constexpr (std::endian::native == std::endian::big) bits = detail::swap_bytes(bits);
    data[i] = std::bit_cast<double>(bits);
  }
  if (in.peek() != std::char_traits<char>::eof()) throw IoError("trailing bytes in " + path.string());
  Matrix m(static_cast<std::size_t>(rows), static_cast<std::size_t>(cols), std::move(data));
  detail::check_finite(m, path.string());
  return m;
}

/// One region index per line.
inline void write_parent_map(const fs::path& path, const std::vector<std::size_t>& parents) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (auto p : parents) out << p << '\n';
}

inline std::vector<std::size_t> read_parent_map(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("missing parent map " + path.string());
  std::vector<std::size_t> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    long long v;
    if (!(ls >> v) || v < 0) {
      throw IoError("bad region index on line " + std::to_string(lineno) + " of " + path.string());
    }
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

/// Reads a JSON manifest:
///   { "prompts": {"patch": <path>, "region": <path>},          (optional)
///     "patients": [ {"patient_id", "censor", "time",
///                    "patch", "region", "parent_map"} ... ] }
/// Paths are relative to the manifest's directory.
inline Cohort load_cohort(const fs::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError("missing manifest " + manifest_path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed manifest " + manifest_path.string() + ": " + e.what());
  }
  const fs::path base = manifest_path.parent_path();
  Cohort c;

  fs::path patch_prompt_file, region_prompt_file;
  if (j.contains("prompts")) {
    const auto& pj = j.at("prompts");
    if (pj.contains("patch")) {
      patch_prompt_file = base / pj.at("patch").get<std::string>();
      c.patch_prompts = {Level::patch, read_embedding(patch_prompt_file)};
    }
    if (pj.contains("region")) {
      region_prompt_file = base / pj.at("region").get<std::string>();
      c.region_prompts = {Level::region, read_embedding(region_prompt_file)};
    }
  }

  fs::path first_patch_file;
  try {
    for (const auto& pj : j.at("patients")) {
      PatientRecord p;
      p.patient_id = pj.at("patient_id").get<std::string>();
      p.censor = pj.at("censor").get<int>();
      p.time = pj.at("time").get<double>();
      if (pj.contains("time_bin")) p.time_bin = pj.at("time_bin").get<int>();
      const fs::path patch_file = base / pj.at("patch").get<std::string>();
      const fs::path region_file = base / pj.at("region").get<std::string>();
      p.patch_bag = {Level::patch, read_embedding(patch_file), read_parent_map(base / pj.at("parent_map").get<std::string>())};
      p.region_bag = {Level::region, read_embedding(region_file), {}};
      if (first_patch_file.empty()) first_patch_file = patch_file;

      if (!c.patients.empty() && p.patch_bag.dim() != c.dim()) {
        throw DimensionError("d mismatch: " + patch_file.string() + " has d=" + std::to_string(p.patch_bag.dim()) +
                             " but " + first_patch_file.string() + " has d=" + std::to_string(c.dim()));
      }
      if (p.region_bag.dim() != p.patch_bag.dim()) {
        throw DimensionError("d mismatch: " + region_file.string() + " has d=" + std::to_string(p.region_bag.dim()) +
                             " but " + patch_file.string() + " has d=" + std::to_string(p.patch_bag.dim()));
      }
      for (const auto& [ps, file] : {std::pair{&c.patch_prompts, patch_prompt_file},
                                     std::pair{&c.region_prompts, region_prompt_file}}) {
        if (!ps->empty() && ps->dim() != p.patch_bag.dim()) {
          throw DimensionError("d mismatch: " + patch_file.string() + " has d=" + std::to_string(p.patch_bag.dim()) +
                               " but prompt file " + file.string() + " has d=" + std::to_string(ps->dim()));
        }
      }
      validate_patient(p);
      c.patients.push_back(std::move(p));
    }
    if (j.contains("bin_edges")) c.bin_edges = j.at("bin_edges").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed manifest " + manifest_path.string() + ": " + e.what());
  }
  validate_cohort(c);
  return c;
}

/// Writes every bag, the prompt sets and manifest.json into `dir`.
/// Returns the manifest path.
inline fs::path write_cohort(const Cohort& c, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());

  nlohmann::json j;
  if (!c.patch_prompts.empty() || !c.region_prompts.empty()) {
    j["prompts"] = nlohmann::json::object();
    if (!c.patch_prompts.empty()) {
      write_embedding(dir / "prompts_patch.emb", c.patch_prompts.prompts);
      j["prompts"]["patch"] = "prompts_patch.emb";
    }
    if (!c.region_prompts.empty()) {
      write_embedding(dir / "prompts_region.emb", c.region_prompts.prompts);
      j["prompts"]["region"] = "prompts_region.emb";
    }
  }
  j["patients"] = nlohmann::json::array();
  for (const auto& p : c.patients) {
    const std::string stem = p.patient_id;
    write_embedding(dir / (stem + "_patch.emb"), p.patch_bag.tokens);
    write_embedding(dir / (stem + "_region.emb"), p.region_bag.tokens);
    write_parent_map(dir / (stem + "_parents.txt"), p.patch_bag.parent_region);
    nlohmann::json pj{{"patient_id", p.patient_id}, {"censor", p.censor},    {"time", p.time},
                      {"patch", stem + "_patch.emb"}, {"region", stem + "_region.emb"},
                      {"parent_map", stem + "_parents.txt"}};
    if (p.time_bin > 0) pj["time_bin"] = p.time_bin;
    j["patients"].push_back(std::move(pj));
  }
  if (!c.bin_edges.empty()) j["bin_edges"] = c.bin_edges;
  const fs::path manifest = dir / "manifest.json";
  std::ofstream out(manifest);
  if (!out) throw IoError("cannot write " + manifest.string());
  out << j.dump(2) << '\n';
  return manifest;
}

}  // namespace hila
