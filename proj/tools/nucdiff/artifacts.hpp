#pragma once

// File-level plumbing for the command-line tool: digests, run manifests,
// prior sidecars, CSV and SVG emission.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

#include "nucdiff/score_model.hpp"
#include "nucdiff/synth.hpp"

namespace nucdiff::cli {

namespace fs = std::filesystem;
using nlohmann::json;

/// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const fs::path& path);

/// Exactly one per command invocation, written as manifest.json.
class RunManifest {
 public:
  RunManifest(fs::path out_dir, std::string command, std::string config, std::uint64_t seed);

  void add_input(const std::string& name, const fs::path& path);
  void add_output(const std::string& name, const fs::path& path);
  void set(const std::string& key, json value) { extra_[key] = std::move(value); }

  /// Writes <out_dir>/manifest.json; outputs are listed relative to out_dir.
  void write() const;

 private:
  fs::path out_dir_;
  std::string command_;
  std::string config_;
  std::uint64_t seed_;
  std::chrono::steady_clock::time_point start_;
  json inputs_ = json::object();
  json outputs_ = json::object();
  json extra_ = json::object();
};

void write_json(const fs::path& path, const json& j);
json read_json(const fs::path& path);

json spec_to_json(const SynthSpec& spec);

/// prior.json plus prior_means.ndt (one mean frame per component).
void write_prior(const fs::path& dir, const SynthInstance& inst);
std::unique_ptr<ScoreModel> read_prior(const fs::path& json_path, std::string* kind = nullptr);

/// Shortest round-trip decimal form.
std::string format_double(double v);

class CsvWriter {
 public:
  CsvWriter(const fs::path& path, const std::vector<std::string>& header);
  void row(const std::vector<std::string>& cells);

 private:
  std::ofstream out_;
  fs::path path_;
  std::size_t columns_;
};

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

/// Line plot with markers; the data table is embedded as an XML comment.
void write_line_plot(const fs::path& path, const std::string& title, const std::string& x_label,
                     const std::string& y_label, const std::vector<Series>& series);

}  // namespace nucdiff::cli
