#include "artifacts.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include <openssl/evp.h>

#include "nucdiff/errors.hpp"
#include "nucdiff/score_models.hpp"

namespace nucdiff::cli {

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string() + " for hashing");
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 initialization failed");
  }
  std::array<char, 1 << 16> buf{};
  while (in.read(buf.data(), buf.size()) || in.gcount() > 0) {
    EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md.data(), &len);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int{md[i]};
  return hex.str();
}

RunManifest::RunManifest(fs::path out_dir, std::string command, std::string config, std::uint64_t seed)
    : out_dir_(std::move(out_dir)),
      command_(std::move(command)), config_(std::move(config)), seed_(seed), start_(std::chrono::steady_clock::now()) {}

void RunManifest::add_input(const std::string& name, const fs::path& path) {
  inputs_[name] = {{"path", path.string()}, {"sha256", sha256_file(path)}};
}

void RunManifest::add_output(const std::string& name, const fs::path& path) {
  outputs_[name] = {{"path", path.lexically_relative(out_dir_).generic_string()}, {"sha256", sha256_file(path)}};
}

void RunManifest::write() const {
  json j;
  j["command"] = command_;
  j["config"] = config_;
  j["seed"] = seed_;
  j["version"] = NUCDIFF_VERSION;
  j["inputs"] = inputs_;
  j["outputs"] = outputs_;
  for (const auto& [k, v] : extra_.items()) j[k] = v;
  j["duration_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  write_json(out_dir_ / "manifest.json", j);
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string(), 0);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what(), e.byte);
  }
}

json spec_to_json(const SynthSpec& spec) {
  return {
      {"frame_height", spec.frame_height},
      {"frame_width", spec.frame_width},
      {"num_frames", spec.num_frames},
      {"background_rank", spec.background_rank},
      {"background_amplitude", spec.background_amplitude},
      {"foreground_kind", to_string(spec.foreground_kind)},
      {"foreground_params",
       {{"sparse_density", spec.foreground.sparse_density},
        {"sparse_amplitude", spec.foreground.sparse_amplitude},
        {"blob_amplitude", spec.foreground.blob_amplitude},
        {"texture_std", spec.foreground.texture_std}}},
      {"motion_level", spec.motion_level},
      {"observation_noise_std", spec.observation_noise_std},
      {"seed", spec.seed},
  };
}

void write_prior(const fs::path& dir, const SynthInstance& inst) {
  const int h = inst.spec.frame_height;
  const int w = inst.spec.frame_width;
  json j{{"height", h}, {"width", w}, {"means", "prior_means.ndt"}};
  std::vector<Frame> means;
  if (inst.gmm_prior) {
    j["kind"] = "gmm";
    j["components"] = json::array();
    for (const auto& c : inst.gmm_prior->components()) {
      j["components"].push_back({{"weight", c.weight}, {"stddev", c.stddev}});
      means.push_back(c.mean);
    }
  } else if (inst.gaussian_prior) {
    j["kind"] = "gaussian";
    j["stddev"] = inst.gaussian_prior->stddev();
    means.push_back(inst.gaussian_prior->mean());
  } else {
    return;
  }
  write_tensor(dir / "prior_means.ndt", to_tensor(stack_frames(means)));
  write_json(dir / "prior.json", j);
}

std::unique_ptr<ScoreModel> read_prior(const fs::path& json_path, std::string* kind_out) {
  const json j = read_json(json_path);
  try {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind_out) *kind_out = kind;
    const auto means = unstack_frames(to_casorati(read_tensor(json_path.parent_path() / j.at("means").get<std::string>())));
    if (kind == "gaussian") {
      if (means.size() != 1) throw FormatError("gaussian prior needs exactly one mean frame", 0);
      return std::make_unique<GaussianPrior>(means.front(), j.at("stddev").get<double>());
    }
    if (kind == "gmm") {
      const auto& comps = j.at("components");
      if (comps.size() != means.size()) {
        throw FormatError("prior lists " + std::to_string(comps.size()) + " components but " +
                              std::to_string(means.size()) + " mean frames",
                          0);
      }
      std::vector<GmmComponent> out;
      for (std::size_t k = 0; k < comps.size(); ++k) {
        out.push_back({comps[k].at("weight").get<double>(), means[k], comps[k].at("stddev").get<double>()});
      }
      return std::make_unique<GmmPrior>(std::move(out));
    }
    throw FormatError("unknown prior kind '" + kind + "'", 0);
  } catch (const json::exception& e) {
    throw FormatError(json_path.string() + ": " + e.what(), 0);
  } catch (const std::invalid_argument& e) {
    throw FormatError(json_path.string() + ": " + e.what(), 0);
  }
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

CsvWriter::CsvWriter(const fs::path& path, const std::vector<std::string>& header)
    : out_(path), path_(path), columns_(header.size()) {
  if (!out_) throw std::runtime_error("cannot open " + path.string() + " for writing");
  row(header);
}

void CsvWriter::row(const std::vector<std::string>& cells) {
  if (cells.size() != columns_) throw std::logic_error("CSV row width mismatch in " + path_.string());
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out_ << ',';
    const bool quote = cells[i].find_first_of(",\"\n") != std::string::npos;
    if (quote) {
      out_ << '"';
      for (char c : cells[i]) out_ << (c == '"' ? "\"\"" : std::string(1, c));
      out_ << '"';
    } else {
      out_ << cells[i];
    }
  }
  out_ << '\n';
  if (!out_) throw std::runtime_error("failed writing " + path_.string());
}

namespace {

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

void write_line_plot(const fs::path& path, const std::string& title, const std::string& x_label,
                     const std::string& y_label, const std::vector<Series>& series) {
  constexpr double kW = 640, kH = 420, kLeft = 70, kRight = 150, kTop = 40, kBottom = 60;
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 <= x0) x0 -= 0.5, x1 += 0.5;
  if (y1 <= y0) y0 -= 0.5, y1 += 0.5;
  const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return kTop + ph - (y - y0) / (y1 - y0) * ph; };

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<!-- data\nseries," << x_label << ',' << y_label << '\n';
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) out << s.name << ',' << format_double(s.x[i]) << ',' << format_double(s.y[i]) << '\n';
  }
  out << "-->\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << kW / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << escape_xml(title) << "</text>\n";
  out << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"#333\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = x0 + (x1 - x0) * i / 4, yv = y0 + (y1 - y0) * i / 4;
    out << "<text x=\"" << px(xv) << "\" y=\"" << kTop + ph + 18 << "\" text-anchor=\"middle\">" << std::setprecision(3) << xv << "</text>\n";
    out << "<text x=\"" << kLeft - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << std::setprecision(3) << yv << "</text>\n";
  }
  out << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kH - 18 << "\" text-anchor=\"middle\">" << escape_xml(x_label) << "</text>\n";
  out << "<text transform=\"translate(18," << kTop + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">" << escape_xml(y_label) << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = kColors[k % std::size(kColors)];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (std::isfinite(s.x[i]) && std::isfinite(s.y[i])) out << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
    }
    out << "\"/>\n";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (std::isfinite(s.x[i]) && std::isfinite(s.y[i])) {
        out << "<circle cx=\"" << px(s.x[i]) << "\" cy=\"" << py(s.y[i]) << "\" r=\"3\" fill=\"" << color << "\"/>\n";
      }
    }
    out << "<text x=\"" << kLeft + pw + 12 << "\" y=\"" << kTop + 16 + 18 * k << "\" fill=\"" << color << "\">"
        << escape_xml(s.name) << "</text>\n";
  }
  out << "</svg>\n";
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace nucdiff::cli
