#include "cli.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "artifacts.hpp"
#include "nucdiff/errors.hpp"
#include "nucdiff/metrics.hpp"
#include "nucdiff/nuclear_diffusion.hpp"
#include "nucdiff/rpca.hpp"
#include "nucdiff/score_models.hpp"
#include "nucdiff/synth.hpp"

namespace nucdiff::cli {

namespace {

// Non-zero exit without an exception (non-convergence, all sweep runs failed).
struct CommandResult {
  int code = kOk;
};

// ---------------------------------------------------------------------------
// Option groups shared between subcommands

struct SynthOptions {
  SynthSpec spec;
  std::string foreground = "gmm-blobs";

  void bind(CLI::App* app) {
    app->add_option("--height", spec.frame_height, "Frame height")->capture_default_str();
    app->add_option("--width", spec.frame_width, "Frame width")->capture_default_str();
    app->add_option("--frames", spec.num_frames, "Frames per sequence")->capture_default_str();
    app->add_option("--rank", spec.background_rank, "Background rank")->capture_default_str();
    app->add_option("--amplitude", spec.background_amplitude, "Background amplitude")->capture_default_str();
    app->add_option("--foreground", foreground, "Foreground kind")
        ->check(CLI::IsMember({"sparse", "gaussian", "gmm-blobs"}))
        ->capture_default_str();
    app->add_option("--sparse-density", spec.foreground.sparse_density)->capture_default_str();
    app->add_option("--sparse-amplitude", spec.foreground.sparse_amplitude)->capture_default_str();
    app->add_option("--blob-amplitude", spec.foreground.blob_amplitude)->capture_default_str();
    app->add_option("--texture-std", spec.foreground.texture_std)->capture_default_str();
    app->add_option("--motion", spec.motion_level, "Foreground shift per frame, fraction of width")
        ->capture_default_str();
    app->add_option("--noise", spec.observation_noise_std, "Observation noise std")->capture_default_str();
    app->add_option("--seed", spec.seed)->capture_default_str();
  }

  SynthSpec resolve() const {
    SynthSpec s = spec;
    s.foreground_kind = parse_foreground_kind(foreground);
    s.validate();
    return s;
  }
};

struct RpcaOptions {
  std::optional<double> lambda;
  double mu = 2.0;
  int max_iters = 500;
  double rel_tol = 1e-6;

  void bind(CLI::App* app, const std::string& prefix = "") {
    app->add_option("--" + prefix + "lambda", lambda, "Sparsity weight (default 1/sqrt(max(n,p)))");
    app->add_option("--" + prefix + "mu", mu, "Data-fit weight")->capture_default_str();
    app->add_option("--" + prefix + "max-iters", max_iters)->capture_default_str();
    app->add_option("--" + prefix + "rel-tol", rel_tol)->capture_default_str();
  }

  RpcaConfig resolve() const {
    RpcaConfig cfg;
    cfg.lambda = lambda;
    cfg.mu = mu;
    cfg.max_iters = max_iters;
    cfg.rel_tol = rel_tol;
    cfg.validate();
    return cfg;
  }
};

struct NucdiffOptions {
  double gamma = 1.0;
  double mu = 2.0;
  int steps = 500;
  int total_steps = 5000;
  std::string schedule = "vp-linear";
  std::optional<double> eta;
  std::string background = "subgradient";
  double warm_start = 0.2;
  bool literal = false;
  std::string guidance_mode = "denoised-estimate";
  std::string guidance_step = "implicit";
  std::uint64_t seed = 0;

  void bind(CLI::App* app, bool with_seed) {
    app->add_option("--gamma", gamma, "Low-rank weight")->capture_default_str();
    app->add_option("--mu", mu, "Guidance weight")->capture_default_str();
    app->add_option("--steps", steps, "Sampling steps")->capture_default_str();
    app->add_option("--total-steps", total_steps, "Diffusion schedule length")->capture_default_str();
    app->add_option("--schedule", schedule)
        ->check(CLI::IsMember({"vp-linear", "vp-cosine", "variance-preserving-linear", "variance-preserving-cosine"}))
        ->capture_default_str();
    app->add_option("--eta", eta, "Background step size (default 1/mu)");
    app->add_option("--background-update", background)
        ->check(CLI::IsMember({"subgradient", "proximal"}))
        ->capture_default_str();
    app->add_option("--warm-start", warm_start, "Start at ceil(w*T) from the noised observation; 0 = cold")
        ->capture_default_str();
    app->add_flag("--literal-indexing", literal, "Re-noise with the current step's coefficients");
    app->add_option("--guidance-mode", guidance_mode)
        ->check(CLI::IsMember({"denoised-estimate", "chain-rule"}))
        ->capture_default_str();
    app->add_option("--guidance-step", guidance_step)
        ->check(CLI::IsMember({"implicit", "explicit"}))
        ->capture_default_str();
    if (with_seed) app->add_option("--seed", seed)->capture_default_str();
  }

  NucDiffConfig resolve() const {
    if (total_steps < 1) throw ArgumentError("--total-steps must be at least 1");
    NucDiffConfig cfg;
    cfg.gamma = gamma;
    cfg.mu = mu;
    cfg.steps = steps;
    cfg.schedule = make_schedule(parse_schedule_kind(schedule), total_steps);
    cfg.background_step_size = eta;
    cfg.background_update = parse_background_update(background);
    cfg.warm_start_fraction = warm_start;
    cfg.literal_paper_indexing = literal;
    cfg.guidance_mode = parse_guidance_mode(guidance_mode);
    cfg.guidance_step = parse_guidance_step(guidance_step);
    cfg.seed = seed;
    cfg.validate();
    return cfg;
  }
};

// ---------------------------------------------------------------------------
// Input loading: anything wrong with a supplied file is an input-format error.

template <typename F>
auto load_input(const fs::path& path, F&& f) {
  try {
    return f();
  } catch (const FormatError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw FormatError(path.string() + ": " + e.what(), 0);
  }
}

CasoratiMatrix load_video(const fs::path& path) {
  return load_input(path, [&] { return to_casorati(read_tensor(path)); });
}

RoiMask load_mask(const fs::path& path, RoiLabel label) {
  return load_input(path, [&] { return to_mask(read_tensor(path), label); });
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
}

double mse(const CasoratiMatrix& a, const CasoratiMatrix& b) {
  require_same_shape(a, b, "mse");
  return (a.values() - b.values()).squaredNorm() / static_cast<double>(a.values().size());
}

struct RoiScores {
  std::vector<GcnrResult> gcnr;
  std::vector<double> ks;
  double gcnr_mean = 0.0;
  double ks_mean = 0.0;
};

// gCNR(Ω_V vs Ω_S) on the denoised frames; KS(Ω_S original vs denoised).
RoiScores roi_scores(const CasoratiMatrix& original, const CasoratiMatrix& denoised, const RoiMask& ventricle,
                     const RoiMask& septum, int bins) {
  require_same_shape(original, denoised, "metrics");
  RoiScores s;
  for (Eigen::Index t = 0; t < denoised.frames(); ++t) {
    const Frame d = denoised.frame(t);
    s.gcnr.push_back(gcnr(extract_roi(d, ventricle), extract_roi(d, septum), bins));
    s.ks.push_back(ks_statistic(extract_roi(original.frame(t), septum), extract_roi(d, septum)));
    s.gcnr_mean += s.gcnr.back().value;
    s.ks_mean += s.ks.back();
  }
  s.gcnr_mean /= static_cast<double>(denoised.frames());
  s.ks_mean /= static_cast<double>(denoised.frames());
  return s;
}

// ---------------------------------------------------------------------------
// synth

void write_instance(const fs::path& dir, const SynthInstance& inst, RunManifest& manifest, const std::string& prefix) {
  ensure_dir(dir);
  const std::vector<std::pair<std::string, Tensor>> files = {
      {"Y.ndt", to_tensor(inst.y)},
      {"L_true.ndt", to_tensor(inst.l_true)},
      {"X_true.ndt", to_tensor(inst.x_true)},
      {"mask_ventricle.ndt", to_tensor(inst.ventricle)},
      {"mask_septum.ndt", to_tensor(inst.septum)},
  };
  for (const auto& [name, tensor] : files) {
    write_tensor(dir / name, tensor);
    manifest.add_output(prefix + name, dir / name);
  }
  write_json(dir / "spec.json", spec_to_json(inst.spec));
  manifest.add_output(prefix + "spec.json", dir / "spec.json");
  write_prior(dir, inst);
  if (fs::exists(dir / "prior.json")) {
    manifest.add_output(prefix + "prior.json", dir / "prior.json");
    manifest.add_output(prefix + "prior_means.ndt", dir / "prior_means.ndt");
  }
}

CommandResult cmd_synth(const SynthOptions& opts, const std::vector<double>& levels, const fs::path& out_dir,
                        const std::string& config, std::ostream& out) {
  const SynthSpec spec = opts.resolve();
  ensure_dir(out_dir);
  RunManifest manifest(out_dir, "synth", config, spec.seed);
  if (levels.empty()) {
    write_instance(out_dir, generate(spec), manifest, "");
    out << "wrote " << spec.frame_height << "x" << spec.frame_width << "x" << spec.num_frames << " instance to "
        << out_dir.string() << '\n';
  } else {
    const auto sweep = motion_sweep(spec, levels);
    json index = json::array();
    for (std::size_t i = 0; i < sweep.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof(name), "level_%02zu", i);
      write_instance(out_dir / name, sweep[i].second, manifest, std::string(name) + "/");
      index.push_back({{"dir", name}, {"motion_level", sweep[i].first}, {"seed", sweep[i].second.spec.seed}});
    }
    manifest.set("levels", index);
    out << "wrote " << sweep.size() << " motion levels to " << out_dir.string() << '\n';
  }
  manifest.write();
  return {};
}

// ---------------------------------------------------------------------------
// rpca

CommandResult cmd_rpca(const fs::path& y_path, const RpcaOptions& opts, const fs::path& out_dir,
                       const std::optional<fs::path>& l_true_path, const std::optional<fs::path>& x_true_path,
                       const std::string& config, std::ostream& out, std::ostream& err) {
  const RpcaConfig cfg = opts.resolve();
  const CasoratiMatrix y = load_video(y_path);
  if (y.frames() == 1) err << "warning: single-frame input; the low-rank component is degenerate\n";
  ensure_dir(out_dir);
  RunManifest manifest(out_dir, "rpca", config, 0);
  manifest.add_input("y", y_path);

  const Decomposition d = rpca_solve(y, cfg);
  write_tensor(out_dir / "L.ndt", to_tensor(d.l));
  write_tensor(out_dir / "X.ndt", to_tensor(d.x));
  {
    CsvWriter csv(out_dir / "objective.csv", {"iteration", "objective"});
    for (std::size_t k = 0; k < d.objective_trace.size(); ++k) {
      csv.row({std::to_string(k), format_double(d.objective_trace[k])});
    }
  }
  json summary{{"iterations", d.iterations},
               {"converged", d.converged},
               {"final_objective", d.objective_trace.back()},
               {"lambda", cfg.lambda_for(y.pixels(), y.frames())},
               {"mu", cfg.mu}};
  if (l_true_path) {
    manifest.add_input("l_true", *l_true_path);
    const CasoratiMatrix l_true = load_video(*l_true_path);
    require_same_shape(y, l_true, "--l-true");
    const double denom = l_true.values().norm();
    summary["l_recovery_error"] = (d.l.values() - l_true.values()).norm() / (denom > 0 ? denom : 1.0);
  }
  if (x_true_path) {
    manifest.add_input("x_true", *x_true_path);
    const CasoratiMatrix x_true = load_video(*x_true_path);
    require_same_shape(y, x_true, "--x-true");
    summary["x_mse"] = mse(d.x, x_true);
  }
  write_json(out_dir / "summary.json", summary);
  for (const char* name : {"L.ndt", "X.ndt", "objective.csv", "summary.json"}) {
    manifest.add_output(name, out_dir / name);
  }
  manifest.set("converged", d.converged);
  manifest.write();

  out << (d.converged ? "converged" : "not converged") << " after " << d.iterations << " iterations, objective "
      << format_double(d.objective_trace.back()) << '\n';
  return {d.converged ? kOk : kNotConverged};
}

// ---------------------------------------------------------------------------
// nucdiff

std::unique_ptr<ScoreModel> load_model(const std::string& kind, const std::optional<fs::path>& prior,
                                       const std::optional<fs::path>& weights) {
  if (kind == "mlp") {
    if (!weights) throw ArgumentError("--model mlp needs --weights");
    return std::make_unique<MlpDenoiser>(load_weights(*weights));
  }
  if (!prior) throw ArgumentError("--model " + kind + " needs --prior");
  std::string file_kind;
  auto model = read_prior(*prior, &file_kind);
  if (file_kind != kind) throw ArgumentError("--model " + kind + " but " + prior->string() + " holds a " + file_kind + " prior");
  return model;
}

CommandResult cmd_nucdiff(const fs::path& y_path, const std::string& model_kind, const std::optional<fs::path>& prior,
                          const std::optional<fs::path>& weights, const NucdiffOptions& opts, const fs::path& out_dir,
                          const std::optional<fs::path>& x_true_path, const std::string& config, std::ostream& out) {
  const NucDiffConfig cfg = opts.resolve();
  const CasoratiMatrix y = load_video(y_path);
  const auto model = load_model(model_kind, prior, weights);
  if (model->input_size() != y.pixels()) {
    throw FormatError("model expects " + std::to_string(model->input_size()) + " pixels per frame, input has " +
                          std::to_string(y.pixels()),
                      0);
  }
  ensure_dir(out_dir);
  RunManifest manifest(out_dir, "nucdiff", config, cfg.seed);
  manifest.add_input("y", y_path);
  if (model_kind == "mlp") {
    manifest.add_input("weights", *weights);
  } else {
    manifest.add_input("prior", *prior);
  }

  const auto [d, trace] = nuclear_diffusion_sample(y, *model, cfg);
  write_tensor(out_dir / "L.ndt", to_tensor(d.l));
  write_tensor(out_dir / "X.ndt", to_tensor(d.x));
  {
    CsvWriter csv(out_dir / "trace.csv", {"step", "tau", "measurement_error", "low_rank_penalty", "rank"});
    for (std::size_t k = 0; k < trace.records.size(); ++k) {
      const auto& r = trace.records[k];
      csv.row({std::to_string(k), std::to_string(r.tau), format_double(r.measurement_error),
               format_double(r.low_rank_penalty), std::to_string(r.rank)});
    }
  }
  json summary{{"steps", d.iterations},
               {"final_measurement_error", trace.records.back().measurement_error},
               {"final_low_rank_penalty", trace.records.back().low_rank_penalty},
               {"final_rank", trace.records.back().rank}};
  if (x_true_path) {
    manifest.add_input("x_true", *x_true_path);
    const CasoratiMatrix x_true = load_video(*x_true_path);
    require_same_shape(y, x_true, "--x-true");
    summary["x_mse"] = mse(d.x, x_true);
  }
  write_json(out_dir / "summary.json", summary);
  for (const char* name : {"L.ndt", "X.ndt", "trace.csv", "summary.json"}) {
    manifest.add_output(name, out_dir / name);
  }
  manifest.write();
  out << "sampled " << d.iterations << " steps; final rank(L) " << trace.records.back().rank << '\n';
  return {};
}

// ---------------------------------------------------------------------------
// metrics

CommandResult cmd_metrics(const fs::path& original_path, const fs::path& denoised_path, const fs::path& ventricle_path,
                          const fs::path& septum_path, const fs::path& out_dir, int bins, const std::string& sequence_id,
                          bool plot, const std::string& config, std::ostream& out) {
  const CasoratiMatrix original = load_video(original_path);
  const CasoratiMatrix denoised = load_video(denoised_path);
  const RoiMask ventricle = load_mask(ventricle_path, RoiLabel::ventricle);
  const RoiMask septum = load_mask(septum_path, RoiLabel::septum);
  if (!original.same_shape(denoised)) throw FormatError("original and denoised videos differ in shape", 0);
  if (ventricle.height() != original.frame_height() || ventricle.width() != original.frame_width() ||
      septum.height() != original.frame_height() || septum.width() != original.frame_width()) {
    throw FormatError("mask size does not match the frame size", 0);
  }
  if (bins < 2) throw ArgumentError("--bins must be at least 2");

  ensure_dir(out_dir);
  RunManifest manifest(out_dir, "metrics", config, 0);
  manifest.add_input("original", original_path);
  manifest.add_input("denoised", denoised_path);
  manifest.add_input("ventricle", ventricle_path);
  manifest.add_input("septum", septum_path);

  const RoiScores s = roi_scores(original, denoised, ventricle, septum, bins);
  const std::string gparams = "bins=" + std::to_string(bins) + ";regions=ventricle|septum;frames=denoised";
  const std::string kparams = "region=septum;frames=original|denoised";
  {
    CsvWriter csv(out_dir / "metrics.csv", {"sequence_id", "frame_index", "metric_name", "value", "params"});
    for (std::size_t t = 0; t < s.gcnr.size(); ++t) {
      csv.row({sequence_id, std::to_string(t), "gcnr", format_double(s.gcnr[t].value),
               gparams + (s.gcnr[t].degenerate ? ";degenerate=true" : "")});
    }
    csv.row({sequence_id, "mean", "gcnr", format_double(s.gcnr_mean), gparams});
    for (std::size_t t = 0; t < s.ks.size(); ++t) {
      csv.row({sequence_id, std::to_string(t), "ks", format_double(s.ks[t]), kparams});
    }
    csv.row({sequence_id, "mean", "ks", format_double(s.ks_mean), kparams});
  }
  manifest.add_output("metrics.csv", out_dir / "metrics.csv");
  if (plot) {
    Series g{"gCNR", {}, {}};
    Series k{"KS", {}, {}};
    for (std::size_t t = 0; t < s.ks.size(); ++t) {
      g.x.push_back(static_cast<double>(t));
      g.y.push_back(s.gcnr[t].value);
      k.x.push_back(static_cast<double>(t));
      k.y.push_back(s.ks[t]);
    }
    write_line_plot(out_dir / "metrics.svg", "Per-frame metrics: " + sequence_id, "frame", "value", {g, k});
    manifest.add_output("metrics.svg", out_dir / "metrics.svg");
  }
  manifest.write();
  out << "gcnr mean " << format_double(s.gcnr_mean) << ", ks mean " << format_double(s.ks_mean) << '\n';
  return {};
}

// ---------------------------------------------------------------------------
// sweep

int sweep_threads() {
  int n = static_cast<int>(std::thread::hardware_concurrency());
  if (const char* env = std::getenv("NUCDIFF_THREADS")) {
    try {
      const int cap = std::stoi(env);
      if (cap >= 1) n = n > 0 ? std::min(n, cap) : cap;
    } catch (const std::exception&) {
      throw ArgumentError(std::string("NUCDIFF_THREADS must be a positive integer, got '") + env + "'");
    }
  }
  return std::max(n, 1);
}

struct SweepRow {
  std::size_t level_index = 0;
  double level = 0.0;
  std::uint64_t seed = 0;
  double psnr = 0.0;
  std::string method;
  double ks = std::numeric_limits<double>::quiet_NaN();
  double gcnr = std::numeric_limits<double>::quiet_NaN();
  double x_mse = std::numeric_limits<double>::quiet_NaN();
  std::string status = "ok";
  std::string message;
};

CommandResult cmd_sweep(const SynthOptions& synth_opts, const std::vector<double>& levels,
                        const std::vector<std::string>& methods, const RpcaOptions& rpca_opts,
                        const NucdiffOptions& nuc_opts, int bins, const fs::path& out_dir, const std::string& config,
                        std::ostream& out) {
  const SynthSpec base = synth_opts.resolve();
  const RpcaConfig rpca_cfg = rpca_opts.resolve();
  const NucDiffConfig nuc_cfg = nuc_opts.resolve();
  if (levels.empty()) throw ArgumentError("--levels must not be empty");
  if (methods.empty()) throw ArgumentError("--methods must not be empty");
  if (bins < 2) throw ArgumentError("--bins must be at least 2");
  const auto instances = motion_sweep(base, levels);
  ensure_dir(out_dir);
  RunManifest manifest(out_dir, "sweep", config, base.seed);

  std::vector<SweepRow> rows;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const auto& inst = instances[i].second;
    const double psnr = inst.y.frames() > 1 ? mean_motion_psnr(inst.y) : std::numeric_limits<double>::infinity();
    for (const auto& m : methods) {
      SweepRow row;
      row.level_index = i;
      row.level = instances[i].first;
      row.seed = inst.spec.seed;
      row.psnr = psnr;
      row.method = m;
      rows.push_back(std::move(row));
    }
  }

  auto run_one = [&](SweepRow& row) {
    const auto& inst = instances[row.level_index].second;
    try {
      std::optional<CasoratiMatrix> x;
      if (row.method == "rpca") {
        const Decomposition d = rpca_solve(inst.y, rpca_cfg);
        if (!d.converged) row.status = "not-converged";
        x = d.x;
      } else {
        const ScoreModel* model = nullptr;
        if (inst.gmm_prior) model = &*inst.gmm_prior;
        if (inst.gaussian_prior) model = &*inst.gaussian_prior;
        if (!model) throw ArgumentError("foreground kind has no analytic prior");
        NucDiffConfig cfg = nuc_cfg;
        cfg.seed = inst.spec.seed;
        x = nuclear_diffusion_sample(inst.y, *model, cfg).first.x;
      }
      const RoiScores s = roi_scores(inst.y, *x, inst.ventricle, inst.septum, bins);
      row.ks = s.ks_mean;
      row.gcnr = s.gcnr_mean;
      row.x_mse = mse(*x, inst.x_true);
    } catch (const std::exception& e) {
      row.status = "error";
      row.message = e.what();
    }
  };

  const int threads = std::min<int>(sweep_threads(), static_cast<int>(rows.size()));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < rows.size(); k = next++) run_one(rows[k]);
  };
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  {
    CsvWriter csv(out_dir / "sweep.csv", {"level", "seed", "psnr_db", "psnr_bin", "method", "ks", "gcnr", "x_mse",
                                          "status", "message"});
    for (const auto& r : rows) {
      csv.row({format_double(r.level), std::to_string(r.seed), format_double(r.psnr), std::to_string(r.level_index),
               r.method, format_double(r.ks), format_double(r.gcnr), format_double(r.x_mse), r.status, r.message});
    }
  }
  std::vector<Series> series;
  for (const auto& m : methods) {
    Series s{m, {}, {}};
    for (const auto& r : rows) {
      if (r.method == m && r.status != "error") {
        s.x.push_back(r.psnr);
        s.y.push_back(r.ks);
      }
    }
    series.push_back(std::move(s));
  }
  write_line_plot(out_dir / "ks_vs_psnr.svg", "KS(septum) by motion level", "inter-frame PSNR (dB)", "KS", series);
  manifest.add_output("sweep.csv", out_dir / "sweep.csv");
  manifest.add_output("ks_vs_psnr.svg", out_dir / "ks_vs_psnr.svg");
  manifest.set("threads", threads);
  manifest.write();

  const auto failed = std::count_if(rows.begin(), rows.end(), [](const SweepRow& r) { return r.status == "error"; });
  out << rows.size() - static_cast<std::size_t>(failed) << "/" << rows.size() << " sub-runs succeeded\n";
  return {static_cast<std::size_t>(failed) == rows.size() ? kNumerical : kOk};
}

// CLI11 only reads config files on the top-level app, so a subcommand's
// --config is expanded here into ordinary arguments placed right after the
// subcommand name. Keys also given as flags on the command line are skipped.
std::vector<std::string> expand_config(std::vector<std::string> args, const std::vector<std::string>& subcommands) {
  const auto sub = std::find_if(args.begin(), args.end(), [&](const std::string& a) {
    return std::find(subcommands.begin(), subcommands.end(), a) != subcommands.end();
  });
  if (sub == args.end()) return args;
  const std::string sub_name = *sub;
  const auto sub_at = static_cast<std::size_t>(sub - args.begin());

  std::string path;
  std::vector<std::string> given;
  for (std::size_t i = sub_at + 1; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (a.rfind("--", 0) != 0) continue;
    const std::string key = a.substr(2, a.find('=') == std::string::npos ? std::string::npos : a.find('=') - 2);
    given.push_back(key);
    if (key == "config") path = a.find('=') != std::string::npos ? a.substr(a.find('=') + 1) : (i + 1 < args.size() ? args[i + 1] : "");
  }
  if (path.empty()) return args;

  std::vector<std::string> expanded;
  for (const auto& item : CLI::ConfigTOML().from_file(path)) {
    if (!item.parents.empty() && !(item.parents.size() == 1 && item.parents.front() == sub_name)) continue;
    if (item.name == "config" || std::find(given.begin(), given.end(), item.name) != given.end()) continue;
    std::string value;
    for (std::size_t k = 0; k < item.inputs.size(); ++k) value += (k ? "," : "") + item.inputs[k];
    expanded.push_back("--" + item.name + "=" + value);
  }
  args.insert(args.begin() + static_cast<std::ptrdiff_t>(sub_at) + 1, expanded.begin(), expanded.end());
  return args;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Low-rank plus diffusion-prior video decomposition", "nucdiff"};
  app.set_version_flag("--version", std::string(NUCDIFF_VERSION));
  app.require_subcommand(1);

  std::function<CommandResult()> action;
  std::string config;
  auto with_config = [](CLI::App* sub) {
    sub->add_option("--config", "TOML key = value file; flags override it")->check(CLI::ExistingFile);
  };

  // synth
  SynthOptions synth_opts;
  std::vector<double> synth_levels;
  fs::path synth_out;
  auto* synth = app.add_subcommand("synth", "Generate a planted instance");
  with_config(synth);
  synth_opts.bind(synth);
  synth->add_option("--motion-levels", synth_levels, "One subdirectory per motion level")->delimiter(',');
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->callback([&] {
    config = synth->config_to_str(true, false);
    action = [&] { return cmd_synth(synth_opts, synth_levels, synth_out, config, out); };
  });

  // rpca
  fs::path rpca_y, rpca_out;
  std::optional<fs::path> rpca_l_true, rpca_x_true;
  RpcaOptions rpca_opts;
  auto* rpca = app.add_subcommand("rpca", "Robust PCA baseline");
  with_config(rpca);
  rpca->add_option("--y", rpca_y, "Observation tensor file")->required()->check(CLI::ExistingFile);
  rpca->add_option("--out", rpca_out, "Output directory")->required();
  rpca->add_option("--l-true", rpca_l_true, "Ground-truth background for a recovery error")->check(CLI::ExistingFile);
  rpca->add_option("--x-true", rpca_x_true, "Ground-truth foreground for an MSE")->check(CLI::ExistingFile);
  rpca_opts.bind(rpca);
  rpca->callback([&] {
    config = rpca->config_to_str(true, false);
    action = [&] { return cmd_rpca(rpca_y, rpca_opts, rpca_out, rpca_l_true, rpca_x_true, config, out, err); };
  });

  // nucdiff
  fs::path nd_y, nd_out;
  std::string nd_model = "gmm";
  std::optional<fs::path> nd_prior, nd_weights, nd_x_true;
  NucdiffOptions nd_opts;
  auto* nd = app.add_subcommand("nucdiff", "Nuclear diffusion posterior sampling");
  with_config(nd);
  nd->add_option("--y", nd_y, "Observation tensor file")->required()->check(CLI::ExistingFile);
  nd->add_option("--out", nd_out, "Output directory")->required();
  nd->add_option("--model", nd_model, "Foreground prior")
      ->check(CLI::IsMember({"gaussian", "gmm", "mlp"}))
      ->capture_default_str();
  nd->add_option("--prior", nd_prior, "prior.json for gaussian/gmm")->check(CLI::ExistingFile);
  nd->add_option("--weights", nd_weights, "NDW1 weight file for mlp")->check(CLI::ExistingFile);
  nd->add_option("--x-true", nd_x_true, "Ground-truth foreground for an MSE")->check(CLI::ExistingFile);
  nd_opts.bind(nd, true);
  nd->callback([&] {
    config = nd->config_to_str(true, false);
    action = [&] {
      return cmd_nucdiff(nd_y, nd_model, nd_prior, nd_weights, nd_opts, nd_out, nd_x_true, config, out);
    };
  });

  // metrics
  fs::path m_orig, m_den, m_vent, m_sept, m_out;
  int m_bins = kDefaultGcnrBins;
  std::string m_id = "seq0";
  bool m_plot = false;
  auto* metrics = app.add_subcommand("metrics", "gCNR and KS on regions of interest");
  with_config(metrics);
  metrics->add_option("--original", m_orig, "Observed video")->required()->check(CLI::ExistingFile);
  metrics->add_option("--denoised", m_den, "Estimated foreground video")->required()->check(CLI::ExistingFile);
  metrics->add_option("--ventricle", m_vent, "Ventricle mask")->required()->check(CLI::ExistingFile);
  metrics->add_option("--septum", m_sept, "Septum mask")->required()->check(CLI::ExistingFile);
  metrics->add_option("--out", m_out, "Output directory")->required();
  metrics->add_option("--bins", m_bins, "gCNR histogram bins")->capture_default_str();
  metrics->add_option("--sequence-id", m_id)->capture_default_str();
  metrics->add_flag("--plot", m_plot, "Also write metrics.svg");
  metrics->callback([&] {
    config = metrics->config_to_str(true, false);
    action = [&] { return cmd_metrics(m_orig, m_den, m_vent, m_sept, m_out, m_bins, m_id, m_plot, config, out); };
  });

  // sweep
  SynthOptions sw_synth;
  std::vector<double> sw_levels{0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
  std::vector<std::string> sw_methods{"rpca", "nucdiff"};
  RpcaOptions sw_rpca;
  NucdiffOptions sw_nd;
  int sw_bins = kDefaultGcnrBins;
  fs::path sw_out;
  auto* sweep = app.add_subcommand("sweep", "Motion sweep comparing methods");
  with_config(sweep);
  sw_synth.bind(sweep);
  sweep->add_option("--levels", sw_levels, "Motion levels")->delimiter(',')->capture_default_str();
  sweep->add_option("--methods", sw_methods, "Methods to run")
      ->delimiter(',')
      ->check(CLI::IsMember({"rpca", "nucdiff"}))
      ->capture_default_str();
  sw_rpca.bind(sweep, "rpca-");
  sw_nd.bind(sweep, false);
  sweep->add_option("--bins", sw_bins, "gCNR histogram bins")->capture_default_str();
  sweep->add_option("--out", sw_out, "Output directory")->required();
  sweep->callback([&] {
    config = sweep->config_to_str(true, false);
    action = [&] { return cmd_sweep(sw_synth, sw_levels, sw_methods, sw_rpca, sw_nd, sw_bins, sw_out, config, out); };
  });

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    std::vector<std::string> names;
    for (const auto* sub : app.get_subcommands({})) names.push_back(sub->get_name());
    args = expand_config(std::move(args), names);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    return action().code;
  } catch (const FormatError& e) {
    err << "input error: " << e.what() << '\n';
    return kInputFormat;
  } catch (const ShapeError& e) {
    err << "input error: " << e.what() << '\n';
    return kInputFormat;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const ArgumentError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
}

}  // namespace nucdiff::cli
