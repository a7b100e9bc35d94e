// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails. Tolerances and runtime budgets are fixed
// here, not read from configuration.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "nucdiff/diffusion.hpp"
#include "nucdiff/metrics.hpp"
#include "nucdiff/nuclear_diffusion.hpp"
#include "nucdiff/proxops.hpp"
#include "nucdiff/rpca.hpp"
#include "nucdiff/score_models.hpp"
#include "nucdiff/synth.hpp"
#include "oracles.hpp"

#ifdef NUCDIFF_HAVE_CLI
#include "cli.hpp"
#endif

namespace fs = std::filesystem;
using namespace nucdiff;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  std::string id;
  std::string title;
  double budget_seconds;
  std::function<Outcome()> run;
};

std::string fmt(double v, int precision = 3) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

// ---------------------------------------------------------------------------

Outcome prox_oracles() {
  oracle::Rng rng(1001);
  double st_err = 0.0;
  for (int k = 0; k < 200; ++k) {
    const Eigen::MatrixXd m = oracle::gaussian_matrix(rng, 5, 5);
    const double t = 0.01 * k;
    st_err = std::max(st_err, (soft_threshold(m, t) - oracle::soft_threshold_loop(m, t)).cwiseAbs().maxCoeff());
  }

  double nn_rel = 0.0;
  for (int k = 0; k < 200; ++k) {
    const Eigen::MatrixXd m = oracle::gaussian_matrix(rng, 6, 4);
    const double e = oracle::nuclear_norm_eig(m);
    nn_rel = std::max(nn_rel, std::abs(nuclear_norm(m) - e) / e);
  }

  int svt_violations = 0;
  double sv_err = 0.0;
  for (int k = 0; k < 20; ++k) {
    const Eigen::MatrixXd m = oracle::gaussian_matrix(rng, 8, 5);
    const double t = 0.3;
    const Eigen::MatrixXd z = svt(m, t);
    auto obj = [&](const Eigen::MatrixXd& q) { return 0.5 * (q - m).squaredNorm() + t * oracle::nuclear_norm_eig(q); };
    const double best = obj(z);
    for (int j = 0; j < 1000; ++j) {
      const double scale = 1e-3 * std::pow(10.0, j % 4);
      if (obj(z + scale * oracle::gaussian_matrix(rng, 8, 5)) < best - 1e-12) ++svt_violations;
    }
    const Eigen::VectorXd before = oracle::singular_values_eig(m);
    const Eigen::VectorXd after = singular_values(z);
    for (Eigen::Index i = 0; i < before.size(); ++i) {
      sv_err = std::max(sv_err, std::abs(after[i] - std::max(before[i] - t, 0.0)));
    }
  }

  double sub_rel = 0.0;
  for (int k = 0; k < 10; ++k) {
    const Eigen::MatrixXd m = oracle::gaussian_matrix(rng, 5, 5);
    const Eigen::MatrixXd g = nuclear_subgradient(m);
    for (int j = 0; j < 20; ++j) {
      const Eigen::MatrixXd d = oracle::gaussian_matrix(rng, 5, 5);
      const double fd = oracle::directional_derivative([](const Eigen::MatrixXd& a) { return nuclear_norm(a); }, m, d, 1e-6);
      sub_rel = std::max(sub_rel, std::abs(fd - (g.array() * d.array()).sum()) / std::max(1.0, std::abs(fd)));
    }
  }

  const bool pass = st_err == 0.0 && nn_rel <= 1e-8 && svt_violations == 0 && sv_err <= 1e-7 && sub_rel <= 1e-4;
  return {pass, "soft_threshold max|err| " + fmt(st_err) + ", nuclear_norm rel " + fmt(nn_rel) +
                    ", svt perturbation wins " + std::to_string(svt_violations) + "/20000, svt spectrum " +
                    fmt(sv_err) + ", subgradient rel " + fmt(sub_rel)};
}

Outcome rpca_planted() {
  int recovered = 0;
  int monotone = 0;
  double worst = 0.0;
  double worst_rise = -std::numeric_limits<double>::infinity();
  for (int seed = 0; seed < 10; ++seed) {
    oracle::Rng rng(2000 + static_cast<std::uint64_t>(seed));
    const auto planted = oracle::planted_rpca(rng, 400, 50, 2, 0.05, 10.0);
    RpcaConfig cfg;
    cfg.max_iters = 2000;
    const Decomposition d = rpca_solve(CasoratiMatrix(planted.l + planted.x, 20, 20), cfg);
    const double err = (d.l.values() - planted.l).norm() / planted.l.norm();
    worst = std::max(worst, err);
    if (err <= 1e-2) ++recovered;
    double rise = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 1; k < d.objective_trace.size(); ++k) {
      rise = std::max(rise, d.objective_trace[k] - d.objective_trace[k - 1]);
    }
    worst_rise = std::max(worst_rise, rise);
    if (rise <= 1e-9) ++monotone;
  }
  return {recovered == 10 && monotone == 10,
          "recovered " + std::to_string(recovered) + "/10 (worst rel err " + fmt(worst) + "), monotone " +
              std::to_string(monotone) + "/10 (largest step change " + fmt(worst_rise) + ")"};
}

Outcome tweedie_exactness() {
  oracle::Rng rng(3001);
  const auto sched = make_schedule(ScheduleKind::vp_linear, 1000);
  double gauss_err = 0.0;
  for (double s : {0.3, 1.0, 2.0}) {
    const Frame m(oracle::gaussian_matrix(rng, 16, 1).col(0), 4, 4);
    const GaussianPrior prior(m, s);
    for (int tau : {1, 10, 100, 500, 1000}) {
      const Frame x(oracle::gaussian_matrix(rng, 16, 1).col(0), 4, 4);
      const double a = sched.alpha_at(tau);
      const double sg = sched.sigma_at(tau);
      const Eigen::VectorXd expected = (s * s * a * x.values() + sg * sg * m.values()) / (s * s * a * a + sg * sg);
      gauss_err = std::max(gauss_err, (tweedie_denoise(x, tau, sched, prior).values() - expected).cwiseAbs().maxCoeff());
    }
  }

  const GmmPrior prior({{0.3, Frame(Eigen::VectorXd::Constant(1, -1.0), 1, 1), 0.4},
                        {0.7, Frame(Eigen::VectorXd::Constant(1, 1.5), 1, 1), 0.6}});
  const std::vector<oracle::Component1d> comps{{0.3, -1.0, 0.4}, {0.7, 1.5, 0.6}};
  double gmm_err = 0.0;
  for (int tau : {20, 150, 400, 800}) {
    for (double x : {-2.0, -0.5, 0.0, 0.7, 2.2}) {
      const double quad =
          oracle::gmm_posterior_mean_quadrature(comps, sched.alpha_at(tau), sched.sigma_at(tau), x, -8.0, 8.0, 100000);
      const double got = tweedie_denoise(Frame(Eigen::VectorXd::Constant(1, x), 1, 1), tau, sched, prior).values()[0];
      gmm_err = std::max(gmm_err, std::abs(got - quad));
    }
  }
  return {gauss_err <= 1e-6 && gmm_err <= 1e-4,
          "Gaussian max|err| " + fmt(gauss_err) + " (tol 1e-6), GMM max|err| " + fmt(gmm_err) + " (tol 1e-4)"};
}

Outcome unconditional_sampling() {
  const int total = 200;
  const int chains = 10000;
  const auto sched = make_schedule(ScheduleKind::vp_linear, total);
  Eigen::VectorXd m(2);
  m << 0.8, -1.3;
  const double s = 0.6;
  const GaussianPrior prior(Frame(m, 1, 2), s);
  Rng rng(4001);
  const CasoratiMatrix out = sample_unconditional(prior, sched, total, 1, 2, chains, rng);
  bool pass = true;
  std::string detail;
  for (Eigen::Index d = 0; d < 2; ++d) {
    const Eigen::ArrayXd row = out.values().row(d).transpose().array();
    const double mean = row.mean();
    const double sd = std::sqrt((row - mean).square().sum() / (chains - 1));
    const double se_mean = s / std::sqrt(chains);
    const double se_sd = s / std::sqrt(2.0 * chains);
    const bool ok = std::abs(mean - m[d]) <= 3.0 * se_mean && std::abs(sd - s) <= 3.0 * se_sd;
    pass = pass && ok;
    detail += (d ? "; " : "") + std::string("dim ") + std::to_string(d) + ": mean " + fmt(mean, 4) + " vs " +
              fmt(m[d]) + " (" + fmt(std::abs(mean - m[d]) / se_mean, 2) + " SE), std " + fmt(sd, 4) + " vs " +
              fmt(s) + " (" + fmt(std::abs(sd - s) / se_sd, 2) + " SE)";
  }
  return {pass, detail};
}

Outcome reduction_to_dps() {
  SynthSpec spec;
  spec.seed = 5001;
  const SynthInstance inst = generate(spec);
  int exact = 0;
  int total = 0;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    for (bool literal : {false, true}) {
      NucDiffConfig cfg;
      cfg.background_update = BackgroundUpdate::proximal;
      cfg.gamma = 1e12;
      cfg.seed = seed;
      cfg.literal_paper_indexing = literal;
      const auto [dec, trace] = nuclear_diffusion_sample(inst.y, *inst.gmm_prior, cfg);
      const CasoratiMatrix dps = dps_sample(inst.y, *inst.gmm_prior, cfg.dps_config());
      ++total;
      if (dec.l.values().norm() == 0.0 && dec.x.values() == dps.values()) ++exact;
    }
  }
  return {exact == total, std::to_string(exact) + "/" + std::to_string(total) +
                              " runs bitwise equal (500 steps, 32x32x7, 3 seeds x 2 re-noise indexings)"};
}

double mean_septum_ks(const SynthInstance& inst, const CasoratiMatrix& x) {
  double sum = 0.0;
  for (Eigen::Index t = 0; t < x.frames(); ++t) {
    sum += ks_statistic(extract_roi(inst.y.frame(t), inst.septum), extract_roi(x.frame(t), inst.septum));
  }
  return sum / static_cast<double>(x.frames());
}

double mse(const CasoratiMatrix& a, const CasoratiMatrix& b) {
  return (a.values() - b.values()).squaredNorm() / static_cast<double>(a.values().size());
}

Outcome central_claim() {
  int wins = 0;
  double worst_ratio = 0.0;
  for (int s = 0; s < 10; ++s) {
    SynthSpec spec;
    spec.seed = 100 + static_cast<std::uint64_t>(s);
    const SynthInstance inst = generate(spec);
    NucDiffConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(s);
    const double nd = mse(nuclear_diffusion_sample(inst.y, *inst.gmm_prior, cfg).first.x, inst.x_true);
    const double rp = mse(rpca_solve(inst.y).x, inst.x_true);
    worst_ratio = std::max(worst_ratio, nd / rp);
    if (nd < rp) ++wins;
  }

  SynthSpec base;
  base.seed = 3;
  const auto sweep = motion_sweep(base, {0.0, 0.1, 0.2, 0.3, 0.4, 0.5});
  int bins_won = 0;
  std::string per_bin;
  for (const auto& [level, inst] : sweep) {
    NucDiffConfig cfg;
    cfg.seed = inst.spec.seed;
    const double ks_nd = mean_septum_ks(inst, nuclear_diffusion_sample(inst.y, *inst.gmm_prior, cfg).first.x);
    const double ks_rp = mean_septum_ks(inst, rpca_solve(inst.y).x);
    if (ks_nd < ks_rp) ++bins_won;
    per_bin += (per_bin.empty() ? "" : " ") + fmt(mean_motion_psnr(inst.y), 3) + "dB:" + fmt(ks_nd, 2) + "/" +
               fmt(ks_rp, 2);
  }
  return {wins == 10 && bins_won == 6,
          "X-MSE lower on " + std::to_string(wins) + "/10 seeds (worst nucdiff/rpca ratio " + fmt(worst_ratio) +
              "); KS lower in " + std::to_string(bins_won) + "/6 bins [PSNR:KS nucdiff/rpca " + per_bin + "]"};
}

Outcome metric_oracles() {
  oracle::Rng rng(7001);
  std::normal_distribution<double> normal;
  int ks_exact = 0;
  for (int k = 0; k < 100; ++k) {
    std::vector<double> a(100);
    std::vector<double> b(120);
    for (auto& v : a) v = normal(rng);
    for (auto& v : b) v = 0.05 * k + (1.0 + 0.01 * k) * normal(rng);
    if (ks_statistic(a, b) == oracle::ks_brute_force(a, b)) ++ks_exact;
  }
  double gcnr_err = 0.0;
  for (int k = 0; k < 100; ++k) {
    const auto a = oracle::uniform_samples(rng, 200, 0.0, 1.0);
    const auto b = oracle::uniform_samples(rng, 150, 0.4, 1.6);
    gcnr_err = std::max(gcnr_err, std::abs(gcnr(a, b, kDefaultGcnrBins).value - oracle::gcnr_histogram(a, b, kDefaultGcnrBins)));
  }
  int bound_violations = 0;
  std::uniform_int_distribution<int> size(1, 60);
  for (int k = 0; k < 2000; ++k) {
    std::vector<double> a(static_cast<std::size_t>(size(rng)));
    std::vector<double> b(static_cast<std::size_t>(size(rng)));
    for (auto& v : a) v = normal(rng) * (1 + k % 3);
    for (auto& v : b) v = normal(rng) + 0.01 * (k % 200);
    const double ks = ks_statistic(a, b);
    const double g = gcnr(a, b, 2 + k % 100).value;
    if (!(ks >= 0.0 && ks <= 1.0) || !(g >= 0.0 && g <= 1.0)) ++bound_violations;
  }
  return {ks_exact == 100 && gcnr_err <= 1e-12 && bound_violations == 0,
          "KS exact on " + std::to_string(ks_exact) + "/100 pairs, gCNR max|err| " + fmt(gcnr_err) +
              " (tol 1e-12), bound violations " + std::to_string(bound_violations) + "/2000"};
}

#ifdef NUCDIFF_HAVE_CLI
int call_cli(const std::vector<std::string>& args) {
  std::vector<std::string> full{"nucdiff"};
  full.insert(full.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : full) argv.push_back(a.c_str());
  std::ostringstream out;
  std::ostringstream err;
  return cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
}

nlohmann::json digests(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  return nlohmann::json::parse(in).at("outputs");
}
#endif

Outcome cli_determinism() {
#ifdef NUCDIFF_HAVE_CLI
  const fs::path root = fs::temp_directory_path() / "nucdiff_acceptance_determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  const std::string inst = (root / "instance").string();
  if (call_cli({"synth", "--seed", "11", "--out", inst}) != 0) return {false, "synth failed"};

  struct Command {
    std::string name;
    std::vector<std::string> args;
    std::vector<int> accepted;
  };
  const std::vector<Command> commands{
      {"synth", {"synth", "--seed", "11", "--motion-levels", "0,0.2"}, {0}},
      {"rpca", {"rpca", "--y", inst + "/Y.ndt", "--x-true", inst + "/X_true.ndt"}, {0, 3}},
      {"nucdiff", {"nucdiff", "--y", inst + "/Y.ndt", "--prior", inst + "/prior.json", "--seed", "9"}, {0}},
      {"metrics",
       {"metrics", "--original", inst + "/Y.ndt", "--denoised", inst + "/X_true.ndt", "--ventricle",
        inst + "/mask_ventricle.ndt", "--septum", inst + "/mask_septum.ndt", "--plot"},
       {0}},
      {"sweep", {"sweep", "--seed", "11", "--levels", "0,0.25,0.5"}, {0}},
  };
  int identical = 0;
  std::string failures;
  for (const auto& c : commands) {
    nlohmann::json first;
    bool ok = true;
    for (int run = 0; run < 2 && ok; ++run) {
      const fs::path out = root / (c.name + "_" + std::to_string(run));
      auto args = c.args;
      args.insert(args.end(), {"--out", out.string()});
      const int code = call_cli(args);
      if (std::find(c.accepted.begin(), c.accepted.end(), code) == c.accepted.end()) {
        ok = false;
        failures += " " + c.name + "(exit " + std::to_string(code) + ")";
        break;
      }
      const auto d = digests(out);
      if (run == 0) {
        first = d;
      } else if (d != first) {
        ok = false;
        failures += " " + c.name + "(digests differ)";
      }
    }
    if (ok) ++identical;
  }
  fs::remove_all(root);
  return {identical == static_cast<int>(commands.size()),
          std::to_string(identical) + "/" + std::to_string(commands.size()) +
              " commands reproduce their output digests" + failures};
#else
  return {false, "command-line tool not built"};
#endif
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {"AC1", "proximal operator oracles", 10.0, prox_oracles},
      {"AC2", "RPCA planted recovery (n=400, p=50, rank 2, 5% sparse, 10 seeds)", 60.0, rpca_planted},
      {"AC3", "Tweedie exactness (Gaussian closed form, GMM quadrature)", 10.0, tweedie_exactness},
      {"AC4", "unconditional sampling moments (T=200, 1e4 chains, 2-D)", 120.0, unconditional_sampling},
      {"AC5", "reduction to plain DPS when L is pinned to 0", 600.0, reduction_to_dps},
      {"AC6", "nuclear diffusion vs RPCA on planted GMM-blob instances", 900.0, central_claim},
      {"AC7", "metric oracles (KS brute force, gCNR histogram, bounds)", 600.0, metric_oracles},
      {"AC8", "CLI determinism (output digests across reruns)", 600.0, cli_determinism},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs <= c.budget_seconds;
    const bool pass = o.pass && in_time;
    if (!pass) ++failed;
    std::printf("%s %s %s: %s [%.2fs / budget %.0fs%s]\n", pass ? "PASS" : "FAIL", c.id.c_str(), c.title.c_str(),
                o.detail.c_str(), secs, c.budget_seconds, in_time ? "" : ", over budget");
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
