#include "nucdiff/nuclear_diffusion.hpp"

#include <cmath>

#include "nucdiff/errors.hpp"
#include "nucdiff/proxops.hpp"
#include "sampling_common.hpp"

namespace nucdiff {

std::string to_string(BackgroundUpdate mode) {
  return mode == BackgroundUpdate::subgradient ? "subgradient" : "proximal";
}

BackgroundUpdate parse_background_update(std::string_view name) {
  if (name == "subgradient") return BackgroundUpdate::subgradient;
  if (name == "proximal") return BackgroundUpdate::proximal;
  throw ArgumentError("unknown background update '" + std::string(name) + "'");
}

void NucDiffConfig::validate() const {
  if (!(gamma > 0.0)) throw ArgumentError("NucDiffConfig: gamma must be positive");
  if (!(step_size() > 0.0) || !std::isfinite(step_size())) {
    throw ArgumentError("NucDiffConfig: background step size must be positive");
  }
  dps_config().validate();
}

DpsConfig NucDiffConfig::dps_config() const {
  DpsConfig d;
  d.mu = mu;
  d.mode = guidance_mode;
  d.guidance_step = guidance_step;
  d.schedule = schedule;
  d.steps = steps;
  d.warm_start_fraction = warm_start_fraction;
  d.literal_paper_indexing = literal_paper_indexing;
  d.seed = seed;
  return d;
}

namespace {

Eigen::MatrixXd update_background(const Eigen::MatrixXd& l, const SvdFactors& factors,
                                  const Eigen::MatrixXd& grad, const NucDiffConfig& cfg) {
  const double eta = cfg.step_size();
  if (cfg.background_update == BackgroundUpdate::subgradient) {
    return l - eta * (grad + cfg.gamma * nuclear_subgradient(factors));
  }
  return svt(l - eta * grad, eta * cfg.gamma);
}

}  // namespace

CasoratiMatrix background_update(const CasoratiMatrix& l, const CasoratiMatrix& residual_grad,
                                 const NucDiffConfig& cfg) {
  require_same_shape(l, residual_grad, "background_update");
  const double eta = cfg.step_size();
  if (!(eta > 0.0)) throw ArgumentError("background_update: step size must be positive");
  if (cfg.background_update == BackgroundUpdate::subgradient) {
    return l.with_values(update_background(l.values(), thin_svd(l.values()), residual_grad.values(), cfg));
  }
  return l.with_values(svt(l.values() - eta * residual_grad.values(), eta * cfg.gamma));
}

CasoratiMatrix stacked_score(const CasoratiMatrix& frames_tau, int tau, const NoiseSchedule& sched,
                             const ScoreModel& model) {
  sched.require_step(tau, "stacked_score");
  if (tau < 1) throw ArgumentError("stacked_score: tau must be at least 1");
  return frames_tau.with_values(detail::predict_noise_columns(model, frames_tau.values(), tau, sched,
                                                              frames_tau.frame_height(), frames_tau.frame_width()));
}

std::pair<Decomposition, SamplerTrace> nuclear_diffusion_sample(const CasoratiMatrix& y, const ScoreModel& model,
                                                                const NucDiffConfig& cfg,
                                                                const StepObserver& observer) {
  cfg.validate();
  const auto& sched = cfg.schedule;
  const Eigen::MatrixXd& yv = y.values();
  const int height = y.frame_height();
  const int width = y.frame_width();
  if (model.input_size() != 0 && model.input_size() != y.pixels()) {
    throw ShapeError("nuclear_diffusion_sample: model expects " + std::to_string(model.input_size()) +
                     " pixels per frame, got " + std::to_string(y.pixels()));
  }
  const auto plan = detail::plan_sampling(sched, cfg.steps, cfg.warm_start_fraction);

  // Same draw order as dps_sample: initial noise, then one draw per step.
  Rng rng(cfg.seed);
  Eigen::MatrixXd x = sched.sigma_at(plan.top) * standard_normal(rng, yv.rows(), yv.cols());
  if (cfg.warm_start_fraction > 0.0) x += sched.alpha_at(plan.top) * yv;
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(yv.rows(), yv.cols());
  Eigen::MatrixXd x0;

  SamplerTrace trace;
  std::vector<double> objective;
  trace.records.reserve(plan.grid.size());
  objective.reserve(plan.grid.size());

  for (std::size_t k = 0; k < plan.grid.size(); ++k) {
    const int tau = plan.grid[k];
    Eigen::MatrixXd eps;
    try {
      eps = detail::predict_noise_columns(model, x, tau, sched, height, width);
    } catch (...) {
      detail::rethrow_with_context("nuclear_diffusion_sample step " + std::to_string(k));
    }
    x0 = detail::denoise(x, eps, sched.alpha_at(tau), sched.sigma_at(tau));
    const double energy = measurement_error(yv, l, x0, cfg.mu);

    Eigen::MatrixXd grad = -cfg.mu * ((yv - l) - x0);
    if (cfg.guidance_mode == GuidanceMode::chain_rule) {
      grad = detail::pullback_columns(model, x, tau, sched, grad, height, width);
    }
    detail::apply_guidance(x0, grad, cfg.mu, cfg.guidance_step);

    x = detail::renoise(x0, tau, plan.next(k), sched, standard_normal(rng, yv.rows(), yv.cols()),
                        cfg.literal_paper_indexing);
    detail::require_finite(x, "nuclear_diffusion_sample", k, tau);

    SvdFactors factors;
    try {
      factors = thin_svd(l);
    } catch (const NumericalError& e) {
      throw NumericalError("nuclear_diffusion_sample step " + std::to_string(k) + ": " + e.what());
    }
    const double penalty = cfg.gamma * factors.s.sum();
    const Eigen::MatrixXd grad_l = -cfg.mu * ((yv - l) - x0);
    Eigen::MatrixXd l_next = update_background(l, factors, grad_l, cfg);
    detail::require_finite(l_next, "nuclear_diffusion_sample background", k, tau);

    trace.records.push_back({tau, energy, penalty, static_cast<int>(factors.rank(kDefaultRankTol))});
    objective.push_back(energy + penalty);
    if (observer) observer(StepView{k, tau, x0, l, l_next});
    l = std::move(l_next);
  }

  Decomposition out{y.with_values(std::move(l)), y.with_values(std::move(x0)), std::move(objective),
                    static_cast<int>(plan.grid.size()), true};
  return {std::move(out), std::move(trace)};
}

}  // namespace nucdiff
