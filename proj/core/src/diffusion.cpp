#include "nucdiff/diffusion.hpp"

#include <cmath>
#include <sstream>

#include "nucdiff/errors.hpp"
#include "sampling_common.hpp"

namespace nucdiff {

Frame ScoreModel::noise_vjp(const Frame&, int, const NoiseSchedule&, const Frame&) const {
  throw ArgumentError("this score model does not provide a Jacobian-vector product");
}

namespace detail {

void rethrow_with_context(const std::string& context) {
  try {
    throw;
  } catch (const ShapeError& e) {
    throw ShapeError(context + ": " + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError(context + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw NumericalError(context + ": " + e.what());
  }
}

SamplingPlan plan_sampling(const NoiseSchedule& sched, int steps, double warm_start_fraction) {
  if (!(warm_start_fraction >= 0.0 && warm_start_fraction <= 1.0)) {
    throw ArgumentError("warm_start_fraction must lie in [0, 1]");
  }
  SamplingPlan plan;
  plan.top = sched.total_steps;
  if (warm_start_fraction > 0.0) {
    plan.top = static_cast<int>(std::ceil(warm_start_fraction * sched.total_steps));
    plan.top = std::max(1, std::min(plan.top, sched.total_steps));
  }
  plan.grid = sampling_grid(plan.top, steps);
  return plan;
}

Eigen::MatrixXd predict_noise_columns(const ScoreModel& model, const Eigen::MatrixXd& x_tau, int tau,
                                      const NoiseSchedule& sched, int height, int width) {
  Eigen::MatrixXd eps(x_tau.rows(), x_tau.cols());
  for (Eigen::Index t = 0; t < x_tau.cols(); ++t) {
    try {
      eps.col(t) = model.predict_noise(Frame(x_tau.col(t), height, width), tau, sched).values();
    } catch (...) {
      rethrow_with_context("frame " + std::to_string(t));
    }
  }
  return eps;
}

Eigen::MatrixXd pullback_columns(const ScoreModel& model, const Eigen::MatrixXd& x_tau, int tau,
                                 const NoiseSchedule& sched, const Eigen::MatrixXd& grad_x0, int height,
                                 int width) {
  Eigen::MatrixXd out(x_tau.rows(), x_tau.cols());
  for (Eigen::Index t = 0; t < x_tau.cols(); ++t) {
    try {
      out.col(t) = pullback_to_noisy(Frame(x_tau.col(t), height, width), tau, sched, model,
                                     Frame(grad_x0.col(t), height, width))
                       .values();
    } catch (...) {
      rethrow_with_context("frame " + std::to_string(t));
    }
  }
  return out;
}

void require_finite(const Eigen::MatrixXd& m, const char* what, std::size_t step, int tau) {
  if (!m.allFinite()) {
    std::ostringstream msg;
    msg << what << ": non-finite iterate at step " << step << " (tau " << tau << ")";
    throw NumericalError(msg.str());
  }
}

}  // namespace detail

Eigen::MatrixXd standard_normal(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd out(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) out(i, j) = normal(rng);
  }
  return out;
}

Frame diffuse_forward(const Frame& x0, int tau, const NoiseSchedule& sched, const Frame& noise) {
  sched.require_step(tau, "diffuse_forward");
  if (!x0.same_shape(noise)) throw ShapeError("diffuse_forward: noise shape differs from x0");
  return Frame(sched.alpha_at(tau) * x0.values() + sched.sigma_at(tau) * noise.values(), x0.height(),
               x0.width());
}

Frame tweedie_denoise(const Frame& x_tau, int tau, const NoiseSchedule& sched, const ScoreModel& model) {
  sched.require_step(tau, "tweedie_denoise");
  if (tau < 1) throw ArgumentError("tweedie_denoise: tau must be at least 1");
  Frame eps(x_tau);
  try {
    eps = model.predict_noise(x_tau, tau, sched);
  } catch (...) {
    detail::rethrow_with_context("tweedie_denoise at tau " + std::to_string(tau));
  }
  if (!eps.same_shape(x_tau)) throw ShapeError("tweedie_denoise: model output shape differs from input");
  return Frame((x_tau.values() - sched.sigma_at(tau) * eps.values()) / sched.alpha_at(tau), x_tau.height(),
               x_tau.width());
}

Frame ancestral_step(const Frame& x0_hat, int tau, int tau_next, const NoiseSchedule& sched, const Frame& noise,
                     bool literal_paper_indexing) {
  sched.require_step(tau, "ancestral_step");
  sched.require_step(tau_next, "ancestral_step");
  if (tau < 1) throw ArgumentError("ancestral_step: tau must be at least 1");
  if (tau_next >= tau) throw ArgumentError("ancestral_step: tau_next must be below tau");
  if (!x0_hat.same_shape(noise)) throw ShapeError("ancestral_step: noise shape differs from x0_hat");
  const int at = literal_paper_indexing ? tau : tau_next;
  return Frame(sched.alpha_at(at) * x0_hat.values() + sched.sigma_at(at) * noise.values(), x0_hat.height(),
               x0_hat.width());
}

Frame ancestral_step(const Frame& x0_hat, int tau, const NoiseSchedule& sched, const Frame& noise,
                     bool literal_paper_indexing) {
  return ancestral_step(x0_hat, tau, tau - 1, sched, noise, literal_paper_indexing);
}

std::string to_string(GuidanceMode mode) {
  return mode == GuidanceMode::denoised_estimate ? "denoised-estimate" : "chain-rule";
}

std::string to_string(GuidanceStep step) { return step == GuidanceStep::implicit ? "implicit" : "explicit"; }

GuidanceMode parse_guidance_mode(std::string_view name) {
  if (name == "denoised-estimate") return GuidanceMode::denoised_estimate;
  if (name == "chain-rule") return GuidanceMode::chain_rule;
  throw ArgumentError("unknown guidance mode '" + std::string(name) + "'");
}

GuidanceStep parse_guidance_step(std::string_view name) {
  if (name == "implicit") return GuidanceStep::implicit;
  if (name == "explicit") return GuidanceStep::explicit_unit;
  throw ArgumentError("unknown guidance step '" + std::string(name) + "'");
}

double measurement_error(const Eigen::MatrixXd& y, const Eigen::MatrixXd& l, const Eigen::MatrixXd& x0,
                         double mu) {
  return 0.5 * mu * (y - l - x0).squaredNorm();
}

double measurement_error(const CasoratiMatrix& y, const CasoratiMatrix& l, const CasoratiMatrix& x0,
                         double mu) {
  require_same_shape(y, l, "measurement_error");
  require_same_shape(y, x0, "measurement_error");
  return measurement_error(y.values(), l.values(), x0.values(), mu);
}

CasoratiMatrix guidance_gradient(const CasoratiMatrix& y, const CasoratiMatrix& l,
                                 const CasoratiMatrix& x0_hat, const GuidanceConfig& cfg) {
  require_same_shape(y, l, "guidance_gradient");
  require_same_shape(y, x0_hat, "guidance_gradient");
  if (!(cfg.mu > 0.0)) throw ArgumentError("guidance_gradient: mu must be positive");
  return y.with_values(-cfg.mu * (y.values() - l.values() - x0_hat.values()));
}

Frame pullback_to_noisy(const Frame& x_tau, int tau, const NoiseSchedule& sched, const ScoreModel& model,
                        const Frame& grad_x0) {
  sched.require_step(tau, "pullback_to_noisy");
  if (tau < 1) throw ArgumentError("pullback_to_noisy: tau must be at least 1");
  if (!model.has_noise_vjp()) {
    throw ArgumentError("chain-rule guidance needs a score model with a Jacobian-vector product");
  }
  const Frame vjp = model.noise_vjp(x_tau, tau, sched, grad_x0);
  return Frame((grad_x0.values() - sched.sigma_at(tau) * vjp.values()) / sched.alpha_at(tau), x_tau.height(),
               x_tau.width());
}

CasoratiMatrix sample_unconditional(const ScoreModel& model, const NoiseSchedule& sched, int steps, int height,
                                    int width, int count, Rng& rng, bool literal_paper_indexing) {
  if (count < 1) throw ArgumentError("sample_unconditional: count must be at least 1");
  const Eigen::Index n = static_cast<Eigen::Index>(height) * width;
  if (model.input_size() != 0 && model.input_size() != n) {
    throw ShapeError("sample_unconditional: model expects " + std::to_string(model.input_size()) + " pixels");
  }
  const auto plan = detail::plan_sampling(sched, steps, 0.0);

  Eigen::MatrixXd x = sched.sigma_at(plan.top) * standard_normal(rng, n, count);
  Eigen::MatrixXd x0;
  for (std::size_t k = 0; k < plan.grid.size(); ++k) {
    const int tau = plan.grid[k];
    const Eigen::MatrixXd eps = detail::predict_noise_columns(model, x, tau, sched, height, width);
    x0 = detail::denoise(x, eps, sched.alpha_at(tau), sched.sigma_at(tau));
    x = detail::renoise(x0, tau, plan.next(k), sched, standard_normal(rng, n, count), literal_paper_indexing);
    detail::require_finite(x, "sample_unconditional", k, tau);
  }
  return CasoratiMatrix(std::move(x0), height, width);
}

void DpsConfig::validate() const {
  if (!(mu > 0.0)) throw ArgumentError("DpsConfig: mu must be positive");
  if (steps < 1) throw ArgumentError("DpsConfig: steps must be at least 1");
  if (steps > schedule.total_steps) throw ArgumentError("DpsConfig: steps exceed the schedule length");
  if (mode == GuidanceMode::chain_rule && guidance_step == GuidanceStep::implicit) {
    throw ArgumentError("chain-rule guidance only supports the explicit step");
  }
}

CasoratiMatrix dps_sample(const CasoratiMatrix& y, const ScoreModel& model, const DpsConfig& cfg) {
  cfg.validate();
  const auto& sched = cfg.schedule;
  const Eigen::MatrixXd& yv = y.values();
  const int height = y.frame_height();
  const int width = y.frame_width();
  if (model.input_size() != 0 && model.input_size() != y.pixels()) {
    throw ShapeError("dps_sample: model expects " + std::to_string(model.input_size()) + " pixels per frame, got " +
                     std::to_string(y.pixels()));
  }
  const auto plan = detail::plan_sampling(sched, cfg.steps, cfg.warm_start_fraction);

  Rng rng(cfg.seed);
  Eigen::MatrixXd x = sched.sigma_at(plan.top) * standard_normal(rng, yv.rows(), yv.cols());
  if (cfg.warm_start_fraction > 0.0) x += sched.alpha_at(plan.top) * yv;
  Eigen::MatrixXd x0;

  for (std::size_t k = 0; k < plan.grid.size(); ++k) {
    const int tau = plan.grid[k];
    Eigen::MatrixXd eps;
    try {
      eps = detail::predict_noise_columns(model, x, tau, sched, height, width);
    } catch (...) {
      detail::rethrow_with_context("dps_sample step " + std::to_string(k));
    }
    x0 = detail::denoise(x, eps, sched.alpha_at(tau), sched.sigma_at(tau));

    Eigen::MatrixXd grad = -cfg.mu * (yv - x0);
    if (cfg.mode == GuidanceMode::chain_rule) {
      grad = detail::pullback_columns(model, x, tau, sched, grad, height, width);
    }
    detail::apply_guidance(x0, grad, cfg.mu, cfg.guidance_step);

    x = detail::renoise(x0, tau, plan.next(k), sched, standard_normal(rng, yv.rows(), yv.cols()),
                        cfg.literal_paper_indexing);
    detail::require_finite(x, "dps_sample", k, tau);
  }
  return y.with_values(std::move(x0));
}

}  // namespace nucdiff
