#pragma once

// Diffusion building blocks: forward corruption, Tweedie denoising, ancestral
// re-noising and measurement guidance, plus the two reference samplers built
// from them (unconditional ancestral sampling and plain DPS with an identity
// forward model).
//
// Randomness is always supplied by the caller: either explicit noise frames
// or a seeded Rng.

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

#include "nucdiff/schedule.hpp"
#include "nucdiff/score_model.hpp"
#include "nucdiff/tensors.hpp"

namespace nucdiff {

using Rng = std::mt19937_64;

/// rows×cols i.i.d. N(0, 1), filled column by column.
Eigen::MatrixXd standard_normal(Rng& rng, Eigen::Index rows, Eigen::Index cols);

/// x_τ = α_τ·x₀ + σ_τ·noise.
Frame diffuse_forward(const Frame& x0, int tau, const NoiseSchedule& sched, const Frame& noise);

/// x_{0|τ} = (x_τ − σ_τ·ε̂)/α_τ with ε̂ the model's noise prediction.
Frame tweedie_denoise(const Frame& x_tau, int tau, const NoiseSchedule& sched, const ScoreModel& model);

/// Re-noise a denoised estimate to the next (lower) step.
///   default: α_{τ_next}·x̂₀ + σ_{τ_next}·noise
///   literal: α_τ·x̂₀ + σ_τ·noise
Frame ancestral_step(const Frame& x0_hat, int tau, int tau_next, const NoiseSchedule& sched,
                     const Frame& noise, bool literal_paper_indexing = false);

/// Unit-stride overload: τ_next = τ − 1.
Frame ancestral_step(const Frame& x0_hat, int tau, const NoiseSchedule& sched, const Frame& noise,
                     bool literal_paper_indexing = false);

enum class GuidanceMode {
  /// Gradient with respect to the denoised estimate X_{0|τ}.
  denoised_estimate,
  /// Gradient pulled back to x_τ through the model Jacobian (requires a
  /// model with noise_vjp).
  chain_rule,
};

/// How the guidance gradient is applied to X_{0|τ}.
enum class GuidanceStep {
  /// X₀ ← X₀ − ∇ℰ/(1 + μ), the exact minimizer of ½‖X − X₀‖² + ℰ(X).
  implicit,
  /// X₀ ← X₀ − ∇ℰ (unit step). Oscillates at μ = 2 and diverges for μ > 2.
  explicit_unit,
};

std::string to_string(GuidanceMode mode);
std::string to_string(GuidanceStep step);
GuidanceMode parse_guidance_mode(std::string_view name);
GuidanceStep parse_guidance_step(std::string_view name);

struct GuidanceConfig {
  /// Data-fit weight; plays the role of 1/σ_n².
  double mu = 2.0;
  GuidanceMode mode = GuidanceMode::denoised_estimate;
};

/// ℰ = (μ/2)‖Y − L − X₀‖²_F.
double measurement_error(const Eigen::MatrixXd& y, const Eigen::MatrixXd& l, const Eigen::MatrixXd& x0,
                         double mu);
double measurement_error(const CasoratiMatrix& y, const CasoratiMatrix& l, const CasoratiMatrix& x0,
                         double mu);

/// ∇_X ℰ = −μ(Y − L − X₀).
CasoratiMatrix guidance_gradient(const CasoratiMatrix& y, const CasoratiMatrix& l,
                                 const CasoratiMatrix& x0_hat, const GuidanceConfig& cfg);

/// Pull a gradient with respect to x_{0|τ} back to x_τ:
///   Jᵀg = (g − σ_τ (∂ε/∂x)ᵀ g)/α_τ.
Frame pullback_to_noisy(const Frame& x_tau, int tau, const NoiseSchedule& sched, const ScoreModel& model,
                        const Frame& grad_x0);

/// Draw `count` independent samples (one per column) from the model's prior
/// by iterating Tweedie denoising and ancestral re-noising from
/// X_𝒯 ~ N(0, σ_𝒯² I). Returns the last denoised estimate.
CasoratiMatrix sample_unconditional(const ScoreModel& model, const NoiseSchedule& sched, int steps,
                                    int height, int width, int count, Rng& rng,
                                    bool literal_paper_indexing = false);

/// Plain diffusion posterior sampling with identity forward model Y = X + n.
struct DpsConfig {
  double mu = 2.0;
  GuidanceMode mode = GuidanceMode::denoised_estimate;
  GuidanceStep guidance_step = GuidanceStep::implicit;
  NoiseSchedule schedule = make_schedule(ScheduleKind::vp_linear, 5000);
  int steps = 500;
  double warm_start_fraction = 0.2;
  bool literal_paper_indexing = false;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Returns the last guided denoised estimate.
CasoratiMatrix dps_sample(const CasoratiMatrix& y, const ScoreModel& model, const DpsConfig& cfg);

}  // namespace nucdiff
