#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace nucdiff {

enum class ScheduleKind { vp_linear, vp_cosine };

std::string to_string(ScheduleKind kind);

/// Accepts "variance-preserving-linear" / "vp-linear" and the cosine
/// equivalents. Throws ArgumentError otherwise.
ScheduleKind parse_schedule_kind(std::string_view name);

/// Discretized α_τ, σ_τ for τ = 0..total_steps.
///
/// Both kinds are variance preserving: α_τ = √ᾱ_τ, σ_τ = √(1 − ᾱ_τ) with
/// ᾱ_τ = ∏_{i≤τ} (1 − β_i).
///   vp_linear: β_i linear from 0.1/𝒯 to 20/𝒯 (DDPM's 1e-4..0.02 at 𝒯 = 1000,
///              rescaled so ᾱ_𝒯 ≈ e^{-10} for any 𝒯).
///   vp_cosine: ᾱ(τ) = f(τ)/f(0), f(τ) = cos²(((τ/𝒯) + s)/(1 + s)·π/2),
///              s = 0.008, per-step β clipped to 0.999.
struct NoiseSchedule {
  ScheduleKind kind = ScheduleKind::vp_linear;
  int total_steps = 0;
  std::vector<double> alpha;
  std::vector<double> sigma;

  double alpha_at(int tau) const;
  double sigma_at(int tau) const;
  void require_step(int tau, const char* what) const;
};

NoiseSchedule make_schedule(ScheduleKind kind, int steps);

/// Per-step β for the linear kind, exposed for verification.
double linear_beta(int i, int steps);

/// Strictly decreasing diffusion indices top = τ_0 > τ_1 > ... ≥ 1, evenly
/// spaced and rounded. Length is min(steps, top).
std::vector<int> sampling_grid(int top, int steps);

}  // namespace nucdiff
