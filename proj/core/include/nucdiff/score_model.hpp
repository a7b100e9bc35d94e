#pragma once

#include <Eigen/Dense>

#include "nucdiff/schedule.hpp"
#include "nucdiff/tensors.hpp"

namespace nucdiff {

/// Noise predictor ε_θ(x_τ, τ) ≈ −σ_τ ∇log p(x_τ), evaluated one frame at a
/// time. Implementations are immutable and safe to call concurrently.
class ScoreModel {
 public:
  virtual ~ScoreModel() = default;

  virtual Frame predict_noise(const Frame& x_tau, int tau, const NoiseSchedule& sched) const = 0;

  /// (∂ε_θ/∂x_τ)ᵀ v. Only available when has_noise_vjp() is true.
  virtual Frame noise_vjp(const Frame& x_tau, int tau, const NoiseSchedule& sched, const Frame& v) const;
  virtual bool has_noise_vjp() const { return false; }

  /// Pixels per frame the model accepts.
  virtual Eigen::Index input_size() const = 0;
};

}  // namespace nucdiff
