#pragma once

// Internal pieces shared by the sampling loops (DPS, unconditional, nuclear
// diffusion). Keeping them in one place makes the loops agree bit for bit
// when their extra machinery is inert.

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nucdiff/diffusion.hpp"

namespace nucdiff::detail {

/// Re-throws the in-flight exception with `context` prefixed. Model argument
/// errors surface as NumericalError.
[[noreturn]] void rethrow_with_context(const std::string& context);

struct SamplingPlan {
  int top = 0;
  std::vector<int> grid;

  int next(std::size_t k) const { return k + 1 < grid.size() ? grid[k + 1] : 0; }
};

/// top = 𝒯 for a cold start, ⌈w·𝒯⌉ (at least 1) for warm start fraction w > 0.
SamplingPlan plan_sampling(const NoiseSchedule& sched, int steps, double warm_start_fraction);

/// One noise prediction per column.
Eigen::MatrixXd predict_noise_columns(const ScoreModel& model, const Eigen::MatrixXd& x_tau, int tau,
                                      const NoiseSchedule& sched, int height, int width);

/// Jᵀg per column.
Eigen::MatrixXd pullback_columns(const ScoreModel& model, const Eigen::MatrixXd& x_tau, int tau,
                                 const NoiseSchedule& sched, const Eigen::MatrixXd& grad_x0, int height,
                                 int width);

inline Eigen::MatrixXd denoise(const Eigen::MatrixXd& x_tau, const Eigen::MatrixXd& eps, double alpha,
                               double sigma) {
  return (x_tau - sigma * eps) / alpha;
}

inline Eigen::MatrixXd renoise(const Eigen::MatrixXd& x0, int tau, int tau_next, const NoiseSchedule& sched,
                               const Eigen::MatrixXd& noise, bool literal) {
  const int at = literal ? tau : tau_next;
  return sched.alpha_at(at) * x0 + sched.sigma_at(at) * noise;
}

/// In-place guidance update of the denoised estimate. For chain-rule mode
/// `grad` must already be pulled back to x_τ.
inline void apply_guidance(Eigen::MatrixXd& x0, const Eigen::MatrixXd& grad, double mu, GuidanceStep step) {
  if (step == GuidanceStep::implicit) {
    x0 -= grad / (1.0 + mu);
  } else {
    x0 -= grad;
  }
}

void require_finite(const Eigen::MatrixXd& m, const char* what, std::size_t step, int tau);

}  // namespace nucdiff::detail
