#pragma once

// Nuclear diffusion posterior sampling: per-frame diffusion prior on the
// foreground X, nuclear-norm prior on the background L, both tied to the
// observation through Y = L + X + noise.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "nucdiff/diffusion.hpp"
#include "nucdiff/rpca.hpp"

namespace nucdiff {

enum class BackgroundUpdate {
  /// L ← L − η(∇_Lℰ + γ·∂‖L‖_*)
  subgradient,
  /// L ← svt(L − η∇_Lℰ, ηγ)
  proximal,
};

std::string to_string(BackgroundUpdate mode);
BackgroundUpdate parse_background_update(std::string_view name);

struct NucDiffConfig {
  double gamma = 1.0;
  double mu = 2.0;
  int steps = 500;
  NoiseSchedule schedule = make_schedule(ScheduleKind::vp_linear, 5000);
  /// η_L; unset means 1/μ.
  std::optional<double> background_step_size;
  BackgroundUpdate background_update = BackgroundUpdate::subgradient;
  double warm_start_fraction = 0.2;
  bool literal_paper_indexing = false;
  std::uint64_t seed = 0;
  GuidanceMode guidance_mode = GuidanceMode::denoised_estimate;
  GuidanceStep guidance_step = GuidanceStep::implicit;

  double step_size() const { return background_step_size.value_or(1.0 / mu); }
  void validate() const;

  /// The plain DPS configuration this sampler reduces to when L stays 0.
  DpsConfig dps_config() const;
};

struct TraceRecord {
  int tau = 0;
  double measurement_error = 0.0;  // ℰ_τ at the denoised estimate, before guidance
  double low_rank_penalty = 0.0;   // ℛ_τ = γ‖L‖_*, L entering the background update
  int rank = 0;                    // rank of that L
};

struct SamplerTrace {
  std::vector<TraceRecord> records;
};

/// Snapshot handed to an optional per-step observer.
struct StepView {
  std::size_t step;
  int tau;
  const Eigen::MatrixXd& x0;        // after guidance
  const Eigen::MatrixXd& l_before;  // L entering the background update
  const Eigen::MatrixXd& l_after;
};

using StepObserver = std::function<void(const StepView&)>;

/// Returns (L, X) with X the final denoised foreground. The Decomposition's
/// objective_trace holds ℰ_τ + ℛ_τ per step.
std::pair<Decomposition, SamplerTrace> nuclear_diffusion_sample(const CasoratiMatrix& y, const ScoreModel& model,
                                                                const NucDiffConfig& cfg,
                                                                const StepObserver& observer = {});

/// One background step given ∇_Lℰ.
CasoratiMatrix background_update(const CasoratiMatrix& l, const CasoratiMatrix& residual_grad,
                                 const NucDiffConfig& cfg);

/// Column t is the model's noise prediction for frame t.
CasoratiMatrix stacked_score(const CasoratiMatrix& frames_tau, int tau, const NoiseSchedule& sched,
                             const ScoreModel& model);

}  // namespace nucdiff
