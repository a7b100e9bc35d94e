#pragma once

// Robust PCA baseline: Lagrangian principal component pursuit
//
//   min_{L,X} ‖L‖_* + λ‖X‖₁ + (μ/2)‖Y − L − X‖²_F
//
// solved by exact alternating block minimization.

#include <optional>
#include <vector>

#include "nucdiff/tensors.hpp"

namespace nucdiff {

struct RpcaConfig {
  /// Sparsity weight. Unset means the standard 1/√max(n, p).
  std::optional<double> lambda;
  double mu = 2.0;
  int max_iters = 500;
  double rel_tol = 1e-6;

  double lambda_for(Eigen::Index n, Eigen::Index p) const;
  void validate() const;
};

struct Decomposition {
  CasoratiMatrix l;
  CasoratiMatrix x;
  std::vector<double> objective_trace;
  int iterations = 0;
  bool converged = false;
};

double rpca_objective(const CasoratiMatrix& y, const CasoratiMatrix& l, const CasoratiMatrix& x,
                      const RpcaConfig& cfg);

/// X ← soft_threshold(Y − L, λ/μ); L ← svt(Y − X, 1/μ), starting from L = X = 0.
/// objective_trace[0] is the objective at the origin; one entry per iteration
/// follows. Stops when ‖Δ(L,X)‖_F / max(1, ‖(L,X)‖_F) < rel_tol.
Decomposition rpca_solve(const CasoratiMatrix& y, const RpcaConfig& cfg = {});

/// log p(Y, L, X) for the Gaussian/nuclear/Laplace model, additive constant 0:
///   −[γ‖L‖_* + λ‖X‖₁ + (μ/2)‖Y − L − X‖²_F]
double rpca_log_posterior(const CasoratiMatrix& y, const CasoratiMatrix& l, const CasoratiMatrix& x,
                          const RpcaConfig& cfg, double gamma);

}  // namespace nucdiff
