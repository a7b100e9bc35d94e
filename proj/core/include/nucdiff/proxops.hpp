#pragma once

// Proximal operators and penalties shared by the RPCA baseline and the
// nuclear-diffusion sampler.

#include <Eigen/Dense>

namespace nucdiff {

/// Thin SVD, singular values non-increasing.
struct SvdFactors {
  Eigen::MatrixXd u;  // n×r, orthonormal columns
  Eigen::VectorXd s;  // r
  Eigen::MatrixXd v;  // p×r, orthonormal columns

  Eigen::Index rank(double rel_tol = 1e-10) const;
};

SvdFactors thin_svd(const Eigen::Ref<const Eigen::MatrixXd>& m);
Eigen::VectorXd singular_values(const Eigen::Ref<const Eigen::MatrixXd>& m);

/// Elementwise sign(x)·max(|x| − t, 0): the prox of t‖·‖₁.
Eigen::MatrixXd soft_threshold(const Eigen::Ref<const Eigen::MatrixXd>& m, double t);

/// Sum of singular values.
double nuclear_norm(const Eigen::Ref<const Eigen::MatrixXd>& m);

/// Singular-value thresholding U·max(S − t, 0)·Vᵀ: the prox of t‖·‖_*.
Eigen::MatrixXd svt(const Eigen::Ref<const Eigen::MatrixXd>& m, double t);

inline constexpr double kDefaultRankTol = 1e-10;

/// U_r V_rᵀ over singular triplets with s_i > rank_tol·s_1. The zero matrix
/// maps to zero, a valid element of the subdifferential there.
Eigen::MatrixXd nuclear_subgradient(const Eigen::Ref<const Eigen::MatrixXd>& m,
                                    double rank_tol = kDefaultRankTol);

/// Same as nuclear_subgradient but reuses an existing factorization.
Eigen::MatrixXd nuclear_subgradient(const SvdFactors& f, double rank_tol = kDefaultRankTol);

}  // namespace nucdiff
