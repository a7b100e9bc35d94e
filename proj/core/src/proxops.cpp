#include "nucdiff/proxops.hpp"

#include <cmath>
#include <string>

#include "nucdiff/errors.hpp"

namespace nucdiff {

namespace {

void require_threshold(double t, const char* what) {
  if (!(t >= 0.0) || !std::isfinite(t)) {
    throw ArgumentError(std::string(what) + ": threshold must be finite and non-negative");
  }
}

}  // namespace

Eigen::Index SvdFactors::rank(double rel_tol) const {
  if (s.size() == 0 || s[0] <= 0.0) return 0;
  Eigen::Index r = 0;
  while (r < s.size() && s[r] > rel_tol * s[0]) ++r;
  return r;
}

SvdFactors thin_svd(const Eigen::Ref<const Eigen::MatrixXd>& m) {
  if (!m.allFinite()) throw NumericalError("thin_svd: non-finite input");
  Eigen::BDCSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.info() != Eigen::Success) throw NumericalError("thin_svd: SVD did not converge");
  return SvdFactors{svd.matrixU(), svd.singularValues(), svd.matrixV()};
}

Eigen::VectorXd singular_values(const Eigen::Ref<const Eigen::MatrixXd>& m) {
  if (!m.allFinite()) throw NumericalError("singular_values: non-finite input");
  Eigen::BDCSVD<Eigen::MatrixXd> svd(m);
  if (svd.info() != Eigen::Success) throw NumericalError("singular_values: SVD did not converge");
  return svd.singularValues();
}

Eigen::MatrixXd soft_threshold(const Eigen::Ref<const Eigen::MatrixXd>& m, double t) {
  require_threshold(t, "soft_threshold");
  return m.unaryExpr([t](double x) {
    const double shrunk = std::abs(x) - t;
    return shrunk > 0.0 ? std::copysign(shrunk, x) : 0.0;
  });
}

double nuclear_norm(const Eigen::Ref<const Eigen::MatrixXd>& m) {
  if (!m.allFinite()) throw ArgumentError("nuclear_norm: non-finite input");
  if (m.size() == 0) return 0.0;
  return singular_values(m).sum();
}

Eigen::MatrixXd svt(const Eigen::Ref<const Eigen::MatrixXd>& m, double t) {
  require_threshold(t, "svt");
  if (m.size() == 0) return m;
  const SvdFactors f = thin_svd(m);
  const Eigen::VectorXd shrunk = (f.s.array() - t).max(0.0).matrix();
  return f.u * shrunk.asDiagonal() * f.v.transpose();
}

Eigen::MatrixXd nuclear_subgradient(const SvdFactors& f, double rank_tol) {
  if (!(rank_tol > 0.0)) throw ArgumentError("nuclear_subgradient: rank_tol must be positive");
  const Eigen::Index r = f.rank(rank_tol);
  if (r == 0) return Eigen::MatrixXd::Zero(f.u.rows(), f.v.rows());
  return f.u.leftCols(r) * f.v.leftCols(r).transpose();
}

Eigen::MatrixXd nuclear_subgradient(const Eigen::Ref<const Eigen::MatrixXd>& m, double rank_tol) {
  if (!(rank_tol > 0.0)) throw ArgumentError("nuclear_subgradient: rank_tol must be positive");
  if (m.size() == 0) return m;
  return nuclear_subgradient(thin_svd(m), rank_tol);
}

}  // namespace nucdiff
