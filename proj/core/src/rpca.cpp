#include "nucdiff/rpca.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "nucdiff/errors.hpp"
#include "nucdiff/proxops.hpp"

namespace nucdiff {

double RpcaConfig::lambda_for(Eigen::Index n, Eigen::Index p) const {
  if (lambda) return *lambda;
  return 1.0 / std::sqrt(static_cast<double>(std::max(n, p)));
}

void RpcaConfig::validate() const {
  if (lambda && !(*lambda > 0.0)) throw ArgumentError("RpcaConfig: lambda must be positive");
  if (!(mu > 0.0)) throw ArgumentError("RpcaConfig: mu must be positive");
  if (max_iters < 1) throw ArgumentError("RpcaConfig: max_iters must be at least 1");
  if (!(rel_tol > 0.0)) throw ArgumentError("RpcaConfig: rel_tol must be positive");
}

namespace {

double objective(const Eigen::MatrixXd& y, const Eigen::MatrixXd& l, const Eigen::MatrixXd& x,
                 double lambda, double mu, double gamma) {
  return gamma * nuclear_norm(l) + lambda * x.lpNorm<1>() + 0.5 * mu * (y - l - x).squaredNorm();
}

}  // namespace

double rpca_objective(const CasoratiMatrix& y, const CasoratiMatrix& l, const CasoratiMatrix& x,
                      const RpcaConfig& cfg) {
  require_same_shape(y, l, "rpca_objective");
  require_same_shape(y, x, "rpca_objective");
  cfg.validate();
  return objective(y.values(), l.values(), x.values(), cfg.lambda_for(y.pixels(), y.frames()), cfg.mu, 1.0);
}

double rpca_log_posterior(const CasoratiMatrix& y, const CasoratiMatrix& l, const CasoratiMatrix& x,
                          const RpcaConfig& cfg, double gamma) {
  require_same_shape(y, l, "rpca_log_posterior");
  require_same_shape(y, x, "rpca_log_posterior");
  cfg.validate();
  if (!(gamma > 0.0)) throw ArgumentError("rpca_log_posterior: gamma must be positive");
  return -objective(y.values(), l.values(), x.values(), cfg.lambda_for(y.pixels(), y.frames()), cfg.mu,
                    gamma);
}

Decomposition rpca_solve(const CasoratiMatrix& y, const RpcaConfig& cfg) {
  cfg.validate();
  const Eigen::MatrixXd& yv = y.values();
  const double lambda = cfg.lambda_for(y.pixels(), y.frames());

  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(yv.rows(), yv.cols());
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(yv.rows(), yv.cols());

  std::vector<double> trace{objective(yv, l, x, lambda, cfg.mu, 1.0)};
  bool converged = false;
  int iter = 0;
  while (iter < cfg.max_iters) {
    ++iter;
    Eigen::MatrixXd x_next = soft_threshold(yv - l, lambda / cfg.mu);
    Eigen::MatrixXd l_next;
    try {
      l_next = svt(yv - x_next, 1.0 / cfg.mu);
    } catch (const NumericalError& e) {
      std::ostringstream msg;
      msg << "rpca_solve: iteration " << iter << ": " << e.what();
      throw NumericalError(msg.str());
    }
    if (!x_next.allFinite() || !l_next.allFinite()) {
      std::ostringstream msg;
      msg << "rpca_solve: non-finite iterate at iteration " << iter;
      throw NumericalError(msg.str());
    }

    const double change = std::sqrt((x_next - x).squaredNorm() + (l_next - l).squaredNorm());
    const double scale = std::max(1.0, std::sqrt(x.squaredNorm() + l.squaredNorm()));
    l = std::move(l_next);
    x = std::move(x_next);
    trace.push_back(objective(yv, l, x, lambda, cfg.mu, 1.0));

    if (change / scale < cfg.rel_tol) {
      converged = true;
      break;
    }
  }

  return Decomposition{y.with_values(std::move(l)), y.with_values(std::move(x)), std::move(trace), iter,
                       converged};
}

}  // namespace nucdiff
