#pragma once

// Score models: two analytic priors with exact scores (used to verify the
// samplers) and a small multilayer perceptron loaded from an "NDW1" weight
// file.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "nucdiff/score_model.hpp"

namespace nucdiff {

/// Isotropic Gaussian prior N(mean, stddev²·I).
///
/// The marginal of x_τ is N(α_τ·m, (α_τ² s² + σ_τ²)·I), so
///   ε(x_τ) = σ_τ (x_τ − α_τ m)/(α_τ² s² + σ_τ²).
class GaussianPrior final : public ScoreModel {
 public:
  GaussianPrior(Frame mean, double stddev);

  const Frame& mean() const noexcept { return mean_; }
  double stddev() const noexcept { return stddev_; }

  Frame predict_noise(const Frame& x_tau, int tau, const NoiseSchedule& sched) const override;
  Frame noise_vjp(const Frame& x_tau, int tau, const NoiseSchedule& sched, const Frame& v) const override;
  bool has_noise_vjp() const override { return true; }
  Eigen::Index input_size() const override { return mean_.size(); }

  /// E[x₀ | x_τ], closed form.
  Frame posterior_mean(const Frame& x_tau, int tau, const NoiseSchedule& sched) const;

 private:
  Frame mean_;
  double stddev_;
};

struct GmmComponent {
  double weight;
  Frame mean;
  double stddev;
};

/// Mixture of isotropic Gaussians. Responsibilities are computed with
/// log-sum-exp.
class GmmPrior final : public ScoreModel {
 public:
  explicit GmmPrior(std::vector<GmmComponent> components);

  const std::vector<GmmComponent>& components() const noexcept { return components_; }

  Frame predict_noise(const Frame& x_tau, int tau, const NoiseSchedule& sched) const override;
  Frame noise_vjp(const Frame& x_tau, int tau, const NoiseSchedule& sched, const Frame& v) const override;
  bool has_noise_vjp() const override { return true; }
  Eigen::Index input_size() const override { return components_.front().mean.size(); }

  /// Posterior component probabilities given x_τ.
  Eigen::VectorXd responsibilities(const Frame& x_tau, int tau, const NoiseSchedule& sched) const;

  /// log p(x_τ), the marginal density at step τ.
  double log_marginal(const Frame& x_tau, int tau, const NoiseSchedule& sched) const;

 private:
  std::vector<GmmComponent> components_;
};

enum class Activation : std::uint8_t { relu = 0, silu = 1 };

struct DenseLayer {
  Eigen::MatrixXd weights;  // out × in
  Eigen::VectorXd bias;     // out
};

/// Fully connected noise predictor. Input is the vectorized frame with the
/// normalized time τ/𝒯 appended as one extra channel; the activation is
/// applied after every layer except the last.
class MlpDenoiser final : public ScoreModel {
 public:
  MlpDenoiser(std::vector<DenseLayer> layers, Activation activation);

  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
  Activation activation() const noexcept { return activation_; }
  std::vector<int> layer_dims() const;

  Frame predict_noise(const Frame& x_tau, int tau, const NoiseSchedule& sched) const override;
  Frame noise_vjp(const Frame& x_tau, int tau, const NoiseSchedule& sched, const Frame& v) const override;
  bool has_noise_vjp() const override { return true; }
  Eigen::Index input_size() const override { return layers_.front().weights.cols() - 1; }

  /// Raw forward pass on an (n + 1)-vector.
  Eigen::VectorXd forward(const Eigen::VectorXd& input) const;

 private:
  std::vector<DenseLayer> layers_;
  Activation activation_;
};

// Weight file ("NDW1"), little-endian:
//   "NDW1" | u32 layer count |
//   per layer: u32 in_dim, u32 out_dim, f32 weights (out_dim rows of in_dim,
//              row-major), f32 biases (out_dim) |
//   u8 activation (0 = relu, 1 = silu)

std::vector<std::uint8_t> encode_weights(const MlpDenoiser& model);
MlpDenoiser decode_weights(std::span<const std::uint8_t> bytes);

MlpDenoiser load_weights(const std::filesystem::path& path);
void save_weights(const std::filesystem::path& path, const MlpDenoiser& model);

}  // namespace nucdiff
