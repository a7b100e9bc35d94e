#pragma once

// Synthetic planted instances Y = L + X + σ·ε: a low-rank drifting haze L, a
// foreground X drawn from a known prior, and two ROI masks.
//
// Geometry of the default gmm-blobs foreground (fractions of the frame):
// a wide primary blob ("septum") in the upper half and a smaller secondary
// blob, both wrapping horizontally and translating by motion_level·width
// pixels per frame. The ventricle ROI is a box in the lower half where the
// foreground is (numerically) empty and the haze is strongest.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "nucdiff/score_models.hpp"
#include "nucdiff/tensors.hpp"

namespace nucdiff {

enum class ForegroundKind { sparse, gaussian, gmm_blobs };

std::string to_string(ForegroundKind kind);
ForegroundKind parse_foreground_kind(std::string_view name);

struct ForegroundParams {
  /// sparse: Bernoulli support probability and uniform amplitude bound.
  double sparse_density = 0.05;
  double sparse_amplitude = 1.0;
  /// gaussian / gmm-blobs: peak of the primary blob and per-pixel texture
  /// standard deviation (the prior's stddev).
  double blob_amplitude = 1.0;
  double texture_std = 0.03;
};

struct SynthSpec {
  int frame_height = 32;
  int frame_width = 32;
  int num_frames = 7;
  int background_rank = 2;
  double background_amplitude = 0.6;
  ForegroundKind foreground_kind = ForegroundKind::gmm_blobs;
  ForegroundParams foreground;
  double motion_level = 0.1;
  double observation_noise_std = 0.02;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SynthInstance {
  SynthSpec spec;
  CasoratiMatrix y;
  CasoratiMatrix l_true;
  CasoratiMatrix x_true;
  RoiMask ventricle;  // Ω_V
  RoiMask septum;     // Ω_S
  /// Exact prior of the foreground columns, when it has one.
  std::optional<GmmPrior> gmm_prior;
  std::optional<GaussianPrior> gaussian_prior;
};

/// Noise-free blob image translated by `shift` pixels (horizontal wrap).
Frame tissue_frame(const SynthSpec& spec, double shift);

SynthInstance generate(const SynthSpec& spec);

/// Instance i uses seed base.seed + i·0x9E3779B97F4A7C15 (instance 0 keeps
/// the base seed).
std::vector<std::pair<double, SynthInstance>> motion_sweep(const SynthSpec& base, const std::vector<double>& levels);

std::uint64_t sweep_seed(std::uint64_t base, std::size_t index);

}  // namespace nucdiff
