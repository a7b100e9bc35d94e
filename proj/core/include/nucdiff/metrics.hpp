#pragma once

// Evaluation metrics: KS distance between ROI intensity distributions, gCNR
// between two ROIs, and inter-frame PSNR as a motion measure.

#include <span>
#include <vector>

#include "nucdiff/tensors.hpp"

namespace nucdiff {

class EmpiricalCdf {
 public:
  explicit EmpiricalCdf(std::vector<double> samples);

  /// Fraction of samples ≤ z.
  double operator()(double z) const;
  const std::vector<double>& sorted() const noexcept { return sorted_; }

 private:
  std::vector<double> sorted_;
};

/// sup_z |F_a(z) − F_b(z)|, exact over the merged sample points.
double ks_statistic(std::span<const double> a, std::span<const double> b);

inline constexpr int kDefaultGcnrBins = 100;

struct GcnrResult {
  double value = 0.0;
  /// Empty input or all pooled values equal; value is then 0.
  bool degenerate = false;
  int bins = kDefaultGcnrBins;
};

/// 1 − Σ_k min(h_a[k], h_b[k]) over shared bins spanning the pooled range.
GcnrResult gcnr(std::span<const double> a, std::span<const double> b, int bins = kDefaultGcnrBins);

/// Frame values at the mask's true positions, in pixel order.
std::vector<double> extract_roi(const Frame& frame, const RoiMask& mask);

/// 10·log10(peak²/MSE); +∞ for identical frames.
double motion_psnr(const Frame& y_t, const Frame& y_prev, double peak);

/// Mean motion_psnr over consecutive frame pairs; peak is the max |Y|.
double mean_motion_psnr(const CasoratiMatrix& y);

}  // namespace nucdiff
