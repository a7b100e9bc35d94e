#include "nucdiff/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "nucdiff/errors.hpp"

namespace nucdiff {

EmpiricalCdf::EmpiricalCdf(std::vector<double> samples) : sorted_(std::move(samples)) {
  if (sorted_.empty()) throw ArgumentError("EmpiricalCdf: no samples");
  std::sort(sorted_.begin(), sorted_.end());
}

double EmpiricalCdf::operator()(double z) const {
  const auto it = std::upper_bound(sorted_.begin(), sorted_.end(), z);
  return static_cast<double>(it - sorted_.begin()) / static_cast<double>(sorted_.size());
}

double ks_statistic(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw ArgumentError("ks_statistic: both samples must be non-empty");
  std::vector<double> sa(a.begin(), a.end());
  std::vector<double> sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());

  // Walk the merged order statistics; after consuming every copy of a value
  // both CDFs are evaluated exactly at that value.
  const double na = static_cast<double>(sa.size());
  const double nb = static_cast<double>(sb.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double best = 0.0;
  while (i < sa.size() || j < sb.size()) {
    double z;
    if (j == sb.size() || (i < sa.size() && sa[i] <= sb[j])) {
      z = sa[i];
    } else {
      z = sb[j];
    }
    while (i < sa.size() && sa[i] == z) ++i;
    while (j < sb.size() && sb[j] == z) ++j;
    best = std::max(best, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return best;
}

GcnrResult gcnr(std::span<const double> a, std::span<const double> b, int bins) {
  if (bins < 2) throw ArgumentError("gcnr: bins must be at least 2");
  GcnrResult out;
  out.bins = bins;
  if (a.empty() || b.empty()) {
    out.degenerate = true;
    return out;
  }
  const auto [amin, amax] = std::minmax_element(a.begin(), a.end());
  const auto [bmin, bmax] = std::minmax_element(b.begin(), b.end());
  const double lo = std::min(*amin, *bmin);
  const double hi = std::max(*amax, *bmax);
  if (!std::isfinite(lo) || !std::isfinite(hi)) throw ArgumentError("gcnr: non-finite sample");
  if (!(hi > lo)) {
    out.degenerate = true;
    return out;
  }

  const double width = (hi - lo) / bins;
  auto histogram = [&](std::span<const double> s) {
    std::vector<double> h(static_cast<std::size_t>(bins), 0.0);
    for (double v : s) {
      // Right edge of the last bin is closed.
      auto k = static_cast<long>(std::floor((v - lo) / width));
      k = std::clamp(k, 0L, static_cast<long>(bins) - 1);
      h[static_cast<std::size_t>(k)] += 1.0;
    }
    for (double& c : h) c /= static_cast<double>(s.size());
    return h;
  };
  const auto ha = histogram(a);
  const auto hb = histogram(b);
  double overlap = 0.0;
  for (std::size_t k = 0; k < ha.size(); ++k) overlap += std::min(ha[k], hb[k]);
  out.value = std::clamp(1.0 - overlap, 0.0, 1.0);
  return out;
}

std::vector<double> extract_roi(const Frame& frame, const RoiMask& mask) {
  if (frame.height() != mask.height() || frame.width() != mask.width()) {
    throw ShapeError("extract_roi: mask is " + std::to_string(mask.height()) + "x" + std::to_string(mask.width()) +
                     ", frame is " + std::to_string(frame.height()) + "x" + std::to_string(frame.width()));
  }
  std::vector<double> out;
  out.reserve(mask.count());
  for (Eigen::Index i = 0; i < frame.size(); ++i) {
    if (mask[static_cast<std::size_t>(i)]) out.push_back(frame.values()[i]);
  }
  return out;
}

double motion_psnr(const Frame& y_t, const Frame& y_prev, double peak) {
  if (!y_t.same_shape(y_prev)) throw ShapeError("motion_psnr: frames differ in shape");
  if (!(peak > 0.0)) throw ArgumentError("motion_psnr: peak must be positive");
  const double mse = (y_t.values() - y_prev.values()).squaredNorm() / static_cast<double>(y_t.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

double mean_motion_psnr(const CasoratiMatrix& y) {
  if (y.frames() < 2) throw ArgumentError("mean_motion_psnr: need at least two frames");
  const double peak = y.values().cwiseAbs().maxCoeff();
  if (!(peak > 0.0)) return std::numeric_limits<double>::infinity();
  double total = 0.0;
  for (Eigen::Index t = 1; t < y.frames(); ++t) total += motion_psnr(y.frame(t), y.frame(t - 1), peak);
  return total / static_cast<double>(y.frames() - 1);
}

}  // namespace nucdiff
