#include "nucdiff/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "nucdiff/diffusion.hpp"
#include "nucdiff/errors.hpp"

namespace nucdiff {

std::string to_string(ForegroundKind kind) {
  switch (kind) {
    case ForegroundKind::sparse:
      return "sparse";
    case ForegroundKind::gaussian:
      return "gaussian";
    case ForegroundKind::gmm_blobs:
      return "gmm-blobs";
  }
  return "unknown";
}

ForegroundKind parse_foreground_kind(std::string_view name) {
  if (name == "sparse") return ForegroundKind::sparse;
  if (name == "gaussian") return ForegroundKind::gaussian;
  if (name == "gmm-blobs" || name == "gmm_blobs") return ForegroundKind::gmm_blobs;
  throw ArgumentError("unknown foreground kind '" + std::string(name) + "'");
}

void SynthSpec::validate() const {
  if (frame_height < 1 || frame_width < 1) throw ArgumentError("SynthSpec: frame size must be positive");
  if (num_frames < 1) throw ArgumentError("SynthSpec: num_frames must be at least 1");
  const long n = static_cast<long>(frame_height) * frame_width;
  if (background_rank < 0 || background_rank > std::min<long>(n, num_frames)) {
    throw ArgumentError("SynthSpec: background_rank " + std::to_string(background_rank) + " exceeds min(n, p) = " +
                        std::to_string(std::min<long>(n, num_frames)));
  }
  if (!(background_amplitude >= 0.0)) throw ArgumentError("SynthSpec: background_amplitude must be non-negative");
  if (!(motion_level >= 0.0 && motion_level <= 1.0)) throw ArgumentError("SynthSpec: motion_level must lie in [0, 1]");
  if (!(observation_noise_std >= 0.0)) throw ArgumentError("SynthSpec: observation_noise_std must be non-negative");
  const auto& f = foreground;
  if (!(f.sparse_density >= 0.0 && f.sparse_density <= 1.0)) {
    throw ArgumentError("SynthSpec: sparse_density must lie in [0, 1]");
  }
  if (!(f.sparse_amplitude >= 0.0)) throw ArgumentError("SynthSpec: sparse_amplitude must be non-negative");
  if (!(f.blob_amplitude >= 0.0)) throw ArgumentError("SynthSpec: blob_amplitude must be non-negative");
  if (foreground_kind != ForegroundKind::sparse && !(f.texture_std > 0.0)) {
    throw ArgumentError("SynthSpec: texture_std must be positive for prior-backed foregrounds");
  }
}

namespace {

struct Grid {
  int h;
  int w;
  double sx;  // pixels per 32-pixel reference unit
  double sy;
};

Grid grid_of(const SynthSpec& spec) {
  return {spec.frame_height, spec.frame_width, spec.frame_width / 32.0, spec.frame_height / 32.0};
}

double wrapped(double dx, int w) {
  const double half = w / 2.0;
  double r = std::fmod(dx + half, static_cast<double>(w));
  if (r < 0) r += w;
  return r - half;
}

// Elliptical Gaussian blob; center and axes in reference units of a 32×32 frame.
Eigen::VectorXd blob(const Grid& g, double cx, double cy, double ax, double ay, double amp, double shift) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(g.h) * g.w);
  for (int r = 0; r < g.h; ++r) {
    for (int c = 0; c < g.w; ++c) {
      const double dx = wrapped(c - (cx * g.sx + shift), g.w) / (ax * g.sx);
      const double dy = (r - cy * g.sy) / (ay * g.sy);
      out[static_cast<Eigen::Index>(r) * g.w + c] = amp * std::exp(-0.5 * (dx * dx + dy * dy));
    }
  }
  return out;
}

Eigen::VectorXd primary_blob(const Grid& g, double amp, double shift) { return blob(g, 16, 11, 9, 3.5, amp, shift); }

Eigen::VectorXd tissue(const Grid& g, double amp, double shift) {
  return primary_blob(g, amp, shift) + blob(g, 6, 5, 4, 2.5, 0.6 * amp, shift);
}

// Spatial haze factors: a bump under the ventricle box, then raised cosine
// modes of increasing frequency.
Eigen::VectorXd spatial_factor(const Grid& g, int i) {
  Eigen::VectorXd u(static_cast<Eigen::Index>(g.h) * g.w);
  if (i == 0) return blob(g, 16, 24, 10, 7, 1.0, 0.0);
  // i-th frequency pair along anti-diagonals: (1,1), (2,1), (1,2), (3,1), ...
  int ky = 1;
  int kx = 1;
  for (int m = 1, diag = 2; m <= i; ++diag) {
    for (int a = diag - 1; a >= 1 && m <= i; --a, ++m) {
      ky = a;
      kx = diag - a;
    }
  }
  for (int r = 0; r < g.h; ++r) {
    for (int c = 0; c < g.w; ++c) {
      u[static_cast<Eigen::Index>(r) * g.w + c] =
          0.5 + 0.5 * std::cos(std::numbers::pi * ky * r / g.h) * std::cos(std::numbers::pi * kx * c / g.w);
    }
  }
  return u;
}

// Temporal factors built from DCT-II atoms d_k(t) = cos(πk(t + ½)/p):
// v₁ = 1 + 0.1·d₁, v_i = 0.5 + 0.2·d_{i−1}. Independent for i ≤ p.
Eigen::VectorXd temporal_factor(int p, int i) {
  auto atom = [p](int k, int t) { return std::cos(std::numbers::pi * k * (t + 0.5) / p); };
  Eigen::VectorXd v(p);
  for (int t = 0; t < p; ++t) {
    if (i == 0) {
      v[t] = 1.0 + (p > 1 ? 0.1 * atom(1, t) : 0.0);
    } else {
      v[t] = 0.5 + 0.2 * atom(std::max(i, 1), t);
    }
  }
  return v;
}

std::vector<bool> ventricle_box(const Grid& g) {
  const int r0 = static_cast<int>(std::lround(0.6875 * g.h));
  const int r1 = std::max(r0 + 1, static_cast<int>(std::lround(0.9375 * g.h)));
  const int c0 = static_cast<int>(std::lround(0.3125 * g.w));
  const int c1 = std::max(c0 + 1, static_cast<int>(std::lround(0.6875 * g.w)));
  std::vector<bool> mask(static_cast<std::size_t>(g.h) * g.w, false);
  for (int r = std::min(r0, g.h - 1); r < std::min(r1, g.h); ++r) {
    for (int c = std::min(c0, g.w - 1); c < std::min(c1, g.w); ++c) mask[static_cast<std::size_t>(r) * g.w + c] = true;
  }
  return mask;
}

}  // namespace

Frame tissue_frame(const SynthSpec& spec, double shift) {
  const Grid g = grid_of(spec);
  return Frame(tissue(g, spec.foreground.blob_amplitude, shift), g.h, g.w);
}

SynthInstance generate(const SynthSpec& spec) {
  spec.validate();
  const Grid g = grid_of(spec);
  const Eigen::Index n = static_cast<Eigen::Index>(g.h) * g.w;
  const int p = spec.num_frames;
  const auto& fg = spec.foreground;
  Rng rng(spec.seed);

  // Background.
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, p);
  for (int i = 0; i < spec.background_rank; ++i) {
    const double a = spec.background_amplitude * std::pow(0.5, i);
    l += a * spatial_factor(g, i) * temporal_factor(p, i).transpose();
  }

  const std::vector<bool> vbox = ventricle_box(g);
  std::vector<bool> septum(static_cast<std::size_t>(n), false);
  {
    const Eigen::VectorXd primary = primary_blob(g, 1.0, 0.0);
    for (Eigen::Index i = 0; i < n; ++i) septum[static_cast<std::size_t>(i)] = primary[i] > 0.5;
  }

  // Foreground.
  Eigen::MatrixXd x(n, p);
  std::optional<GmmPrior> gmm;
  std::optional<GaussianPrior> gaussian;
  switch (spec.foreground_kind) {
    case ForegroundKind::sparse: {
      std::bernoulli_distribution on(fg.sparse_density);
      std::uniform_real_distribution<double> amp(-fg.sparse_amplitude, fg.sparse_amplitude);
      for (int t = 0; t < p; ++t) {
        for (Eigen::Index i = 0; i < n; ++i) {
          const bool active = on(rng);
          const double value = active ? amp(rng) : 0.0;
          x(i, t) = vbox[static_cast<std::size_t>(i)] ? 0.0 : value;
        }
      }
      std::vector<bool> support(static_cast<std::size_t>(n));
      bool any = false;
      for (Eigen::Index i = 0; i < n; ++i) {
        support[static_cast<std::size_t>(i)] = x(i, 0) != 0.0;
        any = any || support[static_cast<std::size_t>(i)];
      }
      if (any) septum = std::move(support);
      break;
    }
    case ForegroundKind::gaussian: {
      const Eigen::VectorXd mean = tissue(g, fg.blob_amplitude, 0.0);
      x = mean.replicate(1, p) + fg.texture_std * standard_normal(rng, n, p);
      gaussian.emplace(Frame(mean, g.h, g.w), fg.texture_std);
      break;
    }
    case ForegroundKind::gmm_blobs: {
      // Frame t is a draw from mixture component t: the tissue translated by
      // t·motion·width pixels, plus isotropic texture.
      std::vector<GmmComponent> comps;
      Eigen::MatrixXd means(n, p);
      for (int t = 0; t < p; ++t) {
        means.col(t) = tissue(g, fg.blob_amplitude, t * spec.motion_level * g.w);
        comps.push_back({1.0 / p, Frame(means.col(t), g.h, g.w), fg.texture_std});
      }
      x = means + fg.texture_std * standard_normal(rng, n, p);
      gmm.emplace(std::move(comps));
      break;
    }
  }

  for (std::size_t i = 0; i < septum.size(); ++i) septum[i] = septum[i] && !vbox[i];
  if (std::none_of(septum.begin(), septum.end(), [](bool b) { return b; })) {
    throw ArgumentError("generate: frame too small for disjoint regions of interest");
  }

  Eigen::MatrixXd y = l + x;
  if (spec.observation_noise_std > 0.0) y += spec.observation_noise_std * standard_normal(rng, n, p);

  return SynthInstance{spec,
                       CasoratiMatrix(std::move(y), g.h, g.w),
                       CasoratiMatrix(std::move(l), g.h, g.w),
                       CasoratiMatrix(std::move(x), g.h, g.w),
                       RoiMask(vbox, g.h, g.w, RoiLabel::ventricle),
                       RoiMask(std::move(septum), g.h, g.w, RoiLabel::septum),
                       std::move(gmm),
                       std::move(gaussian)};
}

std::uint64_t sweep_seed(std::uint64_t base, std::size_t index) {
  return base + static_cast<std::uint64_t>(index) * 0x9E3779B97F4A7C15ULL;
}

std::vector<std::pair<double, SynthInstance>> motion_sweep(const SynthSpec& base, const std::vector<double>& levels) {
  for (double level : levels) {
    if (!(level >= 0.0 && level <= 1.0)) throw ArgumentError("motion_sweep: level must lie in [0, 1]");
  }
  std::vector<std::pair<double, SynthInstance>> out;
  out.reserve(levels.size());
  for (std::size_t i = 0; i < levels.size(); ++i) {
    SynthSpec spec = base;
    spec.motion_level = levels[i];
    spec.seed = sweep_seed(base.seed, i);
    out.emplace_back(levels[i], generate(spec));
  }
  return out;
}

}  // namespace nucdiff
