#include "nucdiff/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "nucdiff/errors.hpp"

namespace nucdiff {

std::string to_string(ScheduleKind kind) {
  return kind == ScheduleKind::vp_linear ? "vp-linear" : "vp-cosine";
}

ScheduleKind parse_schedule_kind(std::string_view name) {
  if (name == "vp-linear" || name == "variance-preserving-linear" || name == "linear") {
    return ScheduleKind::vp_linear;
  }
  if (name == "vp-cosine" || name == "variance-preserving-cosine" || name == "cosine") {
    return ScheduleKind::vp_cosine;
  }
  throw ArgumentError("unknown schedule kind '" + std::string(name) + "'");
}

double NoiseSchedule::alpha_at(int tau) const {
  require_step(tau, "NoiseSchedule::alpha_at");
  return alpha[static_cast<std::size_t>(tau)];
}

double NoiseSchedule::sigma_at(int tau) const {
  require_step(tau, "NoiseSchedule::sigma_at");
  return sigma[static_cast<std::size_t>(tau)];
}

void NoiseSchedule::require_step(int tau, const char* what) const {
  if (tau < 0 || tau > total_steps) {
    std::ostringstream msg;
    msg << what << ": step " << tau << " outside [0, " << total_steps << "]";
    throw ArgumentError(msg.str());
  }
}

double linear_beta(int i, int steps) {
  const double lo = 0.1 / steps;
  const double hi = 20.0 / steps;
  const double frac = steps > 1 ? static_cast<double>(i - 1) / (steps - 1) : 0.0;
  return std::min(lo + (hi - lo) * frac, 0.999);
}

NoiseSchedule make_schedule(ScheduleKind kind, int steps) {
  if (steps < 1) throw ArgumentError("make_schedule: steps must be at least 1");

  NoiseSchedule s;
  s.kind = kind;
  s.total_steps = steps;
  s.alpha.assign(static_cast<std::size_t>(steps) + 1, 1.0);
  s.sigma.assign(static_cast<std::size_t>(steps) + 1, 0.0);

  double alpha_bar = 1.0;
  if (kind == ScheduleKind::vp_linear) {
    for (int i = 1; i <= steps; ++i) {
      alpha_bar *= 1.0 - linear_beta(i, steps);
      s.alpha[static_cast<std::size_t>(i)] = std::sqrt(alpha_bar);
      s.sigma[static_cast<std::size_t>(i)] = std::sqrt(1.0 - alpha_bar);
    }
  } else {
    constexpr double offset = 0.008;
    auto f = [&](int tau) {
      const double c = std::cos((static_cast<double>(tau) / steps + offset) / (1.0 + offset) *
                                std::numbers::pi / 2.0);
      return c * c;
    };
    for (int i = 1; i <= steps; ++i) {
      const double beta = std::min(1.0 - f(i) / f(i - 1), 0.999);
      alpha_bar *= 1.0 - beta;
      s.alpha[static_cast<std::size_t>(i)] = std::sqrt(alpha_bar);
      s.sigma[static_cast<std::size_t>(i)] = std::sqrt(1.0 - alpha_bar);
    }
  }
  return s;
}

std::vector<int> sampling_grid(int top, int steps) {
  if (top < 1) throw ArgumentError("sampling_grid: top step must be at least 1");
  if (steps < 1) throw ArgumentError("sampling_grid: steps must be at least 1");
  const int count = std::min(steps, top);
  std::vector<int> grid(static_cast<std::size_t>(count));
  if (count == 1) {
    grid[0] = top;
    return grid;
  }
  const double spacing = static_cast<double>(top - 1) / (count - 1);
  for (int k = 0; k < count; ++k) {
    grid[static_cast<std::size_t>(k)] = static_cast<int>(std::lround(top - k * spacing));
  }
  return grid;
}

}  // namespace nucdiff
