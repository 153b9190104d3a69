// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace relalign {

enum class ScheduleKind { Exp, Log, Linear, Constant };

/// Annealing weight lambda_t in [0, 1] for the alignment regularizer.
///   exp:    e^((t/T - 1) * gamma)
///   log:    1 - e^(-(t/T) * gamma)
///   linear: t/T
inline double lambda_schedule(ScheduleKind kind, double gamma, std::int64_t t, std::int64_t total) {
  if (total < 1) throw std::invalid_argument("schedule: total steps must be >= 1");
  if (t < 0 || t > total)
    throw std::invalid_argument("schedule: step " + std::to_string(t) + " outside [0, " +
                                std::to_string(total) + "]");
  if (!(gamma > 0.0)) throw std::invalid_argument("schedule: gamma must be positive");
  const double frac = static_cast<double>(t) / static_cast<double>(total);
  switch (kind) {
    case ScheduleKind::Exp:
      return std::exp((frac - 1.0) * gamma);
    case ScheduleKind::Log:
      return 1.0 - std::exp(-frac * gamma);
    case ScheduleKind::Linear:
      return frac;
    case ScheduleKind::Constant:
      return 1.0;
  }
  throw std::logic_error("schedule: unknown kind");
}

}  // namespace relalign
