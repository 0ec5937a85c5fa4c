#pragma once

#include <cstdint>

namespace sqz {

// Piecewise learning-rate schedule: linear warmup to lr_peak over warmup
// steps, a flat plateau, then polynomial decay
//   lr(t) = lr_peak * warmup^d / (t - plateau)^d   for t >= warmup + plateau.
// The decay denominator subtracts only the plateau length, which makes both
// breakpoints continuous. d = 0.5 with plateau = 0 is classic Noam annealing.
struct ScheduleParams {
  double lr_peak = 1e-3;
  double warmup_steps = 1000.0;   // > 0
  double plateau_steps = 0.0;     // >= 0
  double decay = 1.0;             // > 0
};

void validate(const ScheduleParams& p);  // throws std::invalid_argument

double lr(double step, const ScheduleParams& p);

}  // namespace sqz
