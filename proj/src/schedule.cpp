#include "sqz/schedule.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace sqz {

void validate(const ScheduleParams& p) {
  if (p.lr_peak < 0.0) {
    throw std::invalid_argument("schedule: lr_peak must be >= 0");
  }
  if (p.warmup_steps <= 0.0) {
    throw std::invalid_argument("schedule: warmup_steps must be positive");
  }
  if (p.plateau_steps < 0.0) {
    throw std::invalid_argument("schedule: plateau_steps must be >= 0");
  }
  if (p.decay <= 0.0) {
    throw std::invalid_argument("schedule: decay must be positive");
  }
}

double lr(double step, const ScheduleParams& p) {
  if (step < 0.0) {
    throw std::invalid_argument("schedule: step must be >= 0, got " +
                                std::to_string(step));
  }
  if (step < p.warmup_steps) {
    return p.lr_peak * step / p.warmup_steps;
  }
  if (step < p.warmup_steps + p.plateau_steps) {
    return p.lr_peak;
  }
  return p.lr_peak * std::pow(p.warmup_steps, p.decay) /
         std::pow(step - p.plateau_steps, p.decay);
}

}  // namespace sqz
