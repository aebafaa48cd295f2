#include "mos/schedule.hpp"

#include <cmath>

#include "mos/errors.hpp"

namespace mos {

double schedule_value(double base, double final, long long step, long long total_steps, long long warmup_steps) {
  if (step < 0 || step > total_steps) throw ConfigError("schedule: step outside [0, total_steps]");
  if (warmup_steps < 0 || warmup_steps >= total_steps) throw ConfigError("schedule: need 0 <= warmup < total");
  if (step < warmup_steps) return base * static_cast<double>(step) / static_cast<double>(warmup_steps);
  const double progress = static_cast<double>(step - warmup_steps) / static_cast<double>(total_steps - warmup_steps);
  return final + (base - final) * 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
}

} // namespace mos
