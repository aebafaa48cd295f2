#pragma once

namespace mos {

/**
 * Warmup + half-cosine schedule. For step < warmup_steps the value ramps
 * linearly from 0 to base; afterwards it follows a half cosine from base at
 * the end of warmup to final at total_steps. Both endpoints are hit exactly.
 * warmup_steps = 0 gives a pure cosine.
 */
double schedule_value(double base, double final, long long step, long long total_steps, long long warmup_steps);

} // namespace mos
