#include "dsmc/adc.hpp"

#include <algorithm>
#include <cmath>

namespace dsmc {

AdcChannel::AdcChannel(double period, int bits, double range_lo, double range_hi)
    : period_(period), bits_(bits), range_lo_(range_lo), range_hi_(range_hi) {
    if (bits < 2) throw ConfigError("ADC word length must be >= 2 bits");
    if (range_hi <= range_lo) throw ConfigError("ADC range_hi must exceed range_lo");
    if (period <= 0.0) throw ConfigError("ADC period must be > 0");
    const double levels = std::ldexp(1.0, bits) - 1.0;  // 2^bits - 1
    step_ = (range_hi - range_lo) / levels;
}

double AdcChannel::quantize(double v) {
    double clamped = v;
    if (v < range_lo_ || v > range_hi_) {
        ++saturation_count_;
        clamped = std::clamp(v, range_lo_, range_hi_);
    }
    const double idx = std::round((clamped - range_lo_) / step_);
    return range_lo_ + idx * step_;
}

double AdcChannel::sample_hold(double v, double t) {
    if (held_ && t < held_->t) throw DomainError("sample_hold time regression");
    // Capture instants are the integer multiples of the hold period.
    const double capture_t = std::floor(t / period_ + 1e-9) * period_;
    if (!held_ || capture_t > held_->t + 0.5 * period_) {
        held_ = Held{quantize(v), capture_t};
    }
    return held_->value;
}

void AdcChannel::reset_hold() { held_.reset(); }

UncertaintyBound predict_mu(const AdcChannel& ch, double T, double drift_value,
                            const std::function<double(double)>& u_eq_of_x, double x) {
    UncertaintyBound b;
    b.mu_state = 0.5 * ch.step() + T * std::abs(drift_value);
    b.mu_u = 0.5 * std::abs(u_eq_of_x(x + b.mu_state) - u_eq_of_x(x - b.mu_state));
    return b;
}

}  // namespace dsmc
