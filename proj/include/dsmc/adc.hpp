#pragma once

#include <cstdint>
#include <functional>
#include <optional>

#include "dsmc/errors.hpp"

namespace dsmc {

/// One controller-boundary channel: sample-and-hold at a fixed period plus a
/// mid-tread uniform quantizer over [range_lo, range_hi]. Values outside the
/// range are clamped silently; clamps are counted, not faulted.
class AdcChannel {
public:
    AdcChannel(double period, int bits, double range_lo, double range_hi);

    /// Nearest quantizer level of the clamped value. Idempotent.
    double quantize(double v);

    /// Quantized value captured at the most recent multiple of the hold
    /// period; constant between captures. Time must be non-decreasing.
    double sample_hold(double v, double t);

    double step() const { return step_; }  // quantizer step q
    double period() const { return period_; }
    int bits() const { return bits_; }
    double range_lo() const { return range_lo_; }
    double range_hi() const { return range_hi_; }
    std::uint64_t saturation_count() const { return saturation_count_; }

    void reset_hold();

private:
    double period_;
    int bits_;
    double range_lo_;
    double range_hi_;
    double step_;
    std::uint64_t saturation_count_ = 0;

    struct Held {
        double value;
        double t;
    };
    std::optional<Held> held_;
};

/// Per-channel imprecision bound at the controller boundary.
struct UncertaintyBound {
    double mu_state = 0.0;  // state units
    double mu_u = 0.0;      // input units
};

/// Predicted imprecision for one plant channel:
///   mu_state = q/2 + T*|alpha_hat * f_i(x)|   (half LSB + one-interval drift)
///   mu_u     = |u_eq(x + mu_state) - u_eq(x - mu_state)| / 2
/// where u_eq re-evaluates the channel's equivalent-control law. Exact (not
/// just a bound) for control laws affine in x.
UncertaintyBound predict_mu(const AdcChannel& ch, double T, double drift_value,
                            const std::function<double(double)>& u_eq_of_x, double x);

}  // namespace dsmc
