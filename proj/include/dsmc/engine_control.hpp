#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <optional>

#include "dsmc/adc.hpp"
#include "dsmc/mimo.hpp"
#include "dsmc/plant.hpp"
#include "dsmc/siso.hpp"

namespace dsmc {

enum class ControllerMode { FirstOrderSiso, SecondOrderSiso, SecondOrderMimo };

/// Desired trajectories at the current and next controller cycle.
struct EngineRefs {
    double texh_d = 600.0;
    double texh_d_next = 600.0;
    double afr_d = 14.6;
    double afr_d_next = 14.6;
    double omega_d = 100.0;
    double omega_d_next = 100.0;
};

/// Actuator commands; m_ad is the synthetic air-mass reference produced by
/// the engine-speed loop and consumed by the air-mass loop next cycle.
struct EngineControlInputs {
    double delta = 0.0;     // spark timing [deg]
    double mdot_fc = 0.0;   // commanded fuel flow [kg/s]
    double mdot_ai = 0.0;   // throttle air flow [kg/s]
    double m_ad = 0.0;      // synthetic desired air mass [kg]

    Eigen::Vector4d to_vector() const { return {delta, mdot_fc, mdot_ai, m_ad}; }
};

/// Sliding errors in reporting order:
/// s1 = T_exh error, s2 = AFR error, s3 = m_a error, s4 = omega_e error.
struct EngineSlidingVector {
    double s1 = 0.0;
    double s2 = 0.0;
    double s3 = 0.0;
    double s4 = 0.0;
};

struct EngineStepDiag {
    EngineSlidingVector s;
    Eigen::Vector4d s_channel = Eigen::Vector4d::Zero();  // channel-order errors
    Eigen::Vector4d alpha_hat = Eigen::Vector4d::Ones();
    Eigen::Vector4d mu_state = Eigen::Vector4d::Zero();
    Eigen::Vector4d mu_u = Eigen::Vector4d::Zero();
    Eigen::Vector4d u_eq = Eigen::Vector4d::Zero();
    Eigen::Vector4d u_sw = Eigen::Vector4d::Zero();
    Eigen::Vector4d u = Eigen::Vector4d::Zero();
    double afr = 0.0;
    double mdot_f_d = 0.0;
    int clamp_events = 0;
    bool afr_held = false;
};

/// AFR = mdot_ao / mdot_f, with a hold-last-value dead-band for startup.
class AfrMeter {
public:
    explicit AfrMeter(double deadband = 1e-7) : deadband_(deadband) {}
    /// Returns AFR and sets `held` when mdot_f is inside the dead-band.
    double measure(const EngineState& state, const EngineParams& params, bool* held = nullptr);

private:
    double deadband_;
    double last_afr_ = 14.6;
};

/// Stateless AFR from the definitional relation; throws on dead fuel flow.
double afr(const EngineState& state, const EngineParams& params, double deadband = 1e-12);

// Per-channel adaptation bindings (thin wrappers over adapt_alpha with the
// channel's drift value).
double adapt_texh(double alpha_hat, double s1, const EngineState& st, const EngineParams& p,
                  double rho, double T, double deadband = 1e-9);
double adapt_mdotf(double alpha_hat, double s_mf, const EngineState& st, const EngineParams& p,
                   double rho, double T, double deadband = 1e-9);
double adapt_omega(double alpha_hat, double s_we, const EngineState& st, const EngineParams& p,
                   double rho, double T, double deadband = 1e-9);
double adapt_ma(double alpha_hat, double s_ma, const EngineState& st, const EngineParams& p,
                double rho, double T, double deadband = 1e-9);

/// Closed-loop engine controller: four SISO loops (first or second order) or
/// one coupled MIMO loop, with per-channel adaptation and mu-scaled switching.
class EngineController {
public:
    struct Config {
        ControllerMode mode = ControllerMode::SecondOrderSiso;
        double T = 0.02;
        EngineParams params;
        std::array<SisoGains, 4> gains{};  // channel order (Texh, mdot_f, m_a, omega_e)
        Eigen::Matrix4d beta_coupling = Eigen::Matrix4d::Zero();  // off-diagonal, MIMO only
        Eigen::Vector4d q_state = Eigen::Vector4d::Zero();  // quantizer step per state channel
        bool adaptation = true;
        bool switching = true;
        // projection bounds for the drift-scaling estimates
        double alpha_min = 0.05;
        double alpha_max = 4.0;
        double phi_scale = 2.0;     // boundary layer = phi_scale * mu_state (min gains.phi)
        double afr_deadband = 1e-7;
        double m_ad_init = 0.0;
        // actuator clamps
        double delta_min = -50.0, delta_max = 50.0;
        double mdot_fc_max = 0.02;
        double mdot_ai_max = 0.2;
        double m_ad_max = 0.1;
        double m_ad_rate = 0.0;   // optional charge-reference slew limit [kg/s]; <=0 disables
    };

    explicit EngineController(const Config& cfg);

    /// One controller cycle on the measured (possibly ADC-corrupted) state.
    EngineControlInputs step(const EngineState& meas, const EngineRefs& refs,
                             EngineStepDiag* diag = nullptr);

    const Eigen::Vector4d& alpha_hat() const { return alpha_hat_; }
    void set_alpha_hat(const Eigen::Vector4d& a) { alpha_hat_ = a; }
    double m_ad_ref() const { return m_ad_ref_; }
    std::uint64_t clamp_count() const { return clamp_count_; }
    const Config& config() const { return cfg_; }

private:
    Config cfg_;
    Eigen::Vector4d alpha_hat_ = Eigen::Vector4d::Ones();
    Eigen::Vector4d s_prev_ = Eigen::Vector4d::Zero();
    bool s_prev_valid_ = false;
    double m_ad_ref_ = 0.0;      // latest charge command; target for the m_a loop
    double m_ad_ref_lag_ = 0.0;  // command one cycle older; s_ma is measured against it
    double mdot_f_d_lag_ = -1.0;  // fuel target the previous cycle steered toward
    std::array<bool, 4> u_clamped_prev_{};  // estimator anti-windup gate
    AfrMeter afr_meter_;
    std::optional<MimoDsmcState> mimo_;
    std::uint64_t clamp_count_ = 0;

    double clamp_actuator(double v, double lo, double hi, int* events);
};

}  // namespace dsmc
