#pragma once

#include <Eigen/Dense>
#include <functional>

#include "dsmc/errors.hpp"

namespace dsmc {

/// Uncertain nonlinear affine plant, discretized with a first order Euler step:
///   x(k+1) = x(k) + T * (diag(alpha_true) * f(x) + g(x) * u)
/// f and g describe the nominal model; alpha_true holds the per-channel
/// multiplicative uncertainties of the true plant.
struct AffinePlant {
    int dim = 0;
    std::function<Eigen::VectorXd(const Eigen::VectorXd&)> f;
    std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> g;  // dim x dim, non-zero diagonal
    Eigen::VectorXd alpha_true;
    double T = 0.0;  // sampling period [s]

    void validate() const;
};

/// One Euler step of the true plant.
Eigen::VectorXd euler_step(const AffinePlant& plant, const Eigen::VectorXd& x,
                           const Eigen::VectorXd& u);

// ---------------------------------------------------------------------------
// SI engine instantiation (four states, fixed channel ordering).
// ---------------------------------------------------------------------------

/// Channel ordering is fixed module-wide: (T_exh, mdot_f, m_a, omega_e).
enum EngineChannel : int { kTexh = 0, kMdotF = 1, kMa = 2, kOmegaE = 3 };

struct EngineState {
    double T_exh = 0.0;    // exhaust gas temperature [degC]
    double mdot_f = 0.0;   // fuel mass flow into cylinders [kg/s]
    double m_a = 0.0;      // intake-manifold air mass [kg]
    double omega_e = 0.0;  // engine speed [rad/s], must stay > 0

    Eigen::Vector4d to_vector() const { return {T_exh, mdot_f, m_a, omega_e}; }
    static EngineState from_vector(const Eigen::Vector4d& v) {
        return {v[kTexh], v[kMdotF], v[kMa], v[kOmegaE]};
    }
};

struct EngineParams {
    double tau_f = 0.06;  // fuel evaporation time constant [s] (calibration)
    double J = 0.14;      // crankshaft inertia [kg m^2] (calibration)
    double k1 = 0.02;     // air-flow constant [1/rad], sized for plausible idle mdot_ao
    // Volumetric efficiency and AFI are inherited maps the source model does not
    // print; defaults are documented constants, overridable per scenario.
    std::function<double(const EngineState&)> eta_vol = [](const EngineState&) { return 0.8; };
    std::function<double(const EngineState&)> afi = [](const EngineState&) { return 1.0; };

    void validate() const;
};

/// Exhaust-gas time constant tau_e = 2*pi/omega_e.
double tau_e(double omega_e);

/// Air mass flow into the cylinder: mdot_ao = k1 * eta_vol * m_a * omega_e.
double mdot_ao(const EngineState& state, const EngineParams& params);

/// Drift vector and diagonal input gain of the engine model.
/// f = [ (600*AFI - T_exh)/tau_e, -mdot_f/tau_f, -mdot_ao, -(0.4*omega_e + 100)/J ]
/// g = diag( 7.5/tau_e, 1/tau_f, 1, 30000/J )
void engine_dynamics(const EngineState& state, const EngineParams& params, Eigen::Vector4d& f_out,
                     Eigen::Vector4d& g_diag_out);

/// Wraps the engine model as a generic AffinePlant with the given uncertainty
/// vector and sampling period. The params object must outlive the plant.
AffinePlant make_engine_plant(const EngineParams& params, const Eigen::Vector4d& alpha_true,
                              double T);

}  // namespace dsmc
