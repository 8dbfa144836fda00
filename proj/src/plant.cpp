#include "dsmc/plant.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace dsmc {

void AffinePlant::validate() const {
    if (dim <= 0) throw ConfigError("plant dimension must be positive");
    if (T <= 0.0) throw ConfigError("sampling period T must be > 0");
    if (!f || !g) throw ConfigError("plant drift/gain maps must be set");
    if (alpha_true.size() != dim) throw DimensionError("alpha_true size != plant dim");
    if (!alpha_true.allFinite()) throw ConfigError("alpha_true entries must be finite");
}

Eigen::VectorXd euler_step(const AffinePlant& plant, const Eigen::VectorXd& x,
                           const Eigen::VectorXd& u) {
    if (x.size() != plant.dim) throw DimensionError("state size != plant dim");
    if (u.size() != plant.dim) throw DimensionError("input size != plant dim");
    if (plant.T <= 0.0) throw ConfigError("sampling period T must be > 0");

    const Eigen::VectorXd drift = plant.alpha_true.cwiseProduct(plant.f(x));
    Eigen::VectorXd next = x + plant.T * (drift + plant.g(x) * u);
    if (!next.allFinite()) {
        for (int i = 0; i < next.size(); ++i) {
            if (!std::isfinite(next[i]))
                throw NumericError("euler_step overflow in channel " + std::to_string(i));
        }
    }
    return next;
}

void EngineParams::validate() const {
    if (tau_f <= 0.0) throw ConfigError("tau_f must be > 0");
    if (J <= 0.0) throw ConfigError("J must be > 0");
    if (!eta_vol || !afi) throw ConfigError("eta_vol and afi maps must be set");
}

double tau_e(double omega_e) {
    if (omega_e <= 0.0) throw DomainError("tau_e requires omega_e > 0");
    return 2.0 * std::numbers::pi / omega_e;
}

double mdot_ao(const EngineState& state, const EngineParams& params) {
    return params.k1 * params.eta_vol(state) * state.m_a * state.omega_e;
}

void engine_dynamics(const EngineState& state, const EngineParams& params, Eigen::Vector4d& f_out,
                     Eigen::Vector4d& g_diag_out) {
    const double te = tau_e(state.omega_e);
    const double afi = params.afi(state);

    f_out[kTexh] = (600.0 * afi - state.T_exh) / te;
    f_out[kMdotF] = -state.mdot_f / params.tau_f;
    f_out[kMa] = -mdot_ao(state, params);
    f_out[kOmegaE] = -(0.4 * state.omega_e + 100.0) / params.J;

    g_diag_out[kTexh] = 7.5 / te;
    g_diag_out[kMdotF] = 1.0 / params.tau_f;
    g_diag_out[kMa] = 1.0;
    g_diag_out[kOmegaE] = 30000.0 / params.J;
}

AffinePlant make_engine_plant(const EngineParams& params, const Eigen::Vector4d& alpha_true,
                              double T) {
    params.validate();
    AffinePlant plant;
    plant.dim = 4;
    plant.T = T;
    plant.alpha_true = alpha_true;
    plant.f = [&params](const Eigen::VectorXd& x) -> Eigen::VectorXd {
        Eigen::Vector4d f, g;
        engine_dynamics(EngineState::from_vector(x), params, f, g);
        return f;
    };
    plant.g = [&params](const Eigen::VectorXd& x) -> Eigen::MatrixXd {
        Eigen::Vector4d f, g;
        engine_dynamics(EngineState::from_vector(x), params, f, g);
        return g.asDiagonal();
    };
    plant.validate();
    return plant;
}

}  // namespace dsmc
