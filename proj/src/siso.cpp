#include "dsmc/siso.hpp"

#include <algorithm>
#include <cmath>

namespace dsmc {

void SisoGains::validate(double T) const {
    if (!(beta > 0.0 && beta < 1.0)) throw ConfigError("beta must lie in (0, 1)");
    const double r = 1.0 - T * lambda;
    if (!(r > 0.0 && r < 1.0)) throw ConfigError("T*lambda must lie in (0, 1)");
    if (!(rho_alpha > 0.0)) throw ConfigError("rho_alpha must be > 0");
    if (!(phi > 0.0)) throw ConfigError("phi must be > 0");
    if (eps < 0.0) throw ConfigError("eps must be >= 0");
}

double sat(double v) { return std::clamp(v, -1.0, 1.0); }

double equivalent_control_2nd(double f, double g, double x, double x_d_next, double s,
                              double alpha_hat, double beta, double T) {
    if (g == 0.0) throw SingularGainError("equivalent_control_2nd: g = 0");
    const double u = -(T * alpha_hat * f + x - x_d_next + beta * s) / (g * T);
    if (!std::isfinite(u)) throw NumericError("equivalent_control_2nd produced non-finite input");
    return u;
}

double switching_control(double mu_u, double s, double s_prev, double beta, double phi) {
    return -std::abs(mu_u) * sat((s + beta * s_prev) / phi);
}

double adapt_alpha(double alpha_hat, double s, double f, double rho_alpha, double T,
                   double deadband) {
    if (std::abs(f) < deadband) return alpha_hat;  // unexcited channel, freeze
    return alpha_hat + T * s * f / rho_alpha;
}

double first_order_control(double f, double g, double x, double x_d_next, double s,
                           double alpha_hat, double T, double mu_u) {
    if (g == 0.0) throw SingularGainError("first_order_control: g = 0");
    const double u_eq = -(T * alpha_hat * f + x - x_d_next) / (g * T);
    if (!std::isfinite(u_eq)) throw NumericError("first_order_control produced non-finite input");
    const double sgn = (s > 0.0) - (s < 0.0);
    return u_eq - std::abs(mu_u) * sgn;
}

double gao_reaching_step(double s, double lambda, double eps, double T) {
    const double r = 1.0 - T * lambda;
    if (!(r > 0.0 && r < 1.0)) throw ConfigError("gao_reaching_step: T*lambda must lie in (0, 1)");
    if (eps < 0.0) throw ConfigError("gao_reaching_step: eps must be >= 0");
    const double sgn = (s > 0.0) - (s < 0.0);
    return r * s - T * eps * sgn;
}

LyapunovDiag lyapunov_diag(double s_k, double s_k1, double alpha_err_k, double alpha_err_k1,
                           double beta, double rho_alpha) {
    LyapunovDiag d;
    d.V = 0.5 * (s_k1 * s_k1 + beta * s_k * s_k) +
          0.5 * rho_alpha * (alpha_err_k1 * alpha_err_k1 + beta * alpha_err_k * alpha_err_k);
    d.dV_pred = -0.5 * beta * (-beta * beta * beta - beta * beta + beta + 1.0) * s_k * s_k;
    return d;
}

}  // namespace dsmc
