#pragma once

#include "dsmc/errors.hpp"

namespace dsmc {

/// Tuning of one SISO loop. Construction-time validation enforces the
/// stability conditions 0 < beta < 1 and 0 < 1 - T*lambda < 1.
struct SisoGains {
    double beta = 0.5;       // second order sliding gain
    double lambda = 1.0;     // reaching-law gain [1/s]
    double eps = 0.0;        // reaching-law offset (first order reference dynamics)
    double rho_alpha = 1.0;  // adaptation gain
    double phi = 1e-3;       // boundary-layer width, sliding-variable units
    double deadband = 1e-9;  // |f| below this freezes adaptation

    void validate(double T) const;
};

/// One control loop's memory.
struct SisoDsmcState {
    SisoGains gains;
    double alpha_hat = 1.0;
    double s_prev = 0.0;
    bool s_prev_valid = false;  // first measured s seeds s_prev

    void observe(double s) {
        if (!s_prev_valid) {
            s_prev = s;
            s_prev_valid = true;
        }
    }
    void advance(double s) {
        s_prev = s;
        s_prev_valid = true;
    }
};

/// s = x - x_d.
inline double sliding_variable(double x, double x_d) { return x - x_d; }

/// clamp to [-1, 1].
double sat(double v);

/// Equivalent control of the second order DSMC:
///   u_eq = -(1/(g*T)) * ( T*alpha_hat*f + x - x_d_next + beta*s )
double equivalent_control_2nd(double f, double g, double x, double x_d_next, double s,
                              double alpha_hat, double beta, double T);

/// Switching input: u_sw = -|mu_u| * sat((s + beta*s_prev)/phi).
double switching_control(double mu_u, double s, double s_prev, double beta, double phi);

/// Gradient adaptation: alpha_hat' = alpha_hat + T*s*f/rho_alpha,
/// frozen while |f| is inside the dead-band.
double adapt_alpha(double alpha_hat, double s, double f, double rho_alpha, double T,
                   double deadband = 1e-9);

/// First order DSMC baseline: equivalent control without the beta*s term and
/// classical signum switching, u = u_eq - |mu_u|*sgn(s). Chattering at the
/// quantizer scale is the expected behavior of this baseline.
double first_order_control(double f, double g, double x, double x_d_next, double s,
                           double alpha_hat, double T, double mu_u);

/// Gao's reaching law s' = (1 - T*lambda)*s - T*eps*sign(s).
/// Reference dynamics for tests, not used by the controller.
double gao_reaching_step(double s, double lambda, double eps, double T);

struct LyapunovDiag {
    double V = 0.0;
    double dV_pred = 0.0;
};

/// Lyapunov value V(k) = (s_{k+1}^2 + beta*s_k^2)/2 + rho*(ae_{k+1}^2 + beta*ae_k^2)/2
/// and the closed-form on-manifold prediction
/// dV_pred = -beta*(-beta^3 - beta^2 + beta + 1)*s_k^2 / 2.
LyapunovDiag lyapunov_diag(double s_k, double s_k1, double alpha_err_k, double alpha_err_k1,
                           double beta, double rho_alpha);

}  // namespace dsmc
