#pragma once

#include <Eigen/Dense>

#include "dsmc/errors.hpp"

namespace dsmc {

/// Coupled second order DSMC memory. beta_mat's eigenvalues must lie strictly
/// inside the unit circle; gamma_mat must be symmetric positive definite.
/// Both are checked once at construction; the Cholesky factor of gamma_mat is
/// cached for the adaptation solves.
class MimoDsmcState {
public:
    MimoDsmcState(Eigen::MatrixXd beta_mat, Eigen::MatrixXd gamma_mat, Eigen::VectorXd phi_vec);

    const Eigen::MatrixXd& beta() const { return beta_; }
    const Eigen::MatrixXd& gamma() const { return gamma_; }
    const Eigen::VectorXd& phi() const { return phi_; }
    int dim() const { return static_cast<int>(beta_.rows()); }

    Eigen::VectorXd a_hat;
    Eigen::VectorXd s_prev;
    bool s_prev_valid = false;

    void observe(const Eigen::VectorXd& s) {
        if (!s_prev_valid) {
            s_prev = s;
            s_prev_valid = true;
        }
    }
    void advance(const Eigen::VectorXd& s) {
        s_prev = s;
        s_prev_valid = true;
    }

    /// (Gamma*Gamma)^{-1} * v via two triangular solve pairs on the cached factor.
    Eigen::VectorXd gamma_gamma_solve(const Eigen::VectorXd& v) const;

private:
    Eigen::MatrixXd beta_;
    Eigen::MatrixXd gamma_;
    Eigen::VectorXd phi_;
    Eigen::LLT<Eigen::MatrixXd> gamma_llt_;
};

/// First order surface dynamics s(k+1) = s(k) + T*Lambda_hat + T*F*a + T*Upsilon*u.
/// Relative degree one, square system: F is the diagonal drift data matrix and
/// Upsilon the input matrix, both evaluated at the current state.
struct SurfaceDynamics {
    Eigen::MatrixXd F;
    Eigen::VectorXd Lambda_hat;
    Eigen::MatrixXd Upsilon;
};

Eigen::VectorXd surface_step(const SurfaceDynamics& sd, const Eigen::VectorXd& s,
                             const Eigen::VectorXd& a, const Eigen::VectorXd& u, double T);

/// Solves T*Upsilon*u_eq = -(I + beta)*s - T*Lambda_hat - T*F*a_hat by a dense
/// factorization; throws SingularGainError if the conditioning is worse than
/// cond_threshold.
Eigen::VectorXd equivalent_control_mimo(const SurfaceDynamics& sd, const Eigen::VectorXd& s,
                                        const Eigen::VectorXd& a_hat, const MimoDsmcState& ctl,
                                        double T, double cond_threshold = 1e12);

/// a_hat' = a_hat + T*(Gamma*Gamma)^{-1}*F^T*s.
Eigen::VectorXd adapt_a(const Eigen::VectorXd& a_hat, const Eigen::VectorXd& s,
                        const Eigen::MatrixXd& F, const MimoDsmcState& ctl, double T);

/// u = u_eq - [ |mu_u_i| * sat((s_i + (beta*s_prev)_i)/phi_i) ].
Eigen::VectorXd mimo_control(const SurfaceDynamics& sd, const Eigen::VectorXd& s,
                             const Eigen::VectorXd& s_prev, const MimoDsmcState& ctl,
                             const Eigen::VectorXd& mu_u, double T,
                             double cond_threshold = 1e12);

struct MimoLyapunovDiag {
    double V = 0.0;        // adaptation-phase V = s's/2 + ae'*Gamma*ae/2
    double dV_pred = 0.0;  // -s'(I - beta*beta)s / 2
    double V_star = 0.0;   // post-adaptation V* = (s1's1 + s'beta s)/2
    double dV_star_reported = 0.0;  // diagnostic form, reported not asserted
};

MimoLyapunovDiag lyapunov_diag_mimo(const Eigen::VectorXd& s_k, const Eigen::VectorXd& s_k1,
                                    const Eigen::VectorXd& a_err_k, const MimoDsmcState& ctl);

}  // namespace dsmc
