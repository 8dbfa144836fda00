#include "dsmc/mimo.hpp"

#include <cmath>

#include "dsmc/siso.hpp"

namespace dsmc {

namespace {

void check_dims(const char* what, Eigen::Index got, Eigen::Index want) {
    if (got != want) throw DimensionError(what);
}

}  // namespace

MimoDsmcState::MimoDsmcState(Eigen::MatrixXd beta_mat, Eigen::MatrixXd gamma_mat,
                             Eigen::VectorXd phi_vec)
    : beta_(std::move(beta_mat)), gamma_(std::move(gamma_mat)), phi_(std::move(phi_vec)) {
    const Eigen::Index r = beta_.rows();
    if (beta_.cols() != r) throw ConfigError("beta matrix must be square");
    if (gamma_.rows() != r || gamma_.cols() != r)
        throw ConfigError("gamma matrix dimensions must match beta");
    if (phi_.size() != r) throw ConfigError("phi vector dimension must match beta");
    if (!(phi_.array() > 0.0).all()) throw ConfigError("phi entries must be > 0");

    const double spectral_radius = Eigen::EigenSolver<Eigen::MatrixXd>(beta_, false)
                                       .eigenvalues()
                                       .cwiseAbs()
                                       .maxCoeff();
    if (!(spectral_radius < 1.0))
        throw ConfigError("beta matrix spectral radius must be < 1");

    if (!gamma_.isApprox(gamma_.transpose(), 1e-12))
        throw ConfigError("gamma matrix must be symmetric");
    gamma_llt_.compute(gamma_);
    if (gamma_llt_.info() != Eigen::Success)
        throw ConfigError("gamma matrix must be positive definite");

    a_hat = Eigen::VectorXd::Ones(r);
    s_prev = Eigen::VectorXd::Zero(r);
}

Eigen::VectorXd MimoDsmcState::gamma_gamma_solve(const Eigen::VectorXd& v) const {
    return gamma_llt_.solve(gamma_llt_.solve(v));
}

Eigen::VectorXd surface_step(const SurfaceDynamics& sd, const Eigen::VectorXd& s,
                             const Eigen::VectorXd& a, const Eigen::VectorXd& u, double T) {
    check_dims("surface_step: F rows != s", sd.F.rows(), s.size());
    check_dims("surface_step: F cols != a", sd.F.cols(), a.size());
    check_dims("surface_step: Upsilon cols != u", sd.Upsilon.cols(), u.size());
    check_dims("surface_step: Lambda_hat != s", sd.Lambda_hat.size(), s.size());
    return s + T * sd.Lambda_hat + T * sd.F * a + T * sd.Upsilon * u;
}

Eigen::VectorXd equivalent_control_mimo(const SurfaceDynamics& sd, const Eigen::VectorXd& s,
                                        const Eigen::VectorXd& a_hat, const MimoDsmcState& ctl,
                                        double T, double cond_threshold) {
    const Eigen::Index r = s.size();
    check_dims("equivalent_control_mimo: beta dim != s", ctl.beta().rows(), r);
    check_dims("equivalent_control_mimo: Upsilon rows != s", sd.Upsilon.rows(), r);

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(sd.Upsilon,
                                          Eigen::ComputeThinU | Eigen::ComputeThinV);
    const double smin = svd.singularValues().minCoeff();
    const double smax = svd.singularValues().maxCoeff();
    if (smin <= 0.0 || smax / smin > cond_threshold)
        throw SingularGainError("Upsilon ill-conditioned in equivalent_control_mimo");

    const Eigen::VectorXd rhs =
        -(Eigen::MatrixXd::Identity(r, r) + ctl.beta()) * s - T * sd.Lambda_hat - T * sd.F * a_hat;
    return svd.solve(rhs) / T;
}

Eigen::VectorXd adapt_a(const Eigen::VectorXd& a_hat, const Eigen::VectorXd& s,
                        const Eigen::MatrixXd& F, const MimoDsmcState& ctl, double T) {
    check_dims("adapt_a: F rows != s", F.rows(), s.size());
    check_dims("adapt_a: F cols != a_hat", F.cols(), a_hat.size());
    return a_hat + T * ctl.gamma_gamma_solve(F.transpose() * s);
}

Eigen::VectorXd mimo_control(const SurfaceDynamics& sd, const Eigen::VectorXd& s,
                             const Eigen::VectorXd& s_prev, const MimoDsmcState& ctl,
                             const Eigen::VectorXd& mu_u, double T, double cond_threshold) {
    Eigen::VectorXd u = equivalent_control_mimo(sd, s, ctl.a_hat, ctl, T, cond_threshold);
    const Eigen::VectorXd xi_hist = s + ctl.beta() * s_prev;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        u[i] -= std::abs(mu_u[i]) * sat(xi_hist[i] / ctl.phi()[i]);
    }
    return u;
}

MimoLyapunovDiag lyapunov_diag_mimo(const Eigen::VectorXd& s_k, const Eigen::VectorXd& s_k1,
                                    const Eigen::VectorXd& a_err_k, const MimoDsmcState& ctl) {
    const Eigen::Index r = s_k.size();
    const Eigen::MatrixXd& B = ctl.beta();
    MimoLyapunovDiag d;
    d.V = 0.5 * s_k.dot(s_k) + 0.5 * a_err_k.dot(ctl.gamma() * a_err_k);
    d.dV_pred = -0.5 * s_k.dot((Eigen::MatrixXd::Identity(r, r) - B * B) * s_k);
    d.V_star = 0.5 * (s_k1.dot(s_k1) + s_k.dot(B * s_k));
    const Eigen::MatrixXd B2 = B * B;
    d.dV_star_reported =
        -s_k.dot(B * (-B2 * B - B2 + B - Eigen::MatrixXd::Identity(r, r)) * s_k);
    return d;
}

}  // namespace dsmc
