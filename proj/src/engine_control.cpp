#include "dsmc/engine_control.hpp"

#include <algorithm>
#include <cmath>

namespace dsmc {

double AfrMeter::measure(const EngineState& state, const EngineParams& params, bool* held) {
    if (state.mdot_f < deadband_) {
        if (held) *held = true;
        return last_afr_;
    }
    if (held) *held = false;
    last_afr_ = mdot_ao(state, params) / state.mdot_f;
    return last_afr_;
}

double afr(const EngineState& state, const EngineParams& params, double deadband) {
    if (state.mdot_f < deadband) throw DomainError("afr: mdot_f inside dead-band");
    return mdot_ao(state, params) / state.mdot_f;
}

double adapt_texh(double alpha_hat, double s1, const EngineState& st, const EngineParams& p,
                  double rho, double T, double deadband) {
    const double f = (600.0 * p.afi(st) - st.T_exh) / tau_e(st.omega_e);
    return adapt_alpha(alpha_hat, s1, f, rho, T, deadband);
}

double adapt_mdotf(double alpha_hat, double s_mf, const EngineState& st, const EngineParams& p,
                   double rho, double T, double deadband) {
    const double f = -st.mdot_f / p.tau_f;
    return adapt_alpha(alpha_hat, s_mf, f, rho, T, deadband);
}

double adapt_omega(double alpha_hat, double s_we, const EngineState& st, const EngineParams& p,
                   double rho, double T, double deadband) {
    const double f = -(0.4 * st.omega_e + 100.0) / p.J;
    return adapt_alpha(alpha_hat, s_we, f, rho, T, deadband);
}

double adapt_ma(double alpha_hat, double s_ma, const EngineState& st, const EngineParams& p,
                double rho, double T, double deadband) {
    const double f = -mdot_ao(st, p);
    return adapt_alpha(alpha_hat, s_ma, f, rho, T, deadband);
}

EngineController::EngineController(const Config& cfg) : cfg_(cfg), afr_meter_(cfg.afr_deadband) {
    cfg_.params.validate();
    for (const auto& g : cfg_.gains) g.validate(cfg_.T);
    if (cfg_.T <= 0.0) throw ConfigError("controller period T must be > 0");
    m_ad_ref_ = cfg_.m_ad_init;

    if (cfg_.mode == ControllerMode::SecondOrderMimo) {
        Eigen::Matrix4d beta = cfg_.beta_coupling;
        Eigen::Matrix4d gamma = Eigen::Matrix4d::Zero();
        Eigen::Vector4d phi;
        for (int i = 0; i < 4; ++i) {
            beta(i, i) = cfg_.gains[i].beta;
            gamma(i, i) = std::sqrt(cfg_.gains[i].rho_alpha);
            phi[i] = cfg_.gains[i].phi;
        }
        mimo_.emplace(beta, gamma, phi);
    }
}

double EngineController::clamp_actuator(double v, double lo, double hi, int* events) {
    if (v < lo || v > hi) {
        ++clamp_count_;
        if (events) ++(*events);
        return std::clamp(v, lo, hi);
    }
    return v;
}

EngineControlInputs EngineController::step(const EngineState& meas, const EngineRefs& refs,
                                           EngineStepDiag* diag) {
    const double T = cfg_.T;
    const EngineParams& p = cfg_.params;

    Eigen::Vector4d f, g;
    engine_dynamics(meas, p, f, g);

    bool afr_held = false;
    const double afr_now = afr_meter_.measure(meas, p, &afr_held);
    const double mao = mdot_ao(meas, p);

    // Fuel-flow reference from the desired AFR (current-step mdot_ao). Like
    // the charge reference, the error is measured against the previous
    // cycle's target so state-driven reference motion stays out of s.
    const double mdot_f_d_next = mao / refs.afr_d_next;
    const double mdot_f_d = (mdot_f_d_lag_ >= 0.0) ? mdot_f_d_lag_ : mao / refs.afr_d;

    if (m_ad_ref_ <= 0.0) m_ad_ref_ = meas.m_a;  // cold start: no spurious m_a error
    if (m_ad_ref_lag_ <= 0.0) m_ad_ref_lag_ = m_ad_ref_;

    const Eigen::Vector4d x = meas.to_vector();
    // The m_a error is measured against the charge reference the previous
    // cycle's control actually targeted; the newest command is the target
    // ahead. This keeps reference motion out of s_ma.
    const Eigen::Vector4d x_d = {refs.texh_d, mdot_f_d, m_ad_ref_lag_, refs.omega_d};
    Eigen::Vector4d x_d_next = {refs.texh_d_next, mdot_f_d_next, m_ad_ref_,
                                refs.omega_d_next};

    Eigen::Vector4d s = x - x_d;
    if (!s_prev_valid_) {
        s_prev_ = s;
        s_prev_valid_ = true;
    }

    // Per-channel drift closures for the mu re-evaluation (only channel i varies).
    auto drift_at = [&](int i, double xi) -> double {
        EngineState st = meas;
        switch (i) {
            case kTexh: st.T_exh = xi; break;
            case kMdotF: st.mdot_f = xi; break;
            case kMa: st.m_a = xi; break;
            case kOmegaE: st.omega_e = std::max(xi, 1e-6); break;
        }
        Eigen::Vector4d fi, gi;
        engine_dynamics(st, p, fi, gi);
        return fi[i];
    };
    auto gain_at = [&](int i, double xi) -> double {
        EngineState st = meas;
        if (i == kOmegaE) st.omega_e = std::max(xi, 1e-6);
        if (i == kTexh) st.T_exh = xi;
        Eigen::Vector4d fi, gi;
        engine_dynamics(st, p, fi, gi);
        return gi[i];
    };

    Eigen::Vector4d mu_state, mu_u, phi_eff;
    const bool first_order = cfg_.mode == ControllerMode::FirstOrderSiso;
    for (int i = 0; i < 4; ++i) {
        mu_state[i] = 0.5 * cfg_.q_state[i] + T * std::abs(alpha_hat_[i] * f[i]);
        phi_eff[i] = std::max(cfg_.gains[i].phi, cfg_.phi_scale * mu_state[i]);
        auto u_eq_of_x = [&](double xi) -> double {
            const double fi = drift_at(i, xi);
            const double gi = gain_at(i, xi);
            const double si = xi - x_d[i];
            if (first_order)
                return -(T * alpha_hat_[i] * fi + xi - x_d_next[i]) / (gi * T);
            return equivalent_control_2nd(fi, gi, xi, x_d_next[i], si, alpha_hat_[i],
                                          cfg_.gains[i].beta, T);
        };
        mu_u[i] = 0.5 * std::abs(u_eq_of_x(x[i] + mu_state[i]) - u_eq_of_x(x[i] - mu_state[i]));
    }

    Eigen::Vector4d u_eq, u_sw;
    switch (cfg_.mode) {
        case ControllerMode::FirstOrderSiso:
            for (int i = 0; i < 4; ++i) {
                u_eq[i] = -(T * alpha_hat_[i] * f[i] + x[i] - x_d_next[i]) / (g[i] * T);
                const double sgn = (s[i] > 0.0) - (s[i] < 0.0);
                u_sw[i] = cfg_.switching ? -std::abs(mu_u[i]) * sgn : 0.0;
            }
            break;
        case ControllerMode::SecondOrderSiso:
            for (int i = 0; i < 4; ++i) {
                u_eq[i] = equivalent_control_2nd(f[i], g[i], x[i], x_d_next[i], s[i],
                                                 alpha_hat_[i], cfg_.gains[i].beta, T);
                u_sw[i] = cfg_.switching
                              ? switching_control(mu_u[i], s[i], s_prev_[i], cfg_.gains[i].beta,
                                                  phi_eff[i])
                              : 0.0;
            }
            break;
        case ControllerMode::SecondOrderMimo: {
            SurfaceDynamics sd;
            sd.F = f.asDiagonal();
            sd.Upsilon = g.asDiagonal();
            sd.Lambda_hat = -(x_d_next - x_d) / T;
            u_eq = equivalent_control_mimo(sd, s, alpha_hat_, *mimo_, T);
            const Eigen::Vector4d xi_hist = s + mimo_->beta() * s_prev_;
            for (int i = 0; i < 4; ++i)
                u_sw[i] = cfg_.switching ? -std::abs(mu_u[i]) * sat(xi_hist[i] / phi_eff[i]) : 0.0;
            break;
        }
    }

    // The coupled design sees the whole model, so it can propagate all four
    // states across the sampling interval instead of freezing them at the
    // sample: the exhaust and air responses depend on the in-interval speed
    // trajectory (tau_e, mdot_ao), and the fuel target on the predicted
    // cylinder air flow. u_eq is corrected until the propagated model lands on
    // s(k+1) = -B s(k). Independent loops cannot form this propagation (it
    // needs the other channels' models), so it stays off without coupling.
    // The speed channel's own model is self-contained and is left on the
    // one-step law, matching the independent design there.
    if (cfg_.mode == ControllerMode::SecondOrderMimo && !cfg_.beta_coupling.isZero()) {
        const int n = 4;
        const double dt = T / n;
        auto land = [&](const Eigen::Vector4d& uu) -> Eigen::Vector4d {
            Eigen::Vector4d xs = x;
            for (int j = 0; j < n; ++j) {
                Eigen::Vector4d fj, gj;
                engine_dynamics(EngineState::from_vector(xs), p, fj, gj);
                xs += dt * (alpha_hat_.cwiseProduct(fj) + gj.cwiseProduct(uu));
                xs[kOmegaE] = std::max(xs[kOmegaE], 1e-3);
            }
            return xs;
        };
        for (int pass = 0; pass < 2; ++pass) {
            const Eigen::Vector4d xp = land(u_eq);
            x_d_next[kMdotF] = mdot_ao(EngineState::from_vector(xp), p) / refs.afr_d_next;
            const Eigen::Vector4d x_des = x_d_next - mimo_->beta() * s;
            for (int i : {kTexh, kMdotF, kMa}) {
                Eigen::Vector4d up = u_eq;
                const double du = std::max(1e-6, 1e-3 * std::abs(u_eq[i]));
                up[i] += du;
                const double sens = (land(up)[i] - xp[i]) / du;
                if (std::abs(sens) > 1e-12) u_eq[i] += (x_des[i] - xp[i]) / sens;
            }
        }
    }

    Eigen::Vector4d u = u_eq + u_sw;

    // Adaptation gate: s reflects the previous cycle's applied input, so a
    // channel whose actuator was clamped then carries no clean estimate of
    // the drift mismatch (estimator anti-windup).
    if (cfg_.adaptation) {
        if (cfg_.mode == ControllerMode::SecondOrderMimo) {
            Eigen::Matrix4d F = f.asDiagonal();
            for (int i = 0; i < 4; ++i)
                if (std::abs(f[i]) < cfg_.gains[i].deadband || u_clamped_prev_[i]) F(i, i) = 0.0;
            alpha_hat_ = adapt_a(alpha_hat_, s, F, *mimo_, T);
        } else {
            if (!u_clamped_prev_[kTexh])
                alpha_hat_[kTexh] = adapt_texh(alpha_hat_[kTexh], s[kTexh], meas, p,
                                               cfg_.gains[kTexh].rho_alpha, T,
                                               cfg_.gains[kTexh].deadband);
            if (!u_clamped_prev_[kMdotF])
                alpha_hat_[kMdotF] = adapt_mdotf(alpha_hat_[kMdotF], s[kMdotF], meas, p,
                                                 cfg_.gains[kMdotF].rho_alpha, T,
                                                 cfg_.gains[kMdotF].deadband);
            if (!u_clamped_prev_[kMa])
                alpha_hat_[kMa] = adapt_ma(alpha_hat_[kMa], s[kMa], meas, p,
                                           cfg_.gains[kMa].rho_alpha, T,
                                           cfg_.gains[kMa].deadband);
            if (!u_clamped_prev_[kOmegaE])
                alpha_hat_[kOmegaE] = adapt_omega(alpha_hat_[kOmegaE], s[kOmegaE], meas, p,
                                                  cfg_.gains[kOmegaE].rho_alpha, T,
                                                  cfg_.gains[kOmegaE].deadband);
        }
        // projection: keep the estimates inside the assumed uncertainty range
        alpha_hat_ = alpha_hat_.cwiseMax(cfg_.alpha_min).cwiseMin(cfg_.alpha_max);
    }

    int clamp_events = 0;
    EngineControlInputs cmd;
    cmd.delta = clamp_actuator(u[kTexh], cfg_.delta_min, cfg_.delta_max, &clamp_events);
    cmd.mdot_fc = clamp_actuator(u[kMdotF], 0.0, cfg_.mdot_fc_max, &clamp_events);
    cmd.mdot_ai = clamp_actuator(u[kMa], 0.0, cfg_.mdot_ai_max, &clamp_events);
    cmd.m_ad = clamp_actuator(u[kOmegaE], 0.0, cfg_.m_ad_max, &clamp_events);
    if (cfg_.m_ad_rate > 0.0 && m_ad_ref_ > 0.0) {
        // optional model of intake filling lag on the charge reference
        const double dmax = cfg_.m_ad_rate * T;
        cmd.m_ad = clamp_actuator(cmd.m_ad, m_ad_ref_ - dmax, m_ad_ref_ + dmax, &clamp_events);
    }
    u_clamped_prev_[kTexh] = cmd.delta != u[kTexh];
    u_clamped_prev_[kMdotF] = cmd.mdot_fc != u[kMdotF];
    u_clamped_prev_[kMa] = cmd.mdot_ai != u[kMa];
    u_clamped_prev_[kOmegaE] = cmd.m_ad != u[kOmegaE];

    if (diag) {
        diag->s = {s[kTexh], afr_now - refs.afr_d, s[kMa], s[kOmegaE]};
        diag->s_channel = s;
        diag->alpha_hat = alpha_hat_;
        diag->mu_state = mu_state;
        diag->mu_u = mu_u;
        diag->u_eq = u_eq;
        diag->u_sw = u_sw;
        diag->u = cmd.to_vector();
        diag->afr = afr_now;
        diag->mdot_f_d = mdot_f_d;
        diag->clamp_events = clamp_events;
        diag->afr_held = afr_held;
    }

    s_prev_ = s;
    m_ad_ref_lag_ = m_ad_ref_;
    m_ad_ref_ = cmd.m_ad;
    mdot_f_d_lag_ = x_d_next[kMdotF];
    return cmd;
}

}  // namespace dsmc
