#include <doctest.h>

#include <cmath>
#include <random>

#include "dsmc/siso.hpp"

using namespace dsmc;

TEST_CASE("sliding_variable") {
    CHECK(sliding_variable(3.0, 3.0) == 0.0);
    CHECK(sliding_variable(5.0, 3.0) == 2.0);
    std::mt19937_64 rng(1);
    std::normal_distribution<double> dist;
    for (int i = 0; i < 200; ++i) {
        const double x = dist(rng), xd = dist(rng);
        CHECK(sliding_variable(x, xd) == -sliding_variable(xd, x));
    }
}

TEST_CASE("equivalent_control_2nd basics") {
    SUBCASE("on-manifold, driftless") {
        CHECK(equivalent_control_2nd(0.0, 2.0, 1.0, 1.0, 0.0, 1.0, 0.5, 0.02) == 0.0);
    }
    SUBCASE("doubling g halves u_eq") {
        const double u1 = equivalent_control_2nd(1.2, 1.5, 0.8, 0.7, 0.1, 0.9, 0.5, 0.02);
        const double u2 = equivalent_control_2nd(1.2, 3.0, 0.8, 0.7, 0.1, 0.9, 0.5, 0.02);
        CHECK(u2 == doctest::Approx(0.5 * u1));
    }
    SUBCASE("singular gain") {
        CHECK_THROWS_AS(equivalent_control_2nd(1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.5, 0.02),
                        SingularGainError);
    }
}

TEST_CASE("equivalent_control_2nd step-through oracle: s(k+1) = -beta*s(k)") {
    // perfect estimate, no ADC, 100 random scalar plants
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> coef(-2.0, 2.0), gain(0.3, 3.0), b01(0.05, 0.95);
    for (int trial = 0; trial < 100; ++trial) {
        const double a = coef(rng);
        const double g = gain(rng) * (trial % 2 ? 1.0 : -1.0);
        const double alpha = 1.0 + 0.5 * coef(rng);
        const double beta = b01(rng);
        const double T = 0.02;
        double x = coef(rng), x_d = coef(rng);
        for (int k = 0; k < 20; ++k) {
            const double x_d_next = x_d + 0.01 * std::sin(0.3 * k);
            const double s = x - x_d;
            const double u = equivalent_control_2nd(a * x, g, x, x_d_next, s, alpha, beta, T);
            const double x_next = x + T * (alpha * a * x + g * u);  // exact Euler truth
            const double s_next = x_next - x_d_next;
            CHECK(s_next == doctest::Approx(-beta * s).epsilon(1e-9).scale(1.0));
            x = x_next;
            x_d = x_d_next;
        }
    }
}

TEST_CASE("switching_control") {
    CHECK(switching_control(1.0, 0.0, 0.0, 0.5, 0.1) == 0.0);
    CHECK(switching_control(0.0, 5.0, 5.0, 0.5, 0.1) == 0.0);
    // saturated branch
    CHECK(switching_control(2.0, 1.0, 1.0, 0.5, 0.1) == doctest::Approx(-2.0));
    CHECK(switching_control(2.0, -1.0, -1.0, 0.5, 0.1) == doctest::Approx(2.0));
    // bounded by mu_u always
    std::mt19937_64 rng(8);
    std::normal_distribution<double> dist;
    for (int i = 0; i < 500; ++i) {
        const double mu = std::abs(dist(rng));
        const double u = switching_control(mu, dist(rng), dist(rng), 0.7, 0.05);
        CHECK(std::abs(u) <= mu + 1e-15);
    }
}

TEST_CASE("adapt_alpha") {
    CHECK(adapt_alpha(0.7, 0.0, 2.0, 1.0, 0.02) == 0.7);
    CHECK(adapt_alpha(0.7, 1.0, 0.0, 1.0, 0.02) == 0.7);  // dead-band freeze
    CHECK(adapt_alpha(0.5, 2.0, 3.0, 4.0, 0.1) == doctest::Approx(0.5 + 0.1 * 2.0 * 3.0 / 4.0));
}

TEST_CASE("adapt_alpha closed-loop recurrence oracle, alpha_err -> 0") {
    // scalar plant f = x, independent recurrence of the same update law
    const double a = 1.0, g = 1.0, alpha = 1.0, beta = 0.5, T = 0.02, rho = 0.02;
    double x = 1.5, x_d = 1.0;
    double alpha_hat = 0.5, alpha_hat_oracle = 0.5;
    double last_err = 1.0;
    for (int k = 0; k < 4000; ++k) {
        const double s = x - x_d;
        const double f = a * x;
        const double u = equivalent_control_2nd(f, g, x, x_d, s, alpha_hat, beta, T);
        alpha_hat = adapt_alpha(alpha_hat, s, f, rho, T);
        alpha_hat_oracle = alpha_hat_oracle + T * s * f / rho;  // independent recurrence
        CHECK(alpha_hat == doctest::Approx(alpha_hat_oracle).epsilon(1e-12));
        x = x + T * (alpha * f + g * u);
        last_err = std::abs(alpha - alpha_hat);
    }
    CHECK(last_err < 1e-3);
}

TEST_CASE("first_order_control") {
    SUBCASE("null case") {
        CHECK(first_order_control(0.0, 1.0, 1.0, 1.0, 0.0, 1.0, 0.02, 0.0) == 0.0);
    }
    SUBCASE("perfect model deadbeat: s(k+1) = 0 after one step") {
        std::mt19937_64 rng(4);
        std::uniform_real_distribution<double> coef(-2.0, 2.0);
        for (int trial = 0; trial < 50; ++trial) {
            const double a = coef(rng), alpha = 1.0 + 0.3 * coef(rng);
            const double g = 1.0 + std::abs(coef(rng));
            const double T = 0.02;
            const double x = coef(rng), x_d_next = coef(rng);
            const double u =
                first_order_control(a * x, g, x, x_d_next, x - x_d_next, alpha, T, 0.0);
            const double x_next = x + T * (alpha * a * x + g * u);
            CHECK(x_next - x_d_next == doctest::Approx(0.0).scale(1.0).epsilon(1e-10));
        }
    }
    SUBCASE("mu_u = 0 reduces to pure equivalent control") {
        const double u = first_order_control(1.0, 2.0, 0.5, 0.4, 5.0, 1.0, 0.02, 0.0);
        const double u_eq = -(0.02 * 1.0 + 0.5 - 0.4) / (2.0 * 0.02);
        CHECK(u == doctest::Approx(u_eq));
    }
    SUBCASE("switching term is full-magnitude signum") {
        const double u_eq = -(0.02 * 1.0 + 0.5 - 0.4) / (2.0 * 0.02);
        CHECK(first_order_control(1.0, 2.0, 0.5, 0.4, 1e-9, 1.0, 0.02, 3.0) ==
              doctest::Approx(u_eq - 3.0));
        CHECK(first_order_control(1.0, 2.0, 0.5, 0.4, -1e-9, 1.0, 0.02, 3.0) ==
              doctest::Approx(u_eq + 3.0));
    }
}

TEST_CASE("gao_reaching_step") {
    CHECK(gao_reaching_step(0.0, 1.0, 0.0, 0.1) == 0.0);
    CHECK(gao_reaching_step(1.0, 0.5 / 0.1, 0.0, 0.1) == doctest::Approx(0.5));
    CHECK_THROWS_AS(gao_reaching_step(1.0, 20.0, 0.0, 0.1), ConfigError);

    // |s'| < |s| outside the residual band, swept
    const double lambda = 5.0, eps = 0.4, T = 0.04;
    const double band = T * eps / (1.0 - T * lambda);
    for (double s = -4.0; s <= 4.0; s += 0.003) {
        if (std::abs(s) <= band + 1e-12) continue;
        CHECK(std::abs(gao_reaching_step(s, lambda, eps, T)) < std::abs(s));
    }
}

TEST_CASE("lyapunov_diag") {
    SUBCASE("all zero") {
        const auto d = lyapunov_diag(0.0, 0.0, 0.0, 0.0, 0.5, 1.0);
        CHECK(d.V == 0.0);
        CHECK(d.dV_pred == 0.0);
    }
    SUBCASE("closed-form polynomial at beta = 0.5") {
        const auto d = lyapunov_diag(1.0, -0.5, 0.0, 0.0, 0.5, 1.0);
        CHECK(d.dV_pred == doctest::Approx(-0.28125));
        CHECK(d.V == doctest::Approx(0.5 * (0.25 + 0.5)));
    }
    SUBCASE("dV_pred <= 0 over (0,1)") {
        for (double beta = 1e-4; beta < 1.0; beta += 1e-3) {
            CHECK(lyapunov_diag(0.7, -beta * 0.7, 0.1, 0.1, beta, 2.0).dV_pred <= 0.0);
        }
    }
}

TEST_CASE("manifold contraction and two-step decrease on random scalar plants") {
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> coef(-1.5, 1.5), b01(0.05, 0.95);
    for (int trial = 0; trial < 100; ++trial) {
        const double a = coef(rng), alpha = 1.0 + 0.4 * coef(rng);
        const double g = 1.0 + std::abs(coef(rng));
        const double beta = b01(rng), T = 0.02;
        double x = 1.0 + coef(rng);
        double x_d = coef(rng);
        std::vector<double> s_hist;
        for (int k = 0; k < 40; ++k) {
            const double x_d_next = x_d + 1e-3 * std::cos(0.2 * k);  // smooth reference
            const double s = x - x_d;
            s_hist.push_back(s);
            const double u = equivalent_control_2nd(a * x, g, x, x_d_next, s, alpha, beta, T);
            x = x + T * (alpha * a * x + g * u);
            x_d = x_d_next;
        }
        for (std::size_t k = 0; k + 2 < s_hist.size(); ++k) {
            const double lhs = std::abs(s_hist[k + 2] - beta * beta * s_hist[k]);
            CHECK(lhs <= 1e-6 * std::max(1.0, std::abs(s_hist[k])));
            CHECK(std::abs(s_hist[k + 2]) <= std::abs(s_hist[k]) + 1e-12);
        }
    }
}

TEST_CASE("validation gates") {
    SisoGains g;
    g.beta = 1.0;
    CHECK_THROWS_AS(g.validate(0.02), ConfigError);
    g.beta = 0.0;
    CHECK_THROWS_AS(g.validate(0.02), ConfigError);
    g.beta = 0.5;
    g.lambda = 100.0;
    CHECK_THROWS_AS(g.validate(0.02), ConfigError);  // T*lambda >= 1
    g.lambda = 0.0;
    CHECK_THROWS_AS(g.validate(0.02), ConfigError);  // T*lambda <= 0
    g.lambda = 1.0;
    g.rho_alpha = -1.0;
    CHECK_THROWS_AS(g.validate(0.02), ConfigError);
    g.rho_alpha = 1.0;
    g.phi = 0.0;
    CHECK_THROWS_AS(g.validate(0.02), ConfigError);
    g.phi = 0.1;
    CHECK_NOTHROW(g.validate(0.02));
}
