#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "dsmc/engine_control.hpp"
#include "dsmc/plant.hpp"

namespace dsmc {

// ---------------------------------------------------------------------------
// Reference trajectories
// ---------------------------------------------------------------------------

/// Piecewise-constant targets passed through a first-order lag, evaluated in
/// closed form so the profile is exact at any query time.
class SmoothedProfile {
public:
    SmoothedProfile() = default;
    SmoothedProfile(double init, double tau, std::vector<std::pair<double, double>> events);
    double value(double t) const;

private:
    double init_ = 0.0;
    double tau_ = 1.0;
    std::vector<std::pair<double, double>> events_;  // (time, target)
    std::vector<double> boundary_;                   // profile value at each event time
};

struct EngineTrajectory {
    SmoothedProfile texh;
    SmoothedProfile afr;
    SmoothedProfile omega;  // rad/s

    EngineRefs refs(double t, double T) const;
};

/// Deterministic generator: id in {"steps", "ramp", "coldstart"}, seeded.
EngineTrajectory make_trajectory(const std::string& id, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Scenario configuration
// ---------------------------------------------------------------------------

struct AdcSettings {
    bool enabled = true;
    int bits = 16;
    int output_bits = 16;
};

struct ScenarioConfig {
    std::string name = "scenario";
    ControllerMode mode = ControllerMode::SecondOrderSiso;
    double T = 0.02;          // controller/ADC period [s]
    int plant_substeps = 1;   // plant Euler steps per controller cycle
    double horizon = 40.0;    // [s]
    double transient_cut = 4.0;
    std::uint64_t seed = 1;
    AdcSettings adc;
    Eigen::Vector4d alpha_true = Eigen::Vector4d::Ones();
    bool adaptation = true;
    bool switching = true;

    std::array<SisoGains, 4> gains{};
    std::vector<std::tuple<int, int, double>> beta_coupling;  // (row, col, value)
    double phi_scale = 2.0;

    std::string trajectory_id = "coldstart";
    std::uint64_t trajectory_seed = 7;

    // plant calibration + initial state
    double tau_f = 0.06, J = 0.14, k1 = 0.02, eta_vol = 0.8, afi = 1.0;
    // default init is AFR-consistent: mdot_f = k1*eta*m_a*omega/14.6
    EngineState init{600.0, 1.315e-3, 0.006, 200.0};

    // ADC physical ranges, state channel order then actuators
    std::array<std::pair<double, double>, 4> state_range{
        {{0.0, 900.0}, {0.0, 0.01}, {0.0, 0.02}, {1.0, 800.0}}};
    std::array<std::pair<double, double>, 3> actuator_range{
        {{-50.0, 50.0}, {0.0, 0.02}, {0.0, 0.2}}};

    /// Throws ConfigError listing every violated invariant.
    void validate() const;

    static ScenarioConfig from_json_file(const std::string& path);
    static ScenarioConfig from_json_string(const std::string& text);
    std::string to_json() const;
};

// ---------------------------------------------------------------------------
// Results
// ---------------------------------------------------------------------------

struct ChannelMetrics {
    double mean_abs_err = 0.0;
    double max_abs_err = 0.0;
};

struct TrackingReport {
    // report channel order: AFR [-], T_exh [degC], N [RPM], m_a [kg]
    static constexpr std::array<const char*, 4> kChannels = {"AFR", "Texh", "N", "ma"};
    std::array<ChannelMetrics, 4> channels{};
    double adaptation_convergence_time = -1.0;  // first time all |alpha_err| < 0.02; -1 if never
    double alpha_drift_post_convergence = 0.0;  // max relative drift after convergence
    Eigen::Vector4d mu_u_mean = Eigen::Vector4d::Zero();
    Eigen::Vector4d mu_u_max = Eigen::Vector4d::Zero();
    std::uint64_t clamp_count = 0;
    std::uint64_t adc_saturation_count = 0;
    double lyapunov_violation_fraction = 0.0;  // steps after cut with dV > 1e-9
    bool diverged = false;
    std::uint64_t steps = 0;
};

struct TimeSeriesRow {
    double t;
    Eigen::Vector4d x;          // true state
    double texh_d, afr_d, omega_d, m_ad_ref;
    Eigen::Vector4d s;          // reporting-order s1..s4
    Eigen::Vector4d s_ch;       // channel-order sliding errors (Texh, mdot_f, m_a, omega_e)
    double afr;
    Eigen::Vector4d alpha_hat;
    Eigen::Vector4d mu_state, mu_u;
    Eigen::Vector4d u_eq, u_sw, u;
    double V, dV;
    int clamp_events;
};

struct ScenarioResult {
    TrackingReport report;
    std::vector<TimeSeriesRow> series;
};

// ---------------------------------------------------------------------------
// Runner
// ---------------------------------------------------------------------------

/// Deterministic closed-loop run of one scenario.
ScenarioResult run_scenario(const ScenarioConfig& cfg);

/// Per-channel improvement of a over b: 100*(e_b - e_a)/e_b, Table-style.
struct ImprovementTable {
    std::array<double, 4> improvement_pct{};
    TrackingReport report_a, report_b;
};

ImprovementTable compare(const ScenarioConfig& cfg_a, const ScenarioConfig& cfg_b);

enum class SweepAxis { Period, Bits, Uncertainty };

struct SweepResult {
    SweepAxis axis;
    std::vector<double> values;
    std::vector<TrackingReport> reports;
};

SweepResult sweep(SweepAxis axis, const std::vector<double>& values,
                  const ScenarioConfig& base);

// ---------------------------------------------------------------------------
// Output
// ---------------------------------------------------------------------------

void write_series_csv(std::ostream& os, const ScenarioConfig& cfg,
                      const std::vector<TimeSeriesRow>& series);
void write_report(std::ostream& os, const TrackingReport& report, bool as_csv);
void write_improvement_table(std::ostream& os, const ImprovementTable& table);
void write_sweep_csv(std::ostream& os, const SweepResult& result);
void write_mu_csv(std::ostream& os, const std::vector<TimeSeriesRow>& series);

/// Built-in oracle suites (quantizer, staircase, mu sensitivity, surface
/// algebra, SISO/MIMO degeneracy). Returns the number of failed checks and
/// prints one line per check.
int selftest(std::ostream& os);

}  // namespace dsmc
