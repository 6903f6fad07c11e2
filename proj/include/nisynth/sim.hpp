#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nisynth/synthesis.hpp"

namespace nisynth {

struct IntegratorConfig {
    double dt = 1e-3;
    double T_final = 10.0;
    double guard = 1e9;
    bool step_doubling = false;
    double doubling_warn = 1e-6;  // warn when the step-doubling estimate exceeds this
};

/// Plant with an optional law and an optional uncertainty wired as u_c = y, w = y_c.
/// `input` scripts v (render law) or u (open loop) as expressions in t and the plant states.
struct ClosedLoop {
    AffineSystem plant;
    std::optional<FeedbackLaw> law;
    std::optional<UncertaintyModel> uncertainty;
    std::vector<Expr> input;
    std::optional<Expr> V;  // over plant states
    std::optional<Expr> W;  // over plant and uncertainty states
};

// Flat row-major blocks; block(k) views step k.
struct Trajectory {
    std::size_t n = 0;
    std::size_t nc = 0;
    std::size_t p = 0;
    bool has_uncertainty = false;
    double dt = 0.0;

    std::vector<double> t;
    std::vector<double> x, xc, u, w, v, y, ydot, xdot, xcdot;
    std::vector<double> V, W;
    std::vector<double> res_osni_eq, res_osni_ineq, Wdot;  // filled by the monitors

    bool diverged = false;
    std::optional<std::size_t> truncated_at;
    std::optional<std::string> domain_error;
    double max_step_error = 0.0;
    std::vector<std::string> warnings;

    std::size_t size() const { return t.size(); }
    std::span<const double> row(const std::vector<double>& block, std::size_t width, std::size_t k) const {
        return {block.data() + k * width, width};
    }
    std::vector<double> state(std::size_t k) const;  // stacked (x, x_c)
};

Trajectory integrate(const ClosedLoop& cl, const std::vector<double>& x0, const std::vector<double>& xc0,
                     const IntegratorConfig& cfg);

struct OsniSummary {
    std::vector<double> equality;    // Vdot - v'ydot + |xi1dot|^2 + lambda |xi2dot|^2
    std::vector<double> inequality;  // v'ydot - eps |ydot|^2 - Vdot
    double max_equality_abs = 0.0;
    double max_inequality_violation = 0.0;  // max(0, -min inequality)
    double epsilon = 0.0;
};

// v is the effective new input recorded by integrate (the scripted v, or w for the robust law).
OsniSummary monitor_osni(const Trajectory& traj, const AffineSystem& plant, const Expr& V, const FeedbackLaw& law,
                         std::optional<double> epsilon_override = std::nullopt);

struct LyapunovSummary {
    std::vector<double> Wdot;
    double max_Wdot = 0.0;
    // Window where Wdot is negligible while the state stays away from 0.
    std::optional<std::pair<double, double>> stall;
};

LyapunovSummary monitor_lyapunov(const Trajectory& traj, const std::vector<std::string>& plant_states,
                                 const std::vector<std::string>& unc_states, const Expr& W,
                                 double stall_tol = 1e-9, double state_tol = 0.05);

struct ConvergenceVerdict {
    bool pass = false;
    bool diverged = false;
    double max_norm_in_window = 0.0;
    double max_uncertainty_norm_in_window = 0.0;  // reported whether or not it counts
    std::optional<double> settling_time;
};

// Max-abs norm over the last `window` fraction of the run. The verdict covers the
// plant states, and the uncertainty states too when include_uncertainty is set.
ConvergenceVerdict convergence_check(const Trajectory& traj, double tol, double window = 0.1,
                                     bool include_uncertainty = false);

/// User-designated internal dynamics z' = f*(z, xi).
struct InternalDynamics {
    std::vector<std::string> z;
    std::vector<std::string> xi;
    std::vector<Expr> f;
};

struct IssProbeConfig {
    std::vector<double> rates{0.1, 0.3, 1.0, 2.0, 5.0, 10.0};
    std::vector<double> amplitudes{0.5, 1.0, 3.0};
    std::vector<std::vector<double>> z0;  // empty: three points along +-1 and 0.5 of the unit diagonal
    double dt = 1e-3;
    double T_final = 40.0;
    double guard = 1e9;
    double tol = 1e-3;
    std::uint64_t seed = 20240101;
    bool parallel = true;
};

struct IssRun {
    std::string signal;
    std::vector<double> z0;
    double terminal_norm = 0.0;
    double max_norm = 0.0;
    bool diverged = false;
    bool falsifies = false;
};

struct IssReport {
    bool consistent = true;  // "consistent with ISS"; never a proof
    std::vector<IssRun> runs;
    std::optional<std::size_t> witness;  // first falsifying run
};

// Extra signals are expressions in t, one per xi component. The battery also
// includes the zero input from every initial condition.
IssReport iss_probe(const InternalDynamics& dyn, const IssProbeConfig& cfg,
                    const std::vector<std::vector<Expr>>& extra_signals = {});
IssReport iss_probe_serial(const InternalDynamics& dyn, const IssProbeConfig& cfg,
                           const std::vector<std::vector<Expr>>& extra_signals = {});

// Simulates z' = f*(z, xi(t)) for one signal; returns terminal state (empty on divergence).
std::vector<double> simulate_internal(const InternalDynamics& dyn, const std::vector<Expr>& signal,
                                      const std::vector<double>& z0, double dt, double T_final, double guard);

// Central differences of a sampled series (endpoints one-sided).
std::vector<double> central_difference(const std::vector<double>& series, double dt);

// Columns: t, x_*, xc_*, u_*, w_*, y_*, ydot_*, V, W, res_osni_eq, res_osni_ineq, Wdot;
// blocks that were not recorded are left out and the first line lists those present.
std::string trajectory_csv(const Trajectory& traj);

}  // namespace nisynth
