#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "nisynth/sim.hpp"
#include "support.hpp"

using namespace nisynth;
using namespace nisynth::testing;

namespace {

AffineSystem scalar(const char* f, const char* g = "0") {
    ExprMatrix gm(1, 1);
    gm(0, 0) = parse(g);
    return make_system({"x"}, parse_all({f}), gm, parse_all({"x"}));
}

ClosedLoop open_loop(AffineSystem plant, std::vector<Expr> input) {
    ClosedLoop cl;
    cl.plant = std::move(plant);
    cl.input = std::move(input);
    return cl;
}

RelativeDegreeProfile profile_of(const AffineSystem& sys) {
    return relative_degree(sys, std::vector<double>(sys.n(), 0.0), SamplingConfig{});
}

struct ExampleRun {
    AffineSystem plant = example_plant();
    RelativeDegreeProfile profile = profile_of(plant);
    UncertaintyModel unc = example_uncertainty();
    FeedbackLaw law = robust_law(plant, profile, example_spec());
    Expr V = storage_V(profile, example_spec());
    Expr W = storage_W(profile, example_spec(), unc);
    Trajectory traj;

    ExampleRun() {
        ClosedLoop cl{plant, law, unc, {}, V, W};
        IntegratorConfig cfg;
        cfg.T_final = 40.0;
        traj = integrate(cl, {10, 3, -5, 7}, {-8, 2}, cfg);
    }
};

const ExampleRun& example_run() {
    static const ExampleRun run;
    return run;
}

}  // namespace

TEST(Integrate, ExponentialDecay) {
    IntegratorConfig cfg;
    cfg.T_final = 1.0;
    const auto traj = integrate(open_loop(scalar("-x"), parse_all({"0"})), {1.0}, {}, cfg);
    ASSERT_FALSE(traj.diverged);
    EXPECT_NEAR(traj.t.back(), 1.0, 1e-12);
    EXPECT_NEAR(traj.x.back(), std::exp(-1.0), 1e-9);
}

TEST(Integrate, FourthOrderConvergence) {
    const auto err = [](double dt) {
        IntegratorConfig cfg;
        cfg.dt = dt;
        cfg.T_final = 1.0;
        const auto traj = integrate(open_loop(scalar("-x"), parse_all({"0"})), {1.0}, {}, cfg);
        return std::abs(traj.x.back() - std::exp(-1.0));
    };
    EXPECT_GE(err(0.1) / err(0.05), 14.0);
}

TEST(Integrate, ZeroStateStaysZero) {
    const auto& run = example_run();
    ClosedLoop cl{run.plant, run.law, run.unc, {}, run.V, run.W};
    IntegratorConfig cfg;
    cfg.T_final = 1.0;
    const auto traj = integrate(cl, {0, 0, 0, 0}, {0, 0}, cfg);
    for (double v : traj.x) EXPECT_EQ(v, 0.0);
    for (double v : traj.xc) EXPECT_EQ(v, 0.0);
    const auto lyap = monitor_lyapunov(traj, run.plant.states, run.unc.states, run.W);
    for (double v : lyap.Wdot) EXPECT_EQ(v, 0.0);
    const auto osni = monitor_osni(traj, run.plant, run.V, run.law);
    EXPECT_EQ(osni.max_equality_abs, 0.0);
}

TEST(Integrate, DivergenceTruncates) {
    IntegratorConfig cfg;
    cfg.T_final = 5.0;
    cfg.guard = 1e6;
    const auto traj = integrate(open_loop(scalar("x^2"), parse_all({"0"})), {1.0}, {}, cfg);
    EXPECT_TRUE(traj.diverged);
    ASSERT_TRUE(traj.truncated_at);
    EXPECT_LT(traj.t.back(), 1.01);
    const auto verdict = convergence_check(traj, 0.05);
    EXPECT_FALSE(verdict.pass);
    EXPECT_TRUE(verdict.diverged);
}

TEST(Integrate, DomainErrorFlagged) {
    IntegratorConfig cfg;
    cfg.dt = 0.25;
    cfg.T_final = 2.0;
    const auto traj = integrate(open_loop(scalar("0", "1"), parse_all({"1/(t - 1)"})), {0.0}, {}, cfg);
    ASSERT_TRUE(traj.domain_error);
    EXPECT_LE(traj.t.back(), 1.0);
}

TEST(Integrate, StepDoublingWarns) {
    IntegratorConfig cfg;
    cfg.dt = 0.05;
    cfg.T_final = 1.0;
    cfg.step_doubling = true;
    cfg.doubling_warn = 1e-12;
    const auto traj = integrate(open_loop(scalar("-20*x"), parse_all({"0"})), {1.0}, {}, cfg);
    EXPECT_GT(traj.max_step_error, 1e-12);
    EXPECT_FALSE(traj.warnings.empty());
}

TEST(Example, ConvergesOnTheFinalWindow) {
    const auto& traj = example_run().traj;
    ASSERT_FALSE(traj.diverged);
    const auto verdict = convergence_check(traj, 0.05, 0.1);
    EXPECT_TRUE(verdict.pass);
    EXPECT_LT(verdict.max_norm_in_window, 0.05);
    ASSERT_TRUE(verdict.settling_time);
    // not monotone: xi2 starts at -5 and overshoots past zero before settling
    const auto& t = traj;
    double lo = 0.0, hi = 0.0;
    for (std::size_t k = 0; k < t.size(); ++k) {
        lo = std::min(lo, t.x[k * 4 + 2]);
        hi = std::max(hi, t.x[k * 4 + 2]);
    }
    EXPECT_EQ(lo, -5.0);
    EXPECT_GT(hi, 0.5);
}

TEST(Example, WdotMatchesClosedForm) {
    const auto& run = example_run();
    const auto& t = run.traj;
    const auto lyap = monitor_lyapunov(t, run.plant.states, run.unc.states, run.W);
    EXPECT_LE(lyap.max_Wdot, 1e-9);
    for (std::size_t k = 0; k < t.size(); ++k) {
        const double xi1 = t.x[k * 4 + 1], xi2 = t.x[k * 4 + 2];
        const double xc1 = t.xc[k * 2], xc2 = t.xc[k * 2 + 1];
        const double y1 = t.ydot[k * 2], y2 = t.ydot[k * 2 + 1];
        const double ref = -(y1 * y1 + y2 * y2) - (xi1 - xc1) * (xi1 - xc1) - (xi2 - xc2 * xc2 * xc2) * (xi2 - xc2 * xc2 * xc2);
        ASSERT_NEAR(lyap.Wdot[k], ref, 1e-6) << "step " << k;
    }
}

TEST(Example, OsniEquality) {
    const auto& run = example_run();
    const auto osni = monitor_osni(run.traj, run.plant, run.V, run.law);
    EXPECT_LE(osni.max_equality_abs, 1e-6);
    EXPECT_LE(osni.max_inequality_violation, 1e-6);
}

TEST(Example, InterconnectionWiring) {
    const auto& t = example_run().traj;
    // h_c is the identity, so w must equal x_c exactly
    ASSERT_EQ(t.w.size(), t.xc.size());
    for (std::size_t k = 0; k < t.w.size(); ++k) ASSERT_EQ(t.w[k], t.xc[k]);
    // u_c = y enters x_c' directly: x_c1' = -x_c1 + y1
    for (std::size_t k = 0; k < t.size(); k += 97) EXPECT_EQ(t.xcdot[k * 2], -t.xc[k * 2] + t.y[k * 2]);
}

TEST(Example, AnalyticVdotMatchesDifferences) {
    const auto& run = example_run();
    const auto& t = run.traj;
    const auto numeric = central_difference(t.W, t.dt);
    const auto lyap = monitor_lyapunov(t, run.plant.states, run.unc.states, run.W);
    std::size_t compared = 0;
    for (std::size_t k = 1; k + 1 < t.size(); ++k) {
        if (std::abs(lyap.Wdot[k]) < 1e-3) continue;
        EXPECT_LE(std::abs(numeric[k] - lyap.Wdot[k]), 1e-3 * std::abs(lyap.Wdot[k])) << "step " << k;
        ++compared;
    }
    EXPECT_GT(compared, 1000u);
}

TEST(Render, EnergyNonincreasingWithZeroInput) {
    const auto plant = example_plant();
    const auto prof = profile_of(plant);
    const auto law = render_ni(plant, prof, example_spec());
    const Expr V = storage_V(prof, example_spec());
    ClosedLoop cl{plant, law, std::nullopt, parse_all({"0", "0"}), V, std::nullopt};
    IntegratorConfig cfg;
    cfg.T_final = 5.0;
    const auto traj = integrate(cl, {1, -0.5, 0.8, 0.3}, {}, cfg);
    for (std::size_t k = 1; k < traj.size(); ++k) ASSERT_LE(traj.V[k] - traj.V[k - 1], 1e-9) << "step " << k;
    EXPECT_LE(monitor_osni(traj, plant, V, law).max_equality_abs, 1e-6);
}

TEST(Render, ScriptedInputOsniResiduals) {
    const auto plant = example_plant();
    const auto prof = profile_of(plant);
    const auto law = render_ni(plant, prof, example_spec());
    const Expr V = storage_V(prof, example_spec());
    ClosedLoop cl{plant, law, std::nullopt, parse_all({"sin(3*t)", "exp(-t)*cos(t)"}), V, std::nullopt};
    IntegratorConfig cfg;
    cfg.T_final = 5.0;
    const auto traj = integrate(cl, {0.5, 1, -1, 0.2}, {}, cfg);
    const auto osni = monitor_osni(traj, plant, V, law);
    EXPECT_LE(osni.max_equality_abs, 1e-6);
    EXPECT_LE(osni.max_inequality_violation, 1e-6);
    EXPECT_DOUBLE_EQ(osni.epsilon, 1.0);
}

TEST(Render, WrongEpsilonViolatesInequality) {
    const auto plant = make_system({"x1", "x2"}, parse_all({"x2", "0"}), constant_matrix(2, 1, {0, 1}), parse_all({"x1"}));
    const auto prof = profile_of(plant);
    const auto law = render_ni(plant, prof, StorageSpec{});
    const Expr V = storage_V(prof, StorageSpec{});
    ClosedLoop cl{plant, law, std::nullopt, parse_all({"0"}), V, std::nullopt};
    IntegratorConfig cfg;
    cfg.T_final = 5.0;
    const auto traj = integrate(cl, {1, 0}, {}, cfg);
    EXPECT_LE(monitor_osni(traj, plant, V, law).max_inequality_violation, 1e-9);
    EXPECT_GT(monitor_osni(traj, plant, V, law, 10.0).max_inequality_violation, 1e-3);
}

TEST(Convergence, UndampedOscillatorFails) {
    const auto plant = make_system({"x1", "x2"}, parse_all({"x2", "0"}), constant_matrix(2, 1, {0, 1}), parse_all({"x1"}));
    const auto prof = profile_of(plant);
    const auto law = render_ni(plant, prof, StorageSpec{std::nullopt, parse("0.5*y1^2"), 0.0});
    ClosedLoop cl{plant, law, std::nullopt, parse_all({"0"}), std::nullopt, std::nullopt};
    IntegratorConfig cfg;
    cfg.T_final = 20.0;
    const auto traj = integrate(cl, {1, 0}, {}, cfg);
    const auto verdict = convergence_check(traj, 0.05);
    EXPECT_FALSE(verdict.pass);
    EXPECT_NEAR(verdict.max_norm_in_window, 1.0, 1e-3);
}

TEST(Lyapunov, StallDetected) {
    // W ignores x2, which stays at 1 while x1 decays: W' is 0 with the state away from 0
    const auto plant = make_system({"x1", "x2"}, parse_all({"-x1", "0"}), constant_matrix(2, 1, {0, 0}),
                                   parse_all({"x1"}));
    ClosedLoop cl{plant, std::nullopt, std::nullopt, parse_all({"0"}), std::nullopt, std::nullopt};
    IntegratorConfig cfg;
    cfg.T_final = 40.0;
    const auto traj = integrate(cl, {1, 1}, {}, cfg);
    const auto lyap = monitor_lyapunov(traj, plant.states, {}, parse("x1^2"));
    EXPECT_LE(lyap.max_Wdot, 0.0);
    EXPECT_TRUE(lyap.stall);
}

TEST(Iss, ExampleInternalDynamics) {
    const InternalDynamics dyn{{"z"}, {"xi1"}, parse_all({"-z - z^3 + xi1^2"})};
    const auto z = simulate_internal(dyn, parse_all({"3*exp(-t)"}), {10.0}, 1e-3, 40.0, 1e9);
    ASSERT_EQ(z.size(), 1u);
    EXPECT_LT(std::abs(z[0]), 1e-3);
    IssProbeConfig cfg;
    cfg.z0 = {{10.0}, {-10.0}, {1.0}};
    const auto rep = iss_probe(dyn, cfg, {parse_all({"3*exp(-t)"})});
    EXPECT_TRUE(rep.consistent);
    EXPECT_EQ(rep.runs.size(), 3u * (1 + 6 * 3 + 1));
}

TEST(Iss, StableWithoutInput) {
    const InternalDynamics dyn{{"z"}, {"xi"}, parse_all({"-z"})};
    IssProbeConfig cfg;
    cfg.T_final = 20.0;
    EXPECT_TRUE(iss_probe(dyn, cfg).consistent);
}

TEST(Iss, UnstableZeroDynamicsFalsified) {
    const InternalDynamics dyn{{"z"}, {"xi"}, parse_all({"z + xi"})};
    IssProbeConfig cfg;
    cfg.z0 = {{1.0}};
    const auto rep = iss_probe(dyn, cfg);
    EXPECT_FALSE(rep.consistent);
    ASSERT_TRUE(rep.witness);
    EXPECT_TRUE(rep.runs[*rep.witness].falsifies);
}

TEST(Iss, SerialMatchesParallel) {
    const InternalDynamics dyn{{"z1", "z2"}, {"xi"}, parse_all({"-z1 + z2*xi", "-z2^3 + xi"})};
    IssProbeConfig cfg;
    cfg.T_final = 10.0;
    cfg.dt = 1e-2;
    const auto a = iss_probe(dyn, cfg);
    const auto b = iss_probe_serial(dyn, cfg);
    ASSERT_EQ(a.runs.size(), b.runs.size());
    for (std::size_t i = 0; i < a.runs.size(); ++i) {
        EXPECT_EQ(a.runs[i].terminal_norm, b.runs[i].terminal_norm);
        EXPECT_EQ(a.runs[i].signal, b.runs[i].signal);
    }
    EXPECT_EQ(a.consistent, b.consistent);
}

TEST(Csv, HeaderAndBlocks) {
    IntegratorConfig cfg;
    cfg.dt = 0.5;
    cfg.T_final = 1.0;
    const auto traj = integrate(open_loop(scalar("-x", "1"), parse_all({"0"})), {1.0}, {}, cfg);
    const auto csv = trajectory_csv(traj);
    ASSERT_EQ(csv.front(), '#');
    const auto first = csv.find('\n');
    const auto second = csv.find('\n', first + 1);
    EXPECT_EQ(csv.substr(first + 1, second - first - 1), "t,x_1,u_1,y_1,ydot_1");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2 + 3);
}

TEST(Csv, ExampleHeader) {
    const auto csv = trajectory_csv(example_run().traj);
    const auto first = csv.find('\n');
    const auto second = csv.find('\n', first + 1);
    EXPECT_EQ(csv.substr(first + 1, second - first - 1),
              "t,x_1,x_2,x_3,x_4,xc_1,xc_2,u_1,u_2,w_1,w_2,y_1,y_2,ydot_1,ydot_2,V,W");
}

TEST(CentralDifference, Polynomial) {
    std::vector<double> s;
    for (int k = 0; k <= 10; ++k) s.push_back(0.1 * k * 0.1 * k);
    const auto d = central_difference(s, 0.1);
    for (int k = 1; k < 10; ++k) EXPECT_NEAR(d[k], 2 * 0.1 * k, 1e-12);
}
