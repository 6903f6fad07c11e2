#include "nisynth/sim.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "nisynth/sampling.hpp"

namespace nisynth {

std::vector<double> Trajectory::state(std::size_t k) const {
    std::vector<double> s(x.begin() + k * n, x.begin() + (k + 1) * n);
    if (has_uncertainty) s.insert(s.end(), xc.begin() + k * nc, xc.begin() + (k + 1) * nc);
    return s;
}

namespace {

std::vector<CompiledExpr> compile_all(const std::vector<Expr>& es, const std::vector<std::string>& slots) {
    std::vector<CompiledExpr> out;
    out.reserve(es.size());
    for (const auto& e : es) out.emplace_back(e, slots);
    return out;
}

// Classical RK4 on a flat state. `rhs(t, s, ds)` may throw EvalError.
template <typename Rhs>
struct Rk4 {
    Rhs& rhs;
    std::vector<double> k1, k2, k3, k4, tmp;

    Rk4(Rhs& r, std::size_t dim) : rhs(r), k1(dim), k2(dim), k3(dim), k4(dim), tmp(dim) {}

    void step(double t, double dt, const std::vector<double>& s, std::vector<double>& out) {
        const std::size_t d = s.size();
        rhs(t, s.data(), k1.data());
        for (std::size_t i = 0; i < d; ++i) tmp[i] = s[i] + 0.5 * dt * k1[i];
        rhs(t + 0.5 * dt, tmp.data(), k2.data());
        for (std::size_t i = 0; i < d; ++i) tmp[i] = s[i] + 0.5 * dt * k2[i];
        rhs(t + 0.5 * dt, tmp.data(), k3.data());
        for (std::size_t i = 0; i < d; ++i) tmp[i] = s[i] + dt * k3[i];
        rhs(t + dt, tmp.data(), k4.data());
        out.resize(d);
        for (std::size_t i = 0; i < d; ++i) out[i] = s[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
};

bool out_of_bounds(const std::vector<double>& s, double guard) {
    for (double v : s)
        if (!std::isfinite(v) || std::abs(v) > guard) return true;
    return false;
}

std::size_t step_count(double dt, double T_final) {
    if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
    if (!(T_final >= dt)) throw std::invalid_argument("T_final must be at least dt");
    return static_cast<std::size_t>(std::llround(T_final / dt));
}

// Evaluates the interconnection right-hand side and, on request, the recorded signals.
class LoopEval {
public:
    LoopEval(const ClosedLoop& cl) : cl_(cl) {
        const auto& sys = cl.plant;
        n_ = sys.n();
        p_ = sys.p();
        f_ = compile_all(sys.f.components, sys.states);
        for (std::size_t i = 0; i < n_; ++i)
            for (std::size_t j = 0; j < p_; ++j) g_.emplace_back(sys.g(i, j), sys.states);
        h_ = compile_all(sys.h, sys.states);
        for (const auto& hi : sys.h)
            for (const auto& dh : gradient(hi, sys.states)) dh_.emplace_back(dh, sys.states);

        std::vector<std::string> script_slots{"t"};
        if (std::find(sys.states.begin(), sys.states.end(), "t") != sys.states.end())
            throw ModelError("'t' is reserved for time in scripted inputs");
        script_slots.insert(script_slots.end(), sys.states.begin(), sys.states.end());
        if (!cl.input.empty() && cl.input.size() != p_)
            throw ModelError("scripted input must have one entry per plant input");
        input_ = compile_all(cl.input, script_slots);

        if (cl.law) {
            if (cl.law->states != sys.states) throw ModelError("law and plant state names differ");
            if (cl.law->p() != p_) throw ModelError("law and plant input dimensions differ");
            law_.emplace(*cl.law);
            const bool needs_a = cl.uncertainty && cl.law->kind != LawKind::Robust;
            if (needs_a && cl.law->lifted_by) throw ModelError("a transformed law cannot be combined with an uncertainty");
            if (needs_a) {
                for (std::size_t i = 0; i < p_; ++i)
                    for (std::size_t j = 0; j < p_; ++j) a_.emplace_back(cl.law->profile.A(i, j), sys.states);
            }
        }
        if (cl.uncertainty) {
            const auto& unc = *cl.uncertainty;
            nc_ = unc.n();
            if (unc.p() != p_) throw ModelError("uncertainty ports do not match the plant outputs");
            std::vector<std::string> slots = unc.states;
            slots.insert(slots.end(), unc.inputs.begin(), unc.inputs.end());
            fc_ = compile_all(unc.f, slots);
            hc_ = compile_all(unc.h, unc.states);
        }
        scratch_.resize(1 + n_ + nc_ + p_);
        y_.resize(p_);
        w_.resize(p_);
        aux_.resize(p_);
        u_.resize(p_);
        v_.resize(p_);
        ut_.resize(p_);
        xdot_.resize(n_);
    }

    std::size_t n() const { return n_; }
    std::size_t nc() const { return nc_; }
    std::size_t p() const { return p_; }

    void operator()(double t, const double* s, double* ds) { evaluate(t, s, ds); }

    // Recorded signals after the last evaluate().
    const std::vector<double>& u() const { return u_; }
    const std::vector<double>& w() const { return w_; }
    const std::vector<double>& v() const { return v_; }
    const std::vector<double>& y() const { return y_; }

    void ydot(const double* x, const double* xdot, double* out) const {
        const std::span<const double> xs(x, n_);
        for (std::size_t i = 0; i < p_; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n_; ++j) acc += dh_[i * n_ + j](xs) * xdot[j];
            out[i] = acc;
        }
    }

    void evaluate(double t, const double* s, double* ds) {
        const std::span<const double> x(s, n_);
        const std::span<const double> xc(s + n_, nc_);
        for (std::size_t i = 0; i < p_; ++i) y_[i] = h_[i](x);
        std::fill(w_.begin(), w_.end(), 0.0);
        if (cl_.uncertainty)
            for (std::size_t i = 0; i < p_; ++i) w_[i] = hc_[i](xc);

        // scripted input over (t, x)
        std::fill(aux_.begin(), aux_.end(), 0.0);
        if (!input_.empty()) {
            scratch_[0] = t;
            std::copy(x.begin(), x.end(), scratch_.begin() + 1);
            const std::span<const double> tx(scratch_.data(), 1 + n_);
            for (std::size_t i = 0; i < p_; ++i) aux_[i] = input_[i](tx);
        }

        std::fill(v_.begin(), v_.end(), 0.0);
        if (law_) {
            const auto kind = cl_.law->kind;
            if (kind == LawKind::Robust) {
                (*law_)(x, w_, u_);
                v_ = w_;
            } else {
                (*law_)(x, aux_, u_);
                if (kind == LawKind::RenderNI) v_ = aux_;
                if (!a_.empty()) {
                    // A(u + w) = A u + A w: the uncertainty enters the chains as extra input A w.
                    const auto& order = cl_.law->profile.order;
                    for (std::size_t k = 0; k < p_; ++k) {
                        double acc = 0.0;
                        for (std::size_t j = 0; j < p_; ++j) acc += a_[k * p_ + j](x) * w_[j];
                        v_[order[k]] += acc;
                    }
                }
            }
        } else {
            u_ = aux_;
            for (std::size_t i = 0; i < p_; ++i) v_[i] = u_[i] + w_[i];
        }

        for (std::size_t j = 0; j < p_; ++j) ut_[j] = u_[j] + w_[j];
        for (std::size_t i = 0; i < n_; ++i) {
            double acc = f_[i](x);
            for (std::size_t j = 0; j < p_; ++j) {
                const double uj = ut_[j];
                if (uj != 0.0) acc += g_[i * p_ + j](x) * uj;
            }
            ds[i] = acc;
        }
        if (cl_.uncertainty) {
            double* buf = scratch_.data();
            std::copy(xc.begin(), xc.end(), buf);
            std::copy(y_.begin(), y_.end(), buf + nc_);
            const std::span<const double> slots(buf, nc_ + p_);
            for (std::size_t i = 0; i < nc_; ++i) ds[n_ + i] = fc_[i](slots);
        }
    }

private:
    const ClosedLoop& cl_;
    std::size_t n_ = 0, nc_ = 0, p_ = 0;
    std::vector<CompiledExpr> f_, g_, h_, dh_, input_, a_, fc_, hc_;
    std::optional<CompiledLaw> law_;
    std::vector<double> scratch_, y_, w_, aux_, u_, v_, ut_, xdot_;
};

void append(std::vector<double>& block, const double* data, std::size_t count) {
    block.insert(block.end(), data, data + count);
}

std::string format_double(double v) {
    if (v == 0.0) return "0";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

}  // namespace

Trajectory integrate(const ClosedLoop& cl, const std::vector<double>& x0, const std::vector<double>& xc0,
                     const IntegratorConfig& cfg) {
    LoopEval loop(cl);
    const std::size_t n = loop.n();
    const std::size_t nc = loop.nc();
    const std::size_t p = loop.p();
    if (x0.size() != n) throw ModelError("x0 has the wrong dimension");
    if (cl.uncertainty && xc0.size() != nc) throw ModelError("xc0 has the wrong dimension");
    for (double v : x0)
        if (!std::isfinite(v)) throw ModelError("x0 is not finite");
    for (double v : xc0)
        if (!std::isfinite(v)) throw ModelError("xc0 is not finite");
    const std::size_t steps = step_count(cfg.dt, cfg.T_final);

    std::optional<CompiledExpr> V, W;
    if (cl.V) V.emplace(*cl.V, cl.plant.states);
    std::vector<std::string> stacked = cl.plant.states;
    if (cl.uncertainty) stacked.insert(stacked.end(), cl.uncertainty->states.begin(), cl.uncertainty->states.end());
    if (cl.W) W.emplace(*cl.W, stacked);

    Trajectory traj;
    traj.n = n;
    traj.nc = nc;
    traj.p = p;
    traj.has_uncertainty = cl.uncertainty.has_value();
    traj.dt = cfg.dt;

    std::vector<double> s(x0);
    if (cl.uncertainty) s.insert(s.end(), xc0.begin(), xc0.end());
    std::vector<double> ds(s.size()), next, half, two_half;
    std::vector<double> ydot(p);
    Rk4<LoopEval> rk(loop, s.size());

    for (std::size_t k = 0; k <= steps; ++k) {
        const double t = static_cast<double>(k) * cfg.dt;
        try {
            loop.evaluate(t, s.data(), ds.data());
            loop.ydot(s.data(), ds.data(), ydot.data());
            const double v_val = V ? (*V)(std::span<const double>(s.data(), n)) : 0.0;
            const double w_val = W ? (*W)(s) : 0.0;
            traj.t.push_back(t);
            append(traj.x, s.data(), n);
            append(traj.xdot, ds.data(), n);
            if (cl.uncertainty) {
                append(traj.xc, s.data() + n, nc);
                append(traj.xcdot, ds.data() + n, nc);
                append(traj.w, loop.w().data(), p);
            }
            append(traj.u, loop.u().data(), p);
            append(traj.v, loop.v().data(), p);
            append(traj.y, loop.y().data(), p);
            append(traj.ydot, ydot.data(), p);
            if (V) traj.V.push_back(v_val);
            if (W) traj.W.push_back(w_val);
            if (k == steps) break;

            rk.step(t, cfg.dt, s, next);
            if (cfg.step_doubling) {
                rk.step(t, 0.5 * cfg.dt, s, half);
                rk.step(t + 0.5 * cfg.dt, 0.5 * cfg.dt, half, two_half);
                double err = 0.0;
                for (std::size_t i = 0; i < s.size(); ++i) err = std::max(err, std::abs(next[i] - two_half[i]) / 15.0);
                if (err > traj.max_step_error) traj.max_step_error = err;
                if (err > cfg.doubling_warn && traj.warnings.empty())
                    traj.warnings.push_back("step-doubling error estimate " + format_double(err) + " at t = " +
                                            format_double(t) + " exceeds " + format_double(cfg.doubling_warn));
            }
        } catch (const EvalError& e) {
            traj.domain_error = "t = " + format_double(t) + ": " + e.what();
            traj.truncated_at = k;
            break;
        }
        if (out_of_bounds(next, cfg.guard)) {
            traj.diverged = true;
            traj.truncated_at = k + 1;
            break;
        }
        s.swap(next);
    }
    return traj;
}

OsniSummary monitor_osni(const Trajectory& traj, const AffineSystem& plant, const Expr& V, const FeedbackLaw& law,
                         std::optional<double> epsilon_override) {
    OsniSummary out;
    out.epsilon = epsilon_override.value_or(law.epsilon);
    const std::size_t n = traj.n;
    const std::size_t p = traj.p;
    std::vector<CompiledExpr> grad = compile_all(gradient(V, plant.states), plant.states);
    const auto r = law.profile.r_original();

    Eigen::MatrixXd T_inv;
    if (law.lifted_by) T_inv = law.lifted_by->inverse();

    std::vector<double> yd(p), vv(p);
    for (std::size_t k = 0; k < traj.size(); ++k) {
        const auto x = traj.row(traj.x, n, k);
        const auto xdot = traj.row(traj.xdot, n, k);
        const auto ydot = traj.row(traj.ydot, p, k);
        const auto v = traj.row(traj.v, p, k);
        double Vdot = 0.0;
        for (std::size_t i = 0; i < n; ++i) Vdot += grad[i](x) * xdot[i];
        double pairing = 0.0;
        double ynorm = 0.0;
        for (std::size_t i = 0; i < p; ++i) {
            pairing += v[i] * ydot[i];
            ynorm += ydot[i] * ydot[i];
        }
        // The equality lives in the untransformed coordinates y = T^{-1} y~, v = T^T v~.
        for (std::size_t i = 0; i < p; ++i) {
            yd[i] = ydot[i];
            vv[i] = v[i];
        }
        if (law.lifted_by) {
            const Eigen::Map<const Eigen::VectorXd> yt(ydot.data(), static_cast<Eigen::Index>(p));
            const Eigen::Map<const Eigen::VectorXd> vt(v.data(), static_cast<Eigen::Index>(p));
            const Eigen::VectorXd y0 = T_inv * yt;
            const Eigen::VectorXd v0 = law.lifted_by->transpose() * vt;
            for (std::size_t i = 0; i < p; ++i) {
                yd[i] = y0(static_cast<Eigen::Index>(i));
                vv[i] = v0(static_cast<Eigen::Index>(i));
            }
        }
        double eq = Vdot;
        for (std::size_t i = 0; i < p; ++i) {
            eq -= vv[i] * yd[i];
            eq += (r[i] == 1 ? 1.0 : law.lambda) * yd[i] * yd[i];
        }
        const double ineq = pairing - out.epsilon * ynorm - Vdot;
        out.equality.push_back(eq);
        out.inequality.push_back(ineq);
        out.max_equality_abs = std::max(out.max_equality_abs, std::abs(eq));
        out.max_inequality_violation = std::max(out.max_inequality_violation, -ineq);
    }
    return out;
}

LyapunovSummary monitor_lyapunov(const Trajectory& traj, const std::vector<std::string>& plant_states,
                                 const std::vector<std::string>& unc_states, const Expr& W, double stall_tol,
                                 double state_tol) {
    std::vector<std::string> stacked = plant_states;
    stacked.insert(stacked.end(), unc_states.begin(), unc_states.end());
    const auto grad = compile_all(gradient(W, stacked), stacked);
    LyapunovSummary out;
    out.max_Wdot = traj.size() ? -std::numeric_limits<double>::infinity() : 0.0;
    const std::size_t n = traj.n;
    const std::size_t nc = traj.has_uncertainty ? traj.nc : 0;
    if (unc_states.size() != nc) throw std::invalid_argument("uncertainty state names do not match the trajectory");

    // A stall must persist for at least 5% of the run.
    const std::size_t min_len = std::max<std::size_t>(1, traj.size() / 20);
    std::optional<std::size_t> run_start;
    std::vector<double> s(n + nc);
    for (std::size_t k = 0; k < traj.size(); ++k) {
        double wd = 0.0;
        double norm = 0.0;
        for (std::size_t i = 0; i < n; ++i) s[i] = traj.x[k * n + i];
        for (std::size_t i = 0; i < nc; ++i) s[n + i] = traj.xc[k * nc + i];
        for (std::size_t i = 0; i < n; ++i) wd += grad[i](s) * traj.xdot[k * n + i];
        for (std::size_t i = 0; i < nc; ++i) wd += grad[n + i](s) * traj.xcdot[k * nc + i];
        for (double v : s) norm = std::max(norm, std::abs(v));
        out.Wdot.push_back(wd);
        out.max_Wdot = std::max(out.max_Wdot, wd);

        const bool stalled = std::abs(wd) <= stall_tol && norm >= state_tol;
        if (stalled && !run_start) run_start = k;
        const bool closes = run_start && (!stalled || k + 1 == traj.size());
        if (closes) {
            const std::size_t end = stalled ? k : k - 1;
            if (!out.stall && end + 1 - *run_start >= min_len) out.stall = std::make_pair(traj.t[*run_start], traj.t[end]);
            run_start.reset();
        }
    }
    return out;
}

ConvergenceVerdict convergence_check(const Trajectory& traj, double tol, double window, bool include_uncertainty) {
    if (!(tol > 0.0)) throw std::invalid_argument("tolerance must be positive");
    if (!(window > 0.0 && window <= 1.0)) throw std::invalid_argument("window must be a fraction in (0, 1]");
    ConvergenceVerdict out;
    out.diverged = traj.diverged || traj.domain_error.has_value();
    if (traj.size() == 0) return out;
    const std::size_t n = traj.n;
    const std::size_t nc = traj.has_uncertainty ? traj.nc : 0;
    std::vector<double> norms(traj.size());
    std::vector<double> unc_norms(traj.size(), 0.0);
    for (std::size_t k = 0; k < traj.size(); ++k) {
        double m = 0.0;
        for (std::size_t i = 0; i < n; ++i) m = std::max(m, std::abs(traj.x[k * n + i]));
        for (std::size_t i = 0; i < nc; ++i) unc_norms[k] = std::max(unc_norms[k], std::abs(traj.xc[k * nc + i]));
        norms[k] = include_uncertainty ? std::max(m, unc_norms[k]) : m;
    }
    const double t_end = traj.t.back();
    const double t_from = t_end * (1.0 - window);
    for (std::size_t k = 0; k < traj.size(); ++k)
        if (traj.t[k] >= t_from - 1e-12) {
            out.max_norm_in_window = std::max(out.max_norm_in_window, norms[k]);
            out.max_uncertainty_norm_in_window = std::max(out.max_uncertainty_norm_in_window, unc_norms[k]);
        }
    out.pass = !out.diverged && out.max_norm_in_window < tol;
    std::size_t k = traj.size();
    while (k > 0 && norms[k - 1] < tol) --k;
    if (k < traj.size() && !out.diverged) out.settling_time = traj.t[k];
    return out;
}

// ---------------------------------------------------------------------------
// ISS probe

std::vector<double> simulate_internal(const InternalDynamics& dyn, const std::vector<Expr>& signal,
                                      const std::vector<double>& z0, double dt, double T_final, double guard) {
    const std::size_t nz = dyn.z.size();
    const std::size_t nx = dyn.xi.size();
    if (dyn.f.size() != nz) throw ModelError("internal dynamics need one expression per z state");
    if (signal.size() != nx) throw ModelError("test signal needs one expression per xi input");
    if (z0.size() != nz) throw ModelError("z0 has the wrong dimension");
    std::vector<std::string> slots = dyn.z;
    slots.insert(slots.end(), dyn.xi.begin(), dyn.xi.end());
    const auto f = compile_all(dyn.f, slots);
    const std::vector<std::string> t_slot{"t"};
    const auto sig = compile_all(signal, t_slot);
    std::vector<double> buf(nz + nx);
    auto rhs = [&](double t, const double* z, double* dz) {
        std::copy(z, z + nz, buf.begin());
        const double tt[1] = {t};
        for (std::size_t i = 0; i < nx; ++i) buf[nz + i] = sig[i](tt);
        for (std::size_t i = 0; i < nz; ++i) dz[i] = f[i](buf);
    };
    Rk4<decltype(rhs)> rk(rhs, nz);
    const std::size_t steps = step_count(dt, T_final);
    std::vector<double> z(z0), next;
    for (std::size_t k = 0; k < steps; ++k) {
        try {
            rk.step(static_cast<double>(k) * dt, dt, z, next);
        } catch (const EvalError&) {
            return {};
        }
        if (out_of_bounds(next, guard)) return {};
        z.swap(next);
    }
    return z;
}

namespace {

struct IssCase {
    std::string label;
    std::vector<Expr> signal;
    std::vector<double> z0;
};

std::vector<IssCase> iss_battery(const InternalDynamics& dyn, const IssProbeConfig& cfg,
                                 const std::vector<std::vector<Expr>>& extra) {
    const std::size_t nz = dyn.z.size();
    const std::size_t nx = dyn.xi.size();
    std::vector<std::vector<double>> starts = cfg.z0;
    if (starts.empty())
        for (double c : {1.0, -1.0, 0.5}) starts.emplace_back(nz, c);

    std::vector<std::vector<Expr>> signals;
    std::vector<std::string> labels;
    signals.emplace_back(nx, Expr::constant(0.0));
    labels.emplace_back("zero");
    Rng rng(cfg.seed);
    const Expr t = Expr::variable("t");
    for (double rate : cfg.rates)
        for (double amp : cfg.amplitudes) {
            std::vector<Expr> sig;
            for (std::size_t i = 0; i < nx; ++i) {
                const double phase = rng.uniform(0.0, 6.283185307179586);
                sig.push_back(Expr::constant(amp) * exp(Expr::constant(-rate) * t) * cos(t + Expr::constant(phase)));
            }
            signals.push_back(std::move(sig));
            labels.push_back("decay rate " + format_double(rate) + ", amplitude " + format_double(amp));
        }
    for (std::size_t i = 0; i < extra.size(); ++i) {
        signals.push_back(extra[i]);
        labels.push_back("custom " + std::to_string(i + 1));
    }
    std::vector<IssCase> cases;
    for (std::size_t s = 0; s < signals.size(); ++s)
        for (const auto& z0 : starts) cases.push_back({labels[s], signals[s], z0});
    return cases;
}

IssRun run_case(const InternalDynamics& dyn, const IssProbeConfig& cfg, const IssCase& c) {
    IssRun run;
    run.signal = c.label;
    run.z0 = c.z0;
    double z0_norm = 0.0;
    for (double v : c.z0) z0_norm = std::max(z0_norm, std::abs(v));
    const auto z = simulate_internal(dyn, c.signal, c.z0, cfg.dt, cfg.T_final, cfg.guard);
    if (z.empty()) {
        run.diverged = true;
        run.falsifies = true;
        run.terminal_norm = std::numeric_limits<double>::infinity();
        return run;
    }
    for (double v : z) run.terminal_norm = std::max(run.terminal_norm, std::abs(v));
    run.falsifies = run.terminal_norm >= std::max(z0_norm, cfg.tol);
    return run;
}

IssReport finish(std::vector<IssRun> runs) {
    IssReport rep;
    rep.runs = std::move(runs);
    for (std::size_t i = 0; i < rep.runs.size(); ++i)
        if (rep.runs[i].falsifies) {
            rep.consistent = false;
            rep.witness = i;
            break;
        }
    return rep;
}

}  // namespace

IssReport iss_probe_serial(const InternalDynamics& dyn, const IssProbeConfig& cfg,
                           const std::vector<std::vector<Expr>>& extra_signals) {
    const auto cases = iss_battery(dyn, cfg, extra_signals);
    std::vector<IssRun> runs;
    for (const auto& c : cases) runs.push_back(run_case(dyn, cfg, c));
    return finish(std::move(runs));
}

IssReport iss_probe(const InternalDynamics& dyn, const IssProbeConfig& cfg,
                    const std::vector<std::vector<Expr>>& extra_signals) {
    if (!cfg.parallel) return iss_probe_serial(dyn, cfg, extra_signals);
    const auto cases = iss_battery(dyn, cfg, extra_signals);
    std::vector<IssRun> runs(cases.size());
    std::vector<std::string> errors(cases.size());
    const auto count = static_cast<std::ptrdiff_t>(cases.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
        try {
            runs[i] = run_case(dyn, cfg, cases[i]);
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    }
    for (const auto& e : errors)
        if (!e.empty()) throw ModelError(e);
    return finish(std::move(runs));
}

std::vector<double> central_difference(const std::vector<double>& series, double dt) {
    const std::size_t m = series.size();
    std::vector<double> d(m, 0.0);
    if (m < 2) return d;
    d[0] = (series[1] - series[0]) / dt;
    d[m - 1] = (series[m - 1] - series[m - 2]) / dt;
    for (std::size_t k = 1; k + 1 < m; ++k) d[k] = (series[k + 1] - series[k - 1]) / (2.0 * dt);
    return d;
}

std::string trajectory_csv(const Trajectory& traj) {
    std::ostringstream out;
    const bool unc = traj.has_uncertainty;
    const bool has_V = !traj.V.empty();
    const bool has_W = !traj.W.empty();
    const bool has_res = !traj.res_osni_eq.empty();
    const bool has_wdot = !traj.Wdot.empty();

    out << "# blocks: t x" << (unc ? " xc" : "") << " u" << (unc ? " w" : "") << " y ydot" << (has_V ? " V" : "")
        << (has_W ? " W" : "") << (has_res ? " res_osni_eq res_osni_ineq" : "") << (has_wdot ? " Wdot" : "");
    if (traj.truncated_at) out << "; truncated at step " << *traj.truncated_at;
    out << '\n';

    out << 't';
    auto names = [&](const char* prefix, std::size_t count) {
        for (std::size_t i = 0; i < count; ++i) out << ',' << prefix << '_' << (i + 1);
    };
    names("x", traj.n);
    if (unc) names("xc", traj.nc);
    names("u", traj.p);
    if (unc) names("w", traj.p);
    names("y", traj.p);
    names("ydot", traj.p);
    if (has_V) out << ",V";
    if (has_W) out << ",W";
    if (has_res) out << ",res_osni_eq,res_osni_ineq";
    if (has_wdot) out << ",Wdot";
    out << '\n';

    auto cells = [&](const std::vector<double>& block, std::size_t width, std::size_t k) {
        for (std::size_t i = 0; i < width; ++i) out << ',' << format_double(block[k * width + i]);
    };
    for (std::size_t k = 0; k < traj.size(); ++k) {
        out << format_double(traj.t[k]);
        cells(traj.x, traj.n, k);
        if (unc) cells(traj.xc, traj.nc, k);
        cells(traj.u, traj.p, k);
        if (unc) cells(traj.w, traj.p, k);
        cells(traj.y, traj.p, k);
        cells(traj.ydot, traj.p, k);
        if (has_V) out << ',' << format_double(traj.V[k]);
        if (has_W) out << ',' << format_double(traj.W[k]);
        if (has_res) out << ',' << format_double(traj.res_osni_eq[k]) << ',' << format_double(traj.res_osni_ineq[k]);
        if (has_wdot) out << ',' << format_double(traj.Wdot[k]);
        out << '\n';
    }
    return out.str();
}

}  // namespace nisynth
