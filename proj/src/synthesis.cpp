#include "nisynth/synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "nisynth/sampling.hpp"

namespace nisynth {

const char* to_string(LawKind k) {
    switch (k) {
        case LawKind::RenderNI:
            return "render";
        case LawKind::Stabilize:
            return "stabilize";
        case LawKind::Robust:
            return "robust";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Screening

ScreenResult screen_positive_definite(const Expr& e, const std::vector<std::string>& vars, const Box& box,
                                      std::size_t n, Definiteness mode, std::uint64_t seed, bool parallel) {
    if (n == 0) throw std::invalid_argument("screen needs at least one sample");
    if (box.dim() != vars.size()) throw std::invalid_argument("screen box dimension does not match variables");
    ScreenResult res;
    const std::size_t dim = vars.size();
    const std::vector<double> origin(dim, 0.0);
    const CompiledExpr program(e, vars);
    double at_origin = 0.0;
    try {
        at_origin = program(origin);
    } catch (const EvalError& err) {
        res.witness = origin;
        res.note = std::string("evaluation failed at the origin: ") + err.what();
        return res;
    }
    if (!(std::abs(at_origin) <= 1e-12)) {
        res.witness = origin;
        res.value_at_witness = at_origin;
        res.note = "nonzero at the origin";
        return res;
    }
    if (dim == 0) {
        res.pass = true;
        res.note = "no variables";
        return res;
    }

    PointSet points;
    points.dim = dim;
    std::vector<double> hw(dim);
    for (std::size_t d = 0; d < dim; ++d) hw[d] = 0.5 * (box.hi[d] - box.lo[d]);
    Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
    const std::size_t per_radius = std::max<std::size_t>(8, n / 20);
    for (double radius : {1.0, 0.1, 0.01}) {
        for (std::size_t d = 0; d < dim; ++d)
            for (double sign : {1.0, -1.0}) {
                std::vector<double> pnt(dim, 0.0);
                pnt[d] = sign * radius * hw[d];
                points.push_back(pnt);
            }
        for (std::size_t k = 0; k < per_radius; ++k) {
            std::vector<double> pnt(dim);
            for (std::size_t d = 0; d < dim; ++d) pnt[d] = radius * hw[d] * rng.uniform(-1.0, 1.0);
            points.push_back(pnt);
        }
    }
    const PointSet uniform = sample_box(box, n, seed);
    points.data.insert(points.data.end(), uniform.data.begin(), uniform.data.end());

    const bool strict = mode == Definiteness::Definite;
    const auto scan = parallel ? kernels::scan_sign(program, points, strict)
                               : kernels::scan_sign_serial(program, points, strict);
    res.skipped = scan.failed.size();
    res.checked = points.size() - res.skipped;
    if (scan.first_violation != kernels::npos) {
        auto p = points[scan.first_violation];
        res.witness = std::vector<double>(p.begin(), p.end());
        res.value_at_witness = program(p);
        res.note = strict ? "not positive at a sampled nonzero point" : "negative at a sampled point";
        return res;
    }
    res.pass = true;
    res.note = "sampled (" + std::to_string(res.checked) + " points)";
    return res;
}

// ---------------------------------------------------------------------------
// Uncertainty

UncertaintyModel make_uncertainty(std::vector<std::string> states, std::vector<std::string> inputs,
                                  std::vector<Expr> f, std::vector<Expr> h, Expr V, const ScreenConfig& screen) {
    if (f.size() != states.size()) throw ModelError("uncertainty drift must have one entry per uncertainty state");
    if (inputs.size() != h.size()) throw ModelError("uncertainty input and output dimensions differ");
    std::set<std::string, std::less<>> all(states.begin(), states.end());
    all.insert(inputs.begin(), inputs.end());
    if (all.size() != states.size() + inputs.size()) throw ModelError("uncertainty names are not distinct");
    std::set<std::string, std::less<>> only_states(states.begin(), states.end());
    auto scoped = [](const Expr& e, const auto& allowed, const std::string& what) {
        for (const auto& v : free_variables(e))
            if (!allowed.contains(v)) throw ModelError(what + " uses undeclared variable '" + v + "'");
    };
    Assignment zero;
    for (const auto& s : all) zero[s] = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
        scoped(f[i], all, "f_c");
        if (!(std::abs(eval(f[i], zero)) <= 1e-9)) throw ModelError("f_c(0, 0) is not zero");
        f[i] = fold(f[i]);
    }
    for (std::size_t i = 0; i < h.size(); ++i) {
        scoped(h[i], only_states, "h_c");
        if (!(std::abs(eval(h[i], zero)) <= 1e-9)) throw ModelError("h_c(0) is not zero");
        h[i] = fold(h[i]);
    }
    scoped(V, only_states, "V_c");
    V = fold(V);
    const auto screen_v = screen_positive_definite(V, states, Box::symmetric(states.size(), screen.half_width),
                                                   screen.samples, Definiteness::Semidefinite, screen.seed,
                                                   screen.parallel);
    if (!screen_v.pass) throw ModelError("uncertainty storage function V_c: " + screen_v.note);
    return UncertaintyModel{std::move(states), std::move(inputs), std::move(f), std::move(h), std::move(V)};
}

// ---------------------------------------------------------------------------
// Storage functions

namespace {

Expr half_squared_norm(const std::vector<std::string>& names) {
    std::vector<Expr> terms;
    for (const auto& n : names) terms.push_back(Expr::constant(0.5) * pow(Expr::variable(n), 2));
    return sum(terms);
}

std::map<std::string, Expr, std::less<>> xi_bindings(const RelativeDegreeProfile& profile) {
    std::map<std::string, Expr, std::less<>> b;
    for (std::size_t k = 0; k < profile.p1; ++k) b[profile.xi1_names[k]] = profile.xi1[k];
    for (std::size_t k = 0; k < profile.p2; ++k) b[profile.xi2_names[k]] = profile.xi2[k];
    return b;
}

void require_vars(const Expr& e, const std::vector<std::string>& allowed, const char* which) {
    for (const auto& v : free_variables(e))
        if (std::find(allowed.begin(), allowed.end(), v) == allowed.end())
            throw SynthesisError(std::string(which) + " may only depend on its own output coordinates; found '" + v + "'");
}

}  // namespace

Expr resolved_V1(const RelativeDegreeProfile& profile, const StorageSpec& spec) {
    Expr v = spec.V1 ? fold(*spec.V1) : half_squared_norm(profile.xi1_names);
    require_vars(v, profile.xi1_names, "V1");
    return v;
}

Expr resolved_V2(const RelativeDegreeProfile& profile, const StorageSpec& spec) {
    Expr v = spec.V2 ? fold(*spec.V2) : half_squared_norm(profile.xi2_names);
    require_vars(v, profile.xi2_names, "V2");
    return v;
}

std::vector<Expr> outputs_in_original_order(const RelativeDegreeProfile& profile) {
    std::vector<Expr> y(profile.r.size());
    std::size_t one = 0;
    std::size_t two = 0;
    for (std::size_t k = 0; k < profile.r.size(); ++k)
        y[profile.order[k]] = profile.r[k] == 1 ? profile.xi1[one++] : profile.xi2[two++];
    return y;
}

Expr storage_V(const RelativeDegreeProfile& profile, const StorageSpec& spec) {
    const auto bind = xi_bindings(profile);
    std::vector<Expr> terms{fold(substitute(resolved_V1(profile, spec), bind)),
                            fold(substitute(resolved_V2(profile, spec), bind))};
    for (const auto& x3 : profile.xi3) terms.push_back(fold(Expr::constant(0.5) * pow(x3, 2)));
    return sum(terms);
}

Expr storage_W(const RelativeDegreeProfile& profile, const StorageSpec& spec, const UncertaintyModel& unc) {
    if (unc.p() != profile.r.size()) throw std::invalid_argument("uncertainty port dimension does not match the plant");
    const auto y = outputs_in_original_order(profile);
    Expr w = fold(storage_V(profile, spec) + unc.V);
    for (std::size_t i = 0; i < y.size(); ++i) {
        Expr cross = fold(unc.h[i] * y[i]);
        if (!cross.is_constant(0.0)) w = fold(w - cross);
    }
    return w;
}

NormalFormStorage storage_W_normal_form(const RelativeDegreeProfile& profile, const StorageSpec& spec,
                                        const UncertaintyModel& unc) {
    if (unc.p() != profile.r.size()) throw std::invalid_argument("uncertainty port dimension does not match the plant");
    NormalFormStorage out;
    out.vars = profile.xi1_names;
    out.vars.insert(out.vars.end(), profile.xi2_names.begin(), profile.xi2_names.end());
    std::vector<Expr> terms{resolved_V1(profile, spec), resolved_V2(profile, spec)};
    for (const auto& name : profile.xi2_names) {
        out.vars.push_back(name + "_dot");
        terms.push_back(Expr::constant(0.5) * pow(Expr::variable(name + "_dot"), 2));
    }
    for (const auto& s : unc.states) {
        if (std::find(out.vars.begin(), out.vars.end(), s) != out.vars.end())
            throw SynthesisError("uncertainty state '" + s + "' clashes with an output coordinate name");
        out.vars.push_back(s);
    }
    terms.push_back(unc.V);
    Expr w = fold(sum(terms));
    // y in original order, named by the output coordinates
    std::vector<std::string> y_names(profile.r.size());
    std::size_t one = 0;
    std::size_t two = 0;
    for (std::size_t k = 0; k < profile.r.size(); ++k)
        y_names[profile.order[k]] = profile.r[k] == 1 ? profile.xi1_names[one++] : profile.xi2_names[two++];
    for (std::size_t i = 0; i < y_names.size(); ++i) {
        Expr cross = fold(unc.h[i] * Expr::variable(y_names[i]));
        if (!cross.is_constant(0.0)) w = fold(w - cross);
    }
    out.W = w;
    return out;
}

// ---------------------------------------------------------------------------
// Laws

namespace {

std::vector<std::string> aux_names(const std::string& base, std::size_t p, const std::vector<std::string>& taken) {
    for (const std::string sep : {"", "_", "_aux"}) {
        auto names = default_names(base + sep, p);
        bool clash = false;
        for (const auto& n : names)
            clash = clash || std::find(taken.begin(), taken.end(), n) != taken.end();
        if (!clash) return names;
    }
    throw SynthesisError("cannot choose auxiliary input names distinct from the state names");
}

void screen_storage(const Expr& v, const std::vector<std::string>& names, Definiteness mode, const ScreenConfig& cfg,
                    const char* which) {
    if (names.empty()) return;
    const auto res = screen_positive_definite(v, names, Box::symmetric(names.size(), cfg.half_width), cfg.samples,
                                              mode, cfg.seed, cfg.parallel);
    if (!res.pass)
        throw SynthesisError(std::string(which) + " fails the " +
                                 (mode == Definiteness::Definite ? "positive definite" : "positive semidefinite") +
                                 " screen: " + res.note,
                             res.witness);
}

// The stabilizing argument needs grad V to vanish only at the origin.
void screen_gradient(const Expr& v, const std::vector<std::string>& names, const ScreenConfig& cfg, const char* which) {
    if (names.empty()) return;
    std::vector<CompiledExpr> grad;
    for (const auto& g : gradient(v, names)) grad.emplace_back(g, names);
    const Box box = Box::symmetric(names.size(), cfg.half_width);
    PointSet pts = sample_box(box, std::min<std::size_t>(cfg.samples, 500), cfg.seed + 1);
    for (double radius : {0.1, 0.01})
        for (std::size_t d = 0; d < names.size(); ++d) {
            std::vector<double> pnt(names.size(), 0.0);
            pnt[d] = radius * cfg.half_width;
            pts.push_back(pnt);
        }
    for (std::size_t s = 0; s < pts.size(); ++s) {
        double norm = 0.0;
        try {
            for (const auto& g : grad) norm = std::max(norm, std::abs(g(pts[s])));
        } catch (const EvalError&) {
            continue;
        }
        if (!(norm > 1e-12)) {
            auto p = pts[s];
            throw SynthesisError(std::string("gradient of ") + which + " vanishes away from the origin",
                                 std::vector<double>(p.begin(), p.end()));
        }
    }
}

FeedbackLaw build_law(const AffineSystem& sys, const RelativeDegreeProfile& profile, const StorageSpec& spec,
                      LawKind kind) {
    const std::size_t p = profile.r.size();
    if (p != sys.p()) throw std::invalid_argument("profile does not belong to this system");
    FeedbackLaw law;
    law.kind = kind;
    law.states = sys.states;
    law.profile = profile;
    law.V1 = resolved_V1(profile, spec);
    law.V2 = resolved_V2(profile, spec);
    law.lambda = spec.lambda;
    law.epsilon = std::min(1.0, spec.lambda);
    if (kind == LawKind::RenderNI) law.aux = aux_names("v", p, sys.states);
    if (kind == LawKind::Robust) law.aux = aux_names("w", p, sys.states);

    const auto bind = xi_bindings(profile);
    std::vector<Expr> rhs;
    for (std::size_t k = 0; k < p; ++k) {
        std::vector<Expr> plus;
        std::vector<Expr> minus;
        if (kind == LawKind::RenderNI) plus.push_back(Expr::variable(law.aux[profile.order[k]]));
        if (kind == LawKind::Robust) {
            for (std::size_t j = 0; j < p; ++j) {
                const Expr coeff = fold(Expr::constant(j == profile.order[k] ? 1.0 : 0.0) - profile.A(k, j));
                if (!coeff.is_constant(0.0)) plus.push_back(fold(coeff * Expr::variable(law.aux[j])));
            }
        }
        minus.push_back(fold(profile.drift[k]));
        if (k < profile.p1) {
            minus.push_back(fold(substitute(diff(law.V1, profile.xi1_names[k]), bind)));
        } else {
            const std::size_t m = k - profile.p1;
            minus.push_back(fold(substitute(diff(law.V2, profile.xi2_names[m]), bind)));
            minus.push_back(fold(Expr::constant(spec.lambda) * profile.xi3[m]));
        }
        std::optional<Expr> acc;
        for (const auto& t : plus) acc = acc ? fold(*acc + t) : t;
        for (const auto& t : minus) {
            if (t.is_constant(0.0)) continue;
            acc = acc ? make_binary(Op::Sub, *acc, t) : make_unary(Op::Neg, t);
        }
        rhs.push_back(acc ? *acc : Expr::constant(0.0));
    }

    if (auto inv = symbolic_inverse(profile.A)) {
        for (std::size_t i = 0; i < p; ++i) {
            std::optional<Expr> acc;
            for (std::size_t k = 0; k < p; ++k) {
                const Expr c = fold((*inv)(i, k));
                if (c.is_constant(0.0)) continue;
                Expr term = c.is_constant(1.0) ? rhs[k] : fold(c * rhs[k]);
                acc = acc ? fold(*acc + term) : term;
            }
            law.u.push_back(acc ? *acc : Expr::constant(0.0));
        }
    } else {
        law.pointwise = true;
        law.A = profile.A;
        law.rhs = rhs;
    }
    return law;
}

}  // namespace

FeedbackLaw render_ni(const AffineSystem& sys, const RelativeDegreeProfile& profile, const StorageSpec& spec,
                      const ScreenConfig& screen) {
    if (!(spec.lambda >= 0.0)) throw SynthesisError("lambda must be nonnegative");
    const Expr v1 = resolved_V1(profile, spec);
    const Expr v2 = resolved_V2(profile, spec);
    screen_storage(v1, profile.xi1_names, Definiteness::Semidefinite, screen, "V1");
    screen_storage(v2, profile.xi2_names, Definiteness::Semidefinite, screen, "V2");
    return build_law(sys, profile, spec, LawKind::RenderNI);
}

FeedbackLaw stabilizing_law(const AffineSystem& sys, const RelativeDegreeProfile& profile, const StorageSpec& spec,
                            const ScreenConfig& screen) {
    if (!(spec.lambda > 0.0)) throw SynthesisError("stabilizing law requires lambda > 0");
    const Expr v1 = resolved_V1(profile, spec);
    const Expr v2 = resolved_V2(profile, spec);
    screen_storage(v1, profile.xi1_names, Definiteness::Definite, screen, "V1");
    screen_storage(v2, profile.xi2_names, Definiteness::Definite, screen, "V2");
    screen_gradient(v1, profile.xi1_names, screen, "V1");
    screen_gradient(v2, profile.xi2_names, screen, "V2");
    return build_law(sys, profile, spec, LawKind::Stabilize);
}

FeedbackLaw robust_law(const AffineSystem& sys, const RelativeDegreeProfile& profile, const StorageSpec& spec,
                       const ScreenConfig& screen) {
    if (!(spec.lambda > 0.0)) throw SynthesisError("robust law requires lambda > 0");
    const Expr v1 = resolved_V1(profile, spec);
    const Expr v2 = resolved_V2(profile, spec);
    screen_storage(v1, profile.xi1_names, Definiteness::Definite, screen, "V1");
    screen_storage(v2, profile.xi2_names, Definiteness::Definite, screen, "V2");
    return build_law(sys, profile, spec, LawKind::Robust);
}

FeedbackLaw lift_through_transform(const FeedbackLaw& law, const Eigen::MatrixXd& T) {
    if (law.kind != LawKind::RenderNI) throw SynthesisError("only render-NI laws carry a new input to transform");
    const std::size_t p = law.aux.size();
    if (static_cast<std::size_t>(T.rows()) != p || static_cast<std::size_t>(T.cols()) != p)
        throw std::invalid_argument("transformation has the wrong size");
    FeedbackLaw out = law;
    std::vector<std::string> taken = law.states;
    taken.insert(taken.end(), law.aux.begin(), law.aux.end());
    out.aux = aux_names("vt", p, taken);
    std::map<std::string, Expr, std::less<>> bind;
    for (std::size_t i = 0; i < p; ++i) {
        std::vector<Expr> terms;
        for (std::size_t j = 0; j < p; ++j)
            if (T(j, i) != 0.0) terms.push_back(fold(Expr::constant(T(j, i)) * Expr::variable(out.aux[j])));
        bind[law.aux[i]] = sum(terms);
    }
    for (auto& e : out.u) e = fold(substitute(e, bind));
    for (auto& e : out.rhs) e = fold(substitute(e, bind));
    out.epsilon = transformed_epsilon(law.epsilon, T);
    out.lifted_by = T;
    return out;
}

std::vector<std::string> FeedbackLaw::printed() const {
    std::vector<std::string> lines;
    if (!pointwise) {
        for (std::size_t i = 0; i < u.size(); ++i)
            lines.push_back((u.size() == 1 ? std::string("u") : "u" + std::to_string(i + 1)) + " = " + to_string(u[i]));
        return lines;
    }
    for (std::size_t i = 0; i < A.rows(); ++i) {
        std::string row = "A" + std::to_string(i + 1) + " = [";
        for (std::size_t j = 0; j < A.cols(); ++j) row += (j ? ", " : "") + to_string(A(i, j));
        lines.push_back(row + "]");
    }
    for (std::size_t i = 0; i < rhs.size(); ++i)
        lines.push_back("rhs" + std::to_string(i + 1) + " = " + to_string(rhs[i]));
    lines.push_back("u = A(x)^-1 * rhs (solved pointwise)");
    return lines;
}

CompiledLaw FeedbackLaw::compile() const { return CompiledLaw(*this); }

CompiledLaw::CompiledLaw(const FeedbackLaw& law) : n_(law.states.size()), p_(law.p()), pointwise_(law.pointwise) {
    std::vector<std::string> slots = law.states;
    slots.insert(slots.end(), law.aux.begin(), law.aux.end());
    if (!pointwise_) {
        for (const auto& e : law.u) u_.emplace_back(e, slots);
        return;
    }
    for (std::size_t i = 0; i < law.A.rows(); ++i)
        for (std::size_t j = 0; j < law.A.cols(); ++j) a_.emplace_back(law.A(i, j), slots);
    for (const auto& e : law.rhs) rhs_.emplace_back(e, slots);
}

void CompiledLaw::operator()(std::span<const double> x, std::span<const double> aux, std::span<double> u) const {
    double buf_inline[32];
    std::vector<double> buf_heap;
    double* buf = buf_inline;
    if (x.size() + aux.size() > 32) {
        buf_heap.resize(x.size() + aux.size());
        buf = buf_heap.data();
    }
    std::copy(x.begin(), x.end(), buf);
    std::copy(aux.begin(), aux.end(), buf + x.size());
    const std::span<const double> slots(buf, x.size() + aux.size());
    if (!pointwise_) {
        for (std::size_t i = 0; i < p_; ++i) u[i] = u_[i](slots);
        return;
    }
    Eigen::MatrixXd a(p_, p_);
    Eigen::VectorXd b(p_);
    for (std::size_t i = 0; i < p_; ++i) {
        for (std::size_t j = 0; j < p_; ++j) a(i, j) = a_[i * p_ + j](slots);
        b(i) = rhs_[i](slots);
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
    if (!lu.isInvertible()) throw EvalError(EvalError::Kind::DivisionByZero, "A(x) is singular");
    const Eigen::VectorXd sol = lu.solve(b);
    for (std::size_t i = 0; i < p_; ++i) u[i] = sol(i);
}

}  // namespace nisynth
