#include "nisynth/structure.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "nisynth/sampling.hpp"

namespace nisynth {

Box SamplingConfig::domain(std::size_t n) const {
    if (box.dim() == n) return box;
    if (box.dim() != 0) throw std::invalid_argument("analysis box dimension does not match the state dimension");
    return Box::symmetric(n, 1.0);
}

const char* to_string(Status s) {
    switch (s) {
        case Status::Pass:
            return "pass";
        case Status::Fail:
            return "fail";
        case Status::NotChecked:
            return "not checked";
        case Status::Assumed:
            return "assumed";
    }
    return "?";
}

std::size_t numeric_rank(const Eigen::MatrixXd& m, double rel_tol) {
    if (m.size() == 0) return 0;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
    const auto& s = svd.singularValues();
    if (s.size() == 0 || s(0) == 0.0) return 0;
    const double cut = rel_tol * s(0);
    std::size_t rank = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i)
        if (s(i) > cut) ++rank;
    return rank;
}

namespace {

std::vector<double> to_vector(std::span<const double> p) { return {p.begin(), p.end()}; }

std::string format_point(const std::vector<double>& p) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < p.size(); ++i) os << (i ? ", " : "") << p[i];
    os << ']';
    return os.str();
}

// A scalar function is nonzero on the sample set (tolerance relative to coordinates).
bool nonzero_near(const Expr& e, const std::vector<std::string>& vars, const Box& box, const SamplingConfig& opts) {
    return !probably_zero(e, vars, box, ZeroTestOptions{opts.samples, opts.zero_tol, opts.seed}).zero;
}

Eigen::MatrixXd evaluate_matrix(const std::vector<CompiledExpr>& entries, std::size_t rows, std::size_t cols,
                                std::span<const double> x) {
    Eigen::MatrixXd m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) m(i, j) = entries[i * cols + j](x);
    return m;
}

std::vector<CompiledExpr> compile_matrix(const ExprMatrix& m, const std::vector<std::string>& vars) {
    std::vector<CompiledExpr> out;
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) out.emplace_back(fold(m(i, j)), vars);
    return out;
}

// Runs check(i) for every sample and returns the first failing index (or npos);
// the parallel path stores per-sample flags so the reported index matches the serial loop.
template <typename Check>
std::size_t first_failure(std::size_t count, bool parallel, Check check) {
    if (!parallel) {
        for (std::size_t i = 0; i < count; ++i)
            if (!check(i)) return i;
        return kernels::npos;
    }
    std::vector<unsigned char> ok(count, 1);
    const auto n = static_cast<std::ptrdiff_t>(count);
#pragma omp parallel for schedule(dynamic, 4)
    for (std::ptrdiff_t i = 0; i < n; ++i) ok[static_cast<std::size_t>(i)] = check(static_cast<std::size_t>(i)) ? 1 : 0;
    for (std::size_t i = 0; i < count; ++i)
        if (!ok[i]) return i;
    return kernels::npos;
}

}  // namespace

RelativeDegreeProfile relative_degree(const AffineSystem& sys, const std::vector<double>& x0,
                                      const SamplingConfig& opts) {
    const std::size_t p = sys.p();
    if (x0.size() != sys.n()) throw std::invalid_argument("x0 has the wrong dimension");
    for (double v : x0)
        if (!std::isfinite(v)) throw std::invalid_argument("x0 must be finite");
    const Box near = Box::ball_around(x0, opts.radius);

    std::vector<int> r(p, 0);
    std::vector<std::vector<Expr>> rows(p);
    std::vector<Expr> drift(p);
    std::vector<Expr> lfh(p);
    for (std::size_t i = 0; i < p; ++i) {
        std::vector<Expr> lgh;
        bool appears = false;
        for (std::size_t j = 0; j < p; ++j) {
            lgh.push_back(lie_derivative(sys.h[i], sys.input_column(j)));
            appears = appears || nonzero_near(lgh.back(), sys.states, near, opts);
        }
        lfh[i] = lie_derivative(sys.h[i], sys.f);
        if (appears) {
            r[i] = 1;
            rows[i] = std::move(lgh);
            drift[i] = lfh[i];
            continue;
        }
        std::vector<Expr> lglfh;
        for (std::size_t j = 0; j < p; ++j) {
            lglfh.push_back(lie_derivative(lfh[i], sys.input_column(j)));
            appears = appears || nonzero_near(lglfh.back(), sys.states, near, opts);
        }
        if (!appears)
            throw StructureError(StructureError::Kind::RelativeDegreeUndefined,
                                 "relative degree undefined or greater than 2 for output " + std::to_string(i + 1) +
                                     " (the input does not appear in its first two derivatives)",
                                 i);
        r[i] = 2;
        rows[i] = std::move(lglfh);
        drift[i] = lie_derivative(lfh[i], sys.f);
    }

    RelativeDegreeProfile prof;
    prof.order.resize(p);
    std::iota(prof.order.begin(), prof.order.end(), std::size_t{0});
    std::stable_sort(prof.order.begin(), prof.order.end(), [&](std::size_t a, std::size_t b) { return r[a] < r[b]; });
    prof.A = ExprMatrix(p, p);
    for (std::size_t k = 0; k < p; ++k) {
        const std::size_t i = prof.order[k];
        prof.r.push_back(r[i]);
        for (std::size_t j = 0; j < p; ++j) prof.A(k, j) = rows[i][j];
        prof.drift.push_back(drift[i]);
        if (r[i] == 1) {
            prof.xi1.push_back(sys.h[i]);
            prof.xi1_names.push_back(sys.output_names[i]);
        } else {
            prof.xi2.push_back(sys.h[i]);
            prof.xi2_names.push_back(sys.output_names[i]);
            prof.xi3.push_back(lfh[i]);
        }
    }
    prof.p1 = prof.xi1.size();
    prof.p2 = prof.xi2.size();

    const auto entries = compile_matrix(prof.A, sys.states);
    prof.det_at_x0 = evaluate_matrix(entries, p, p, x0).determinant();
    if (!(std::abs(prof.det_at_x0) > opts.det_tol))
        throw StructureError(StructureError::Kind::SingularDecoupling,
                             "no vector relative degree at x0: decoupling matrix A(x0) is singular (det = " +
                                 std::to_string(prof.det_at_x0) +
                                 "); a constant output transformation y~ = T y may restore one");
    return prof;
}

Verdict check_involutive(const AffineSystem& sys, const SamplingConfig& opts) {
    const std::size_t n = sys.n();
    const std::size_t p = sys.p();
    Verdict v;
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    std::vector<std::vector<CompiledExpr>> brackets;
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = i + 1; j < p; ++j) {
            const VectorField b = lie_bracket(sys.input_column(i), sys.input_column(j));
            std::vector<CompiledExpr> comp;
            for (const auto& c : b.components) comp.emplace_back(c, sys.states);
            pairs.emplace_back(i, j);
            brackets.push_back(std::move(comp));
        }
    if (pairs.empty()) {
        v.status = Status::Pass;
        v.note = "single input column";
        return v;
    }
    const auto g_entries = compile_matrix(sys.g, sys.states);
    const PointSet points = sample_box(opts.domain(n), opts.samples, opts.seed);

    std::vector<std::size_t> failing_pair(points.size(), 0);
    auto check = [&](std::size_t s) {
        const auto x = points[s];
        try {
            const Eigen::MatrixXd G = evaluate_matrix(g_entries, n, p, x);
            const std::size_t base = numeric_rank(G, opts.rank_tol);
            for (std::size_t k = 0; k < pairs.size(); ++k) {
                Eigen::MatrixXd aug(n, p + 1);
                aug.leftCols(p) = G;
                for (std::size_t c = 0; c < n; ++c) aug(c, p) = brackets[k][c](x);
                if (numeric_rank(aug, opts.rank_tol) != base) {
                    failing_pair[s] = k;
                    return false;
                }
            }
        } catch (const EvalError&) {
            // Sample skipped.
        }
        return true;
    };
    const std::size_t bad = first_failure(points.size(), opts.parallel, check);
    if (bad == kernels::npos) {
        v.status = Status::Pass;
        v.note = "rank of [G | [g_i, g_j]] equals rank of G at all " + std::to_string(points.size()) + " samples";
        return v;
    }
    v.status = Status::Fail;
    const auto pr = pairs[failing_pair[bad]];
    v.witness = Witness{to_vector(points[bad]), pr,
                        "bracket of columns " + std::to_string(pr.first + 1) + " and " + std::to_string(pr.second + 1) +
                            " leaves span(G)"};
    v.note = "not involutive";
    return v;
}

StructureReport check_H1_H3(const AffineSystem& sys, const RelativeDegreeProfile& profile, const SamplingConfig& opts) {
    const std::size_t n = sys.n();
    const std::size_t p = sys.p();
    StructureReport rep;
    rep.box = opts.domain(n);
    rep.seed = opts.seed;
    rep.samples = opts.samples;
    rep.h2.status = Status::Assumed;
    rep.h2.note = "completeness of the X_i^k vector fields is assumed, not verified";

    // H1: same relative degree and nonsingular A at every sample.
    const auto a_entries = compile_matrix(profile.A, sys.states);
    std::vector<std::vector<CompiledExpr>> must_vanish(p);
    for (std::size_t k = 0; k < p; ++k) {
        if (profile.r[k] != 2) continue;
        const std::size_t i = profile.order[k];
        for (std::size_t j = 0; j < p; ++j)
            must_vanish[k].emplace_back(lie_derivative(sys.h[i], sys.input_column(j)), sys.states);
    }
    PointSet points;
    points.dim = n;
    points.push_back(rep.box.center());
    const PointSet random = sample_box(rep.box, opts.samples, opts.seed);
    points.data.insert(points.data.end(), random.data.begin(), random.data.end());

    std::vector<double> dets(points.size(), std::numeric_limits<double>::quiet_NaN());
    std::vector<std::string> reason(points.size());
    auto check = [&](std::size_t s) {
        const auto x = points[s];
        double scale = 0.0;
        for (double c : x) scale = std::max(scale, std::abs(c));
        try {
            for (std::size_t k = 0; k < p; ++k)
                for (const auto& e : must_vanish[k])
                    if (!(std::abs(e(x)) <= opts.zero_tol * (1.0 + scale))) {
                        reason[s] = "L_g h does not vanish for sorted output " + std::to_string(k + 1);
                        return false;
                    }
            dets[s] = evaluate_matrix(a_entries, p, p, x).determinant();
        } catch (const EvalError& err) {
            reason[s] = err.what();
            return false;
        }
        if (!(std::abs(dets[s]) > opts.det_tol)) {
            reason[s] = "A(x) is singular (det = " + std::to_string(dets[s]) + ")";
            return false;
        }
        return true;
    };
    const std::size_t bad = first_failure(points.size(), opts.parallel, check);
    if (bad != kernels::npos) {
        rep.h1.status = Status::Fail;
        rep.h1.witness = Witness{to_vector(points[bad]), std::nullopt, reason[bad]};
    } else {
        // A continuous determinant that changes sign vanishes somewhere on the segment between samples.
        std::size_t flip = kernels::npos;
        for (std::size_t s = 1; s < points.size(); ++s)
            if ((dets[s] > 0) != (dets[0] > 0)) {
                flip = s;
                break;
            }
        if (flip == kernels::npos) {
            rep.h1.status = Status::Pass;
            rep.h1.note = "relative degree and |det A| > tol at " + std::to_string(points.size()) + " samples";
        } else {
            std::vector<double> a = to_vector(points[0]);
            std::vector<double> b = to_vector(points[flip]);
            std::vector<double> mid(n);
            double det_mid = dets[0];
            for (int it = 0; it < 200; ++it) {
                for (std::size_t c = 0; c < n; ++c) mid[c] = 0.5 * (a[c] + b[c]);
                det_mid = evaluate_matrix(a_entries, p, p, mid).determinant();
                if (std::abs(det_mid) <= opts.det_tol) break;
                if ((det_mid > 0) == (dets[0] > 0))
                    a = mid;
                else
                    b = mid;
            }
            rep.h1.status = Status::Fail;
            rep.h1.witness = Witness{mid, std::nullopt,
                                     "det A changes sign inside the box; near-singular point det = " + std::to_string(det_mid)};
        }
    }

    // H3: columns of g~ commute.
    if (p == 1) {
        rep.h3.status = Status::Pass;
        rep.h3.note = "single column (vacuous)";
        return rep;
    }
    TildeFields tilde;
    try {
        tilde = tilde_fields(sys, profile);
    } catch (const UnsupportedError& e) {
        rep.h3.status = Status::NotChecked;
        rep.h3.note = e.what();
        return rep;
    }
    rep.h3.status = Status::Pass;
    for (std::size_t i = 0; i < p && rep.h3.pass(); ++i)
        for (std::size_t j = i + 1; j < p && rep.h3.pass(); ++j) {
            const VectorField b = lie_bracket(VectorField{sys.states, tilde.g_tilde.column(i)},
                                              VectorField{sys.states, tilde.g_tilde.column(j)});
            for (std::size_t c = 0; c < n; ++c) {
                const auto res = probably_zero(b.components[c], sys.states, rep.box,
                                               ZeroTestOptions{opts.samples, opts.zero_tol, opts.seed});
                if (!res.zero) {
                    rep.h3.status = Status::Fail;
                    rep.h3.witness = Witness{res.witness.value_or(rep.box.center()), std::make_pair(i, j),
                                             "[X_i^1, X_j^1] component " + std::to_string(c + 1) + " is nonzero at " +
                                                 format_point(res.witness.value_or(rep.box.center()))};
                    break;
                }
            }
        }
    if (rep.h3.pass()) rep.h3.note = "all brackets of g~ columns vanish on the samples";
    return rep;
}

StructureAnalysis analyze_structure(const AffineSystem& sys, const SamplingConfig& opts) {
    StructureAnalysis out;
    out.profile = relative_degree(sys, std::vector<double>(sys.n(), 0.0), opts);
    out.report = check_H1_H3(sys, out.profile, opts);
    out.report.involutive = check_involutive(sys, opts);
    return out;
}

AffineSystem output_transform(const AffineSystem& sys, const Eigen::MatrixXd& T) {
    const std::size_t p = sys.p();
    if (static_cast<std::size_t>(T.rows()) != p || static_cast<std::size_t>(T.cols()) != p)
        throw std::invalid_argument("output transformation must be p x p");
    if (!(std::abs(T.determinant()) > 1e-12)) throw std::invalid_argument("output transformation is singular");
    AffineSystem out = sys;
    out.h.clear();
    for (std::size_t i = 0; i < p; ++i) {
        std::vector<Expr> terms;
        for (std::size_t j = 0; j < p; ++j)
            if (T(i, j) != 0.0) terms.push_back(fold(Expr::constant(T(i, j)) * sys.h[j]));
        out.h.push_back(sum(terms));
    }
    out.output_names.clear();
    for (const auto& name : sys.output_names) out.output_names.push_back(name + "_t");
    const Eigen::MatrixXd total = sys.transform ? Eigen::MatrixXd(T * sys.transform->T) : T;
    out.transform = OutputTransform{total, total.inverse().transpose()};
    return out;
}

double transformed_epsilon(double epsilon, const Eigen::MatrixXd& T) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T.transpose() * T);
    return epsilon / es.eigenvalues().maxCoeff();
}

}  // namespace nisynth
