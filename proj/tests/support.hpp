#pragma once

#include <cmath>
#include <initializer_list>

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "nisynth/calculus.hpp"
#include "nisynth/expr.hpp"
#include "nisynth/sampling.hpp"
#include "nisynth/synthesis.hpp"
#include "nisynth/system.hpp"

namespace nisynth::testing {

inline Assignment assign(const std::vector<std::string>& vars, const std::vector<double>& values) {
    Assignment a;
    for (std::size_t i = 0; i < vars.size(); ++i) a[vars[i]] = values[i];
    return a;
}

// Central difference of e with respect to vars[k].
inline double central_difference(const Expr& e, const std::vector<std::string>& vars, std::vector<double> point,
                                 std::size_t k, double h = 1e-5) {
    const double x = point[k];
    point[k] = x + h;
    const double up = eval(e, assign(vars, point));
    point[k] = x - h;
    const double down = eval(e, assign(vars, point));
    return (up - down) / (2.0 * h);
}

// Smooth random expression over vars: no division, cbrt only of expressions kept away from 0.
inline Expr random_smooth_expr(Rng& rng, const std::vector<std::string>& vars, int depth) {
    const auto pick = [&](std::size_t n) { return static_cast<std::size_t>(rng.uniform() * static_cast<double>(n)) % n; };
    if (depth <= 0 || rng.uniform() < 0.2) {
        if (rng.uniform() < 0.3) return Expr::constant(std::round(rng.uniform(-3.0, 3.0) * 4.0) / 4.0);
        return Expr::variable(vars[pick(vars.size())]);
    }
    const Expr a = random_smooth_expr(rng, vars, depth - 1);
    switch (pick(9)) {
        case 0:
            return a + random_smooth_expr(rng, vars, depth - 1);
        case 1:
            return a - random_smooth_expr(rng, vars, depth - 1);
        case 2:
            return a * random_smooth_expr(rng, vars, depth - 1);
        case 3:
            return pow(a, 2 + static_cast<int>(pick(2)));
        case 4:
            return sin(a);
        case 5:
            return cos(a);
        case 6:
            return exp(Expr::constant(0.25) * sin(a));
        case 7:
            return -a;
        default:
            // shifted away from the cube root's singular derivative
            return cbrt(Expr::constant(2.5) + sin(a));
    }
}

// Any-grammar expression including division, for fold equivalence checks.
inline Expr random_expr(Rng& rng, const std::vector<std::string>& vars, int depth) {
    const auto pick = [&](std::size_t n) { return static_cast<std::size_t>(rng.uniform() * static_cast<double>(n)) % n; };
    if (depth <= 0 || rng.uniform() < 0.2) {
        const double r = rng.uniform();
        if (r < 0.15) return Expr::constant(0.0);
        if (r < 0.25) return Expr::constant(1.0);
        if (r < 0.4) return Expr::constant(std::round(rng.uniform(-4.0, 4.0) * 2.0) / 2.0);
        return Expr::variable(vars[pick(vars.size())]);
    }
    const Expr a = random_expr(rng, vars, depth - 1);
    switch (pick(12)) {
        case 0:
            return make_binary(Op::Add, a, random_expr(rng, vars, depth - 1));
        case 1:
            return make_binary(Op::Sub, a, random_expr(rng, vars, depth - 1));
        case 2:
            return make_binary(Op::Mul, a, random_expr(rng, vars, depth - 1));
        case 3:
            return make_binary(Op::Div, a, random_expr(rng, vars, depth - 1));
        case 4:
            return make_intpow(a, static_cast<int>(pick(5)) - 1);
        case 5:
            return make_unary(Op::Neg, a);
        case 6:
            return make_unary(Op::Sin, a);
        case 7:
            return make_unary(Op::Cos, a);
        case 8:
            return make_unary(Op::Exp, make_unary(Op::Sin, a));
        case 9:
            return make_unary(Op::Cbrt, a);
        case 10:
            return make_binary(Op::Mul, Expr::constant(0.0), a);
        default:
            return make_binary(Op::Add, a, Expr::constant(0.0));
    }
}

// Random polynomial in vars with small integer coefficients.
inline Expr random_polynomial(Rng& rng, const std::vector<std::string>& vars, int terms, int max_degree) {
    std::vector<Expr> parts;
    for (int t = 0; t < terms; ++t) {
        Expr term = Expr::constant(std::round(rng.uniform(-3.0, 3.0)));
        for (const auto& v : vars) {
            const int d = static_cast<int>(rng.uniform() * (max_degree + 1)) % (max_degree + 1);
            if (d > 0 && rng.uniform() < 0.5) term = term * pow(Expr::variable(v), d);
        }
        parts.push_back(term);
    }
    return fold(sum(parts));
}

inline double rel_err(double a, double b) { return std::abs(a - b) / (1.0 + std::abs(b)); }

inline std::vector<Expr> parse_all(std::initializer_list<const char*> items) {
    std::vector<Expr> out;
    for (const char* s : items) out.push_back(parse(s));
    return out;
}

inline ExprMatrix constant_matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values) {
    ExprMatrix m(rows, cols);
    auto it = values.begin();
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) m(i, j) = Expr::constant(*it++);
    return m;
}

// Normal-form example plant with outputs named y1, y2.
inline AffineSystem example_plant() {
    return make_system({"z", "xi1", "xi2", "xi3"},
                       parse_all({"-z - z^3 + xi1^2", "sin(z)", "xi3", "xi1 + xi2^2 + xi3"}),
                       constant_matrix(4, 2, {0, 0, 1, 0, 0, 0, 0, 1}), parse_all({"xi1", "xi2"}), {"y1", "y2"});
}

inline UncertaintyModel example_uncertainty() {
    return make_uncertainty({"xc1", "xc2"}, {"uc1", "uc2"}, parse_all({"-xc1 + uc1", "-xc2^3 + uc2"}),
                            parse_all({"xc1", "xc2"}), parse("0.5*xc1^2 + 0.25*xc2^4"));
}

inline StorageSpec example_spec() { return {parse("y1^2"), parse("cbrt(y2)^4"), 1.0}; }

// Hand-written closed form of the example's stabilizing law at x = (z, xi1, xi2, xi3).
inline std::vector<double> example_law(const std::vector<double>& x) {
    return {-(std::sin(x[0]) + 2.0 * x[1]), -(x[1] + x[2] * x[2] + 4.0 / 3.0 * std::cbrt(x[2]) + 2.0 * x[3])};
}

inline std::vector<double> law_at(const FeedbackLaw& law, const std::vector<double>& x,
                                  const std::vector<double>& aux = {}) {
    std::vector<double> a = aux;
    a.resize(law.aux.size(), 0.0);
    std::vector<double> u(law.p());
    law.compile()(x, a, u);
    return u;
}

// Linear system x' = F x + G u, y = H x whose outputs have prescribed relative degrees,
// written in canonical coordinates and then mixed by a unimodular integer change of basis.
struct LinearCase {
    Eigen::MatrixXd F, G, H;
    std::vector<int> r;  // by construction, original output order
};

inline Eigen::MatrixXd unimodular(Rng& rng, int n, Eigen::MatrixXd* inverse) {
    Eigen::MatrixXd P = Eigen::MatrixXd::Identity(n, n);
    Eigen::MatrixXd Pinv = Eigen::MatrixXd::Identity(n, n);
    const auto pick = [&](int m) { return static_cast<int>(rng.uniform() * m) % m; };
    for (int k = 0; k < 2 * n; ++k) {
        const int i = pick(n);
        const int j = pick(n);
        if (i == j) continue;
        const double c = rng.uniform() < 0.5 ? -1.0 : 1.0;
        // row_i += c row_j; its inverse subtracts
        Eigen::MatrixXd E = Eigen::MatrixXd::Identity(n, n);
        E(i, j) = c;
        Eigen::MatrixXd Einv = Eigen::MatrixXd::Identity(n, n);
        Einv(i, j) = -c;
        P = E * P;
        Pinv = Pinv * Einv;
    }
    *inverse = Pinv;
    return P;
}

inline LinearCase random_linear_case(Rng& rng) {
    const auto pick = [&](int m) { return static_cast<int>(rng.uniform() * m) % m; };
    const auto coeff = [&] { return static_cast<double>(pick(3) - 1); };
    for (;;) {
        const int p = 1 + pick(3);
        std::vector<int> r(p);
        int used = 0;
        for (int i = 0; i < p; ++i) {
            r[i] = 1 + pick(2);
            used += r[i];
        }
        if (used > 6) continue;
        const int n = used + pick(6 - used + 1);
        if (n < 1) continue;
        Eigen::MatrixXd F = Eigen::MatrixXd::Zero(n, n), G = Eigen::MatrixXd::Zero(n, p), H = Eigen::MatrixXd::Zero(p, n);
        std::vector<int> out_state(p), in_state(p);
        int next = 0;
        for (int i = 0; i < p; ++i) {
            if (r[i] == 2) out_state[i] = next++;
            in_state[i] = next++;
            if (r[i] == 1) out_state[i] = in_state[i];
        }
        std::vector<bool> is_input(n, false);
        for (int i = 0; i < p; ++i) is_input[in_state[i]] = true;
        for (int i = 0; i < p; ++i) G(in_state[i], i) = 1.0;
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b) F(a, b) = coeff();
        for (int i = 0; i < p; ++i) {
            H(i, out_state[i]) = 1.0;
            for (int b = 0; b < n; ++b)
                if (!is_input[b] && b != out_state[i] && pick(2) == 0) H(i, b) = coeff();
            if (r[i] == 2) F(out_state[i], in_state[i]) = 1.0 + pick(2);
        }
        Eigen::MatrixXd Pinv;
        const Eigen::MatrixXd P = unimodular(rng, n, &Pinv);
        LinearCase c{P * F * Pinv, P * G, H * Pinv, r};
        // keep cases with a nonsingular decoupling matrix
        Eigen::MatrixXd A(p, p);
        for (int i = 0; i < p; ++i) A.row(i) = r[i] == 1 ? (c.H.row(i) * c.G).eval() : (c.H.row(i) * c.F * c.G).eval();
        if (std::abs(A.determinant()) > 0.5) return c;
    }
}

inline AffineSystem to_system(const LinearCase& c) {
    const auto n = static_cast<std::size_t>(c.F.rows());
    const auto p = static_cast<std::size_t>(c.G.cols());
    const auto names = default_names("x", n);
    const auto lin = [&](const Eigen::RowVectorXd& row) {
        std::vector<Expr> terms;
        for (std::size_t k = 0; k < n; ++k)
            if (row(k) != 0.0) terms.push_back(Expr::constant(row(k)) * Expr::variable(names[k]));
        return fold(sum(terms));
    };
    std::vector<Expr> f, h;
    for (std::size_t i = 0; i < n; ++i) f.push_back(lin(c.F.row(i)));
    for (std::size_t i = 0; i < p; ++i) h.push_back(lin(c.H.row(i)));
    ExprMatrix g(n, p);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < p; ++j) g(i, j) = Expr::constant(c.G(i, j));
    return make_system(names, f, g, h);
}

}  // namespace nisynth::testing
