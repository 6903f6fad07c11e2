#include "nisynth/calculus.hpp"

#include <Eigen/Dense>

#include "nisynth/system.hpp"

namespace nisynth {

ExprMatrix ExprMatrix::identity(std::size_t n) {
    ExprMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = Expr::constant(1.0);
    return m;
}

std::vector<Expr> ExprMatrix::row(std::size_t i) const {
    std::vector<Expr> out;
    for (std::size_t j = 0; j < cols_; ++j) out.push_back((*this)(i, j));
    return out;
}

std::vector<Expr> ExprMatrix::column(std::size_t j) const {
    std::vector<Expr> out;
    for (std::size_t i = 0; i < rows_; ++i) out.push_back((*this)(i, j));
    return out;
}

bool ExprMatrix::all_constant() const {
    for (const Expr& e : data_)
        if (!fold(e).is_constant()) return false;
    return true;
}

Expr sum(const std::vector<Expr>& terms) {
    std::optional<Expr> acc;
    for (const Expr& t : terms) {
        Expr ft = fold(t);
        if (ft.is_constant(0.0)) continue;
        acc = acc ? fold(*acc + ft) : ft;
    }
    return acc ? *acc : Expr::constant(0.0);
}

Expr dot(const std::vector<Expr>& a, const std::vector<Expr>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("dot: size mismatch");
    std::vector<Expr> terms;
    for (std::size_t i = 0; i < a.size(); ++i) terms.push_back(fold(a[i] * b[i]));
    return sum(terms);
}

std::vector<Expr> gradient(const Expr& e, const std::vector<std::string>& vars) {
    std::vector<Expr> out;
    out.reserve(vars.size());
    for (const auto& v : vars) out.push_back(diff(e, v));
    return out;
}

Expr lie_derivative(const Expr& h, const VectorField& f) {
    if (f.vars.size() != f.components.size()) throw std::invalid_argument("vector field is not square");
    return dot(gradient(h, f.vars), f.components);
}

Expr lie_derivative_iter(const Expr& h, const VectorField& f, std::size_t k) {
    Expr out = h;
    for (std::size_t i = 0; i < k; ++i) out = lie_derivative(out, f);
    return out;
}

ExprMatrix jacobian(const VectorField& f) {
    ExprMatrix J(f.dim(), f.vars.size());
    for (std::size_t i = 0; i < f.dim(); ++i)
        for (std::size_t j = 0; j < f.vars.size(); ++j) J(i, j) = diff(f.components[i], f.vars[j]);
    return J;
}

VectorField lie_bracket(const VectorField& f, const VectorField& g) {
    if (f.vars != g.vars || f.dim() != g.dim()) throw std::invalid_argument("lie_bracket: fields live on different spaces");
    VectorField out{f.vars, {}};
    for (std::size_t i = 0; i < f.dim(); ++i)
        out.components.push_back(fold(lie_derivative(g.components[i], f) - lie_derivative(f.components[i], g)));
    return out;
}

VectorField ad_iter(const VectorField& f, const VectorField& g, std::size_t k) {
    VectorField out = g;
    for (std::size_t i = 0; i < k; ++i) out = lie_bracket(f, out);
    return out;
}

std::vector<Expr> multiply(const ExprMatrix& m, const std::vector<Expr>& v) {
    if (m.cols() != v.size()) throw std::invalid_argument("multiply: size mismatch");
    std::vector<Expr> out;
    for (std::size_t i = 0; i < m.rows(); ++i) out.push_back(dot(m.row(i), v));
    return out;
}

ExprMatrix multiply(const ExprMatrix& a, const ExprMatrix& b) {
    if (a.cols() != b.rows()) throw std::invalid_argument("multiply: size mismatch");
    ExprMatrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) = dot(a.row(i), b.column(j));
    return out;
}

namespace {

ExprMatrix minor_of(const ExprMatrix& m, std::size_t skip_row, std::size_t skip_col) {
    ExprMatrix out(m.rows() - 1, m.cols() - 1);
    for (std::size_t i = 0, oi = 0; i < m.rows(); ++i) {
        if (i == skip_row) continue;
        for (std::size_t j = 0, oj = 0; j < m.cols(); ++j) {
            if (j == skip_col) continue;
            out(oi, oj++) = m(i, j);
        }
        ++oi;
    }
    return out;
}

}  // namespace

Expr determinant(const ExprMatrix& m) {
    if (m.rows() != m.cols()) throw std::invalid_argument("determinant of a non-square matrix");
    if (m.rows() == 0) return Expr::constant(1.0);
    if (m.rows() == 1) return fold(m(0, 0));
    if (m.rows() == 2) return fold(m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0));
    std::vector<Expr> terms;
    for (std::size_t j = 0; j < m.cols(); ++j) {
        Expr a = fold(m(0, j));
        if (a.is_constant(0.0)) continue;
        Expr cof = fold(a * determinant(minor_of(m, 0, j)));
        terms.push_back(j % 2 == 0 ? cof : fold(-cof));
    }
    return sum(terms);
}

std::optional<ExprMatrix> symbolic_inverse(const ExprMatrix& m) {
    if (m.rows() != m.cols()) return std::nullopt;
    const std::size_t n = m.rows();
    if (m.all_constant()) {
        Eigen::MatrixXd a(n, n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) a(i, j) = fold(m(i, j)).constant_value();
        Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
        if (!lu.isInvertible()) return std::nullopt;
        const Eigen::MatrixXd inv = lu.inverse();
        ExprMatrix out(n, n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                // Snap round-off so that e.g. the identity inverts to exactly the identity.
                const double v = inv(i, j);
                const double r = std::round(v);
                out(i, j) = Expr::constant(std::abs(v - r) <= 1e-14 * std::max(1.0, std::abs(v)) ? r : v);
            }
        return out;
    }
    if (n > 4) return std::nullopt;
    const Expr det = determinant(m);
    if (det.is_constant(0.0)) return std::nullopt;
    ExprMatrix out(n, n);
    if (n == 1) {
        out(0, 0) = fold(Expr::constant(1.0) / det);
        return out;
    }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            Expr cof = determinant(minor_of(m, j, i));
            if ((i + j) % 2 == 1) cof = fold(-cof);
            out(i, j) = cof.is_constant(0.0) ? Expr::constant(0.0) : fold(cof / det);
        }
    return out;
}

TildeFields tilde_fields(const AffineSystem& sys, const RelativeDegreeProfile& profile) {
    auto inv = symbolic_inverse(profile.A);
    if (!inv)
        throw UnsupportedError("A(x) has no symbolic inverse (neither constant nor at most 4x4 with nonzero determinant)");
    TildeFields out;
    out.g_tilde = multiply(sys.g, *inv);
    const std::vector<Expr> correction = multiply(out.g_tilde, profile.drift);
    out.f_tilde.vars = sys.states;
    for (std::size_t i = 0; i < sys.n(); ++i)
        out.f_tilde.components.push_back(fold(sys.f.components[i] - correction[i]));
    return out;
}

}  // namespace nisynth
