#pragma once

#include <optional>
#include <string>
#include <vector>

#include "nisynth/expr.hpp"

namespace nisynth {

/// A vector field on a named state space: components[i] is the i-th entry.
struct VectorField {
    std::vector<std::string> vars;
    std::vector<Expr> components;

    std::size_t dim() const { return components.size(); }
};

/// Dense rectangular matrix of expressions, row-major.
class ExprMatrix {
public:
    ExprMatrix() = default;
    ExprMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols) {}

    static ExprMatrix identity(std::size_t n);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    Expr& operator()(std::size_t i, std::size_t j) { return data_.at(i * cols_ + j); }
    const Expr& operator()(std::size_t i, std::size_t j) const { return data_.at(i * cols_ + j); }

    std::vector<Expr> row(std::size_t i) const;
    std::vector<Expr> column(std::size_t j) const;
    bool all_constant() const;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<Expr> data_;
};

Expr lie_derivative(const Expr& h, const VectorField& f);
Expr lie_derivative_iter(const Expr& h, const VectorField& f, std::size_t k);
ExprMatrix jacobian(const VectorField& f);
VectorField lie_bracket(const VectorField& f, const VectorField& g);
VectorField ad_iter(const VectorField& f, const VectorField& g, std::size_t k);

// Folded matrix-vector product and sums over expressions.
std::vector<Expr> multiply(const ExprMatrix& m, const std::vector<Expr>& v);
ExprMatrix multiply(const ExprMatrix& a, const ExprMatrix& b);
Expr dot(const std::vector<Expr>& a, const std::vector<Expr>& b);
Expr sum(const std::vector<Expr>& terms);

// Gradient of a scalar with respect to the listed variables, folded.
std::vector<Expr> gradient(const Expr& e, const std::vector<std::string>& vars);

// Symbolic determinant by cofactor expansion (intended for p <= 4).
Expr determinant(const ExprMatrix& m);

// Inverse of a square matrix: exact LU for constant matrices, adjugate/determinant
// for symbolic matrices up to 4x4. Returns nullopt when neither applies or the
// constant matrix is singular.
std::optional<ExprMatrix> symbolic_inverse(const ExprMatrix& m);

struct AffineSystem;
struct RelativeDegreeProfile;

/// Feedback-modified fields: f~ = f - g A^{-1} [L_f^{r_i} h_i] and g~ = g A^{-1}.
struct TildeFields {
    VectorField f_tilde;
    ExprMatrix g_tilde;
};

class UnsupportedError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Throws UnsupportedError when A(x) is neither constant nor small enough for a symbolic inverse.
TildeFields tilde_fields(const AffineSystem& sys, const RelativeDegreeProfile& profile);

}  // namespace nisynth
