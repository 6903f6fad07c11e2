#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nisynth/calculus.hpp"

namespace nisynth {

class ModelError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Constant output map y~ = T y and the companion input map u~ = T^{-T} u.
struct OutputTransform {
    Eigen::MatrixXd T;
    Eigen::MatrixXd T_inv_transpose;
};

/// Control-affine plant  x' = f(x) + g(x) u,  y = h(x).
struct AffineSystem {
    std::vector<std::string> states;
    VectorField f;
    ExprMatrix g;  // n x p
    std::vector<Expr> h;
    // Names the storage functions V1, V2 use for each output (original order).
    std::vector<std::string> output_names;
    std::vector<double> equilibrium;  // in the user's original coordinates
    std::optional<OutputTransform> transform;

    std::size_t n() const { return states.size(); }
    std::size_t p() const { return h.size(); }
    VectorField input_column(std::size_t j) const;
};

// Validates dimensions, variable scoping and f(x_eq) = 0, h(x_eq) = 0 (tol 1e-9).
// A nonzero equilibrium is moved to the origin by substituting x -> x + x_eq.
AffineSystem make_system(std::vector<std::string> states, std::vector<Expr> f, ExprMatrix g,
                         std::vector<Expr> h, std::vector<std::string> output_names = {},
                         std::vector<double> equilibrium = {});

std::vector<std::string> default_names(const std::string& prefix, std::size_t count);

/// Vector relative degree data with outputs sorted so r = 1 precedes r = 2.
struct RelativeDegreeProfile {
    std::vector<int> r;               // sorted order
    std::vector<std::size_t> order;   // order[k] = original index of sorted output k
    std::size_t p1 = 0;
    std::size_t p2 = 0;
    ExprMatrix A;                     // rows L_g L_f^{r_k - 1} h_k, sorted
    std::vector<Expr> drift;          // L_f^{r_k} h_k, sorted
    std::vector<Expr> xi1, xi2, xi3;  // coordinate expressions in x
    std::vector<std::string> xi1_names, xi2_names;
    double det_at_x0 = 0.0;

    // Relative degree of each output in the user's original order.
    std::vector<int> r_original() const;
};

}  // namespace nisynth
