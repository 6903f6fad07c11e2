#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nisynth/structure.hpp"
#include "nisynth/system.hpp"

namespace nisynth {

/// V1 over the r = 1 output names, V2 over the r = 2 output names, and the damping lambda.
/// Unset storage functions default to half the squared norm.
struct StorageSpec {
    std::optional<Expr> V1;
    std::optional<Expr> V2;
    double lambda = 1.0;
};

struct ScreenConfig {
    double half_width = 3.0;
    std::size_t samples = 2000;
    std::uint64_t seed = 20240101;
    bool parallel = true;
};

enum class Definiteness { Semidefinite, Definite };

struct ScreenResult {
    bool pass = false;
    std::optional<std::vector<double>> witness;
    std::optional<double> value_at_witness;
    std::string note;
    std::size_t skipped = 0;
    std::size_t checked = 0;
};

// Sampled positivity screen: e(0) = 0, then a shrinking-radius sweep (radii 1, 0.1, 0.01
// of the box) and n uniform samples. Sound for rejection, heuristic for acceptance.
ScreenResult screen_positive_definite(const Expr& e, const std::vector<std::string>& vars, const Box& box,
                                      std::size_t n, Definiteness mode, std::uint64_t seed = 20240101,
                                      bool parallel = true);

class SynthesisError : public std::runtime_error {
public:
    SynthesisError(const std::string& what, std::optional<std::vector<double>> witness = std::nullopt)
        : std::runtime_error(what), witness_(std::move(witness)) {}
    const std::optional<std::vector<double>>& witness() const { return witness_; }

private:
    std::optional<std::vector<double>> witness_;
};

/// Uncertainty  x_c' = f_c(x_c, u_c),  y_c = h_c(x_c)  with storage function V_c.
struct UncertaintyModel {
    std::vector<std::string> states;
    std::vector<std::string> inputs;
    std::vector<Expr> f;
    std::vector<Expr> h;
    Expr V;

    std::size_t n() const { return states.size(); }
    std::size_t p() const { return h.size(); }
};

// Checks f_c(0,0) = 0, h_c(0) = 0, V_c(0) = 0 and V_c >= 0 on samples.
UncertaintyModel make_uncertainty(std::vector<std::string> states, std::vector<std::string> inputs,
                                  std::vector<Expr> f, std::vector<Expr> h, Expr V,
                                  const ScreenConfig& screen = {});

enum class LawKind { RenderNI, Stabilize, Robust };
const char* to_string(LawKind k);

class CompiledLaw;

struct FeedbackLaw {
    LawKind kind = LawKind::Stabilize;
    std::vector<std::string> states;
    std::vector<std::string> aux;  // v_i (render-NI), w_i (robust), empty (stabilize)
    // Symbolic law when A(x)^{-1} is available in closed form.
    std::vector<Expr> u;
    // Otherwise u solves A(x) u = rhs pointwise.
    bool pointwise = false;
    ExprMatrix A;
    std::vector<Expr> rhs;

    RelativeDegreeProfile profile;
    Expr V1;  // resolved storage functions over the output names
    Expr V2;
    double lambda = 0.0;
    double epsilon = 0.0;
    // Set by lift_through_transform: the law is driven by v~ with v = T^T v~ and y~ = T y.
    std::optional<Eigen::MatrixXd> lifted_by;

    std::size_t p() const { return profile.r.size(); }
    std::vector<std::string> printed() const;
    CompiledLaw compile() const;
};

/// Evaluates a law on [states..., aux...] slots.
class CompiledLaw {
public:
    explicit CompiledLaw(const FeedbackLaw& law);
    void operator()(std::span<const double> x, std::span<const double> aux, std::span<double> u) const;

private:
    std::size_t n_ = 0;
    std::size_t p_ = 0;
    bool pointwise_ = false;
    std::vector<CompiledExpr> u_;
    std::vector<CompiledExpr> a_;
    std::vector<CompiledExpr> rhs_;
};

FeedbackLaw render_ni(const AffineSystem& sys, const RelativeDegreeProfile& profile, const StorageSpec& spec,
                      const ScreenConfig& screen = {});
FeedbackLaw stabilizing_law(const AffineSystem& sys, const RelativeDegreeProfile& profile, const StorageSpec& spec,
                            const ScreenConfig& screen = {});
FeedbackLaw robust_law(const AffineSystem& sys, const RelativeDegreeProfile& profile, const StorageSpec& spec,
                       const ScreenConfig& screen = {});

// Rewrites a render-NI law for the output y~ = T y by feeding v = T^T v~.
FeedbackLaw lift_through_transform(const FeedbackLaw& law, const Eigen::MatrixXd& T);

// V1 and V2 resolved against the profile (defaults filled in).
Expr resolved_V1(const RelativeDegreeProfile& profile, const StorageSpec& spec);
Expr resolved_V2(const RelativeDegreeProfile& profile, const StorageSpec& spec);

// Outputs in the original order, as expressions in x.
std::vector<Expr> outputs_in_original_order(const RelativeDegreeProfile& profile);

// V = V1(xi1) + V2(xi2) + 1/2 xi3' xi3 as a function of the plant state.
Expr storage_V(const RelativeDegreeProfile& profile, const StorageSpec& spec);

// W = V + V_c(x_c) - h_c(x_c)' y over plant and uncertainty states.
Expr storage_W(const RelativeDegreeProfile& profile, const StorageSpec& spec, const UncertaintyModel& unc);

// W written over the output coordinates (xi1, xi2 names, xi3 as "<name>_dot") and the
// uncertainty states; positive definiteness is screened in these coordinates.
struct NormalFormStorage {
    Expr W;
    std::vector<std::string> vars;
};
NormalFormStorage storage_W_normal_form(const RelativeDegreeProfile& profile, const StorageSpec& spec,
                                        const UncertaintyModel& unc);

}  // namespace nisynth
