#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "nisynth/system.hpp"

namespace nisynth {

// Sampling semidecision settings shared by the structural checks.
struct SamplingConfig {
    double radius = 0.5;        // neighbourhood of x0 for relative_degree
    std::size_t samples = 50;
    std::uint64_t seed = 20240101;
    double zero_tol = 1e-9;
    double det_tol = 1e-9;
    double rank_tol = 1e-8;     // relative to the largest singular value
    Box box;                    // analysis domain; empty means symmetric half-width 1
    bool parallel = true;       // false runs the serial reference loops

    Box domain(std::size_t n) const;
};

class StructureError : public std::runtime_error {
public:
    enum class Kind { RelativeDegreeUndefined, SingularDecoupling };
    StructureError(Kind kind, const std::string& what, std::optional<std::size_t> output = std::nullopt)
        : std::runtime_error(what), kind_(kind), output_(output) {}
    Kind kind() const { return kind_; }
    std::optional<std::size_t> output() const { return output_; }

private:
    Kind kind_;
    std::optional<std::size_t> output_;
};

RelativeDegreeProfile relative_degree(const AffineSystem& sys, const std::vector<double>& x0,
                                      const SamplingConfig& opts);

enum class Status { Pass, Fail, NotChecked, Assumed };
const char* to_string(Status s);

struct Witness {
    std::vector<double> point;
    std::optional<std::pair<std::size_t, std::size_t>> pair;
    std::string detail;
};

struct Verdict {
    Status status = Status::NotChecked;
    std::optional<Witness> witness;
    std::string note;

    bool pass() const { return status == Status::Pass; }
};

Verdict check_involutive(const AffineSystem& sys, const SamplingConfig& opts);

struct StructureReport {
    Verdict involutive;
    Verdict h1;
    Verdict h2;  // always Assumed
    Verdict h3;
    Box box;
    std::uint64_t seed = 0;
    std::size_t samples = 0;
};

// H1: uniform relative degree on the sampled box; H3: commuting g~ columns.
StructureReport check_H1_H3(const AffineSystem& sys, const RelativeDegreeProfile& profile,
                            const SamplingConfig& opts);

// Relative degree at the origin, involutivity and H1-H3 together.
struct StructureAnalysis {
    RelativeDegreeProfile profile;
    StructureReport report;
};
StructureAnalysis analyze_structure(const AffineSystem& sys, const SamplingConfig& opts);

// y~ = T y with the companion input map u~ = T^{-T} u recorded on the result.
AffineSystem output_transform(const AffineSystem& sys, const Eigen::MatrixXd& T);

// Output-strictness bound carried through an output transformation.
double transformed_epsilon(double epsilon, const Eigen::MatrixXd& T);

// Numeric rank with singular values below rel_tol * sigma_max treated as zero.
std::size_t numeric_rank(const Eigen::MatrixXd& m, double rel_tol);

}  // namespace nisynth
