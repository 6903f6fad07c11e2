#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "nisynth/expr.hpp"

namespace nisynth {

// Reproducible uniform draws; the mapping from the 64-bit engine output to
// [0, 1) is fixed here so samples do not depend on the standard library's
// distribution implementation.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    std::uint64_t next() { return engine_(); }

private:
    std::mt19937_64 engine_;
};

// Row-major set of sample points.
struct PointSet {
    std::size_t dim = 0;
    std::vector<double> data;

    std::size_t size() const { return dim == 0 ? 0 : data.size() / dim; }
    std::span<const double> operator[](std::size_t i) const { return {data.data() + i * dim, dim}; }
    std::span<double> operator[](std::size_t i) { return {data.data() + i * dim, dim}; }
    void push_back(std::span<const double> p);
};

PointSet sample_box(const Box& box, std::size_t n, std::uint64_t seed);

namespace kernels {

struct BatchResult {
    std::vector<double> values;
    std::vector<unsigned char> failed;  // 1 where evaluation raised a domain error
};

// Evaluate one compiled expression at every point. The parallel version
// writes per-index results, so it matches the serial reference exactly.
BatchResult evaluate_batch_serial(const CompiledExpr& e, const PointSet& points);
BatchResult evaluate_batch(const CompiledExpr& e, const PointSet& points);

// Index of the first point where |e| > tol * (1 + max|coord|), or npos.
struct ZeroScan {
    std::size_t first_nonzero;
    std::vector<std::size_t> failed;
};
inline constexpr std::size_t npos = static_cast<std::size_t>(-1);
ZeroScan scan_nonzero_serial(const CompiledExpr& e, const PointSet& points, double tol);
ZeroScan scan_nonzero(const CompiledExpr& e, const PointSet& points, double tol);

// Index of the first point violating e > 0 (strict) or e >= 0.
struct SignScan {
    std::size_t first_violation;
    std::vector<std::size_t> failed;
};
SignScan scan_sign_serial(const CompiledExpr& e, const PointSet& points, bool strict);
SignScan scan_sign(const CompiledExpr& e, const PointSet& points, bool strict);

}  // namespace kernels

}  // namespace nisynth
