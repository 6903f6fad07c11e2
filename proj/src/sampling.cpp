#include "nisynth/sampling.hpp"

#include <algorithm>
#include <cmath>

namespace nisynth {

void PointSet::push_back(std::span<const double> p) {
    if (dim == 0 && data.empty()) dim = p.size();
    data.insert(data.end(), p.begin(), p.end());
}

PointSet sample_box(const Box& box, std::size_t n, std::uint64_t seed) {
    PointSet points;
    points.dim = box.dim();
    points.data.resize(n * box.dim());
    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t d = 0; d < box.dim(); ++d) {
            points.data[i * box.dim() + d] = rng.uniform(box.lo[d], box.hi[d]);
        }
    }
    return points;
}

namespace kernels {

namespace {

double coordinate_scale(std::span<const double> p) {
    double s = 0.0;
    for (double v : p) s = std::max(s, std::abs(v));
    return s;
}

}  // namespace

BatchResult evaluate_batch_serial(const CompiledExpr& e, const PointSet& points) {
    const std::size_t n = points.size();
    BatchResult out{std::vector<double>(n, 0.0), std::vector<unsigned char>(n, 0)};
    for (std::size_t i = 0; i < n; ++i) {
        try {
            out.values[i] = e(points[i]);
        } catch (const EvalError&) {
            out.failed[i] = 1;
        }
    }
    return out;
}

BatchResult evaluate_batch(const CompiledExpr& e, const PointSet& points) {
    const auto n = static_cast<std::ptrdiff_t>(points.size());
    BatchResult out{std::vector<double>(points.size(), 0.0),
                    std::vector<unsigned char>(points.size(), 0)};
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const auto k = static_cast<std::size_t>(i);
        try {
            out.values[k] = e(points[k]);
        } catch (const EvalError&) {
            out.failed[k] = 1;
        }
    }
    return out;
}

namespace {

ZeroScan reduce_zero(const BatchResult& batch, const PointSet& points, double tol) {
    ZeroScan scan{npos, {}};
    for (std::size_t i = 0; i < batch.values.size(); ++i) {
        if (batch.failed[i]) {
            scan.failed.push_back(i);
            continue;
        }
        const double bound = tol * (1.0 + coordinate_scale(points[i]));
        if (!(std::abs(batch.values[i]) <= bound) && scan.first_nonzero == npos) scan.first_nonzero = i;
    }
    return scan;
}

SignScan reduce_sign(const BatchResult& batch, bool strict) {
    SignScan scan{npos, {}};
    for (std::size_t i = 0; i < batch.values.size(); ++i) {
        if (batch.failed[i]) {
            scan.failed.push_back(i);
            continue;
        }
        const double v = batch.values[i];
        const bool ok = strict ? v > 0.0 : v >= 0.0;
        if (!ok && scan.first_violation == npos) scan.first_violation = i;
    }
    return scan;
}

}  // namespace

ZeroScan scan_nonzero_serial(const CompiledExpr& e, const PointSet& points, double tol) {
    return reduce_zero(evaluate_batch_serial(e, points), points, tol);
}

ZeroScan scan_nonzero(const CompiledExpr& e, const PointSet& points, double tol) {
    return reduce_zero(evaluate_batch(e, points), points, tol);
}

SignScan scan_sign_serial(const CompiledExpr& e, const PointSet& points, bool strict) {
    return reduce_sign(evaluate_batch_serial(e, points), strict);
}

SignScan scan_sign(const CompiledExpr& e, const PointSet& points, bool strict) {
    return reduce_sign(evaluate_batch(e, points), strict);
}

}  // namespace kernels

}  // namespace nisynth
