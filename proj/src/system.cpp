#include "nisynth/system.hpp"

#include <cmath>
#include <set>

namespace nisynth {

std::vector<std::string> default_names(const std::string& prefix, std::size_t count) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < count; ++i) out.push_back(prefix + std::to_string(i + 1));
    return out;
}

VectorField AffineSystem::input_column(std::size_t j) const { return VectorField{states, g.column(j)}; }

std::vector<int> RelativeDegreeProfile::r_original() const {
    std::vector<int> out(r.size());
    for (std::size_t k = 0; k < r.size(); ++k) out[order[k]] = r[k];
    return out;
}

namespace {

void require_scope(const Expr& e, const std::set<std::string, std::less<>>& allowed, const std::string& where) {
    for (const auto& v : free_variables(e))
        if (!allowed.contains(v)) throw ModelError(where + " uses undeclared variable '" + v + "'");
}

}  // namespace

AffineSystem make_system(std::vector<std::string> states, std::vector<Expr> f, ExprMatrix g, std::vector<Expr> h,
                         std::vector<std::string> output_names, std::vector<double> equilibrium) {
    const std::size_t n = states.size();
    const std::size_t p = h.size();
    if (n == 0) throw ModelError("plant has no states");
    if (p == 0) throw ModelError("plant has no outputs");
    if (f.size() != n) throw ModelError("drift has " + std::to_string(f.size()) + " entries, expected " + std::to_string(n));
    if (g.rows() != n || g.cols() != p)
        throw ModelError("input matrix must be " + std::to_string(n) + "x" + std::to_string(p));
    std::set<std::string, std::less<>> scope(states.begin(), states.end());
    if (scope.size() != n) throw ModelError("duplicate state name");
    for (std::size_t i = 0; i < n; ++i) require_scope(f[i], scope, "f[" + std::to_string(i + 1) + "]");
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < p; ++j)
            require_scope(g(i, j), scope, "g[" + std::to_string(i + 1) + "," + std::to_string(j + 1) + "]");
    for (std::size_t i = 0; i < p; ++i) require_scope(h[i], scope, "h[" + std::to_string(i + 1) + "]");

    if (output_names.empty()) output_names = default_names("y", p);
    if (output_names.size() != p) throw ModelError("output name count does not match output count");
    if (std::set<std::string>(output_names.begin(), output_names.end()).size() != p)
        throw ModelError("duplicate output name");

    if (equilibrium.empty()) equilibrium.assign(n, 0.0);
    if (equilibrium.size() != n) throw ModelError("equilibrium has the wrong dimension");

    Assignment at_eq;
    for (std::size_t i = 0; i < n; ++i) at_eq[states[i]] = equilibrium[i];
    for (std::size_t i = 0; i < n; ++i) {
        const double v = eval(f[i], at_eq);
        if (!(std::abs(v) <= 1e-9))
            throw ModelError("f(x_eq) is not zero in component " + std::to_string(i + 1) + " (" + std::to_string(v) + ")");
    }
    for (std::size_t i = 0; i < p; ++i) {
        const double v = eval(h[i], at_eq);
        if (!(std::abs(v) <= 1e-9))
            throw ModelError("h(x_eq) is not zero in component " + std::to_string(i + 1) + " (" + std::to_string(v) + ")");
    }

    bool shifted = false;
    std::map<std::string, Expr, std::less<>> shift;
    for (std::size_t i = 0; i < n; ++i) {
        if (equilibrium[i] != 0.0) shifted = true;
        shift[states[i]] = Expr::variable(states[i]) + Expr::constant(equilibrium[i]);
    }
    auto moved = [&](const Expr& e) { return shifted ? fold(substitute(e, shift)) : fold(e); };

    AffineSystem sys;
    sys.states = states;
    sys.f.vars = states;
    for (const auto& e : f) sys.f.components.push_back(moved(e));
    sys.g = ExprMatrix(n, p);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < p; ++j) sys.g(i, j) = moved(g(i, j));
    for (const auto& e : h) sys.h.push_back(moved(e));
    sys.output_names = std::move(output_names);
    sys.equilibrium = std::move(equilibrium);
    return sys;
}

}  // namespace nisynth
