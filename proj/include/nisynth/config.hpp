#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "nisynth/sim.hpp"
#include "nisynth/structure.hpp"
#include "nisynth/synthesis.hpp"

namespace nisynth {

class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& what, int line = 0, int column = 0)
        : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + what
                                      : what),
          line_(line),
          column_(column) {}
    int line() const { return line_; }
    int column() const { return column_; }

private:
    int line_;
    int column_;
};

struct UncertaintyConfig {
    std::vector<std::string> states;
    std::vector<std::string> inputs;
    std::vector<Expr> f;
    std::vector<Expr> h;
    Expr V;
};

struct InternalConfig {
    InternalDynamics dynamics;
    std::vector<std::vector<double>> z0;
    std::vector<std::vector<Expr>> signals;  // extra test inputs in t
};

/// Sectioned scenario file: [plant], [uncertainty], [storage], [analysis],
/// [simulate], [internal], [output]; `key = value` lines, expressions quoted.
struct ScenarioConfig {
    std::string source;
    std::filesystem::path base_dir;

    std::vector<std::string> states;
    std::vector<Expr> f;
    std::vector<std::vector<Expr>> g_columns;
    std::vector<Expr> h;
    std::vector<std::string> outputs;
    std::vector<double> equilibrium;
    std::optional<Eigen::MatrixXd> T;

    std::optional<UncertaintyConfig> uncertainty;
    StorageSpec storage;

    SamplingConfig sampling;
    ScreenConfig screen;
    std::optional<std::uint64_t> seed;
    bool check_W = false;
    double osni_tol = 1e-6;
    double wdot_tol = 1e-9;

    bool has_simulate = false;
    std::vector<double> x0;
    std::vector<double> xc0;
    IntegratorConfig integrator;
    std::string mode;  // render | stabilize | robust | open; empty picks a default
    std::vector<Expr> input;
    double converge_tol = 0.05;
    double window = 0.1;

    std::optional<InternalConfig> internal;

    std::string out_dir = "out";
    std::string csv = "trajectory.csv";
    std::string report = "report.json";
    std::string plot = "plot.gp";

    AffineSystem build_plant() const;
    std::optional<UncertaintyModel> build_uncertainty() const;
};

ScenarioConfig parse_config(std::string_view text, const std::string& source = "<string>");
ScenarioConfig load_config(const std::filesystem::path& path);

}  // namespace nisynth
