#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "nisynth/config.hpp"
#include "nisynth/pipeline.hpp"

using namespace nisynth;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const std::string& example_text() {
    static const std::string text = slurp(fs::path(NISYNTH_SCENARIO_DIR) / "paper_example.cfg");
    return text;
}

const std::string& double_integrator_text() {
    static const std::string text = slurp(fs::path(NISYNTH_SCENARIO_DIR) / "double_integrator.cfg");
    return text;
}

std::string replaced(std::string text, const std::string& from, const std::string& to) {
    const auto at = text.find(from);
    if (at == std::string::npos) throw std::logic_error("fixture text not found: " + from);
    return text.replace(at, from.size(), to);
}

// Drops a whole section including its header.
std::string without_section(const std::string& text, const std::string& name) {
    const auto at = text.find("[" + name + "]");
    if (at == std::string::npos) throw std::logic_error("no section " + name);
    auto end = text.find("\n[", at + 1);
    if (end == std::string::npos) end = text.size();
    return text.substr(0, at) + text.substr(end + 1);
}

CommandResult run(Command cmd, const std::string& text, RunOptions opts = {}) {
    opts.write_files = false;
    return run_command(cmd, parse_config(text, "test.cfg"), opts);
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("nisynth_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

bool errors_mention(const CommandResult& r, const std::string& needle) {
    for (const auto& e : r.report["errors"])
        if (e.get<std::string>().find(needle) != std::string::npos) return true;
    return false;
}

}  // namespace

TEST(Config, ParsesShippedScenarios) {
    const auto cfg = parse_config(example_text());
    EXPECT_EQ(cfg.states, (std::vector<std::string>{"z", "xi1", "xi2", "xi3"}));
    EXPECT_EQ(cfg.g_columns.size(), 2u);
    ASSERT_TRUE(cfg.uncertainty);
    EXPECT_EQ(cfg.x0, (std::vector<double>{10, 3, -5, 7}));
    EXPECT_EQ(cfg.xc0, (std::vector<double>{-8, 2}));
    EXPECT_EQ(cfg.integrator.T_final, 40.0);
    EXPECT_EQ(cfg.seed, 20240101u);
    EXPECT_TRUE(cfg.check_W);
    ASSERT_TRUE(cfg.internal);
    EXPECT_EQ(cfg.internal->z0.size(), 3u);
    EXPECT_NO_THROW(parse_config(double_integrator_text()));
}

TEST(Config, MalformedExpressionReportsLineAndColumn) {
    const std::string text = "[plant]\nstates = x1, x2\nf = \"x2\", \"x1 +* x2\"\n";
    try {
        parse_config(text);
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.line(), 3);
        // the '*' sits at column 16
        EXPECT_EQ(e.column(), 16);
        EXPECT_NE(std::string(e.what()).find("line 3, column 16"), std::string::npos);
    }
}

TEST(Config, StructuralErrors) {
    const auto line_of = [](const std::string& text) {
        try {
            parse_config(text);
        } catch (const ConfigError& e) {
            return e.line();
        }
        return -1;
    };
    EXPECT_EQ(line_of("[plant]\nstates = x\n[bogus]\n"), 3);
    EXPECT_EQ(line_of("[plant]\nstates = x\nstates = y\n"), 3);
    EXPECT_EQ(line_of("states = x\n"), 1);
    EXPECT_EQ(line_of("[plant]\nstates = x\nf = \"x\"\nh = \"x\"\ng1 = \"1\"\ncolour = red\n"), 6);
    EXPECT_EQ(line_of("[plant]\nstates = x\nf = \"x\n"), 3);
    EXPECT_EQ(line_of(replaced(example_text(), "dt = 0.001", "dt = fast")),
              1 + static_cast<int>(std::count(example_text().begin(), example_text().begin() + example_text().find("dt = 0.001"), '\n')));
    EXPECT_THROW(parse_config(replaced(example_text(), "x0 = 10, 3, -5, 7", "x0 = 10, 3")), ConfigError);
    EXPECT_THROW(load_config("/nonexistent/file.cfg"), ConfigError);
}

TEST(Analyze, ExampleScenario) {
    const auto r = run(Command::Analyze, example_text());
    EXPECT_EQ(r.exit_code, kExitPass);
    const auto& s = r.report["structure"];
    EXPECT_EQ(s["relative_degree"]["r"], nlohmann::json({1, 2}));
    EXPECT_EQ(s["relative_degree"]["A_at_equilibrium"], nlohmann::json({{1.0, 0.0}, {0.0, 1.0}}));
    EXPECT_EQ(s["involutive"]["status"], "pass");
    EXPECT_EQ(s["H1"]["status"], "pass");
    EXPECT_EQ(s["H2"]["status"], "assumed");
    EXPECT_EQ(s["H3"]["status"], "pass");
}

TEST(Analyze, ZeroInputMatrixIsStructuralFailure) {
    const auto r = run(Command::Analyze, replaced(double_integrator_text(), "g1 = \"0\", \"1\"", "g1 = \"0\", \"0\""));
    EXPECT_EQ(r.exit_code, kExitCertificate);
    EXPECT_TRUE(errors_mention(r, "relative degree"));
}

TEST(Analyze, MalformedExpressionIsConfigError) {
    const fs::path dir = fresh_dir("malformed");
    std::ofstream(dir / "bad.cfg") << replaced(example_text(), "\"sin(z)\"", "\"sin(z\"");
    const auto r = cmd_analyze(dir / "bad.cfg");
    EXPECT_EQ(r.exit_code, kExitConfig);
    EXPECT_TRUE(errors_mention(r, "column"));
    EXPECT_FALSE(fs::exists(dir / "paper_example_out"));
}

TEST(Analyze, MissingSeedIsConfigError) {
    const auto r = run(Command::Analyze, replaced(double_integrator_text(), "seed = 7", ""));
    EXPECT_EQ(r.exit_code, kExitConfig);
    RunOptions opts;
    opts.seed = 7;
    EXPECT_EQ(run(Command::Analyze, replaced(double_integrator_text(), "seed = 7", ""), opts).exit_code, kExitPass);
}

TEST(Synthesize, ExampleRobustLaw) {
    const auto r = run(Command::Synthesize, example_text());
    EXPECT_EQ(r.exit_code, kExitPass);
    const auto printed = r.report["law"]["printed"];
    ASSERT_EQ(printed.size(), 2u);
    EXPECT_EQ(printed[0], "u1 = -(sin(z)) - (2*xi1)");
    EXPECT_EQ(printed[1], "u2 = -(xi1 + xi2^2 + xi3) - (1.3333333333333333*cbrt(xi2)) - (xi3)");
    EXPECT_EQ(r.report["screens"]["W"]["status"], "pass");
}

TEST(Synthesize, DoubleIntegratorStabilize) {
    const auto r = run(Command::Synthesize, double_integrator_text());
    EXPECT_EQ(r.exit_code, kExitPass);
    EXPECT_EQ(r.report["law"]["printed"], nlohmann::json({"u = -(x1) - (x2)"}));
}

TEST(Synthesize, ZeroLambdaRejectedForStabilize) {
    const auto r = run(Command::Synthesize, replaced(double_integrator_text(), "lambda = 1", "lambda = 0"));
    EXPECT_EQ(r.exit_code, kExitCertificate);
    RunOptions render;
    render.mode = "render";
    EXPECT_EQ(run(Command::Synthesize, replaced(double_integrator_text(), "lambda = 1", "lambda = 0"), render).exit_code,
              kExitPass);
}

TEST(Synthesize, RobustWithoutUncertaintyIsConfigError) {
    const auto r = run(Command::Synthesize, without_section(example_text(), "uncertainty"));
    EXPECT_EQ(r.exit_code, kExitConfig);
}

TEST(Synthesize, IndefiniteWRejectedWithWitness) {
    // 0.1 y1^2 - y1 xc1 + 0.5 xc1^2 is indefinite
    const auto r = run(Command::Synthesize, replaced(example_text(), "V1 = \"y1^2\"", "V1 = \"0.1*y1^2\""));
    EXPECT_EQ(r.exit_code, kExitCertificate);
    EXPECT_EQ(r.report["screens"]["W"]["status"], "fail");
    EXPECT_TRUE(r.report["screens"]["W"].contains("witness"));
}

TEST(Verify, PositiveFeedbackUncertaintyBreaksLyapunovCertificate) {
    const auto text = replaced(replaced(example_text(), "h = \"xc1\", \"xc2\"", "h = \"-xc1\", \"-xc2\""),
                               "T_final = 40", "T_final = 5");
    const auto r = run(Command::Verify, text);
    EXPECT_EQ(r.report["screens"]["W"]["status"], "pass");
    EXPECT_EQ(r.exit_code, kExitCertificate);
    bool lyapunov_failed = false;
    for (const auto& c : r.report["certificates"])
        if (c["name"].get<std::string>().find("Wdot") != std::string::npos && c["status"] == "fail") lyapunov_failed = true;
    EXPECT_TRUE(lyapunov_failed) << r.report["certificates"].dump();
}

TEST(Simulate, ZeroInitialConditionsGiveFlatCsv) {
    const fs::path dir = fresh_dir("flat");
    std::ofstream(dir / "flat.cfg") << replaced(double_integrator_text(), "x0 = 1, -0.5", "x0 = 0, 0");
    const auto r = cmd_simulate(dir / "flat.cfg");
    EXPECT_EQ(r.exit_code, kExitPass);
    const auto csv = slurp(dir / "double_integrator_out" / "trajectory.csv");
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    std::getline(in, line);
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        const auto comma = line.find(',');
        EXPECT_EQ(line.substr(comma), ",0,0,0,0,0,0,0,0") << line;
        ++rows;
    }
    EXPECT_EQ(rows, 30001u);
    EXPECT_TRUE(fs::exists(dir / "double_integrator_out" / "plot.gp"));
}

TEST(Simulate, DivergenceExitsThreeAndKeepsCsv) {
    const fs::path dir = fresh_dir("diverge");
    auto text = replaced(double_integrator_text(), "mode = stabilize", "mode = open\nv = \"x1^3\"");
    text = replaced(text, "x0 = 1, -0.5", "x0 = 2, 2");
    std::ofstream(dir / "div.cfg") << text;
    const auto r = cmd_simulate(dir / "div.cfg");
    EXPECT_EQ(r.exit_code, kExitDivergence);
    const auto csv = slurp(dir / "double_integrator_out" / "trajectory.csv");
    EXPECT_GT(std::count(csv.begin(), csv.end(), '\n'), 3);
    EXPECT_TRUE(r.report["simulation"]["diverged"].get<bool>());
}

TEST(Simulate, MissingSimulateSectionIsConfigError) {
    const auto text = without_section(double_integrator_text(), "simulate");
    EXPECT_EQ(run(Command::Simulate, text).exit_code, kExitConfig);
    EXPECT_EQ(run(Command::Verify, text).exit_code, kExitPass);
}

TEST(Verify, ExampleScenarioPasses) {
    const fs::path dir = fresh_dir("verify");
    RunOptions opts;
    opts.out_dir = dir;
    const auto r = cmd_verify(fs::path(NISYNTH_SCENARIO_DIR) / "paper_example.cfg", opts);
    EXPECT_EQ(r.exit_code, kExitPass) << r.report["errors"].dump();
    EXPECT_TRUE(fs::exists(dir / "report.json"));
    EXPECT_TRUE(fs::exists(dir / "trajectory.csv"));
    EXPECT_TRUE(fs::exists(dir / "plot.gp"));
    const auto report = nlohmann::json::parse(slurp(dir / "report.json"));
    EXPECT_EQ(report["status"], "pass");
    EXPECT_EQ(report["tool"]["version"], kVersion);
    EXPECT_TRUE(report["manifest"]["timestamp"].is_null());
}

TEST(Verify, Deterministic) {
    RunOptions a, b;
    a.out_dir = fresh_dir("det_a");
    b.out_dir = fresh_dir("det_b");
    const auto cfg = fs::path(NISYNTH_SCENARIO_DIR) / "double_integrator.cfg";
    ASSERT_EQ(cmd_verify(cfg, a).exit_code, kExitPass);
    ASSERT_EQ(cmd_verify(cfg, b).exit_code, kExitPass);
    for (const char* f : {"report.json", "trajectory.csv", "plot.gp"})
        EXPECT_EQ(slurp(*a.out_dir / f), slurp(*b.out_dir / f)) << f;
}

TEST(Gnuplot, ScriptReferencesData) {
    const auto s = gnuplot_script("trajectory.csv", "trajectory.png", 4, 2);
    EXPECT_NE(s.find("trajectory.csv"), std::string::npos);
    EXPECT_NE(s.find("trajectory.png"), std::string::npos);
}

TEST(Binary, ExitCodes) {
    const std::string exe = NISYNTH_CLI_PATH;
    const fs::path dir = fresh_dir("binary");
    const auto status = [](const std::string& cmd) {
        const int raw = std::system((cmd + " >/dev/null 2>&1").c_str());
        return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    };
    const std::string di = (fs::path(NISYNTH_SCENARIO_DIR) / "double_integrator.cfg").string();
    EXPECT_EQ(status(exe + " analyze " + di + " --out " + dir.string()), 0);
    EXPECT_EQ(status(exe + " synthesize " + di + " --mode render --out " + dir.string()), 0);
    EXPECT_EQ(status(exe + " synthesize " + di + " --mode sideways"), 1);
    EXPECT_EQ(status(exe + " frobnicate " + di), 1);
    EXPECT_EQ(status(exe + " analyze /nonexistent.cfg"), 1);
    EXPECT_TRUE(fs::exists(dir / "analyze.json"));
}
