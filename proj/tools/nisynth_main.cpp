#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "nisynth/pipeline.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Synthesize and certify negative-imaginary state feedback for control-affine plants"};
    app.set_version_flag("--version", nisynth::kVersion);
    app.require_subcommand(1);

    std::string config;
    std::string out;
    std::uint64_t seed = 0;
    std::string mode;

    struct Entry {
        const char* name;
        const char* help;
        nisynth::Command cmd;
    };
    const Entry entries[] = {
        {"analyze", "relative degree, involutivity and H1-H3 checks", nisynth::Command::Analyze},
        {"synthesize", "build and print the feedback law", nisynth::Command::Synthesize},
        {"simulate", "integrate the closed loop and write CSV plus a gnuplot script", nisynth::Command::Simulate},
        {"verify", "run the full pipeline and write a JSON report", nisynth::Command::Verify},
    };
    std::vector<std::pair<CLI::App*, nisynth::Command>> subs;
    for (const auto& e : entries) {
        CLI::App* sub = app.add_subcommand(e.name, e.help);
        sub->add_option("config", config, "scenario file")->required();
        sub->add_option("--out", out, "output directory (default: [output] dir next to the config)");
        sub->add_option("--seed", seed, "sampling seed (overrides [analysis] seed)");
        sub->add_option("--mode", mode, "law to synthesize")
            ->check(CLI::IsMember({"render", "stabilize", "robust"}));
        subs.emplace_back(sub, e.cmd);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : nisynth::kExitConfig;
    }

    nisynth::RunOptions opts;
    for (const auto& [sub, cmd] : subs) {
        if (!sub->parsed()) continue;
        if (!out.empty()) opts.out_dir = out;
        if (sub->count("--seed")) opts.seed = seed;
        if (!mode.empty()) opts.mode = mode;
        const auto res = nisynth::run_command(cmd, std::filesystem::path(config), opts);
        for (const auto& line : res.lines) (res.exit_code == 0 ? std::cout : std::cerr) << line << '\n';
        for (const auto& f : res.files) std::cout << "wrote " << f.string() << '\n';
        return res.exit_code;
    }
    return nisynth::kExitConfig;
}
