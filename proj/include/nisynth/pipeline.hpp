#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "nisynth/config.hpp"

namespace nisynth {

inline constexpr int kExitPass = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitCertificate = 2;
inline constexpr int kExitDivergence = 3;

inline constexpr const char* kVersion = "0.1.0";

enum class Command { Analyze, Synthesize, Simulate, Verify };
const char* to_string(Command c);

struct RunOptions {
    std::optional<std::filesystem::path> out_dir;  // overrides [output] dir
    std::optional<std::uint64_t> seed;             // overrides [analysis] seed
    std::optional<std::string> mode;               // render | stabilize | robust
    bool write_files = true;
};

struct CommandResult {
    int exit_code = kExitPass;
    nlohmann::ordered_json report;
    std::vector<std::string> lines;  // human-readable summary
    std::vector<std::filesystem::path> files;
};

CommandResult run_command(Command cmd, const ScenarioConfig& cfg, const RunOptions& opts = {});
// Loads the config first; load failures give exit 1.
CommandResult run_command(Command cmd, const std::filesystem::path& config, const RunOptions& opts = {});

CommandResult cmd_analyze(const std::filesystem::path& config, const RunOptions& opts = {});
CommandResult cmd_synthesize(const std::filesystem::path& config, const RunOptions& opts = {});
CommandResult cmd_simulate(const std::filesystem::path& config, const RunOptions& opts = {});
CommandResult cmd_verify(const std::filesystem::path& config, const RunOptions& opts = {});

// gnuplot script plotting every state column of `csv` against time.
std::string gnuplot_script(const std::string& csv, const std::string& image, std::size_t n, std::size_t nc);

// Writes through a temporary file and renames it into place.
void write_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace nisynth
