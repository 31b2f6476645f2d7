#pragma once

#include "ragmod/runner.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace ragmod::cli {

/// Everything a command needs beyond the experiment itself. Config files are
/// one flat JSON object holding these keys plus the experiment keys.
struct CliConfig {
    runner::ExperimentConfig experiment;
    std::filesystem::path memory_db;
    std::filesystem::path trace_dir = "runs";
    std::filesystem::path fixtures;  // JSON array of scripted outputs
    std::string embedder = "local";  // local | remote
    std::string embedding_model = "text-embedding-3-large";
    int embedding_dimension = 3072;
    std::string base_url;  // empty: RAGMOD_BASE_URL, then the public endpoint
    int max_in_flight = 4;
    bool log_http = false;
    std::vector<int> k_values = {0, 1, 3, 5, 10};
};

/// The echo written into reports; loadable as a config file.
nlohmann::json to_json(const CliConfig& c);
CliConfig cli_config_from_json(const nlohmann::json& j);

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Reads process environment; injectable for tests.
using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;
EnvLookup process_env();

/// Entry point. Returns 0 on completion, 1 on usage or configuration errors,
/// 2 on infrastructure errors. Low scores never change the exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
            const EnvLookup& env = process_env());

/// Output file stem for a config: "<hash>-s<seed>".
std::string output_stem(const CliConfig& c);

}  // namespace ragmod::cli
