#pragma once

#include "ipool/trial.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace ipool {

/// Everything a `simulate` invocation needs; serializes to JSON.
struct RunConfig {
    TrialConfig trial;
    std::vector<PolicyKind> policies;
    std::vector<PopulationSetting> settings;
    std::string out_dir = "results";
    int jobs = 1;

    /// Throws ConfigError naming the offending field.
    void validate() const;
};

/// Invalid or unparsable configuration; `field()` is the dotted path.
class ConfigError : public std::invalid_argument {
public:
    ConfigError(std::string field, const std::string& message)
        : std::invalid_argument(field + ": " + message), field_(std::move(field)) {}
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

/// Pretty-printed JSON with every field spelled out.
std::string to_json_string(const RunConfig& config);

/// Strict parse: unknown keys and wrong types are errors. Absent keys keep
/// the value from `defaults`.
RunConfig run_config_from_json(const std::string& text, RunConfig defaults = {});
RunConfig load_run_config(const std::filesystem::path& path, RunConfig defaults = {});

}  // namespace ipool
