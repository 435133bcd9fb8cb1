// ipool: simulate trials, run the oracle self-checks, export plot tables.

#include "ipool/config.hpp"
#include "ipool/export.hpp"
#include "ipool/oracle_check.hpp"
#include "ipool/policies.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace ipool;

namespace {

constexpr int kConfigExit = 2;
constexpr const char* kOutDirEnv = "IPOOL_OUT_DIR";

struct SimulateArgs {
    std::string config;
    std::vector<std::string> policies, settings;
    std::optional<int> trials, jobs;
    std::optional<std::uint64_t> seed;
    std::string out;
};

RunConfig resolve_config(const SimulateArgs& args) {
    RunConfig defaults;
    if (const char* env = std::getenv(kOutDirEnv); env && *env) defaults.out_dir = env;
    RunConfig config = args.config.empty() ? defaults : load_run_config(args.config, defaults);

    auto parse_all = [](const std::vector<std::string>& names, const char* field, auto parse) {
        std::vector<decltype(parse(std::string()))> out;
        for (const auto& n : names) {
            try {
                out.push_back(parse(n));
            } catch (const std::invalid_argument& e) {
                throw ConfigError(field, e.what());
            }
        }
        return out;
    };
    if (!args.policies.empty())
        config.policies = parse_all(args.policies, "policies", [](const std::string& s) { return parse_policy(s); });
    if (!args.settings.empty())
        config.settings = parse_all(args.settings, "settings", [](const std::string& s) { return parse_setting(s); });
    if (args.trials) config.trial.n_trials = *args.trials;
    if (args.seed) config.trial.base_seed = *args.seed;
    if (args.jobs) config.jobs = *args.jobs;
    if (!args.out.empty()) config.out_dir = args.out;
    config.validate();
    return config;
}

void print_regret_table(const PopulationSetting setting, const std::vector<std::pair<PolicyKind, AggregateTable>>& cells) {
    std::printf("\nsetting %s: mean regret per decision by week in study (mean +- se)\n", to_string(setting).c_str());
    std::printf("%5s", "week");
    for (const auto& [policy, _] : cells) std::printf("  %22s", std::string(to_string(policy)).c_str());
    std::printf("\n");
    std::size_t weeks = 0;
    for (const auto& [_, t] : cells) weeks = std::max(weeks, t.week_regret.size());
    for (std::size_t w = 0; w < weeks; ++w) {
        std::printf("%5zu", w + 1);
        for (const auto& [_, t] : cells) {
            if (w < t.week_regret.size())
                std::printf("  %11.4f +- %7.4f", t.week_regret[w].mean, t.week_regret[w].se);
            else
                std::printf("  %22s", "-");
        }
        std::printf("\n");
    }
    std::printf("%5s", "cum");
    for (const auto& [_, t] : cells)
        std::printf("  %11.3f +- %7.3f", t.cumulative_regret.mean, t.cumulative_regret.se);
    std::printf("\n");
}

int cmd_simulate(const SimulateArgs& args) {
    const RunConfig config = resolve_config(args);
    const fs::path dir = config.out_dir;
    fs::create_directories(dir);
    const auto start = std::chrono::steady_clock::now();
    const Environment env = Environment::generate(config.trial.corpus);

    for (const PopulationSetting setting : config.settings) {
        std::vector<std::pair<PolicyKind, AggregateTable>> cells;
        for (const PolicyKind policy : config.policies) {
            TrialConfig trial = config.trial;
            trial.policy = policy;
            trial.setting = setting;
            std::vector<TrialOutput> outputs = run_trials(trial, env, config.jobs);

            std::vector<std::vector<TrialRecord>> records;
            int warnings = 0;
            for (auto& o : outputs) {
                warnings += o.hyperparameter_warnings;
                records.push_back(std::move(o.records));
            }
            const RunCell cell{policy, setting, trial.base_seed};
            const fs::path csv = write_run(dir, config, cell, records);
            std::fprintf(stderr, "wrote %s (%d trials", csv.string().c_str(), trial.n_trials);
            if (warnings) std::fprintf(stderr, ", %d under-determined hyperparameter fits", warnings);
            std::fprintf(stderr, ")\n");
            cells.emplace_back(policy, aggregate(records, trial));
        }
        print_regret_table(setting, cells);
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::fprintf(stderr, "done in %.1f s\n", seconds);
    return 0;
}

int cmd_oracle_check(std::uint64_t seed, bool corrupt) {
    OracleCheckOptions options;
    options.seed = seed;
    options.corrupt_kernel = corrupt;
    bool ok = true;
    std::printf("%-34s %12s %10s %8s  %s\n", "check", "max_dev", "tolerance", "seconds", "result");
    for (const CheckReport& r : run_oracle_checks(options)) {
        ok = ok && r.passed();
        std::printf("%-34s %12.3e %10.1e %8.3f  %s\n", r.name.c_str(), r.max_deviation, r.tolerance, r.seconds,
                    r.passed() ? "PASS" : "FAIL");
    }
    std::printf("%s\n", ok ? "all checks passed" : "oracle check FAILED");
    return ok ? 0 : 1;
}

int cmd_export_plots(const fs::path& run_dir, fs::path out_dir) {
    if (out_dir.empty()) out_dir = run_dir / "plot_data";
    for (const auto& path : export_plot_data(run_dir, out_dir)) std::printf("%s\n", path.string().c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Mixed-effects Thompson-sampling bandit simulator"};
    app.require_subcommand(1);

    SimulateArgs sim;
    auto* simulate = app.add_subcommand("simulate", "Run trials for every (policy, setting) cell");
    simulate->add_option("--config", sim.config, "JSON run configuration")->check(CLI::ExistingFile);
    simulate->add_option("--policy", sim.policies, "Policies (comma separated), overrides the config")
        ->delimiter(',');
    simulate->add_option("--setting", sim.settings, "Population settings (comma separated), overrides the config")
        ->delimiter(',');
    simulate->add_option("--trials", sim.trials, "Trials per cell");
    simulate->add_option("--seed", sim.seed, "Base seed");
    simulate->add_option("--jobs", sim.jobs, "Worker threads");
    simulate->add_option("--out", sim.out, std::string("Output directory (default: the config's out_dir, else $") +
                                               kOutDirEnv + ", else ./results)");

    std::uint64_t check_seed = OracleCheckOptions{}.seed;
    bool corrupt = false;
    auto* check = app.add_subcommand("oracle-check", "Compare both posterior routes against independent oracles");
    check->add_option("--seed", check_seed, "Seed for the random test problems");
    check->add_flag("--corrupt-kernel", corrupt, "Negative control: perturb the library-side covariance");

    std::string run_dir, plot_out;
    auto* plots = app.add_subcommand("export-plots", "Write tidy CSVs for the plot renderer");
    plots->add_option("run-dir", run_dir, "Directory written by simulate")->required();
    plots->add_option("--out", plot_out, "Output directory (default: <run-dir>/plot_data)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kConfigExit;
    }

    try {
        if (*simulate) return cmd_simulate(sim);
        if (*check) return cmd_oracle_check(check_seed, corrupt);
        if (*plots) return cmd_export_plots(run_dir, plot_out);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "invalid config: %s\n", e.what());
        return kConfigExit;
    } catch (const EmptyRunError& e) {
        std::fprintf(stderr, "export-plots: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 1;
}
