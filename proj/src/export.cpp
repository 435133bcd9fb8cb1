#include "ipool/export.hpp"

#include "ipool/csv.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>

namespace ipool {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::vector<std::string> kRecordColumns = {
    "trial",          "user",        "group",       "cohort",        "day",       "decision_time", "week",
    "decision_index", "available",   "time_of_day", "day_of_week",   "temperature", "prior_activity", "location",
    "action",         "probability", "reward",      "effect",        "regret"};

std::string num(double x) { return csv::format_number(x); }

template <class T>
T integer_field(const std::string& s, const char* what, long long lo, long long hi) {
    const long long v = csv::parse_integer(s, what);
    if (v < lo || v > hi) throw std::invalid_argument(std::string(what) + " out of range: " + s);
    return T(v);
}

json mean_se_json(const MeanSe& m) { return {{"mean", m.mean}, {"se", m.se}, {"n", m.n}}; }

json table_json(const AggregateTable& t) {
    json weeks = json::array(), cohorts = json::array();
    for (const auto& w : t.week_regret) weeks.push_back(mean_se_json(w));
    for (const auto& c : t.cohort_last_week_send) cohorts.push_back(mean_se_json(c));
    return {{"n_trials", t.n_trials},
            {"cumulative_regret", mean_se_json(t.cumulative_regret)},
            {"week_regret", weeks},
            {"group_send", {mean_se_json(t.group_send[0]), mean_se_json(t.group_send[1])}},
            {"cohort_last_week_send", cohorts},
            {"availability_rate", t.availability_rate}};
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    return out;
}

void write_record_rows(std::ostream& out, std::span<const TrialRecord> records) {
    for (const auto& r : records) {
        csv::write_row(out, {std::to_string(r.trial), std::to_string(r.user), std::to_string(r.group),
                             std::to_string(r.cohort), std::to_string(r.day), std::to_string(r.decision_time),
                             std::to_string(r.week), std::to_string(r.decision_index), r.available ? "1" : "0",
                             std::to_string(r.state.time_of_day), std::to_string(r.state.day_of_week),
                             std::to_string(r.state.temperature), std::to_string(r.state.prior_activity),
                             std::to_string(r.state.location),
                             r.available ? std::to_string(int(r.action)) : std::string(),
                             r.available ? num(r.probability) : std::string(), num(r.reward), num(r.effect),
                             num(r.regret)});
    }
}

}  // namespace

const std::vector<std::string>& record_columns() { return kRecordColumns; }

void validate_record(const TrialRecord& r, const ClipBounds& clip) {
    auto fail = [&](const std::string& what) {
        throw std::invalid_argument("record (trial " + std::to_string(r.trial) + ", user " + std::to_string(r.user) +
                                    ", day " + std::to_string(r.day) + "): " + what);
    };
    if (!(r.regret >= 0.0)) fail("negative regret");
    const bool optimal = r.action == optimal_action(r.effect);
    if (r.available) {
        if (r.decision_index < 0) fail("available point without a decision index");
        if (!(r.probability >= clip.lo && r.probability <= clip.hi)) fail("probability outside the clip bounds");
        if (optimal && r.regret != 0.0) fail("optimal action with non-zero regret");
        if (!optimal && r.regret != std::abs(r.effect)) fail("regret differs from the effect magnitude");
    } else {
        if (r.decision_index != -1) fail("unavailable point with a decision index");
        if (r.regret != 0.0) fail("unavailable point with regret");
    }
    if (r.group != 1 && r.group != 2) fail("group must be 1 or 2");
}

void write_records_csv(std::ostream& out, std::span<const TrialRecord> records) {
    csv::write_row(out, kRecordColumns);
    write_record_rows(out, records);
}

std::vector<TrialRecord> read_records_csv(std::istream& in, const ClipBounds& clip) {
    const csv::Table t = csv::read_table(in);
    std::vector<std::size_t> col;
    for (const auto& name : kRecordColumns) {
        try {
            col.push_back(t.column(name));
        } catch (const std::out_of_range&) {
            throw csv::ParseError("missing column '" + name + "'", 1);
        }
    }
    std::vector<TrialRecord> records;
    records.reserve(t.rows.size());
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const auto& row = t.rows[i];
        auto f = [&](std::size_t k) -> const std::string& { return row[col[k]]; };
        try {
            TrialRecord r;
            r.trial = integer_field<int>(f(0), "trial", 0, 1 << 30);
            r.user = integer_field<int>(f(1), "user", 0, 1 << 30);
            r.group = integer_field<int>(f(2), "group", 1, 2);
            r.cohort = integer_field<int>(f(3), "cohort", 0, 64);
            r.day = integer_field<int>(f(4), "day", 0, 1 << 20);
            r.decision_time = integer_field<int>(f(5), "decision_time", 0, 64);
            r.week = integer_field<int>(f(6), "week", 0, 1 << 16);
            r.decision_index = integer_field<int>(f(7), "decision_index", -1, 1 << 30);
            r.available = integer_field<int>(f(8), "available", 0, 1) == 1;
            r.state.time_of_day = integer_field<std::uint8_t>(f(9), "time_of_day", 0, 1);
            r.state.day_of_week = integer_field<std::uint8_t>(f(10), "day_of_week", 0, 1);
            r.state.temperature = integer_field<std::uint8_t>(f(11), "temperature", 0, 1);
            r.state.prior_activity = integer_field<std::uint8_t>(f(12), "prior_activity", 0, 1);
            r.state.location = integer_field<std::uint8_t>(f(13), "location", 0, 1);
            if (r.available) {
                r.action = action_from_int(integer_field<int>(f(14), "action", 0, 1));
                r.probability = csv::parse_double(f(15), "probability");
            } else if (!f(14).empty() || !f(15).empty()) {
                throw std::invalid_argument("unavailable point carries an action or probability");
            }
            r.reward = csv::parse_double(f(16), "reward");
            r.effect = csv::parse_double(f(17), "effect");
            r.regret = csv::parse_double(f(18), "regret");
            validate_record(r, clip);
            records.push_back(r);
        } catch (const std::invalid_argument& e) {
            throw csv::ParseError(e.what(), i + 2);
        }
    }
    return records;
}

std::string cell_stem(const RunCell& cell) {
    return std::string(to_string(cell.policy)) + "_" + to_string(cell.setting) + "_" + std::to_string(cell.seed);
}

std::string summary_json(const RunConfig& config, const RunCell& cell, const AggregateTable& table) {
    RunConfig echo = config;
    echo.policies = {cell.policy};
    echo.settings = {cell.setting};
    echo.trial.base_seed = cell.seed;
    json trials = json::array();
    for (int t = 0; t < config.trial.n_trials; ++t) trials.push_back(t);
    // Where and how fast a run was written does not change its records.
    json echo_json = json::parse(to_json_string(echo));
    echo_json.erase("out_dir");
    echo_json.erase("jobs");
    const json j = {{"policy", std::string(to_string(cell.policy))},
                    {"setting", to_string(cell.setting)},
                    {"seed", cell.seed},
                    {"burden", config.trial.burden},
                    {"trials", trials},
                    {"config", echo_json},
                    {"aggregate", table_json(table)}};
    return j.dump(2);
}

fs::path write_run(const fs::path& dir, const RunConfig& config, const RunCell& cell,
                   std::span<const std::vector<TrialRecord>> trials) {
    fs::create_directories(dir);
    const std::string stem = cell_stem(cell);
    const fs::path csv_path = dir / (stem + ".csv");
    {
        auto out = open_out(csv_path);
        csv::write_row(out, kRecordColumns);
        for (const auto& records : trials) write_record_rows(out, records);
    }
    TrialConfig tc = config.trial;
    tc.policy = cell.policy;
    tc.setting = cell.setting;
    auto json_out = open_out(dir / (stem + ".json"));
    json_out << summary_json(config, cell, aggregate(trials, tc)) << "\n";
    return csv_path;
}

std::vector<LoadedRun> load_runs(const fs::path& run_dir) {
    if (!fs::is_directory(run_dir)) throw EmptyRunError("run directory does not exist: " + run_dir.string());
    std::vector<fs::path> stems;
    for (const auto& entry : fs::directory_iterator(run_dir)) {
        const fs::path& p = entry.path();
        if (p.extension() == ".csv" && fs::exists(fs::path(p).replace_extension(".json"))) stems.push_back(p);
    }
    if (stems.empty()) throw EmptyRunError("no simulation runs ({policy}_{setting}_{seed}.csv + .json) in " +
                                           run_dir.string());
    std::sort(stems.begin(), stems.end());

    std::vector<LoadedRun> runs;
    for (const auto& csv_path : stems) {
        const fs::path json_path = fs::path(csv_path).replace_extension(".json");
        std::ifstream jin(json_path);
        json summary;
        try {
            summary = json::parse(jin);
        } catch (const json::exception& e) {
            throw std::runtime_error(json_path.string() + ": " + e.what());
        }
        if (!summary.contains("config")) throw std::runtime_error(json_path.string() + ": missing config echo");
        const RunConfig config = run_config_from_json(summary.at("config").dump());
        if (config.policies.size() != 1 || config.settings.size() != 1)
            throw std::runtime_error(json_path.string() + ": config echo must name one policy and one setting");

        LoadedRun run;
        run.cell = {config.policies[0], config.settings[0], config.trial.base_seed};
        run.burden = config.trial.burden;
        run.trial = config.trial;
        run.trial.policy = run.cell.policy;
        run.trial.setting = run.cell.setting;

        std::ifstream cin(csv_path, std::ios::binary);
        std::vector<TrialRecord> records;
        try {
            records = read_records_csv(cin, run.trial.clip);
        } catch (const csv::ParseError& e) {
            throw std::runtime_error(csv_path.string() + ":" + std::to_string(e.line()) + ": " + e.what());
        }
        std::vector<std::vector<TrialRecord>> by_trial(std::size_t(run.trial.n_trials));
        for (const auto& r : records) {
            if (r.trial >= run.trial.n_trials)
                throw std::runtime_error(csv_path.string() + ": trial " + std::to_string(r.trial) +
                                         " beyond n_trials in the config echo");
            by_trial[std::size_t(r.trial)].push_back(r);
            if (r.available) run.probabilities.push_back(r.probability);
        }
        run.table = aggregate(by_trial, run.trial);
        runs.push_back(std::move(run));
    }
    return runs;
}

std::vector<fs::path> export_plot_data(const fs::path& run_dir, const fs::path& out_dir) {
    const auto runs = load_runs(run_dir);
    fs::create_directories(out_dir);
    const fs::path regret_path = out_dir / "regret_by_week.csv", group_path = out_dir / "group_send.csv",
                   cohort_path = out_dir / "cohort_send.csv", prob_path = out_dir / "probabilities.csv";
    auto regret = open_out(regret_path);
    auto group = open_out(group_path);
    auto cohort = open_out(cohort_path);
    auto prob = open_out(prob_path);
    csv::write_row(regret, {"setting", "policy", "burden", "seed", "week", "mean_regret", "se", "n_trials"});
    csv::write_row(group, {"setting", "policy", "burden", "seed", "group", "send_fraction", "se", "n_trials"});
    csv::write_row(cohort, {"setting", "policy", "burden", "seed", "cohort", "last_week_send_fraction", "se",
                            "n_trials"});
    csv::write_row(prob, {"setting", "policy", "burden", "seed", "probability"});
    for (const auto& run : runs) {
        const csv::Row key{to_string(run.cell.setting), std::string(to_string(run.cell.policy)),
                           run.burden ? "1" : "0", std::to_string(run.cell.seed)};
        auto row = [&](std::initializer_list<std::string> rest) {
            csv::Row r = key;
            r.insert(r.end(), rest);
            return r;
        };
        for (std::size_t w = 0; w < run.table.week_regret.size(); ++w) {
            const auto& m = run.table.week_regret[w];
            csv::write_row(regret, row({std::to_string(w + 1), num(m.mean), num(m.se), std::to_string(m.n)}));
        }
        for (std::size_t g = 0; g < 2; ++g) {
            const auto& m = run.table.group_send[g];
            csv::write_row(group, row({std::to_string(g + 1), num(m.mean), num(m.se), std::to_string(m.n)}));
        }
        for (std::size_t c = 0; c < run.table.cohort_last_week_send.size(); ++c) {
            const auto& m = run.table.cohort_last_week_send[c];
            if (m.n == 0) continue;  // nobody recruited that week
            csv::write_row(cohort, row({std::to_string(c + 1), num(m.mean), num(m.se), std::to_string(m.n)}));
        }
        for (double p : run.probabilities) csv::write_row(prob, row({num(p)}));
    }
    return {regret_path, group_path, cohort_path, prob_path};
}

}  // namespace ipool
