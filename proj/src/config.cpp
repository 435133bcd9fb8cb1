#include "ipool/config.hpp"

#include <json.hpp>

#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace ipool {

namespace {

using nlohmann::json;

json bounds_json(const Bounds& b) { return {{"lower", b.lower}, {"upper", b.upper}}; }

json trial_json(const TrialConfig& t) {
    json prior = {{"intercept_mean", t.prior.intercept_mean ? json(*t.prior.intercept_mean) : json(nullptr)},
                  {"baseline_var", t.prior.baseline_var},
                  {"treatment_var", t.prior.treatment_var},
                  {"random_effect_var", t.prior.random_effect_var},
                  {"noise_var", t.prior.noise_var},
                  {"time_effect_var", t.prior.time_effect_var},
                  {"time_lengthscale", t.prior.time_lengthscale}};
    json bimodal = json::array();
    for (const auto& [z, loc] : t.effects.bimodal) bimodal.push_back({{"z", z}, {"beta_location", loc}});
    json effects = {{"beta", t.effects.beta},
                    {"bimodal", bimodal},
                    {"smooth_z_variance", t.effects.smooth_z_variance},
                    {"smooth_location_variance", t.effects.smooth_location_variance},
                    {"burden", t.effects.burden}};
    json fit = {{"min_observations", t.fit.min_observations}, {"restarts", t.fit.restarts},
                {"max_evaluations", t.fit.max_evaluations},   {"tolerance", t.fit.tolerance},
                {"restart_spread", t.fit.restart_spread},     {"seed", t.fit.seed}};
    json corpus = {{"users", t.corpus.users},
                   {"days", t.corpus.days},
                   {"windows_per_day", t.corpus.windows_per_day},
                   {"seed", t.corpus.seed},
                   {"group_gap", t.corpus.group_gap}};
    return {{"n_users", t.n_users},
            {"weeks_per_user", t.weeks_per_user},
            {"trial_weeks", t.trial_weeks},
            {"decision_times_per_day", t.decision_times_per_day},
            {"availability_prob", t.availability_prob},
            {"burden", t.burden},
            {"n_trials", t.n_trials},
            {"base_seed", t.base_seed},
            {"recruitment", t.recruitment},
            {"start_month", t.start_month},
            {"posterior_update_days", t.posterior_update_days},
            {"hyperparameter_update_days", t.hyperparameter_update_days},
            {"clip", {{"lo", t.clip.lo}, {"hi", t.clip.hi}}},
            {"forgetting", t.forgetting},
            {"fit_hyperparameters", t.fit_hyperparameters},
            {"fit", fit},
            {"variance_bounds", bounds_json(t.variance_bounds)},
            {"noise_bounds", bounds_json(t.noise_bounds)},
            {"lengthscale_bounds", bounds_json(t.lengthscale_bounds)},
            {"prior", prior},
            {"effects", effects},
            {"corpus", corpus}};
}

/// Walks one JSON object, remembering which keys were consumed so leftovers
/// can be reported.
class Reader {
public:
    Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
    }

    template <class T>
    void get(const char* key, T& out) {
        if (!j_.contains(key)) return;
        seen_.insert(key);
        read(j_.at(key), join(key), out);
    }

    template <class F>
    void object(const char* key, F&& f) {
        if (!j_.contains(key)) return;
        seen_.insert(key);
        Reader child(j_.at(key), join(key));
        f(child);
        child.finish();
    }

    void finish() const {
        for (const auto& [key, value] : j_.items())
            if (!seen_.count(key)) throw ConfigError(join(key.c_str()), "unknown field");
    }

private:
    std::string join(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

    static void read(const json& v, const std::string& path, double& out) {
        if (!v.is_number()) throw ConfigError(path, "expected a number");
        out = v.get<double>();
    }
    static void read(const json& v, const std::string& path, int& out) {
        if (!v.is_number_integer()) throw ConfigError(path, "expected an integer");
        const auto x = v.get<std::int64_t>();
        if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max())
            throw ConfigError(path, "integer out of range");
        out = int(x);
    }
    static void read(const json& v, const std::string& path, std::uint64_t& out) {
        if (!v.is_number_unsigned()) throw ConfigError(path, "expected a non-negative integer");
        out = v.get<std::uint64_t>();
    }
    static void read(const json& v, const std::string& path, bool& out) {
        if (!v.is_boolean()) throw ConfigError(path, "expected true or false");
        out = v.get<bool>();
    }
    static void read(const json& v, const std::string& path, std::string& out) {
        if (!v.is_string()) throw ConfigError(path, "expected a string");
        out = v.get<std::string>();
    }
    static void read(const json& v, const std::string& path, std::optional<double>& out) {
        if (v.is_null()) {
            out.reset();
            return;
        }
        double x = 0;
        read(v, path, x);
        out = x;
    }
    static void read(const json& v, const std::string& path, std::vector<double>& out) {
        if (!v.is_array()) throw ConfigError(path, "expected an array of numbers");
        out.assign(v.size(), 0.0);
        for (std::size_t i = 0; i < v.size(); ++i) read(v[i], path + "[" + std::to_string(i) + "]", out[i]);
    }
    template <std::size_t N>
    static void read(const json& v, const std::string& path, std::array<double, N>& out) {
        if (!v.is_array() || v.size() != N)
            throw ConfigError(path, "expected an array of " + std::to_string(N) + " numbers");
        for (std::size_t i = 0; i < N; ++i) read(v[i], path + "[" + std::to_string(i) + "]", out[i]);
    }
    static void read(const json& v, const std::string& path, std::array<std::pair<double, double>, 2>& out) {
        if (!v.is_array() || v.size() != 2) throw ConfigError(path, "expected two {z, beta_location} objects");
        for (std::size_t i = 0; i < 2; ++i) {
            Reader r(v[i], path + "[" + std::to_string(i) + "]");
            r.get("z", out[i].first);
            r.get("beta_location", out[i].second);
            r.finish();
        }
    }
    static void read(const json& v, const std::string& path, Bounds& out) {
        Reader r(v, path);
        r.get("lower", out.lower);
        r.get("upper", out.upper);
        r.finish();
    }
    static void read(const json& v, const std::string& path, std::vector<PolicyKind>& out) {
        if (!v.is_array()) throw ConfigError(path, "expected an array of policy names");
        out.clear();
        for (std::size_t i = 0; i < v.size(); ++i) {
            std::string name;
            read(v[i], path + "[" + std::to_string(i) + "]", name);
            try {
                out.push_back(parse_policy(name));
            } catch (const std::invalid_argument& e) {
                throw ConfigError(path + "[" + std::to_string(i) + "]", e.what());
            }
        }
    }
    static void read(const json& v, const std::string& path, std::vector<PopulationSetting>& out) {
        if (!v.is_array()) throw ConfigError(path, "expected an array of setting names");
        out.clear();
        for (std::size_t i = 0; i < v.size(); ++i) {
            std::string name;
            read(v[i], path + "[" + std::to_string(i) + "]", name);
            try {
                out.push_back(parse_setting(name));
            } catch (const std::invalid_argument& e) {
                throw ConfigError(path + "[" + std::to_string(i) + "]", e.what());
            }
        }
    }

    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

void read_trial(Reader& r, TrialConfig& t) {
    r.get("n_users", t.n_users);
    r.get("weeks_per_user", t.weeks_per_user);
    r.get("trial_weeks", t.trial_weeks);
    r.get("decision_times_per_day", t.decision_times_per_day);
    r.get("availability_prob", t.availability_prob);
    r.get("burden", t.burden);
    r.get("n_trials", t.n_trials);
    r.get("base_seed", t.base_seed);
    r.get("recruitment", t.recruitment);
    r.get("start_month", t.start_month);
    r.get("posterior_update_days", t.posterior_update_days);
    r.get("hyperparameter_update_days", t.hyperparameter_update_days);
    r.object("clip", [&](Reader& c) {
        c.get("lo", t.clip.lo);
        c.get("hi", t.clip.hi);
    });
    r.get("forgetting", t.forgetting);
    r.get("fit_hyperparameters", t.fit_hyperparameters);
    r.object("fit", [&](Reader& f) {
        std::uint64_t min_obs = t.fit.min_observations;
        f.get("min_observations", min_obs);
        t.fit.min_observations = std::size_t(min_obs);
        f.get("restarts", t.fit.restarts);
        f.get("max_evaluations", t.fit.max_evaluations);
        f.get("tolerance", t.fit.tolerance);
        f.get("restart_spread", t.fit.restart_spread);
        f.get("seed", t.fit.seed);
    });
    r.get("variance_bounds", t.variance_bounds);
    r.get("noise_bounds", t.noise_bounds);
    r.get("lengthscale_bounds", t.lengthscale_bounds);
    r.object("prior", [&](Reader& p) {
        p.get("intercept_mean", t.prior.intercept_mean);
        p.get("baseline_var", t.prior.baseline_var);
        p.get("treatment_var", t.prior.treatment_var);
        p.get("random_effect_var", t.prior.random_effect_var);
        p.get("noise_var", t.prior.noise_var);
        p.get("time_effect_var", t.prior.time_effect_var);
        p.get("time_lengthscale", t.prior.time_lengthscale);
    });
    r.object("effects", [&](Reader& e) {
        e.get("beta", t.effects.beta);
        e.get("smooth_z_variance", t.effects.smooth_z_variance);
        e.get("smooth_location_variance", t.effects.smooth_location_variance);
        e.get("burden", t.effects.burden);
        e.get("bimodal", t.effects.bimodal);
    });
    r.object("corpus", [&](Reader& c) {
        c.get("users", t.corpus.users);
        c.get("days", t.corpus.days);
        c.get("windows_per_day", t.corpus.windows_per_day);
        c.get("seed", t.corpus.seed);
        c.get("group_gap", t.corpus.group_gap);
    });
}

}  // namespace

void RunConfig::validate() const {
    if (policies.empty()) throw ConfigError("policies", "at least one policy is required");
    if (settings.empty()) throw ConfigError("settings", "at least one setting is required");
    if (out_dir.empty()) throw ConfigError("out_dir", "must not be empty");
    if (jobs < 1) throw ConfigError("jobs", "must be at least 1");
    try {
        trial.validate();
    } catch (const std::invalid_argument& e) {
        // TrialConfig messages read "field: reason".
        const std::string what = e.what();
        const auto colon = what.find(": ");
        if (colon == std::string::npos) throw ConfigError("trial", what);
        throw ConfigError("trial." + what.substr(0, colon), what.substr(colon + 2));
    }
}

std::string to_json_string(const RunConfig& config) {
    json policies = json::array(), settings = json::array();
    for (auto p : config.policies) policies.push_back(std::string(to_string(p)));
    for (auto s : config.settings) settings.push_back(to_string(s));
    const json j = {{"policies", policies},
                    {"settings", settings},
                    {"out_dir", config.out_dir},
                    {"jobs", config.jobs},
                    {"trial", trial_json(config.trial)}};
    return j.dump(2);
}

RunConfig run_config_from_json(const std::string& text, RunConfig defaults) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError("<root>", std::string("invalid JSON: ") + e.what());
    }
    RunConfig config = std::move(defaults);
    Reader r(j, "");
    r.get("policies", config.policies);
    r.get("settings", config.settings);
    r.get("out_dir", config.out_dir);
    r.get("jobs", config.jobs);
    r.object("trial", [&](Reader& t) { read_trial(t, config.trial); });
    r.finish();
    return config;
}

RunConfig load_run_config(const std::filesystem::path& path, RunConfig defaults) {
    std::ifstream in(path);
    if (!in) throw ConfigError("<file>", "cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return run_config_from_json(buf.str(), std::move(defaults));
}

}  // namespace ipool
