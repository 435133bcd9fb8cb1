#include "ipool/sim_env.hpp"

#include "ipool/csv.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>

namespace ipool {

namespace {

constexpr const char* kFieldNames[kFieldCount] = {"group",    "time_of_day",      "day_of_week",  "month",
                                                  "temperature", "location",     "prior_activity", "action",
                                                  "prev_temperature", "prev_location"};

double median_of(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

const char* field_name(Field f) { return kFieldNames[int(f)]; }

SyntheticCorpus::SyntheticCorpus(std::vector<CorpusRecord> records) : records_(std::move(records)) {
    std::vector<double> steps;
    steps.reserve(records_.size());
    for (const auto& r : records_) {
        if (r.log_steps < 0.0) throw std::invalid_argument("corpus: negative log step count");
        steps.push_back(r.log_steps);
    }
    median_ = median_of(std::move(steps));
}

bool SyntheticCorpus::matches(const CorpusRecord& r, const Context& ctx) {
    for (const auto& [f, v] : ctx)
        if (r[f] != v) return false;
    return true;
}

std::size_t SyntheticCorpus::count(const Context& ctx) const {
    return std::size_t(std::count_if(records_.begin(), records_.end(),
                                     [&](const CorpusRecord& r) { return matches(r, ctx); }));
}

void SyntheticCorpus::write_csv(std::ostream& out) const {
    csv::Row header{"user", "day", "window"};
    for (auto name : kFieldNames) header.emplace_back(name);
    header.emplace_back("log_steps");
    csv::write_row(out, header);
    for (const auto& r : records_) {
        csv::Row row{std::to_string(r.user), std::to_string(r.day), std::to_string(r.window)};
        for (int v : r.fields) row.push_back(std::to_string(v));
        row.push_back(csv::format_number(r.log_steps));
        csv::write_row(out, row);
    }
}

SyntheticCorpus SyntheticCorpus::read_csv(std::istream& in) {
    const csv::Table t = csv::read_table(in);
    const std::size_t cu = t.column("user"), cd = t.column("day"), cw = t.column("window"),
                      cs = t.column("log_steps");
    std::array<std::size_t, kFieldCount> cf{};
    for (int f = 0; f < kFieldCount; ++f) cf[std::size_t(f)] = t.column(kFieldNames[f]);
    std::vector<CorpusRecord> records;
    records.reserve(t.rows.size());
    for (const auto& row : t.rows) {
        CorpusRecord r;
        r.user = int(csv::parse_integer(row[cu], "user"));
        r.day = int(csv::parse_integer(row[cd], "day"));
        r.window = int(csv::parse_integer(row[cw], "window"));
        for (int f = 0; f < kFieldCount; ++f)
            r.fields[std::size_t(f)] = int(csv::parse_integer(row[cf[std::size_t(f)]], kFieldNames[f]));
        r.log_steps = csv::parse_double(row[cs], "log_steps");
        records.push_back(r);
    }
    return SyntheticCorpus(std::move(records));
}

SyntheticCorpus generate_corpus(const CorpusConfig& config, std::mt19937_64& rng) {
    if (config.users < 2 || config.days < 1 || config.windows_per_day < 1) {
        throw std::invalid_argument("corpus needs at least 2 users, 1 day and 1 window");
    }
    std::uniform_int_distribution<int> pick_month(0, 11), pick_weekday(0, 6);
    std::normal_distribution<double> z;
    auto coin = [&](double p) { return std::bernoulli_distribution(p)(rng) ? 1 : 0; };

    std::vector<CorpusRecord> records;
    records.reserve(std::size_t(config.users) * std::size_t(config.days) * std::size_t(config.windows_per_day));
    for (int u = 0; u < config.users; ++u) {
        const int group = u < config.users / 2 ? 1 : 2;
        const int start_month = pick_month(rng), start_weekday = pick_weekday(rng);
        int prev_temp = -1, prev_loc = -1;
        double prev_steps = -1.0;
        for (int d = 0; d < config.days; ++d) {
            const int month = (start_month + d / 30) % 12;
            const int dow = (start_weekday + d) % 7 >= 5 ? 1 : 0;
            for (int w = 0; w < config.windows_per_day; ++w) {
                const int tod = 5 * w >= 3 * config.windows_per_day ? 1 : 0;
                CorpusRecord r;
                r.user = u;
                r.day = d;
                r.window = w;
                r[Field::Group] = group;
                r[Field::TimeOfDay] = tod;
                r[Field::DayOfWeek] = dow;
                r[Field::Month] = month;
                r[Field::PrevTemperature] = prev_temp;
                r[Field::PrevLocation] = prev_loc;

                // Seasonal temperature with persistence.
                const double seasonal =
                    0.5 + 0.25 * std::cos(2.0 * std::numbers::pi * (month - 6) / 12.0) + (tod ? 0.05 : -0.05);
                const double p_hot = prev_temp < 0 ? seasonal : 0.4 * seasonal + 0.6 * prev_temp;
                r[Field::Temperature] = coin(std::clamp(p_hot, 0.05, 0.95));

                // Location stays in [0.35, 0.65] so every cell is well covered.
                double p_loc = 0.5 - 0.05 * tod + 0.05 * dow + (group == 1 ? 0.03 : -0.03);
                if (prev_loc >= 0) p_loc += prev_loc ? 0.1 : -0.1;
                r[Field::Location] = coin(p_loc);

                r[Field::PriorActivity] = coin(prev_steps < 0.0 ? 0.5 : (prev_steps > 3.0 ? 0.65 : 0.35));
                r[Field::Action] = coin(0.6);

                const double mu = 2.4 + (group == 2 ? config.group_gap : 0.0) - 0.2 * tod - 0.3 * dow -
                                  0.15 * r[Field::Temperature] + 0.5 * r[Field::PriorActivity] +
                                  0.2 * r[Field::Location];
                const double sigma =
                    0.9 + 0.05 * (tod + dow + r[Field::Temperature] + r[Field::PriorActivity]);
                r.log_steps = std::max(0.0, mu + sigma * z(rng));

                prev_temp = r[Field::Temperature];
                prev_loc = r[Field::Location];
                prev_steps = r.log_steps;
                records.push_back(r);
            }
        }
    }
    return SyntheticCorpus(std::move(records));
}

std::vector<double> state_functions(const SyntheticCorpus& corpus, const Context& ctx, Target target) {
    std::vector<double> out;
    for (const auto& r : corpus.records()) {
        if (!SyntheticCorpus::matches(r, ctx)) continue;
        switch (target) {
            case Target::Temperature: out.push_back(r[Field::Temperature]); break;
            case Target::Location: out.push_back(r[Field::Location]); break;
            case Target::LogSteps: out.push_back(r.log_steps); break;
        }
    }
    return out;
}

Context find_match(const SyntheticCorpus& corpus, const Context& ctx, std::size_t threshold) {
    if (corpus.count(ctx) > threshold) return ctx;
    const std::size_t d = ctx.size();
    for (std::size_t k = d; k-- > 1;) {
        // Enumerate k-subsets of positions in lexicographic order.
        std::vector<std::size_t> idx(k);
        for (std::size_t j = 0; j < k; ++j) idx[j] = j;
        Context best;
        std::size_t best_count = 0;
        bool have = false;
        while (true) {
            Context sub;
            for (auto j : idx) sub.push_back(ctx[j]);
            const std::size_t c = corpus.count(sub);
            if (!have || c > best_count) {
                best = std::move(sub);
                best_count = c;
                have = true;
            }
            std::size_t pos = k;
            while (pos > 0 && idx[pos - 1] == d - k + pos - 1) --pos;
            if (pos == 0) break;
            ++idx[pos - 1];
            for (std::size_t j = pos; j < k; ++j) idx[j] = idx[j - 1] + 1;
        }
        if (best_count > threshold) return best;
    }
    std::string desc;
    for (const auto& [f, v] : ctx) desc += std::string(desc.empty() ? "" : ", ") + field_name(f) + "=" + std::to_string(v);
    throw NoMatchError("no sub-context of {" + desc + "} has more than " + std::to_string(threshold) + " records");
}

namespace {

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / double(v.size());
}

double matched_frequency(const SyntheticCorpus& corpus, const Context& ctx, Target target) {
    const auto values = state_functions(corpus, find_match(corpus, ctx), target);
    return mean_of(values);
}

Context temperature_context(std::uint8_t tod, std::uint8_t dow, int month, std::optional<std::uint8_t> prev) {
    Context ctx{{Field::TimeOfDay, tod}, {Field::DayOfWeek, dow}, {Field::Month, month}};
    if (prev) ctx.emplace_back(Field::PrevTemperature, *prev);
    return ctx;
}

Context location_context(std::uint8_t tod, std::uint8_t dow, int group, std::optional<std::uint8_t> prev) {
    Context ctx{{Field::TimeOfDay, tod}, {Field::DayOfWeek, dow}, {Field::Group, group}};
    if (prev) ctx.emplace_back(Field::PrevLocation, *prev);
    return ctx;
}

StepStats steps_for(const SyntheticCorpus& corpus, std::uint8_t tod, std::uint8_t dow, int group,
                    std::uint8_t temperature, std::uint8_t location, std::uint8_t prior) {
    const Context ctx{{Field::Group, group},          {Field::TimeOfDay, tod},     {Field::DayOfWeek, dow},
                      {Field::Temperature, temperature}, {Field::PriorActivity, prior}, {Field::Location, location}};
    const auto values = state_functions(corpus, find_match(corpus, ctx), Target::LogSteps);
    const double mu = mean_of(values);
    double ss = 0.0;
    for (double x : values) ss += (x - mu) * (x - mu);
    return {mu, std::sqrt(ss / double(values.size()))};
}

void check_group(int group) {
    if (group != 1 && group != 2) throw std::invalid_argument("group must be 1 or 2");
}

}  // namespace

double temperature_probability(const SyntheticCorpus& corpus, const Timestamp& ts,
                               std::optional<std::uint8_t> prev_temperature) {
    return matched_frequency(corpus, temperature_context(ts.time_of_day(), ts.day_of_week(), ts.month, prev_temperature),
                             Target::Temperature);
}

std::uint8_t get_temperature(const SyntheticCorpus& corpus, const Timestamp& ts,
                             std::optional<std::uint8_t> prev_temperature, std::mt19937_64& rng) {
    return std::bernoulli_distribution(temperature_probability(corpus, ts, prev_temperature))(rng) ? 1 : 0;
}

double location_probability(const SyntheticCorpus& corpus, const Timestamp& ts, int group,
                            std::optional<std::uint8_t> prev_location) {
    check_group(group);
    return matched_frequency(corpus, location_context(ts.time_of_day(), ts.day_of_week(), group, prev_location),
                             Target::Location);
}

std::uint8_t get_location(const SyntheticCorpus& corpus, const Timestamp& ts, int group,
                          std::optional<std::uint8_t> prev_location, std::mt19937_64& rng) {
    return std::bernoulli_distribution(location_probability(corpus, ts, group, prev_location))(rng) ? 1 : 0;
}

StepStats step_statistics(const SyntheticCorpus& corpus, const Timestamp& ts, int group, std::uint8_t temperature,
                          std::uint8_t location, std::uint8_t prior_activity) {
    check_group(group);
    return steps_for(corpus, ts.time_of_day(), ts.day_of_week(), group, temperature, location, prior_activity);
}

EnvironmentTables::EnvironmentTables(const SyntheticCorpus& corpus) : median_(corpus.median_log_steps()) {
    const std::optional<std::uint8_t> prevs[] = {std::nullopt, 0, 1};
    temperature_.resize(2 * 2 * 12 * 3);
    location_.resize(2 * 2 * 2 * 3);
    steps_.resize(2 * 2 * 2 * 2 * 2 * 2);
    for (std::uint8_t tod = 0; tod < 2; ++tod) {
        for (std::uint8_t dow = 0; dow < 2; ++dow) {
            for (int month = 0; month < 12; ++month)
                for (int p = 0; p < 3; ++p)
                    temperature_[std::size_t(((tod * 2 + dow) * 12 + month) * 3 + p)] = matched_frequency(
                        corpus, temperature_context(tod, dow, month, prevs[p]), Target::Temperature);
            for (int g = 1; g <= 2; ++g)
                for (int p = 0; p < 3; ++p)
                    location_[std::size_t(((tod * 2 + dow) * 2 + (g - 1)) * 3 + p)] =
                        matched_frequency(corpus, location_context(tod, dow, g, prevs[p]), Target::Location);
        }
    }
    for (int g = 1; g <= 2; ++g)
        for (std::uint8_t tod = 0; tod < 2; ++tod)
            for (std::uint8_t dow = 0; dow < 2; ++dow)
                for (std::uint8_t temp = 0; temp < 2; ++temp)
                    for (std::uint8_t prior = 0; prior < 2; ++prior)
                        for (std::uint8_t loc = 0; loc < 2; ++loc)
                            steps_[std::size_t(((((g - 1) * 2 + tod) * 2 + dow) * 2 + temp) * 4 + prior * 2 + loc)] =
                                steps_for(corpus, tod, dow, g, temp, loc, prior);
}

double EnvironmentTables::temperature_probability(const Timestamp& ts, std::optional<std::uint8_t> prev) const {
    const int p = prev ? 1 + *prev : 0;
    return temperature_[std::size_t(((ts.time_of_day() * 2 + ts.day_of_week()) * 12 + ts.month) * 3 + p)];
}

double EnvironmentTables::location_probability(const Timestamp& ts, int group,
                                               std::optional<std::uint8_t> prev) const {
    check_group(group);
    const int p = prev ? 1 + *prev : 0;
    return location_[std::size_t(((ts.time_of_day() * 2 + ts.day_of_week()) * 2 + (group - 1)) * 3 + p)];
}

StepStats EnvironmentTables::step_statistics(std::uint8_t tod, std::uint8_t dow, int group, std::uint8_t temperature,
                                             std::uint8_t location, std::uint8_t prior_activity) const {
    check_group(group);
    return steps_[std::size_t(((((group - 1) * 2 + tod) * 2 + dow) * 2 + temperature) * 4 + prior_activity * 2 +
                              location)];
}

std::string to_string(PopulationSetting s) {
    switch (s) {
        case PopulationSetting::Homogeneous: return "homogeneous";
        case PopulationSetting::BiModal: return "bimodal";
        case PopulationSetting::Smooth: return "smooth";
    }
    throw std::logic_error("unknown population setting");
}

PopulationSetting parse_setting(const std::string& name) {
    for (auto s : {PopulationSetting::Homogeneous, PopulationSetting::BiModal, PopulationSetting::Smooth})
        if (name == to_string(s)) return s;
    throw std::invalid_argument("unknown population setting '" + name + "' (expected homogeneous, bimodal or smooth)");
}

UserProfile sample_user_profile(PopulationSetting setting, const EffectConfig& config, std::mt19937_64& rng) {
    UserProfile p;
    p.group = std::bernoulli_distribution(0.5)(rng) ? 2 : 1;
    p.beta = config.beta;
    double location = 0.0;
    switch (setting) {
        case PopulationSetting::Homogeneous:
            break;
        case PopulationSetting::BiModal:
            p.z = config.bimodal[std::size_t(p.group - 1)].first;
            location = config.bimodal[std::size_t(p.group - 1)].second;
            break;
        case PopulationSetting::Smooth: {
            std::normal_distribution<double> z;
            p.z = std::sqrt(config.smooth_z_variance) * z(rng);
            location = std::sqrt(config.smooth_location_variance) * z(rng);
            break;
        }
    }
    p.beta[kLocation] = location;
    return p;
}

double treatment_effect(const ContextState& state, const UserProfile& profile, int week, bool burden,
                        const EffectConfig& config) {
    const StateVector s = assemble(state);
    double effect = profile.z;
    for (std::size_t j = 0; j < kStateDim; ++j) effect += s[j] * profile.beta[j];
    if (burden) effect += config.burden[std::size_t(std::clamp(week, 0, int(config.burden.size()) - 1))];
    return effect;
}

double baseline_reward(const StepStats& stats, std::mt19937_64& rng) {
    if (stats.sigma <= 0.0) return stats.mu;
    return std::normal_distribution<double>(stats.mu, stats.sigma)(rng);
}

double treated_reward(const StepStats& stats, const ContextState& state, Action action, const UserProfile& profile,
                      int week, bool burden, const EffectConfig& config, std::mt19937_64& rng) {
    const double base = baseline_reward(stats, rng);
    if (action == Action::AntiSedentary) return base;
    return base + treatment_effect(state, profile, week, burden, config);
}

}  // namespace ipool
