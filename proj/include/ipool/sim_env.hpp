#pragma once

#include "ipool/types.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ipool {

// ---------------------------------------------------------------------------
// Historical corpus

/// Fields a corpus query can condition on.
enum class Field : int {
    Group = 0,
    TimeOfDay,
    DayOfWeek,
    Month,
    Temperature,
    Location,
    PriorActivity,
    Action,
    PrevTemperature,  // -1 when the record is the first of its series
    PrevLocation,
};
inline constexpr int kFieldCount = 10;

const char* field_name(Field f);

/// Target of a state_functions query: any categorical field or the step count.
enum class Target { Temperature, Location, LogSteps };

struct CorpusRecord {
    int user = 0;
    int day = 0;
    int window = 0;  // decision window within the day
    std::array<int, kFieldCount> fields{};
    double log_steps = 0.0;

    int operator[](Field f) const { return fields[std::size_t(f)]; }
    int& operator[](Field f) { return fields[std::size_t(f)]; }
};

/// Conjunction of field = value constraints; an empty context matches all.
using Context = std::vector<std::pair<Field, int>>;

struct CorpusConfig {
    int users = 40;
    int days = 42;
    int windows_per_day = 5;
    std::uint64_t seed = 20190501;
    /// Mean log-step difference of the high-activity group over the low one.
    double group_gap = 0.5;
};

class SyntheticCorpus {
public:
    SyntheticCorpus() = default;
    explicit SyntheticCorpus(std::vector<CorpusRecord> records);

    const std::vector<CorpusRecord>& records() const { return records_; }
    std::size_t size() const { return records_.size(); }

    static bool matches(const CorpusRecord& r, const Context& ctx);
    std::size_t count(const Context& ctx) const;
    double median_log_steps() const { return median_; }

    void write_csv(std::ostream& out) const;
    static SyntheticCorpus read_csv(std::istream& in);

private:
    std::vector<CorpusRecord> records_;
    double median_ = 0.0;
};

/// Two activity groups (1 = low, 2 = high), 30-minute log step counts after
/// each decision window, persistent temperature and location chains.
SyntheticCorpus generate_corpus(const CorpusConfig& config, std::mt19937_64& rng);

/// All `target` values over records matching `ctx` exactly (possibly empty).
std::vector<double> state_functions(const SyntheticCorpus& corpus, const Context& ctx, Target target);

class NoMatchError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// `ctx` itself if it has more than `threshold` records, otherwise the
/// largest-count sub-context of the largest size that clears the threshold.
/// Ties go to the first subset in lexicographic order of retained positions.
Context find_match(const SyntheticCorpus& corpus, const Context& ctx, std::size_t threshold = 30);

// ---------------------------------------------------------------------------
// State generators

/// Position on the trial calendar.
struct Timestamp {
    int day = 0;       // trial day, 0-based
    double hour = 9.0; // clock hour of the tick start
    int weekday = 0;   // 0 = Monday
    int month = 0;     // 0..11

    std::uint8_t time_of_day() const { return hour >= 15.0 ? 1 : 0; }
    std::uint8_t day_of_week() const { return weekday >= 5 ? 1 : 0; }
};

/// Probability of "hot" given the calendar context (and the previous
/// temperature when present), from matched corpus frequencies.
double temperature_probability(const SyntheticCorpus& corpus, const Timestamp& ts,
                               std::optional<std::uint8_t> prev_temperature);
std::uint8_t get_temperature(const SyntheticCorpus& corpus, const Timestamp& ts,
                             std::optional<std::uint8_t> prev_temperature, std::mt19937_64& rng);

double location_probability(const SyntheticCorpus& corpus, const Timestamp& ts, int group,
                            std::optional<std::uint8_t> prev_location);
std::uint8_t get_location(const SyntheticCorpus& corpus, const Timestamp& ts, int group,
                          std::optional<std::uint8_t> prev_location, std::mt19937_64& rng);

struct StepStats {
    double mu = 0.0;
    double sigma = 0.0;
};

/// Mean and (population) standard deviation of matched log step counts.
StepStats step_statistics(const SyntheticCorpus& corpus, const Timestamp& ts, int group, std::uint8_t temperature,
                          std::uint8_t location, std::uint8_t prior_activity);

/// Every lookup the simulator needs, resolved once against the corpus.
class EnvironmentTables {
public:
    explicit EnvironmentTables(const SyntheticCorpus& corpus);

    double temperature_probability(const Timestamp& ts, std::optional<std::uint8_t> prev) const;
    double location_probability(const Timestamp& ts, int group, std::optional<std::uint8_t> prev) const;
    StepStats step_statistics(std::uint8_t tod, std::uint8_t dow, int group, std::uint8_t temperature,
                              std::uint8_t location, std::uint8_t prior_activity) const;
    double step_median() const { return median_; }

private:
    std::vector<double> temperature_;  // [tod][dow][month][prev+1]
    std::vector<double> location_;     // [tod][dow][group-1][prev+1]
    std::vector<StepStats> steps_;     // [group-1][tod][dow][temp][prior][loc]
    double median_ = 0.0;
};

// ---------------------------------------------------------------------------
// Reward model

enum class PopulationSetting { Homogeneous, BiModal, Smooth };

std::string to_string(PopulationSetting s);
PopulationSetting parse_setting(const std::string& name);

/// Treatment-effect parameters of the generative model.
struct EffectConfig {
    /// Coefficients on (1, tod, dow, prior, location, temperature); the
    /// location entry is replaced per user.
    std::array<double, kStateDim> beta{0.1, -0.4, 0.75, 0.0, 0.0, 0.0};
    /// Per-group (Z, beta_location) in the bi-modal setting.
    std::array<std::pair<double, double>, 2> bimodal{{{0.1, 0.1}, {-0.3, -0.1}}};
    double smooth_z_variance = 0.35;
    double smooth_location_variance = 0.1;
    /// Additive effect by completed week in study (weeks 0..11).
    std::array<double, 12> burden{0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -0.2, -0.3, -0.4, -0.5, -0.6};
};

struct UserProfile {
    int group = 1;  // 1 or 2
    double z = 0.0;
    std::array<double, kStateDim> beta{};
};

UserProfile sample_user_profile(PopulationSetting setting, const EffectConfig& config, std::mt19937_64& rng);

/// S' beta_i + Z_i (+ burden for the completed week).
double treatment_effect(const ContextState& state, const UserProfile& profile, int week, bool burden,
                        const EffectConfig& config);

/// Generative optimum: send when the effect is non-negative.
inline Action optimal_action(double effect) {
    return effect >= 0.0 ? Action::ActivitySuggestion : Action::AntiSedentary;
}

double baseline_reward(const StepStats& stats, std::mt19937_64& rng);
double treated_reward(const StepStats& stats, const ContextState& state, Action action, const UserProfile& profile,
                      int week, bool burden, const EffectConfig& config, std::mt19937_64& rng);

}  // namespace ipool
