#pragma once

#include "ipool/policies.hpp"
#include "ipool/sim_env.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace ipool {

/// Initial hyperparameters handed to every learner.
struct PriorConfig {
    /// Prior mean of the baseline intercept; unset means the corpus mean log step count.
    std::optional<double> intercept_mean;
    double baseline_var = 1.0;   // Sigma_w diagonal, first block
    double treatment_var = 0.1;  // Sigma_w diagonal, second and third blocks
    double random_effect_var = 0.1;
    double noise_var = 1.0;
    double time_effect_var = 0.05;
    double time_lengthscale = 4.0;  // weeks^2
};

struct TrialConfig {
    int n_users = 32;
    int weeks_per_user = 10;
    int trial_weeks = 15;
    int decision_times_per_day = 5;
    double availability_prob = 0.8;
    PopulationSetting setting = PopulationSetting::Smooth;
    PolicyKind policy = PolicyKind::IntelligentPooling;
    bool burden = false;
    int n_trials = 50;
    std::uint64_t base_seed = 0;
    /// Share of users joining in each of the first weeks.
    std::vector<double> recruitment{0.1, 0.3, 0.15, 0.15, 0.15, 0.15};
    int start_month = 3;
    int posterior_update_days = 1;
    int hyperparameter_update_days = 7;
    ClipBounds clip;
    double forgetting = 0.03;
    bool fit_hyperparameters = true;
    FitOptions fit;
    Bounds variance_bounds{1e-6, 1e3};
    Bounds noise_bounds{1e-6, 1e3};
    Bounds lengthscale_bounds{1e-2, 1e6};
    PriorConfig prior;
    EffectConfig effects;
    CorpusConfig corpus;

    /// Throws std::invalid_argument naming the offending field.
    void validate() const;
    /// Clock hours of the decision times: 9:00, 11:00, ...
    std::vector<double> decision_hours() const;
};

/// State entries that carry random effects and time effects.
Hyperparameters initial_hyperparameters(const TrialConfig& config, const FeatureLayout& layout,
                                        double corpus_mean_log_steps);
HyperparamBounds hyperparameter_bounds(const TrialConfig& config, const FeatureLayout& layout);

/// New users per week: cumulative shares of `recruitment`, rounded.
std::vector<int> recruitment_schedule(const TrialConfig& config);

struct TrialRecord {
    int trial = 0;
    UserId user = 0;
    int group = 1;
    int cohort = 0;          // recruitment week
    int day = 0;             // trial day
    int decision_time = 0;   // slot within the day
    int week = 0;            // user's own week in study, 0-based
    int decision_index = -1; // counts available points per user; -1 when unavailable
    ContextState state;
    bool available = false;
    Action action = Action::AntiSedentary;  // meaningful only when available
    double probability = 0.0;               // clipped; meaningful only when available
    double reward = 0.0;
    double effect = 0.0;
    double regret = 0.0;
};

/// What a scripted decision rule sees; used for oracle and fixed policies.
struct DecisionView {
    UserId user;
    int week;
    ContextState state;
    double effect;
};
using DecisionRule = std::function<std::pair<Action, double>(const DecisionView&)>;

/// Corpus-derived lookups plus its summary statistics, shared read-only.
struct Environment {
    SyntheticCorpus corpus;
    EnvironmentTables tables;
    double mean_log_steps;

    explicit Environment(SyntheticCorpus c);
    static Environment generate(const CorpusConfig& config);
};

struct TrialOutput {
    std::vector<TrialRecord> records;
    int hyperparameter_warnings = 0;
    std::vector<Hyperparameters> fitted;  // one entry per hyperparameter update
};

/// Simulates one full trial. A non-null `rule` replaces the learning policy.
TrialOutput run_trial(const TrialConfig& config, const Environment& env, int trial,
                      const DecisionRule* rule = nullptr);

/// Trials 0..n_trials-1 on `jobs` worker threads, returned in trial order.
/// The first failure (lowest trial index) is rethrown after all workers stop.
std::vector<TrialOutput> run_trials(const TrialConfig& config, const Environment& env, int jobs = 1);

// ---------------------------------------------------------------------------
// Aggregation

struct Fraction {
    double sends = 0.0;
    double decisions = 0.0;
    double value() const { return decisions > 0.0 ? sends / decisions : 0.0; }
};

/// Per-trial reductions; everything the cross-trial tables need.
struct TrialSummary {
    int n_users = 0;
    double total_regret = 0.0;
    std::vector<double> week_regret_sum, week_decisions;  // by week in study
    std::array<Fraction, 2> group_send{};
    std::vector<Fraction> cohort_last_week_send;  // by cohort
    std::size_t decision_points = 0, available_points = 0;

    double cumulative_regret() const { return n_users ? total_regret / n_users : 0.0; }
};

TrialSummary summarize(std::span<const TrialRecord> records, const TrialConfig& config);

struct MeanSe {
    double mean = 0.0;
    double se = 0.0;
    int n = 0;
};

struct AggregateTable {
    int n_trials = 0;
    std::vector<MeanSe> week_regret;          // mean per-decision regret by week in study
    MeanSe cumulative_regret;                 // per user
    std::array<MeanSe, 2> group_send;         // by group 1, 2
    std::vector<MeanSe> cohort_last_week_send;
    double availability_rate = 0.0;
};

/// Streaming fold over trial summaries; mean and standard error across trials.
class Aggregator {
public:
    void add(const TrialSummary& s);
    AggregateTable table() const;

private:
    std::vector<TrialSummary> trials_;
};

AggregateTable aggregate(std::span<const std::vector<TrialRecord>> trials, const TrialConfig& config);

}  // namespace ipool
