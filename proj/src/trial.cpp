#include "ipool/trial.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <sstream>
#include <thread>

namespace ipool {

namespace {

void require(bool ok, const char* field, const char* what) {
    if (!ok) throw std::invalid_argument(std::string(field) + ": " + what);
}

std::mt19937_64 stream(std::uint64_t base, int trial, std::uint64_t id) {
    std::seed_seq seq{std::uint32_t(base), std::uint32_t(base >> 32), std::uint32_t(trial), std::uint32_t(id),
                      std::uint32_t(id >> 32)};
    return std::mt19937_64(seq);
}

enum StreamId : std::uint64_t {
    kProfiles = 1,
    kTemperatureStream = 2,
    kHyperparameters = 3,
    kUserEnvironment = 1000,
    kUserPolicy = 2000,
};

struct ActiveUser {
    UserId id;
    UserProfile profile;
    int cohort;
    int start_day;
    std::mt19937_64 env_rng;
    std::mt19937_64 policy_rng;
    std::optional<std::uint8_t> location;
    std::uint8_t prior_activity = 0;
    int decisions = 0;
};

MeanSe mean_se(const std::vector<double>& xs) {
    MeanSe out;
    out.n = int(xs.size());
    if (xs.empty()) return out;
    out.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / double(xs.size());
    if (xs.size() > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - out.mean) * (x - out.mean);
        out.se = std::sqrt(ss / double(xs.size() - 1) / double(xs.size()));
    }
    return out;
}

}  // namespace

void TrialConfig::validate() const {
    require(n_users >= 1, "n_users", "must be at least 1");
    require(weeks_per_user >= 1, "weeks_per_user", "must be at least 1");
    require(decision_times_per_day >= 1 && decision_times_per_day <= 5, "decision_times_per_day",
            "must be in [1, 5] (two hours apart between 9:00 and 19:00)");
    require(availability_prob > 0.0 && availability_prob <= 1.0, "availability_prob", "must be in (0, 1]");
    require(n_trials >= 1, "n_trials", "must be at least 1");
    require(!recruitment.empty() && recruitment.size() <= 6, "recruitment",
            "needs between 1 and 6 weekly shares (everyone joins by week six)");
    double total = 0.0;
    for (double r : recruitment) {
        require(r >= 0.0, "recruitment", "shares must be non-negative");
        total += r;
    }
    require(std::abs(total - 1.0) < 1e-9, "recruitment", "shares must sum to 1");
    require(trial_weeks >= int(recruitment.size()) - 1 + weeks_per_user, "trial_weeks",
            "must cover the last cohort's full stay");
    require(start_month >= 0 && start_month < 12, "start_month", "must be in [0, 11]");
    require(posterior_update_days >= 1, "posterior_update_days", "must be at least 1");
    require(hyperparameter_update_days >= 1, "hyperparameter_update_days", "must be at least 1");
    try {
        clip.validate();
    } catch (const std::invalid_argument& e) {
        require(false, "clip", e.what());
    }
    require(forgetting > 0.0 && forgetting < 1.0, "forgetting", "must be in (0, 1)");
    require(prior.baseline_var > 0.0, "prior.baseline_var", "must be positive");
    require(prior.treatment_var > 0.0, "prior.treatment_var", "must be positive");
    require(prior.random_effect_var >= 0.0, "prior.random_effect_var", "must be non-negative");
    require(prior.noise_var > 0.0, "prior.noise_var", "must be positive");
    require(prior.time_effect_var >= 0.0, "prior.time_effect_var", "must be non-negative");
    require(prior.time_lengthscale > 0.0, "prior.time_lengthscale", "must be positive");
    for (auto [b, name] : {std::pair{variance_bounds, "variance_bounds"}, std::pair{noise_bounds, "noise_bounds"},
                           std::pair{lengthscale_bounds, "lengthscale_bounds"}}) {
        require(b.lower > 0.0 && b.lower < b.upper, name, "need 0 < lower < upper");
    }
    require(effects.smooth_z_variance >= 0.0, "effects.smooth_z_variance", "must be non-negative");
    require(effects.smooth_location_variance >= 0.0, "effects.smooth_location_variance", "must be non-negative");
    require(corpus.users >= 2 && corpus.days >= 1 && corpus.windows_per_day >= 1, "corpus",
            "needs at least 2 users, 1 day and 1 window");
}

std::vector<double> TrialConfig::decision_hours() const {
    std::vector<double> hours;
    for (int k = 0; k < decision_times_per_day; ++k) hours.push_back(9.0 + 2.0 * k);
    return hours;
}

Hyperparameters initial_hyperparameters(const TrialConfig& config, const FeatureLayout& layout,
                                        double corpus_mean_log_steps) {
    const auto p = Eigen::Index(layout.dim()), s = Eigen::Index(layout.state_dim());
    Hyperparameters hp;
    hp.prior_mean = Vector::Zero(p);
    hp.prior_mean[0] = config.prior.intercept_mean.value_or(corpus_mean_log_steps);
    Vector diag = Vector::Constant(p, config.prior.treatment_var);
    diag.head(s).setConstant(config.prior.baseline_var);
    hp.prior_cov = diag.asDiagonal();
    hp.random_effect_cov = Matrix::Zero(p, p);
    for (auto c : layout.random_effect_coordinates())
        hp.random_effect_cov(Eigen::Index(c), Eigen::Index(c)) = config.prior.random_effect_var;
    hp.noise_var = config.prior.noise_var;
    const HyperparamBounds b = hyperparameter_bounds(config, layout);
    Matrix dv = Matrix::Zero(p, p);
    for (auto c : b.time_effect_coords) dv(Eigen::Index(c), Eigen::Index(c)) = config.prior.time_effect_var;
    hp.time_effect_cov = dv;
    hp.time_lengthscale = config.prior.time_lengthscale;
    return hp;
}

HyperparamBounds hyperparameter_bounds(const TrialConfig& config, const FeatureLayout& layout) {
    HyperparamBounds b;
    b.random_effect_coords = layout.random_effect_coordinates();
    const std::size_t intercept[] = {kIntercept};
    for (auto c : layout.coordinates_of(intercept))
        if (c >= layout.state_dim()) b.time_effect_coords.push_back(c);  // treatment blocks only
    b.variance = config.variance_bounds;
    b.noise = config.noise_bounds;
    b.lengthscale = config.lengthscale_bounds;
    return b;
}

std::vector<int> recruitment_schedule(const TrialConfig& config) {
    // Round the cumulative share so the counts always sum to n_users.
    std::vector<int> counts;
    double share = 0.0;
    int assigned = 0;
    for (double r : config.recruitment) {
        share += r;
        const int upto = std::min(config.n_users, int(std::lround(share * config.n_users)));
        counts.push_back(upto - assigned);
        assigned = upto;
    }
    counts.back() += config.n_users - assigned;
    return counts;
}

Environment::Environment(SyntheticCorpus c) : corpus(std::move(c)), tables(corpus), mean_log_steps(0.0) {
    for (const auto& r : corpus.records()) mean_log_steps += r.log_steps;
    mean_log_steps /= double(std::max<std::size_t>(1, corpus.size()));
}

Environment Environment::generate(const CorpusConfig& config) {
    std::mt19937_64 rng(config.seed);
    return Environment(generate_corpus(config, rng));
}

TrialOutput run_trial(const TrialConfig& config, const Environment& env, int trial, const DecisionRule* rule) {
    config.validate();
    const FeatureLayout layout;
    Learner::Options opts;
    opts.clip = config.clip;
    opts.forgetting = config.forgetting;
    opts.fit_hyperparameters = config.fit_hyperparameters;
    opts.bounds = hyperparameter_bounds(config, layout);
    opts.fit = config.fit;
    Learner learner(config.policy, layout, initial_hyperparameters(config, layout, env.mean_log_steps), opts);

    // Recruitment and profiles.
    std::mt19937_64 profile_rng = stream(config.base_seed, trial, kProfiles);
    std::vector<ActiveUser> users;
    const auto schedule = recruitment_schedule(config);
    for (std::size_t cohort = 0; cohort < schedule.size(); ++cohort) {
        for (int k = 0; k < schedule[cohort]; ++k) {
            const UserId id = UserId(users.size());
            users.push_back({id, sample_user_profile(config.setting, config.effects, profile_rng), int(cohort),
                             int(cohort) * 7, stream(config.base_seed, trial, kUserEnvironment + std::uint64_t(id)),
                             stream(config.base_seed, trial, kUserPolicy + std::uint64_t(id)), std::nullopt, 0, 0});
        }
    }

    std::mt19937_64 temperature_rng = stream(config.base_seed, trial, kTemperatureStream);
    std::mt19937_64 hp_rng = stream(config.base_seed, trial, kHyperparameters);
    std::optional<std::uint8_t> temperature;
    const double median = env.tables.step_median();
    const auto decision_hours = config.decision_hours();
    const int stay = config.weeks_per_user * 7;

    TrialOutput out;
    History history(layout);
    out.records.reserve(std::size_t(config.n_users) * std::size_t(stay) * decision_hours.size());

    for (int day = 0; day < config.trial_weeks * 7; ++day) {
        std::vector<ActiveUser*> active;
        for (auto& u : users)
            if (day >= u.start_day && day < u.start_day + stay) active.push_back(&u);
        if (active.empty()) continue;

        if (!rule) {
            if (day > 0 && day % config.hyperparameter_update_days == 0) {
                const FitResult fit = learner.update_hyperparameters(history, hp_rng());
                if (fit.warning) ++out.hyperparameter_warnings;
                out.fitted.push_back(fit.hp);
            }
            if (day % config.posterior_update_days == 0) {
                std::vector<double> targets;
                for (auto* u : active) targets.push_back((day - u->start_day) / 7);
                std::sort(targets.begin(), targets.end());
                targets.erase(std::unique(targets.begin(), targets.end()), targets.end());
                try {
                    learner.refresh(history, targets);
                } catch (const FactorizationError& e) {
                    std::ostringstream msg;
                    msg << "trial " << trial << " (seed " << config.base_seed << ") day " << day << ": " << e.what();
                    throw FactorizationError(msg.str(), e.jitter());
                }
            }
        }

        Timestamp ts;
        ts.day = day;
        ts.weekday = day % 7;
        ts.month = (config.start_month + day / 30) % 12;

        // Thirty-minute ticks from 8:30 until the last one that starts before 19:00.
        for (double hour = 8.5; hour < 19.0; hour += 0.5) {
            ts.hour = hour;
            const auto slot = std::find(decision_hours.begin(), decision_hours.end(), hour);
            const bool decision_tick = slot != decision_hours.end();
            if (decision_tick) {
                const double p_hot = env.tables.temperature_probability(ts, temperature);
                temperature = std::bernoulli_distribution(p_hot)(temperature_rng) ? 1 : 0;
            }
            const std::uint8_t temp = temperature.value_or(0);
            for (auto* u : active) {
                const int week = (day - u->start_day) / 7;
                double steps;
                if (decision_tick) {
                    u->location = std::bernoulli_distribution(
                                      env.tables.location_probability(ts, u->profile.group, u->location))(u->env_rng)
                                      ? 1
                                      : 0;
                    TrialRecord rec;
                    rec.trial = trial;
                    rec.user = u->id;
                    rec.group = u->profile.group;
                    rec.cohort = u->cohort;
                    rec.day = day;
                    rec.decision_time = int(slot - decision_hours.begin());
                    rec.week = week;
                    rec.state = {ts.time_of_day(), ts.day_of_week(), temp, u->prior_activity, *u->location};
                    rec.available = std::bernoulli_distribution(config.availability_prob)(u->env_rng);
                    rec.effect = treatment_effect(rec.state, u->profile, week, config.burden, config.effects);
                    const StepStats stats = env.tables.step_statistics(rec.state.time_of_day, rec.state.day_of_week,
                                                                       u->profile.group, temp, *u->location,
                                                                       u->prior_activity);
                    if (rec.available) {
                        rec.decision_index = u->decisions++;
                        if (rule) {
                            std::tie(rec.action, rec.probability) = (*rule)({u->id, week, rec.state, rec.effect});
                        } else {
                            const Decision d = learner.decide(u->id, week, rec.state, u->policy_rng);
                            rec.action = d.action;
                            rec.probability = d.probability;
                        }
                        rec.reward = treated_reward(stats, rec.state, rec.action, u->profile, week, config.burden,
                                                    config.effects, u->env_rng);
                        rec.regret = rec.action == optimal_action(rec.effect) ? 0.0 : std::abs(rec.effect);
                        Interaction it;
                        it.user = u->id;
                        it.decision_index = rec.decision_index;
                        it.time = week;
                        it.state = rec.state;
                        it.action = rec.action;
                        it.probability = rec.probability;
                        it.reward = rec.reward;
                        history.append(it);
                    } else {
                        rec.reward = baseline_reward(stats, u->env_rng);
                    }
                    steps = rec.reward;
                    out.records.push_back(rec);
                } else {
                    const StepStats stats =
                        env.tables.step_statistics(ts.time_of_day(), ts.day_of_week(), u->profile.group, temp,
                                                   u->location.value_or(0), u->prior_activity);
                    steps = baseline_reward(stats, u->env_rng);
                }
                u->prior_activity = steps > median ? 1 : 0;
            }
        }
    }
    return out;
}

std::vector<TrialOutput> run_trials(const TrialConfig& config, const Environment& env, int jobs) {
    config.validate();
    const int n = config.n_trials;
    std::vector<TrialOutput> outputs(static_cast<std::size_t>(n));
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
    std::atomic<int> next{0};
    auto worker = [&] {
        for (int t; (t = next.fetch_add(1)) < n;) {
            try {
                outputs[std::size_t(t)] = run_trial(config, env, t);
            } catch (...) {
                errors[std::size_t(t)] = std::current_exception();
            }
        }
    };
    const int workers = std::clamp(jobs, 1, n);
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
    return outputs;
}

TrialSummary summarize(std::span<const TrialRecord> records, const TrialConfig& config) {
    TrialSummary s;
    s.n_users = config.n_users;
    s.week_regret_sum.assign(std::size_t(config.weeks_per_user), 0.0);
    s.week_decisions.assign(std::size_t(config.weeks_per_user), 0.0);
    s.cohort_last_week_send.assign(config.recruitment.size(), {});
    for (const auto& r : records) {
        ++s.decision_points;
        if (!r.available) continue;
        ++s.available_points;
        s.total_regret += r.regret;
        s.week_regret_sum[std::size_t(r.week)] += r.regret;
        s.week_decisions[std::size_t(r.week)] += 1.0;
        const double sent = r.action == Action::ActivitySuggestion ? 1.0 : 0.0;
        s.group_send[std::size_t(r.group - 1)].sends += sent;
        s.group_send[std::size_t(r.group - 1)].decisions += 1.0;
        if (r.week == config.weeks_per_user - 1) {
            s.cohort_last_week_send[std::size_t(r.cohort)].sends += sent;
            s.cohort_last_week_send[std::size_t(r.cohort)].decisions += 1.0;
        }
    }
    return s;
}

void Aggregator::add(const TrialSummary& s) { trials_.push_back(s); }

AggregateTable Aggregator::table() const {
    AggregateTable t;
    t.n_trials = int(trials_.size());
    if (trials_.empty()) return t;
    const std::size_t weeks = trials_.front().week_regret_sum.size();
    const std::size_t cohorts = trials_.front().cohort_last_week_send.size();
    for (std::size_t w = 0; w < weeks; ++w) {
        std::vector<double> xs;
        for (const auto& s : trials_)
            if (s.week_decisions[w] > 0) xs.push_back(s.week_regret_sum[w] / s.week_decisions[w]);
        t.week_regret.push_back(mean_se(xs));
    }
    std::vector<double> cumulative;
    double available = 0.0, total = 0.0;
    for (const auto& s : trials_) {
        cumulative.push_back(s.cumulative_regret());
        available += double(s.available_points);
        total += double(s.decision_points);
    }
    t.cumulative_regret = mean_se(cumulative);
    t.availability_rate = total > 0 ? available / total : 0.0;
    for (std::size_t g = 0; g < 2; ++g) {
        std::vector<double> xs;
        for (const auto& s : trials_)
            if (s.group_send[g].decisions > 0) xs.push_back(s.group_send[g].value());
        t.group_send[g] = mean_se(xs);
    }
    for (std::size_t c = 0; c < cohorts; ++c) {
        std::vector<double> xs;
        for (const auto& s : trials_)
            if (s.cohort_last_week_send[c].decisions > 0) xs.push_back(s.cohort_last_week_send[c].value());
        t.cohort_last_week_send.push_back(mean_se(xs));
    }
    return t;
}

AggregateTable aggregate(std::span<const std::vector<TrialRecord>> trials, const TrialConfig& config) {
    Aggregator agg;
    for (const auto& records : trials) agg.add(summarize(records, config));
    return agg.table();
}

}  // namespace ipool
