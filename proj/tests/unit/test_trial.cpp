#include "ipool/trial.hpp"

#include <doctest.h>

#include <cmath>
#include <map>
#include <numeric>

using namespace ipool;

namespace {

const Environment& env() {
    static const Environment e = Environment::generate(CorpusConfig{});
    return e;
}

TrialConfig small_config() {
    TrialConfig c;
    c.n_users = 6;
    c.weeks_per_user = 3;
    c.recruitment = {0.5, 0.5};
    c.trial_weeks = 4;
    c.n_trials = 1;
    return c;
}

const DecisionRule oracle_rule = [](const DecisionView& v) {
    return std::pair{optimal_action(v.effect), 0.5};
};

const DecisionRule never_treat = [](const DecisionView&) { return std::pair{Action::AntiSedentary, 0.1}; };

bool same(const TrialRecord& a, const TrialRecord& b) {
    return a.trial == b.trial && a.user == b.user && a.group == b.group && a.cohort == b.cohort && a.day == b.day &&
           a.decision_time == b.decision_time && a.week == b.week && a.decision_index == b.decision_index &&
           a.state == b.state && a.available == b.available && a.action == b.action &&
           a.probability == b.probability && a.reward == b.reward && a.effect == b.effect && a.regret == b.regret;
}

}  // namespace

TEST_CASE("config validation names the field") {
    TrialConfig c;
    CHECK_NOTHROW(c.validate());
    c.recruitment = {0.5, 0.4};
    CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("recruitment"), std::invalid_argument);
    c = TrialConfig{};
    c.availability_prob = 1.5;
    CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("availability_prob"), std::invalid_argument);
    c = TrialConfig{};
    c.trial_weeks = 10;
    CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("trial_weeks"), std::invalid_argument);
    c = TrialConfig{};
    c.clip = {0.9, 0.2};
    CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("clip"), std::invalid_argument);
}

TEST_CASE("decision times are two hours apart within the day") {
    const auto hours = TrialConfig{}.decision_hours();
    CHECK(hours == std::vector<double>{9, 11, 13, 15, 17});
}

TEST_CASE("recruitment schedule") {
    TrialConfig c;
    const auto counts = recruitment_schedule(c);
    CHECK(std::accumulate(counts.begin(), counts.end(), 0) == 32);
    CHECK(counts.size() <= 6);
    CHECK(counts[1] == 10);  // round(0.3 * 32)
    CHECK(counts[0] == 3);
    for (int n : {1, 7, 19, 100}) {
        c.n_users = n;
        const auto k = recruitment_schedule(c);
        CHECK(std::accumulate(k.begin(), k.end(), 0) == n);
    }
}

TEST_CASE("oracle policy has zero regret") {
    TrialConfig c = small_config();
    c.setting = PopulationSetting::Smooth;
    c.burden = true;
    const auto out = run_trial(c, env(), 0, &oracle_rule);
    REQUIRE(!out.records.empty());
    for (const auto& r : out.records) CHECK(r.regret == 0.0);
}

TEST_CASE("never-treat policy accumulates the positive effects") {
    TrialConfig c = small_config();
    c.setting = PopulationSetting::Homogeneous;
    c.effects.beta = {0.2, 0.1, 0.1, 0.1, 0.0, 0.1};
    const auto out = run_trial(c, env(), 3, &never_treat);
    double total = 0.0, expected = 0.0;
    for (const auto& r : out.records) {
        if (!r.available) continue;
        const StateVector s = assemble(r.state);
        double effect = 0.0;
        for (std::size_t j = 0; j < kStateDim; ++j) effect += s[j] * c.effects.beta[j];
        CHECK(effect > 0.0);
        expected += effect;
        total += r.regret;
    }
    CHECK(total == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("record stream invariants") {
    TrialConfig c = small_config();
    c.policy = PolicyKind::IntelligentPooling;
    const auto out = run_trial(c, env(), 1);
    std::map<UserId, int> next_index, per_user;
    for (const auto& r : out.records) {
        ++per_user[r.user];
        CHECK(r.regret >= 0.0);
        CHECK((r.regret == 0.0) == (!r.available || r.action == optimal_action(r.effect) || r.effect == 0.0));
        CHECK(r.week >= 0);
        CHECK(r.week < c.weeks_per_user);
        if (r.available) {
            CHECK(r.decision_index == next_index[r.user]++);
            CHECK(r.probability >= 0.1);
            CHECK(r.probability <= 0.8);
        } else {
            CHECK(r.decision_index == -1);
            CHECK(r.probability == 0.0);
        }
    }
    CHECK(per_user.size() == std::size_t(c.n_users));
    for (const auto& [u, n] : per_user) CHECK(n == c.weeks_per_user * 7 * c.decision_times_per_day);
}

TEST_CASE("every policy keeps probabilities inside the clip bounds") {
    for (auto kind : {PolicyKind::IntelligentPooling, PolicyKind::PersonSpecific, PolicyKind::Complete,
                      PolicyKind::IntelligentPoolingTV, PolicyKind::TVGP}) {
        TrialConfig c = small_config();
        c.policy = kind;
        c.clip = {0.2, 0.7};
        const auto out = run_trial(c, env(), 2);
        for (const auto& r : out.records) {
            if (!r.available) continue;
            CHECK(r.probability >= 0.2);
            CHECK(r.probability <= 0.7);
        }
    }
}

TEST_CASE("availability rate over a long run") {
    TrialConfig c;
    std::size_t available = 0, total = 0;
    for (int t = 0; t < 2; ++t) {
        for (const auto& r : run_trial(c, env(), t, &never_treat).records) {
            ++total;
            available += r.available ? 1 : 0;
        }
    }
    CHECK(total == 2u * 32u * 70u * 5u);
    CHECK(std::abs(double(available) / double(total) - 0.8) <= 0.02);
}

TEST_CASE("recruitment respects the schedule") {
    TrialConfig c;
    const auto out = run_trial(c, env(), 0, &never_treat);
    std::map<UserId, int> first_day, cohort;
    for (const auto& r : out.records) {
        if (!first_day.count(r.user)) first_day[r.user] = r.day;
        cohort[r.user] = r.cohort;
    }
    const auto counts = recruitment_schedule(c);
    std::vector<int> seen(counts.size(), 0);
    for (const auto& [u, d] : first_day) {
        CHECK(d == cohort[u] * 7);
        CHECK(d <= 35);
        ++seen[std::size_t(cohort[u])];
    }
    CHECK(seen == counts);
}

TEST_CASE("runs are bit-reproducible under a seed") {
    TrialConfig c = small_config();
    c.policy = PolicyKind::IntelligentPoolingTV;
    c.base_seed = 77;
    const auto a = run_trial(c, env(), 4);
    const auto b = run_trial(c, env(), 4);
    REQUIRE(a.records.size() == b.records.size());
    for (std::size_t i = 0; i < a.records.size(); ++i) CHECK(same(a.records[i], b.records[i]));
    c.base_seed = 78;
    const auto other = run_trial(c, env(), 4);
    bool differs = false;
    for (std::size_t i = 0; i < a.records.size() && !differs; ++i) differs = !same(a.records[i], other.records[i]);
    CHECK(differs);
}

TEST_CASE("aggregation of hand-built records") {
    TrialConfig c;
    c.weeks_per_user = 2;
    c.recruitment = {0.5, 0.5};
    c.n_users = 2;
    auto rec = [](UserId u, int group, int cohort, int week, bool sent, double regret) {
        TrialRecord r;
        r.user = u;
        r.group = group;
        r.cohort = cohort;
        r.week = week;
        r.available = true;
        r.action = sent ? Action::ActivitySuggestion : Action::AntiSedentary;
        r.regret = regret;
        return r;
    };
    std::vector<TrialRecord> t1{rec(0, 1, 0, 0, true, 0.4), rec(0, 1, 0, 1, true, 0.0), rec(1, 2, 1, 0, false, 0.2),
                                rec(1, 2, 1, 1, true, 0.6)};
    TrialRecord off;
    off.user = 1;
    off.group = 2;
    off.week = 1;
    t1.push_back(off);

    const TrialSummary s = summarize(t1, c);
    CHECK(s.total_regret == doctest::Approx(1.2));
    CHECK(s.cumulative_regret() == doctest::Approx(0.6));
    CHECK(s.week_regret_sum[0] == doctest::Approx(0.6));
    CHECK(s.week_decisions[1] == 2.0);
    CHECK(s.group_send[0].value() == 1.0);
    CHECK(s.group_send[1].value() == 0.5);
    CHECK(s.cohort_last_week_send[1].value() == 1.0);
    CHECK(s.available_points == 4);
    CHECK(s.decision_points == 5);

    // Single trial: identity.
    const std::vector<std::vector<TrialRecord>> one{t1};
    const AggregateTable a1 = aggregate(one, c);
    CHECK(a1.week_regret[0].mean == doctest::Approx(0.3));
    CHECK(a1.week_regret[1].mean == doctest::Approx(0.3));
    CHECK(a1.week_regret[0].se == 0.0);
    CHECK(a1.availability_rate == doctest::Approx(0.8));

    // Two trials: mean and standard error across trials.
    std::vector<TrialRecord> t2{rec(0, 1, 0, 0, false, 0.0), rec(0, 1, 0, 1, false, 0.0),
                                rec(1, 2, 1, 0, false, 0.0), rec(1, 2, 1, 1, false, 0.0)};
    const std::vector<std::vector<TrialRecord>> two{t1, t2};
    const AggregateTable a2 = aggregate(two, c);
    CHECK(a2.n_trials == 2);
    CHECK(a2.cumulative_regret.mean == doctest::Approx(0.3));
    CHECK(a2.cumulative_regret.se == doctest::Approx(0.3));  // sd 0.3*sqrt(2), over sqrt(2)
    CHECK(a2.group_send[0].mean == doctest::Approx(0.5));
    CHECK(a2.group_send[1].mean == doctest::Approx(0.25));
}

TEST_CASE("regret shrinks over the study for intelligent pooling") {
    TrialConfig c;
    c.setting = PopulationSetting::Smooth;
    c.policy = PolicyKind::IntelligentPooling;
    Aggregator agg;
    for (int t = 0; t < 2; ++t) agg.add(summarize(run_trial(c, env(), t).records, c));
    const AggregateTable table = agg.table();
    const double early = (table.week_regret[0].mean + table.week_regret[1].mean + table.week_regret[2].mean) / 3.0;
    const double late = (table.week_regret[7].mean + table.week_regret[8].mean + table.week_regret[9].mean) / 3.0;
    CHECK(late < early);
}
