// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
// `--trials N` shrinks the simulation criteria for a quick look; ctest uses the default 50.

#include "ipool/export.hpp"
#include "ipool/oracle_check.hpp"
#include "ipool/policies.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <string>
#include <thread>

using namespace ipool;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

int failures = 0;

void report(int id, const char* title, bool pass, const std::string& detail) {
    if (!pass) ++failures;
    std::printf("%s  criterion %d  %-26s %s\n", pass ? "PASS" : "FAIL", id, title, detail.c_str());
    std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

/// Protocol invariants folded over every simulated record.
struct InvariantTally {
    std::size_t points = 0, available = 0;
    std::size_t bad_probability = 0, regret_mismatch = 0, zero_effect = 0;
    double min_p = 1.0, max_p = 0.0;

    void add(const TrialRecord& r, const ClipBounds& clip) {
        ++points;
        if (!r.available) {
            regret_mismatch += r.regret != 0.0;
            return;
        }
        ++available;
        min_p = std::min(min_p, r.probability);
        max_p = std::max(max_p, r.probability);
        bad_probability += !(r.probability >= clip.lo && r.probability <= clip.hi);
        if (r.effect == 0.0) {
            // Both actions are optimal; regret must still vanish.
            ++zero_effect;
            regret_mismatch += r.regret != 0.0;
            return;
        }
        const bool optimal = r.action == optimal_action(r.effect);
        regret_mismatch += (r.regret == 0.0) != optimal;
    }
};

struct Cell {
    AggregateTable table;
    double seconds = 0.0;
};

bool identical(const TrialRecord& a, const TrialRecord& b) {
    return a.trial == b.trial && a.user == b.user && a.group == b.group && a.cohort == b.cohort && a.day == b.day &&
           a.decision_time == b.decision_time && a.week == b.week && a.decision_index == b.decision_index &&
           a.state == b.state && a.available == b.available && a.action == b.action &&
           a.probability == b.probability && a.reward == b.reward && a.effect == b.effect && a.regret == b.regret;
}

bool identical(const std::vector<TrialOutput>& a, const std::vector<TrialOutput>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t t = 0; t < a.size(); ++t) {
        if (a[t].records.size() != b[t].records.size()) return false;
        for (std::size_t i = 0; i < a[t].records.size(); ++i)
            if (!identical(a[t].records[i], b[t].records[i])) return false;
    }
    return true;
}

double mean_week_regret(const AggregateTable& t, std::size_t first, std::size_t last) {
    double sum = 0.0;
    for (std::size_t w = first; w <= last; ++w) sum += t.week_regret.at(w).mean;
    return sum / double(last - first + 1);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance criteria"};
    int trials = 50;
    int jobs = int(std::max(1u, std::thread::hardware_concurrency()));
    app.add_option("--trials", trials, "Trials per simulated cell")->check(CLI::PositiveNumber);
    app.add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
    CLI11_PARSE(app, argc, argv);

    const auto start = Clock::now();
    const OracleCheckOptions options;

    {
        const CheckReport r = check_two_user(options, 100);
        report(1, "two-user closed form", r.passed() && r.seconds < 5.0,
               fmt("max |dev| %.2e (tol 1e-8), %.3f s (limit 5 s)", r.max_deviation, r.seconds));
    }
    {
        const CheckReport r = check_stacked(options, 25);
        report(2, "stacked Gaussian", r.passed() && r.seconds < 30.0,
               fmt("max |dev| %.2e (tol 1e-8), %.3f s (limit 30 s)", r.max_deviation, r.seconds));
    }
    {
        const CheckReport small = check_small_random_effect_probability(options, 50);
        const CheckReport large = check_large_random_effect(options, 20);
        report(3, "pooling limits", small.passed() && large.passed(),
               fmt("sigma_u^2=1e-12 max |pi_IP - pi_C| %.2e (tol 1e-4); sigma_u^2=1e8 max rel dev %.2e (tol 1e-3)",
                   small.max_deviation, large.max_deviation));
    }
    {
        const CheckReport mll = check_marginal_likelihood(options, 20);
        const CheckReport rec = check_hyperparameter_recovery(10, 20, 100);
        report(4, "marginal likelihood + EB", mll.passed() && rec.passed(),
               fmt("density max |dev| %.2e (tol 1e-8); recovery median rel err %.3f (tol 0.30, %.1f s)",
                   mll.max_deviation, rec.max_deviation, rec.seconds));
    }

    // Simulation criteria: default config, seed 0.
    TrialConfig base;
    base.n_trials = trials;
    base.base_seed = 0;
    const Environment env = Environment::generate(base.corpus);
    InvariantTally tally;

    auto run_cell = [&](PolicyKind policy, PopulationSetting setting, bool burden) {
        TrialConfig c = base;
        c.policy = policy;
        c.setting = setting;
        c.burden = burden;
        const auto t0 = Clock::now();
        const std::vector<TrialOutput> outputs = run_trials(c, env, jobs);
        std::vector<std::vector<TrialRecord>> records;
        records.reserve(outputs.size());
        for (const auto& o : outputs) {
            for (const auto& r : o.records) tally.add(r, c.clip);
            records.push_back(o.records);
        }
        Cell cell{aggregate(records, c), seconds_since(t0)};
        std::printf("      %-22s %-11s %s  cumulative regret %7.3f +- %.3f  (%.0f s)\n",
                    std::string(to_string(policy)).c_str(), to_string(setting).c_str(), burden ? "burden" : "      ",
                    cell.table.cumulative_regret.mean, cell.table.cumulative_regret.se, cell.seconds);
        std::fflush(stdout);
        return cell;
    };

    const auto grid_start = Clock::now();
    std::map<std::pair<PopulationSetting, PolicyKind>, Cell> grid;
    for (auto setting : {PopulationSetting::Smooth, PopulationSetting::Homogeneous, PopulationSetting::BiModal})
        for (auto policy : {PolicyKind::IntelligentPooling, PolicyKind::Complete, PolicyKind::PersonSpecific})
            grid[{setting, policy}] = run_cell(policy, setting, false);
    const double grid_seconds = seconds_since(grid_start);

    auto cum = [&](PopulationSetting s, PolicyKind p) { return grid.at({s, p}).table.cumulative_regret.mean; };
    {
        using enum PopulationSetting;
        using P = PolicyKind;
        const double s_ip = cum(Smooth, P::IntelligentPooling), s_c = cum(Smooth, P::Complete),
                     s_ps = cum(Smooth, P::PersonSpecific);
        const double h_ip = cum(Homogeneous, P::IntelligentPooling), h_c = cum(Homogeneous, P::Complete),
                     h_ps = cum(Homogeneous, P::PersonSpecific);
        const double b_ip = cum(BiModal, P::IntelligentPooling), b_c = cum(BiModal, P::Complete);
        const bool smooth_ok = s_ip <= 0.9 * s_c && s_ip <= 0.9 * s_ps;
        const bool homog_ok = std::abs(h_ip - h_c) <= 0.1 * h_c && h_ip <= 0.9 * h_ps && h_c <= 0.9 * h_ps;
        const bool bimodal_ok = b_ip <= b_c;
        report(5, "regret ordering", smooth_ok && homog_ok && bimodal_ok && grid_seconds <= 1800.0,
               fmt("smooth IP/C %.3f IP/PS %.3f (<= 0.9); homogeneous |IP-C|/C %.3f (<= 0.1) IP/PS %.3f C/PS %.3f "
                   "(<= 0.9); bimodal IP %.2f <= C %.2f; %d trials/cell, grid %.0f s (limit 1800 s)",
                   s_ip / s_c, s_ip / s_ps, std::abs(h_ip - h_c) / h_c, h_ip / h_ps, h_c / h_ps, b_ip, b_c, trials,
                   grid_seconds));
    }
    {
        const auto& ip = grid.at({PopulationSetting::BiModal, PolicyKind::IntelligentPooling}).table.group_send;
        const auto& c = grid.at({PopulationSetting::BiModal, PolicyKind::Complete}).table.group_send;
        const double ip_gap = ip[0].mean - ip[1].mean, c_gap = std::abs(c[0].mean - c[1].mean);
        report(6, "bi-modal personalization", ip_gap >= 0.1 && c_gap < 0.05,
               fmt("IP send group1 %.3f group2 %.3f (gap %.3f >= 0.1); Complete %.3f vs %.3f (|gap| %.3f < 0.05)",
                   ip[0].mean, ip[1].mean, ip_gap, c[0].mean, c[1].mean, c_gap));
    }
    {
        const Cell tv = run_cell(PolicyKind::IntelligentPoolingTV, PopulationSetting::Smooth, true);
        const Cell ip = run_cell(PolicyKind::IntelligentPooling, PopulationSetting::Smooth, true);
        const auto& cohorts = tv.table.cohort_last_week_send;
        std::size_t first = 0, last = cohorts.size() - 1;
        while (first < last && cohorts[first].n == 0) ++first;
        while (last > first && cohorts[last].n == 0) --last;
        const double tv_late = mean_week_regret(tv.table, 7, 9), ip_late = mean_week_regret(ip.table, 7, 9);
        report(7, "burden adaptation", cohorts[last].mean < cohorts[first].mean && tv_late < ip_late,
               fmt("IP-TV last-week send: cohort %zu %.3f < cohort %zu %.3f; weeks 8-10 regret IP-TV %.4f < IP %.4f",
                   last + 1, cohorts[last].mean, first + 1, cohorts[first].mean, tv_late, ip_late));
    }
    {
        // Bit-reproducibility of full runs, independent of the worker count.
        TrialConfig c = base;
        c.policy = PolicyKind::Complete;
        const bool complete_same = identical(run_trials(c, env, 1), run_trials(c, env, 2));
        c.policy = PolicyKind::IntelligentPooling;
        c.n_trials = std::min(trials, 2);
        const bool ip_same = identical(run_trials(c, env, 1), run_trials(c, env, 1));

        const double rate = double(tally.available) / double(tally.points);
        const bool ok = tally.bad_probability == 0 && std::abs(rate - 0.8) <= 0.02 && tally.regret_mismatch == 0 &&
                        complete_same && ip_same;
        report(8, "protocol invariants", ok,
               fmt("p in [%.3f, %.3f] (%zu outside [0.1, 0.8]); availability %.4f over %zu points; regret/optimality "
                   "mismatches %zu (%zu zero-effect points); rerun identical: complete %s, IP %s",
                   tally.min_p, tally.max_p, tally.bad_probability, rate, tally.points, tally.regret_mismatch,
                   tally.zero_effect, complete_same ? "yes" : "no", ip_same ? "yes" : "no"));
    }

    std::printf("total runtime %.0f s, %d criteria failed\n", seconds_since(start), failures);
    return failures == 0 ? 0 : 1;
}
