#include "ipool/oracle_check.hpp"

#include "ipool/empirical_bayes.hpp"
#include "ipool/oracles.hpp"
#include "ipool/policies.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace ipool {

namespace {

Hyperparameters library_side(Hyperparameters hp, const OracleCheckOptions& options) {
    if (options.corrupt_kernel)
        hp.random_effect_cov += 0.1 * Matrix::Identity(hp.random_effect_cov.rows(), hp.random_effect_cov.cols());
    return hp;
}

History to_history(const std::vector<oracle::Row>& rows) {
    History h;
    for (const auto& r : rows) h.append_raw(r.user, r.time, r.phi, r.reward);
    return h;
}

double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

template <class F>
CheckReport timed(std::string name, double tolerance, F&& body) {
    const auto start = std::chrono::steady_clock::now();
    CheckReport report{std::move(name), body(), tolerance, 0.0};
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

/// Both posterior routes for one target.
std::array<Posterior, 2> library_posteriors(const History& h, UserId user, double time, const Hyperparameters& hp,
                                            KernelKind kind) {
    const double times[] = {time};
    const bool tv = kind == KernelKind::TimeVarying;
    return {posterior(h, user, time, hp, {kind}),
            make_mixed_model(h, hp, {kind}, tv ? std::span<const double>(times) : std::span<const double>{})
                .posterior(user, time)};
}

History layout_history(std::mt19937_64& rng, int users, int per_user, const FeatureLayout& layout) {
    std::bernoulli_distribution coin(0.5);
    std::normal_distribution<double> z;
    History h(layout);
    for (UserId u = 0; u < users; ++u) {
        for (int k = 0; k < per_user; ++k) {
            Interaction it;
            it.user = u;
            it.decision_index = k;
            it.time = 0.0;
            it.state = {std::uint8_t(coin(rng)), std::uint8_t(coin(rng)), std::uint8_t(coin(rng)),
                        std::uint8_t(coin(rng)), std::uint8_t(coin(rng))};
            it.probability = 0.5;
            it.action = coin(rng) ? Action::ActivitySuggestion : Action::AntiSedentary;
            it.reward = z(rng) + (0.4 + 0.2 * u) * as_double(it.action) + 0.3 * u;
            h.append(it);
        }
    }
    return h;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

CheckReport check_two_user(const OracleCheckOptions& options, int cases) {
    return timed("two_user_closed_form", 1e-8, [&] {
        std::mt19937_64 rng(options.seed);
        std::uniform_real_distribution<double> var(0.05, 5.0);
        std::uniform_int_distribution<int> count(1, 8);
        std::normal_distribution<double> z;
        double worst = 0.0;
        for (int trial = 0; trial < cases; ++trial) {
            const double sw = var(rng), su = var(rng), se = var(rng);
            History h;
            double c[2] = {0, 0}, y[2] = {0, 0};
            for (UserId u = 0; u < 2; ++u) {
                const int n = count(rng);
                for (int k = 0; k < n; ++k) {
                    const double x = z(rng), r = z(rng) + x;
                    h.append_raw(u, k + 1.0, Vector::Constant(1, x), r);
                    c[u] += x * x;
                    y[u] += x * r;
                }
            }
            const auto want = oracle::two_user_closed_form(c[0], c[1], y[0], y[1], sw, su, se);
            const Hyperparameters hp = library_side(Hyperparameters::isotropic(1, sw, su, se), options);
            for (UserId u = 0; u < 2; ++u) {
                const double expected = u == 0 ? want.w1 : want.w2;
                for (const auto& post : library_posteriors(h, u, 0.0, hp, KernelKind::Pooled))
                    worst = std::max(worst, std::abs(post.mean[0] - expected));
            }
        }
        return worst;
    });
}

CheckReport check_stacked(const OracleCheckOptions& options, int cases) {
    return timed("stacked_gaussian", 1e-8, [&] {
        std::mt19937_64 rng(options.seed + 1);
        double worst = 0.0;
        for (int trial = 0; trial < cases; ++trial) {
            const int users = 1 + trial % 3;
            const Eigen::Index p = 1 + trial % 3;
            const auto rows = oracle::random_rows(rng, 1 + std::size_t(trial) % 20, users, p);
            const History h = to_history(rows);
            for (bool tv : {false, true}) {
                const Hyperparameters hp = oracle::random_hyperparameters(rng, p, tv);
                const Hyperparameters lib = library_side(hp, options);
                const KernelKind kind = tv ? KernelKind::TimeVarying : KernelKind::Pooled;
                for (UserId target = 0; target <= users; ++target) {  // the last target has no data
                    const double time = 1.0 + double(target % 4);
                    const Posterior want = oracle::stacked_gaussian(rows, hp, target, time, tv);
                    for (const auto& post : library_posteriors(h, target, time, lib, kind))
                        worst = std::max({worst, max_abs(post.mean - want.mean), max_abs(post.cov - want.cov)});
                }
            }
        }
        return worst;
    });
}

CheckReport check_small_random_effect_probability(const OracleCheckOptions& options, int decisions) {
    return timed("limit_small_sigma_u_probability", 1e-4, [&] {
        std::mt19937_64 rng(options.seed + 2);
        const FeatureLayout layout;
        const History h = layout_history(rng, 4, 20, layout);
        const Hyperparameters hp =
            library_side(Hyperparameters::isotropic(layout.dim(), 1.0, 1e-12, 1.0), options);
        const Hyperparameters complete_hp = Hyperparameters::isotropic(layout.dim(), 1.0, 1e-12, 1.0);
        std::uniform_int_distribution<int> pick_user(0, 4), bit(0, 1);
        double worst = 0.0;
        for (int k = 0; k < decisions; ++k) {
            const ContextState s{std::uint8_t(bit(rng)), std::uint8_t(bit(rng)), std::uint8_t(bit(rng)),
                                 std::uint8_t(bit(rng)), std::uint8_t(bit(rng))};
            const UserId user = pick_user(rng);
            std::mt19937_64 r1(k), r2(k);
            const Decision ip = decide(PolicyKind::IntelligentPooling, h, hp, user, 0.0, s, r1);
            const Decision cp = decide(PolicyKind::Complete, h, complete_hp, user, 0.0, s, r2);
            worst = std::max(worst, std::abs(randomization_probability(ip.posterior, s, layout) -
                                             randomization_probability(cp.posterior, s, layout)));
        }
        return worst;
    });
}

CheckReport check_small_random_effect_mean(const OracleCheckOptions& options, int cases) {
    return timed("limit_small_sigma_u_mean", 1e-6, [&] {
        std::mt19937_64 rng(options.seed + 3);
        double worst = 0.0;
        for (int trial = 0; trial < cases; ++trial) {
            const auto rows = oracle::random_rows(rng, 15, 3, 3);
            const History h = to_history(rows);
            Hyperparameters hp = oracle::random_hyperparameters(rng, 3);
            hp.random_effect_cov = 1e-12 * Matrix::Identity(3, 3);
            const Posterior complete = posterior(h, 1, 0.0, hp, {KernelKind::Complete});
            for (const auto& post : library_posteriors(h, 1, 0.0, library_side(hp, options), KernelKind::Pooled))
                worst = std::max(worst, max_abs(post.mean - complete.mean));
        }
        return worst;
    });
}

CheckReport check_large_random_effect(const OracleCheckOptions& options, int cases) {
    return timed("limit_large_sigma_u", 1e-3, [&] {
        std::mt19937_64 rng(options.seed + 4);
        std::normal_distribution<double> z;
        double worst = 0.0;
        for (int trial = 0; trial < cases; ++trial) {
            History h;
            double c = 0, y = 0;
            for (UserId u = 0; u < 2; ++u) {
                for (int k = 0; k < 6; ++k) {
                    const double x = 1.0 + std::abs(z(rng)), r = 2.0 * x + z(rng);
                    h.append_raw(u, k, Vector::Constant(1, x), r);
                    if (u == 0) {
                        c += x * x;
                        y += x * r;
                    }
                }
            }
            // Corruption shows here as a shrunken population prior.
            Hyperparameters hp = Hyperparameters::isotropic(1, 1.0, 1e8, 0.5);
            if (options.corrupt_kernel) hp.random_effect_cov(0, 0) = 0.1;
            for (const auto& post : library_posteriors(h, 0, 0.0, hp, KernelKind::Pooled))
                worst = std::max(worst, std::abs(post.mean[0] - y / c) / std::abs(y / c));
        }
        return worst;
    });
}

CheckReport check_marginal_likelihood(const OracleCheckOptions& options, int cases) {
    return timed("marginal_likelihood_density", 1e-8, [&] {
        std::mt19937_64 rng(options.seed + 5);
        double worst = 0.0;
        for (int trial = 0; trial < cases; ++trial) {
            const Eigen::Index p = 1 + trial % 3;
            const auto rows = oracle::random_rows(rng, 2 + std::size_t(trial), 3, p);
            const Hyperparameters hp = oracle::random_hyperparameters(rng, p);
            Vector centered(static_cast<Eigen::Index>(rows.size()));
            for (std::size_t a = 0; a < rows.size(); ++a)
                centered[Eigen::Index(a)] = rows[a].reward - rows[a].phi.dot(hp.prior_mean);
            const double want = oracle::mvn_log_density(centered, oracle::reward_covariance(rows, hp));
            const History h = to_history(rows);
            const Hyperparameters lib = library_side(hp, options);
            worst = std::max({worst, std::abs(marginal_log_likelihood(h, lib, {KernelKind::Pooled}) - want),
                              std::abs(make_mixed_model(h, lib, {KernelKind::Pooled}).log_marginal_likelihood() -
                                       want)});
        }
        return worst;
    });
}

CheckReport check_hyperparameter_recovery(int seeds, int users, int points) {
    return timed("hyperparameter_recovery", 0.3, [&] {
        const double su = 0.5, se = 1.0;
        HyperparamBounds bounds;
        bounds.random_effect_coords = {0, 1};
        bounds.tie_random_effects = true;
        const Hyperparameters hp0 = Hyperparameters::isotropic(2, 1.0, 0.2, 1.0);
        std::vector<double> err_u, err_e;
        for (int seed = 0; seed < seeds; ++seed) {
            // Random intercept and slope per user, shared variance su.
            std::mt19937_64 rng(static_cast<std::uint64_t>(seed));
            std::normal_distribution<double> z;
            const double w0 = z(rng), w1 = z(rng);
            History h;
            for (UserId u = 0; u < users; ++u) {
                const double u0 = std::sqrt(su) * z(rng), u1 = std::sqrt(su) * z(rng);
                for (int k = 0; k < points; ++k) {
                    Vector phi(2);
                    phi << 1.0, z(rng);
                    h.append_raw(u, k + 1.0, phi, w0 + u0 + (w1 + u1) * phi[1] + std::sqrt(se) * z(rng));
                }
            }
            FitOptions opt;
            opt.seed = static_cast<std::uint64_t>(seed);
            const FitResult fit = fit_hyperparameters(h, hp0, bounds, {KernelKind::Pooled}, opt);
            err_u.push_back(std::abs(fit.hp.random_effect_cov(0, 0) - su) / su);
            err_e.push_back(std::abs(fit.hp.noise_var - se) / se);
        }
        return std::max(median(err_u), median(err_e));
    });
}

std::vector<CheckReport> run_oracle_checks(const OracleCheckOptions& options) {
    return {check_two_user(options),
            check_stacked(options),
            check_small_random_effect_probability(options),
            check_small_random_effect_mean(options),
            check_large_random_effect(options),
            check_marginal_likelihood(options)};
}

}  // namespace ipool
