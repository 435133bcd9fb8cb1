#include "ipool/policies.hpp"
#include "ipool/oracles.hpp"
#include "test_util.hpp"

#include <doctest.h>

using namespace ipool;
using namespace ipool::testing;

namespace {

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
            it.reward = z(rng) + 0.4 * as_double(it.action) + 0.3 * u;
            h.append(it);
        }
    }
    return h;
}

}  // namespace

TEST_CASE("randomization probability on hand-computed posteriors") {
    Posterior post{Vector::Zero(2), Matrix::Identity(2, 2)};
    Vector d(2);
    d << 1.0, 0.0;
    CHECK(randomization_probability(post, d) == doctest::Approx(0.5));
    post.mean << 1.0, 0.0;
    CHECK(randomization_probability(post, d) == doctest::Approx(0.8413447460685429).epsilon(1e-12));
    post.mean << -2.0, 5.0;
    post.cov(0, 0) = 4.0;
    CHECK(randomization_probability(post, d) == doctest::Approx(0.15865525393145707).epsilon(1e-12));
}

TEST_CASE("randomization probability with zero posterior variance") {
    Posterior post{Vector::Ones(1), Matrix::Zero(1, 1)};
    const Vector d = Vector::Ones(1);
    CHECK(randomization_probability(post, d) == 1.0);
    post.mean[0] = -1.0;
    CHECK(randomization_probability(post, d) == 0.0);
    post.mean[0] = 0.0;
    CHECK(randomization_probability(post, d) == 0.5);
}

TEST_CASE("randomization probability agrees with Monte Carlo") {
    std::mt19937_64 rng(41);
    std::normal_distribution<double> z;
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const Eigen::Index p = 2 + trial % 4;
        Posterior post{Vector(p), oracle::random_spd(p, rng, 1.0)};
        for (Eigen::Index j = 0; j < p; ++j) post.mean[j] = 0.5 * z(rng);
        Vector d(p);
        for (Eigen::Index j = 0; j < p; ++j) d[j] = z(rng);
        const double mc = oracle::mc_probability(post.mean, post.cov, d, 200000, 1000 + std::uint64_t(trial));
        worst = std::max(worst, std::abs(mc - randomization_probability(post, d)));
    }
    CHECK(worst < 0.005);
}

TEST_CASE("randomization probability is invariant to positive scaling of the posterior") {
    std::mt19937_64 rng(42);
    for (int trial = 0; trial < 20; ++trial) {
        Posterior post{Vector::Random(3), oracle::random_spd(3, rng, 1.0)};
        const Vector d = Vector::Random(3);
        for (double c : {0.01, 3.0, 250.0}) {
            Posterior scaled{c * post.mean, c * c * post.cov};
            CHECK(randomization_probability(scaled, d) ==
                  doctest::Approx(randomization_probability(post, d)).epsilon(1e-10));
        }
    }
}

TEST_CASE("clip maps into the configured interval") {
    const ClipBounds b;
    CHECK(clip(0.95, b) == 0.8);
    CHECK(clip(0.5, b) == 0.5);
    CHECK(clip(0.0, b) == 0.1);
    CHECK_THROWS_AS((ClipBounds{0.5, 0.4}.validate()), std::invalid_argument);
}

TEST_CASE("select_action draws with the requested frequency") {
    std::mt19937_64 rng(43);
    for (auto [pi, tol] : {std::pair{0.8, 0.02}, std::pair{0.1, 0.01}}) {
        int sends = 0;
        for (int k = 0; k < 10000; ++k) sends += select_action(pi, rng) == Action::ActivitySuggestion;
        CHECK(std::abs(sends / 10000.0 - pi) <= tol);
    }
    std::mt19937_64 a(7), b(7);
    for (int k = 0; k < 100; ++k) CHECK(select_action(0.37, a) == select_action(0.37, b));
}

TEST_CASE("policy names round-trip") {
    for (auto k : {PolicyKind::IntelligentPooling, PolicyKind::PersonSpecific, PolicyKind::Complete,
                   PolicyKind::IntelligentPoolingTV, PolicyKind::TVGP}) {
        CHECK(parse_policy(to_string(k)) == k);
    }
    CHECK_THROWS_AS(parse_policy("bogus"), std::invalid_argument);
}

TEST_CASE("new users: pooled borrows strength, person-specific stays at the prior") {
    std::mt19937_64 rng(44);
    const FeatureLayout layout;
    const History h = layout_history(rng, 4, 30, layout);
    Hyperparameters hp = Hyperparameters::isotropic(layout.dim(), 1.0, 0.2, 1.0);
    const ContextState s{1, 0, 0, 1, 1};
    const Posterior prior{hp.prior_mean, hp.prior_cov + hp.random_effect_cov};
    const double prior_pi = randomization_probability(prior, s, layout);

    std::mt19937_64 r1(1), r2(1);
    const Decision pooled = decide(PolicyKind::IntelligentPooling, h, hp, 99, 0.0, s, r1);
    const Decision person = decide(PolicyKind::PersonSpecific, h, hp, 99, 0.0, s, r2);
    CHECK((pooled.posterior.mean - hp.prior_mean).cwiseAbs().maxCoeff() > 1e-6);
    CHECK(randomization_probability(person.posterior, s, layout) == doctest::Approx(prior_pi).epsilon(1e-12));
    CHECK((person.posterior.mean - hp.prior_mean).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("intelligent pooling with a negligible random effect behaves like complete pooling") {
    std::mt19937_64 rng(45);
    const FeatureLayout layout;
    const History h = layout_history(rng, 3, 25, layout);
    Hyperparameters hp = Hyperparameters::isotropic(layout.dim(), 1.0, 1e-12, 1.0);
    for (int code = 0; code < 32; code += 5) {
        const ContextState s{std::uint8_t(code & 1), std::uint8_t((code >> 1) & 1), 0, std::uint8_t((code >> 3) & 1),
                             std::uint8_t((code >> 4) & 1)};
        std::mt19937_64 r1(2), r2(2);
        const Decision ip = decide(PolicyKind::IntelligentPooling, h, hp, 1, 0.0, s, r1, {0.0001, 0.9999});
        const Decision cp = decide(PolicyKind::Complete, h, hp, 1, 0.0, s, r2, {0.0001, 0.9999});
        CHECK(std::abs(ip.probability - cp.probability) < 1e-4);
    }
}

TEST_CASE("person-specific posterior ignores other users' data") {
    std::mt19937_64 rng(46);
    const FeatureLayout layout;
    const History h = layout_history(rng, 4, 20, layout);
    const History only = h.filtered([](UserId u) { return u == 2; });
    const Hyperparameters hp = Hyperparameters::isotropic(layout.dim(), 1.0, 0.5, 1.0);
    const auto full = make_mixed_model(h, hp, variant_for(PolicyKind::PersonSpecific));
    const auto alone = make_mixed_model(only, hp, variant_for(PolicyKind::PersonSpecific));
    CHECK((full.posterior(2, 0.0).mean - alone.posterior(2, 0.0).mean).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((full.posterior(2, 0.0).cov - alone.posterior(2, 0.0).cov).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("complete pooling gives every user the same probability") {
    std::mt19937_64 rng(47);
    const FeatureLayout layout;
    const History h = layout_history(rng, 4, 20, layout);
    const Hyperparameters hp = Hyperparameters::isotropic(layout.dim(), 1.0, 0.5, 1.0);
    const auto model = make_mixed_model(h, hp, variant_for(PolicyKind::Complete));
    const ContextState s{0, 1, 0, 1, 0};
    const double base = randomization_probability(model.posterior(0, 0.0), s, layout);
    for (UserId u : {1, 2, 3, 17}) {
        CHECK(randomization_probability(model.posterior(u, 0.0), s, layout) == doctest::Approx(base).epsilon(1e-12));
    }
}

TEST_CASE("learner uses the prior until refreshed and clips its decisions") {
    std::mt19937_64 rng(48);
    const FeatureLayout layout;
    Hyperparameters hp = Hyperparameters::isotropic(layout.dim(), 1.0, 0.2, 1.0);
    hp.prior_mean.setConstant(3.0);
    Learner learner(PolicyKind::IntelligentPooling, layout, hp, {});
    const ContextState s{1, 1, 0, 1, 1};
    const Decision d = learner.decide(0, 0.0, s, rng);
    CHECK(d.probability == 0.8);
    CHECK((d.posterior.mean - hp.prior_mean).cwiseAbs().maxCoeff() == 0.0);

    const History h = layout_history(rng, 2, 10, layout);
    const double targets[] = {0.0};
    learner.refresh(h, targets);
    CHECK((learner.posterior(0, 0.0).mean - hp.prior_mean).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("learner rejects hyperparameters of the wrong dimension") {
    const FeatureLayout layout;
    CHECK_THROWS_AS(Learner(PolicyKind::Complete, layout, Hyperparameters::isotropic(3, 1, 1, 1), {}),
                    std::invalid_argument);
}
