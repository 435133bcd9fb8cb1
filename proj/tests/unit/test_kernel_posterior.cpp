#include "ipool/kernel.hpp"
#include "ipool/oracles.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <Eigen/Eigenvalues>

using namespace ipool;
using namespace ipool::testing;

namespace {

double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("kernel variants on fixed points") {
    std::mt19937_64 rng(1);
    Hyperparameters hp = random_hyperparameters(rng, 3, true);
    const Vector a = Vector::Random(3), b = Vector::Random(3);

    SUBCASE("same user with zero random effect equals complete") {
        Hyperparameters h = hp;
        h.random_effect_cov.setZero();
        const double pooled = kernel({a, 1, 1.0}, {b, 1, 4.0}, h, {KernelKind::Pooled});
        const double complete = kernel({a, 1, 1.0}, {b, 1, 4.0}, h, {KernelKind::Complete});
        CHECK(pooled == doctest::Approx(complete).epsilon(1e-14));
    }
    SUBCASE("different users see only the population covariance") {
        const double pooled = kernel({a, 1, 1.0}, {b, 2, 1.0}, hp, {KernelKind::Pooled});
        CHECK(pooled == doctest::Approx(a.dot(hp.prior_cov * b)).epsilon(1e-14));
        CHECK(kernel({a, 1, 1.0}, {b, 2, 1.0}, hp, {KernelKind::PersonSpecific}) == 0.0);
    }
    SUBCASE("time-varying at equal times adds the full time-effect term") {
        const double tv = kernel({a, 1, 3.0}, {b, 2, 3.0}, hp, {KernelKind::TimeVarying});
        const double pooled = kernel({a, 1, 3.0}, {b, 2, 3.0}, hp, {KernelKind::Pooled});
        CHECK(tv == doctest::Approx(pooled + a.dot(*hp.time_effect_cov * b)).epsilon(1e-13));
    }
    SUBCASE("TVGP discounts by (1 - eps)^{|dk|/2}") {
        KernelVariant v{KernelKind::TVGP, 0.1};
        const double k = kernel({a, 1, 2.0}, {b, 5, 6.0}, hp, v);
        CHECK(k == doctest::Approx(a.dot(hp.prior_cov * b) * std::pow(0.9, 2.0)).epsilon(1e-13));
    }
    SUBCASE("dimension mismatch is rejected") {
        const Vector c = Vector::Ones(2);
        CHECK_THROWS_AS(kernel({a, 1, 1.0}, {c, 1, 1.0}, hp, {KernelKind::Pooled}), std::invalid_argument);
    }
}

TEST_CASE("kernel matrices are symmetric PSD") {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 1 + trial % 40;
        const auto data = random_dataset(rng, n, 4, 3);
        const Hyperparameters hp = random_hyperparameters(rng, 3, true);
        for (auto kind : {KernelKind::Complete, KernelKind::Pooled, KernelKind::PersonSpecific,
                          KernelKind::TimeVarying, KernelKind::TVGP}) {
            const Matrix k = kernel_matrix(data.history, hp, {kind, 0.05});
            CHECK(max_abs(k - k.transpose()) < 1e-10);
            Eigen::SelfAdjointEigenSolver<Matrix> es(k, Eigen::EigenvaluesOnly);
            CHECK(es.eigenvalues().minCoeff() >= -1e-8 * std::max(1.0, es.eigenvalues().maxCoeff()));
        }
    }
}

TEST_CASE("posterior of an empty history is the prior") {
    std::mt19937_64 rng(3);
    const Hyperparameters hp = random_hyperparameters(rng, 3);
    const Posterior post = posterior(History{}, 0, 0.0, hp, {KernelKind::Pooled});
    CHECK(max_abs(post.mean - hp.prior_mean) == 0.0);
    CHECK(max_abs(post.cov - (hp.prior_cov + hp.random_effect_cov)) == 0.0);
}

TEST_CASE("scalar single observation posterior") {
    const double sw = 0.7, su = 0.4, se = 0.9, r = 1.3;
    History h;
    h.append_raw(0, 1.0, Vector::Ones(1), r);
    const Posterior post = posterior(h, 0, 1.0, Hyperparameters::isotropic(1, sw, su, se), {KernelKind::Pooled});
    CHECK(post.mean[0] == doctest::Approx((sw + su) * r / (sw + su + se)).epsilon(1e-14));
    CHECK(post.cov(0, 0) == doctest::Approx((sw + su) - (sw + su) * (sw + su) / (sw + su + se)).epsilon(1e-14));
}

TEST_CASE("two-user scalar posterior means match the closed form") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> var(0.05, 5.0);
    std::uniform_int_distribution<int> count(1, 8);
    std::normal_distribution<double> z;
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
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
        const Hyperparameters hp = Hyperparameters::isotropic(1, sw, su, se);
        const auto expected = oracle::two_user_closed_form(c[0], c[1], y[0], y[1], sw, su, se);
        const double w1 = posterior(h, 0, 0.0, hp, {KernelKind::Pooled}).mean[0];
        const double w2 = posterior(h, 1, 0.0, hp, {KernelKind::Pooled}).mean[0];
        worst = std::max({worst, std::abs(w1 - expected.w1), std::abs(w2 - expected.w2)});
    }
    CHECK(worst < 1e-8);
}

TEST_CASE("posterior equals the stacked joint-Gaussian marginal") {
    std::mt19937_64 rng(5);
    double worst = 0.0;
    for (int trial = 0; trial < 25; ++trial) {
        const int users = 1 + trial % 3;
        const Eigen::Index p = 1 + trial % 3;
        const auto data = random_dataset(rng, 1 + std::size_t(trial) % 20, users, p);
        const Hyperparameters hp = random_hyperparameters(rng, p);
        for (UserId target = 0; target <= users; ++target) {  // includes a user without data
            const Posterior got = posterior(data.history, target, 0.0, hp, {KernelKind::Pooled});
            const Posterior want = oracle::stacked_gaussian(data.rows, hp, target);
            worst = std::max({worst, max_abs(got.mean - want.mean), max_abs(got.cov - want.cov)});
        }
    }
    CHECK(worst < 1e-8);
}

TEST_CASE("time-varying posterior equals the stacked oracle with time effects") {
    std::mt19937_64 rng(6);
    double worst = 0.0;
    for (int trial = 0; trial < 15; ++trial) {
        const Eigen::Index p = 1 + trial % 2;
        const auto data = random_dataset(rng, 3 + std::size_t(trial), 2, p, 4);
        Hyperparameters hp = random_hyperparameters(rng, p, true);
        for (double target_time : {1.0, 3.0, 5.0}) {
            const Posterior got = posterior(data.history, 1, target_time, hp, {KernelKind::TimeVarying});
            const Posterior want = oracle::stacked_gaussian(data.rows, hp, 1, target_time, true);
            worst = std::max({worst, max_abs(got.mean - want.mean), max_abs(got.cov - want.cov)});
        }
    }
    CHECK(worst < 1e-7);
}

TEST_CASE("pooling limits of the posterior mean") {
    std::mt19937_64 rng(7);
    SUBCASE("vanishing random effect approaches complete pooling") {
        for (int trial = 0; trial < 10; ++trial) {
            const auto data = random_dataset(rng, 15, 3, 3);
            Hyperparameters hp = random_hyperparameters(rng, 3);
            hp.random_effect_cov = 1e-12 * Matrix::Identity(3, 3);
            const Posterior pooled = posterior(data.history, 1, 0.0, hp, {KernelKind::Pooled});
            const Posterior complete = posterior(data.history, 1, 0.0, hp, {KernelKind::Complete});
            CHECK(max_abs(pooled.mean - complete.mean) < 1e-6);
        }
    }
    SUBCASE("huge random effect approaches the person-specific estimate Y/C") {
        std::normal_distribution<double> z;
        for (int trial = 0; trial < 10; ++trial) {
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
            const Hyperparameters hp = Hyperparameters::isotropic(1, 1.0, 1e8, 0.5);
            const double w = posterior(h, 0, 0.0, hp, {KernelKind::Pooled}).mean[0];
            CHECK(std::abs(w - y / c) <= 1e-3 * std::abs(y / c));
        }
    }
}

TEST_CASE("adding an observation never increases its predictive variance") {
    std::mt19937_64 rng(8);
    for (int stream = 0; stream < 10; ++stream) {
        const auto data = random_dataset(rng, 25, 2, 3);
        const Hyperparameters hp = random_hyperparameters(rng, 3);
        History h;
        for (const auto& row : data.rows) {
            const Posterior before = posterior(h, row.user, 0.0, hp, {KernelKind::Pooled});
            h.append_raw(row.user, row.time, row.phi, row.reward);
            const Posterior after = posterior(h, row.user, 0.0, hp, {KernelKind::Pooled});
            CHECK(row.phi.dot(after.cov * row.phi) <= row.phi.dot(before.cov * row.phi) + 1e-10);
        }
    }
}

TEST_CASE("posterior covariance is symmetric PSD") {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 20; ++trial) {
        const auto data = random_dataset(rng, 30, 3, 3);
        const Hyperparameters hp = random_hyperparameters(rng, 3);
        const Posterior post = posterior(data.history, 0, 0.0, hp, {KernelKind::Pooled});
        CHECK(max_abs(post.cov - post.cov.transpose()) == 0.0);
        Eigen::SelfAdjointEigenSolver<Matrix> es(post.cov, Eigen::EigenvaluesOnly);
        CHECK(es.eigenvalues().minCoeff() >= -1e-8);
    }
}

TEST_CASE("jittered Cholesky escalates and then reports the jitter it tried") {
    Matrix near_singular(2, 2);
    near_singular << 1.0, 1.0, 1.0, 1.0;
    const JitteredCholesky ok(near_singular);
    CHECK(ok.jitter() > 0.0);
    CHECK(ok.jitter() <= 1e-6 * 1.0001);

    Matrix indefinite(2, 2);
    indefinite << 1.0, 2.0, 2.0, 1.0;
    try {
        JitteredCholesky bad(indefinite);
        FAIL("expected FactorizationError");
    } catch (const FactorizationError& e) {
        CHECK(e.jitter() == doctest::Approx(1e-6));
    }
}

TEST_CASE("hyperparameter validation") {
    Hyperparameters hp = Hyperparameters::isotropic(2, 1.0, 1.0, 1.0);
    CHECK_NOTHROW(hp.validate());
    hp.noise_var = 0.0;
    CHECK_THROWS_AS(hp.validate(), std::invalid_argument);
    hp.noise_var = 1.0;
    hp.random_effect_cov(0, 0) = -1.0;
    CHECK_THROWS_AS(hp.validate(), std::invalid_argument);
    hp.random_effect_cov(0, 0) = 1.0;
    hp.prior_cov(0, 1) = 0.5;
    CHECK_THROWS_AS(hp.validate(), std::invalid_argument);
}
