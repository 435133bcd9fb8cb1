#pragma once

// Independent reference computations, used by the test suites and by
// `ipool oracle-check`. Nothing here calls into the posterior or likelihood code.

#include "ipool/types.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

namespace ipool::oracle {

struct Row {
    UserId user;
    double time;
    Vector phi;
    double reward;
};

/// Posterior of w_{i,t} = w_pop + u_i (+ v_t) by joint Bayesian linear
/// regression over the stacked latent vector (w_pop, u_1..u_N[, v_1..v_T]),
/// in information form with dense inverses.
inline Posterior stacked_gaussian(const std::vector<Row>& rows, const Hyperparameters& hp, UserId target_user,
                                  double target_time = 0.0, bool time_varying = false) {
    const Eigen::Index p = hp.prior_mean.size();
    std::vector<UserId> users;
    std::vector<double> times;
    for (const auto& r : rows) {
        users.push_back(r.user);
        times.push_back(r.time);
    }
    users.push_back(target_user);
    times.push_back(target_time);
    std::sort(users.begin(), users.end());
    users.erase(std::unique(users.begin(), users.end()), users.end());
    std::sort(times.begin(), times.end());
    times.erase(std::unique(times.begin(), times.end()), times.end());
    if (!time_varying) times.clear();

    const Eigen::Index nu = Eigen::Index(users.size()), nt = Eigen::Index(times.size());
    const Eigen::Index dim = p * (1 + nu + nt);
    auto user_slot = [&](UserId u) {
        return p * (1 + Eigen::Index(std::find(users.begin(), users.end(), u) - users.begin()));
    };
    auto time_slot = [&](double t) {
        return p * (1 + nu + Eigen::Index(std::find(times.begin(), times.end(), t) - times.begin()));
    };

    Matrix prior_cov = Matrix::Zero(dim, dim);
    Vector prior_mean = Vector::Zero(dim);
    prior_mean.head(p) = hp.prior_mean;
    prior_cov.topLeftCorner(p, p) = hp.prior_cov;
    for (Eigen::Index u = 0; u < nu; ++u) prior_cov.block(p * (1 + u), p * (1 + u), p, p) = hp.random_effect_cov;
    for (Eigen::Index a = 0; a < nt; ++a) {
        for (Eigen::Index b = 0; b < nt; ++b) {
            const double d = times[std::size_t(a)] - times[std::size_t(b)];
            prior_cov.block(p * (1 + nu + a), p * (1 + nu + b), p, p) =
                std::exp(-d * d / *hp.time_lengthscale) * *hp.time_effect_cov;
        }
    }

    Matrix x = Matrix::Zero(Eigen::Index(rows.size()), dim);
    Vector r(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t j = 0; j < rows.size(); ++j) {
        const auto jj = Eigen::Index(j);
        x.block(jj, 0, 1, p) = rows[j].phi.transpose();
        x.block(jj, user_slot(rows[j].user), 1, p) = rows[j].phi.transpose();
        if (time_varying) x.block(jj, time_slot(rows[j].time), 1, p) = rows[j].phi.transpose();
        r[jj] = rows[j].reward;
    }

    const Matrix prior_prec = prior_cov.inverse();
    const Matrix post_prec = prior_prec + x.transpose() * x / hp.noise_var;
    const Matrix post_cov = post_prec.inverse();
    const Vector post_mean = post_cov * (prior_prec * prior_mean + x.transpose() * r / hp.noise_var);

    Matrix t = Matrix::Zero(p, dim);
    t.leftCols(p).setIdentity();
    t.block(0, user_slot(target_user), p, p).setIdentity();
    if (time_varying) t.block(0, time_slot(target_time), p, p).setIdentity();
    return {t * post_mean, t * post_cov * t.transpose()};
}

/// Multivariate normal log-density through an eigendecomposition.
inline double mvn_log_density(const Vector& x, const Matrix& cov) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
    const Vector proj = es.eigenvectors().transpose() * x;
    double quad = 0.0, log_det = 0.0;
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        quad += proj[j] * proj[j] / es.eigenvalues()[j];
        log_det += std::log(es.eigenvalues()[j]);
    }
    return -0.5 * (quad + log_det + double(x.size()) * std::log(2.0 * std::numbers::pi));
}

/// Closed-form posterior means of the scalar two-user model.
struct TwoUserMeans {
    double w1, w2;
};
inline TwoUserMeans two_user_closed_form(double c1, double c2, double y1, double y2, double sw, double su,
                                         double se) {
    const double gamma = sw / (sw + su);
    const double delta = se / sw;
    const double den = (1 - gamma * gamma) * c1 * c2 + delta * gamma * (c1 + c2) + (delta * gamma) * (delta * gamma);
    return {((delta * gamma + (1 - gamma * gamma) * c2) * y1 + delta * gamma * gamma * y2) / den,
            ((delta * gamma + (1 - gamma * gamma) * c1) * y2 + delta * gamma * gamma * y1) / den};
}

/// Monte-Carlo estimate of Pr{d'w > 0}, w ~ N(mean, cov).
inline double mc_probability(const Vector& mean, const Matrix& cov, const Vector& d, int draws, std::uint64_t seed) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
    const Matrix root = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z;
    int hits = 0;
    Vector e(mean.size());
    for (int k = 0; k < draws; ++k) {
        for (Eigen::Index j = 0; j < e.size(); ++j) e[j] = z(rng);
        hits += d.dot(mean + root * e) > 0.0 ? 1 : 0;
    }
    return double(hits) / draws;
}

inline Matrix random_spd(Eigen::Index p, std::mt19937_64& rng, double scale = 1.0, double floor = 0.1) {
    std::normal_distribution<double> z;
    Matrix a(p, p);
    for (Eigen::Index i = 0; i < p; ++i)
        for (Eigen::Index j = 0; j < p; ++j) a(i, j) = z(rng);
    return scale * (a * a.transpose() / double(p) + floor * Matrix::Identity(p, p));
}

/// Covariance of the prior-centered rewards under the stationary pooled
/// model, entry by entry.
inline Matrix reward_covariance(const std::vector<Row>& rows, const Hyperparameters& hp) {
    const auto n = Eigen::Index(rows.size());
    Matrix cov(n, n);
    for (Eigen::Index a = 0; a < n; ++a) {
        for (Eigen::Index b = 0; b < n; ++b) {
            Matrix c = hp.prior_cov;
            if (rows[std::size_t(a)].user == rows[std::size_t(b)].user) c += hp.random_effect_cov;
            cov(a, b) = rows[std::size_t(a)].phi.dot(c * rows[std::size_t(b)].phi);
        }
        cov(a, a) += hp.noise_var;
    }
    return cov;
}

/// n rows over `users` users, Gaussian features, integer times in [1, max_time].
inline std::vector<Row> random_rows(std::mt19937_64& rng, std::size_t n, int users, Eigen::Index p,
                                    int max_time = 10) {
    std::normal_distribution<double> z;
    std::uniform_int_distribution<int> pick_user(0, users - 1);
    std::uniform_int_distribution<int> pick_time(1, max_time);
    std::vector<Row> rows;
    for (std::size_t j = 0; j < n; ++j) {
        Vector phi(p);
        for (Eigen::Index c = 0; c < p; ++c) phi[c] = z(rng);
        const UserId u = pick_user(rng);
        const double t = pick_time(rng);
        const double r = z(rng) + phi.sum() * 0.3;
        rows.push_back({u, t, phi, r});
    }
    return rows;
}

inline Hyperparameters random_hyperparameters(std::mt19937_64& rng, Eigen::Index p, bool time_varying = false) {
    std::uniform_real_distribution<double> u(0.2, 2.0);
    std::normal_distribution<double> z;
    Hyperparameters hp;
    hp.prior_mean = Vector(p);
    for (Eigen::Index j = 0; j < p; ++j) hp.prior_mean[j] = 0.5 * z(rng);
    hp.prior_cov = random_spd(p, rng, u(rng));
    hp.random_effect_cov = random_spd(p, rng, u(rng));
    hp.noise_var = u(rng);
    if (time_varying) {
        hp.time_effect_cov = random_spd(p, rng, u(rng));
        hp.time_lengthscale = u(rng);
    }
    return hp;
}

}  // namespace ipool::oracle
