#include "ipool/kernel.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

namespace ipool {

namespace {

void require_symmetric_psd(const Matrix& m, std::size_t p, const char* name) {
    if (std::size_t(m.rows()) != p || std::size_t(m.cols()) != p) {
        throw std::invalid_argument(std::string(name) + " must be " + std::to_string(p) + "x" + std::to_string(p));
    }
    if (!m.allFinite()) throw std::invalid_argument(std::string(name) + " has non-finite entries");
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
        throw std::invalid_argument(std::string(name) + " is not symmetric");
    }
    if (p == 0) return;
    Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-10 * scale) {
        throw std::invalid_argument(std::string(name) + " is not positive semi-definite");
    }
}

const Matrix& time_cov(const Hyperparameters& hp) {
    if (!hp.time_effect_cov || !hp.time_lengthscale) {
        throw std::invalid_argument("time-varying kernel needs time_effect_cov and time_lengthscale");
    }
    return *hp.time_effect_cov;
}

}  // namespace

void Hyperparameters::validate() const {
    const std::size_t p = dim();
    if (p == 0) throw std::invalid_argument("prior_mean must be non-empty");
    if (!prior_mean.allFinite()) throw std::invalid_argument("prior_mean has non-finite entries");
    require_symmetric_psd(prior_cov, p, "prior_cov");
    require_symmetric_psd(random_effect_cov, p, "random_effect_cov");
    if (!(noise_var > 0.0) || !std::isfinite(noise_var)) throw std::invalid_argument("noise_var must be > 0");
    if (time_effect_cov) require_symmetric_psd(*time_effect_cov, p, "time_effect_cov");
    if (time_lengthscale && !(*time_lengthscale > 0.0)) {
        throw std::invalid_argument("time_lengthscale must be > 0");
    }
}

Hyperparameters Hyperparameters::isotropic(std::size_t p, double sw, double su, double noise) {
    Hyperparameters hp;
    const auto n = Eigen::Index(p);
    hp.prior_mean = Vector::Zero(n);
    hp.prior_cov = sw * Matrix::Identity(n, n);
    hp.random_effect_cov = su * Matrix::Identity(n, n);
    hp.noise_var = noise;
    return hp;
}

History::History(FeatureLayout layout) : layout_(std::move(layout)), dim_(layout_.dim()) {}

void History::append(const Interaction& interaction) {
    if (empty()) dim_ = layout_.dim();
    if (dim_ != layout_.dim()) throw std::logic_error("history holds raw rows of a different dimension");
    const Vector phi = layout_.phi(interaction.state, interaction.probability, interaction.action);
    append_raw(interaction.user, interaction.time, phi, interaction.reward);
    interactions_.push_back(interaction);
}

void History::append_raw(UserId user, double time, const Vector& phi, double reward) {
    if (empty() && interactions_.empty() && dim_ != std::size_t(phi.size())) dim_ = std::size_t(phi.size());
    if (std::size_t(phi.size()) != dim_) throw std::invalid_argument("feature dimension mismatch");
    users_.push_back(user);
    times_.push_back(time);
    rewards_.push_back(reward);
    features_.insert(features_.end(), phi.data(), phi.data() + phi.size());
}

void History::reserve(std::size_t n) {
    users_.reserve(n);
    times_.reserve(n);
    rewards_.reserve(n);
    features_.reserve(n * dim_);
}

Matrix History::feature_matrix() const {
    Matrix out(static_cast<Eigen::Index>(size()), Eigen::Index(dim_));
    for (std::size_t r = 0; r < size(); ++r) out.row(Eigen::Index(r)) = phi(r).transpose();
    return out;
}

double time_correlation(double t1, double t2, double lengthscale) {
    const double d = t1 - t2;
    return std::exp(-d * d / lengthscale);
}

double forgetting_correlation(double t1, double t2, double forgetting) {
    return std::pow(1.0 - forgetting, std::abs(t1 - t2) / 2.0);
}

double kernel(const KernelPoint& x1, const KernelPoint& x2, const Hyperparameters& hp,
              const KernelVariant& variant) {
    const auto p = Eigen::Index(hp.dim());
    if (x1.phi.size() != p || x2.phi.size() != p) throw std::invalid_argument("kernel: feature dimension mismatch");
    const bool same = x1.user == x2.user;
    switch (variant.kind) {
        case KernelKind::Complete:
            return x1.phi.dot(hp.prior_cov * x2.phi);
        case KernelKind::Pooled:
            return x1.phi.dot((same ? Matrix(hp.prior_cov + hp.random_effect_cov) : hp.prior_cov) * x2.phi);
        case KernelKind::PersonSpecific:
            return same ? x1.phi.dot((hp.prior_cov + hp.random_effect_cov) * x2.phi) : 0.0;
        case KernelKind::TimeVarying: {
            const Matrix& dv = time_cov(hp);
            double k = x1.phi.dot((same ? Matrix(hp.prior_cov + hp.random_effect_cov) : hp.prior_cov) * x2.phi);
            return k + time_correlation(x1.time, x2.time, *hp.time_lengthscale) * x1.phi.dot(dv * x2.phi);
        }
        case KernelKind::TVGP:
            return x1.phi.dot(hp.prior_cov * x2.phi) * forgetting_correlation(x1.time, x2.time, variant.forgetting);
    }
    throw std::logic_error("unknown kernel kind");
}

Matrix kernel_matrix(const History& history, const Hyperparameters& hp, const KernelVariant& variant) {
    const std::size_t n = history.size();
    if (n > 0 && history.dim() != hp.dim()) throw std::invalid_argument("history/hyperparameter dimension mismatch");
    const Matrix phi = history.feature_matrix();
    // Same-user and cross-user quadratic forms are computed in bulk.
    const Matrix base = phi * hp.prior_cov * phi.transpose();
    Matrix k(static_cast<Eigen::Index>(n), Eigen::Index(n));
    switch (variant.kind) {
        case KernelKind::Complete:
            k = base;
            break;
        case KernelKind::Pooled:
        case KernelKind::PersonSpecific:
        case KernelKind::TimeVarying: {
            const Matrix re = phi * hp.random_effect_cov * phi.transpose();
            for (std::size_t a = 0; a < n; ++a) {
                for (std::size_t b = 0; b < n; ++b) {
                    const bool same = history.user(a) == history.user(b);
                    const auto ia = Eigen::Index(a), ib = Eigen::Index(b);
                    if (variant.kind == KernelKind::PersonSpecific) {
                        k(ia, ib) = same ? base(ia, ib) + re(ia, ib) : 0.0;
                    } else {
                        k(ia, ib) = base(ia, ib) + (same ? re(ia, ib) : 0.0);
                    }
                }
            }
            if (variant.kind == KernelKind::TimeVarying) {
                const Matrix tv = phi * time_cov(hp) * phi.transpose();
                for (std::size_t a = 0; a < n; ++a) {
                    for (std::size_t b = 0; b < n; ++b) {
                        k(Eigen::Index(a), Eigen::Index(b)) +=
                            time_correlation(history.time(a), history.time(b), *hp.time_lengthscale) *
                            tv(Eigen::Index(a), Eigen::Index(b));
                    }
                }
            }
            break;
        }
        case KernelKind::TVGP:
            for (std::size_t a = 0; a < n; ++a) {
                for (std::size_t b = 0; b < n; ++b) {
                    k(Eigen::Index(a), Eigen::Index(b)) =
                        base(Eigen::Index(a), Eigen::Index(b)) *
                        forgetting_correlation(history.time(a), history.time(b), variant.forgetting);
                }
            }
            break;
    }
    return k;
}

Matrix prior_weight_cov(const Hyperparameters& hp, const KernelVariant& variant) {
    switch (variant.kind) {
        case KernelKind::Complete:
        case KernelKind::TVGP:
            return hp.prior_cov;
        case KernelKind::Pooled:
        case KernelKind::PersonSpecific:
            return hp.prior_cov + hp.random_effect_cov;
        case KernelKind::TimeVarying:
            return hp.prior_cov + hp.random_effect_cov + time_cov(hp);
    }
    throw std::logic_error("unknown kernel kind");
}

JitteredCholesky::JitteredCholesky(const Matrix& a) {
    llt_.compute(a);
    if (llt_.info() == Eigen::Success) return;
    const Matrix eye = Matrix::Identity(a.rows(), a.cols());
    for (double jitter = 1e-10; jitter <= 1e-6 * 1.0001; jitter *= 10.0) {
        jitter_ = jitter;
        llt_.compute(a + jitter * eye);
        if (llt_.info() == Eigen::Success) return;
    }
    throw FactorizationError("kernel system is numerically singular", jitter_);
}

double JitteredCholesky::log_det() const {
    return 2.0 * llt_.matrixLLT().diagonal().array().log().sum();
}

Vector centered_rewards(const History& history, const Hyperparameters& hp) {
    Vector r(static_cast<Eigen::Index>(history.size()));
    for (std::size_t j = 0; j < history.size(); ++j) {
        r[Eigen::Index(j)] = history.reward(j) - history.phi(j).dot(hp.prior_mean);
    }
    return r;
}

Posterior posterior(const History& history, UserId target_user, double target_time, const Hyperparameters& hp,
                    const KernelVariant& variant) {
    const auto p = Eigen::Index(hp.dim());
    const Matrix prior = prior_weight_cov(hp, variant);
    if (history.empty()) return {hp.prior_mean, prior};
    if (Eigen::Index(history.dim()) != p) throw std::invalid_argument("history/hyperparameter dimension mismatch");

    const auto n = Eigen::Index(history.size());
    Matrix k = kernel_matrix(history, hp, variant);
    k.diagonal().array() += hp.noise_var;
    const JitteredCholesky chol(k);

    // Row j of M is Cov(f_j, w_target)' = phi_j' C_j with C_j depending on the variant.
    Matrix m(n, p);
    const Matrix shared_plus_user = hp.prior_cov + hp.random_effect_cov;
    for (Eigen::Index j = 0; j < n; ++j) {
        const auto row = std::size_t(j);
        const bool same = history.user(row) == target_user;
        const auto phi = history.phi(row);
        switch (variant.kind) {
            case KernelKind::Complete:
                m.row(j) = phi.transpose() * hp.prior_cov;
                break;
            case KernelKind::Pooled:
                m.row(j) = phi.transpose() * (same ? shared_plus_user : hp.prior_cov);
                break;
            case KernelKind::PersonSpecific:
                if (same) {
                    m.row(j) = phi.transpose() * shared_plus_user;
                } else {
                    m.row(j).setZero();
                }
                break;
            case KernelKind::TimeVarying:
                m.row(j) = phi.transpose() * (same ? shared_plus_user : hp.prior_cov) +
                           time_correlation(history.time(row), target_time, *hp.time_lengthscale) *
                               (phi.transpose() * time_cov(hp));
                break;
            case KernelKind::TVGP:
                m.row(j) = forgetting_correlation(history.time(row), target_time, variant.forgetting) *
                           (phi.transpose() * hp.prior_cov);
                break;
        }
    }

    const Vector r = centered_rewards(history, hp);
    Posterior post;
    post.mean = hp.prior_mean + m.transpose() * chol.solve(r);
    Matrix cov = prior - m.transpose() * chol.solve(m);
    post.cov = 0.5 * (cov + cov.transpose());
    return post;
}

Matrix psd_sqrt_factor(const Matrix& a) {
    const Eigen::Index n = a.rows();
    if (n == 0) return Matrix(0, 0);
    if (a.isDiagonal(0.0)) {
        const Vector d = a.diagonal();
        const double floor = std::max(d.cwiseAbs().maxCoeff(), 1e-300) * 1e-13;
        Matrix f = Matrix::Zero(n, (d.array() > floor).count());
        Eigen::Index c = 0;
        for (Eigen::Index j = 0; j < n; ++j)
            if (d[j] > floor) f(j, c++) = std::sqrt(d[j]);
        return f;
    }
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (a + a.transpose()));
    const Vector& ev = es.eigenvalues();
    const double floor = std::max(ev.cwiseAbs().maxCoeff(), 1e-300) * 1e-13;
    Eigen::Index keep = 0;
    for (Eigen::Index j = 0; j < n; ++j) keep += ev[j] > floor ? 1 : 0;
    Matrix f(n, keep);
    Eigen::Index c = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
        if (ev[j] > floor) f.col(c++) = es.eigenvectors().col(j) * std::sqrt(ev[j]);
    }
    return f;
}

}  // namespace ipool
