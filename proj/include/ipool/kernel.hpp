#pragma once

#include "ipool/features.hpp"
#include "ipool/types.hpp"

#include <Eigen/Cholesky>

#include <span>
#include <vector>

namespace ipool {

enum class KernelKind {
    Complete,        // phi1' Sigma_w phi2
    Pooled,          // phi1' (Sigma_w + 1{i1=i2} Sigma_u) phi2
    PersonSpecific,  // phi1' (Sigma_w + Sigma_u) phi2 * 1{i1=i2}
    TimeVarying,     // Pooled + rho(k1,k2) phi1' D_v phi2
    TVGP,            // phi1' Sigma_w phi2 * (1-eps)^{|k1-k2|/2}
};

struct KernelVariant {
    KernelKind kind = KernelKind::Pooled;
    /// Forgetting factor eps of the TVGP kernel.
    double forgetting = 0.03;

    bool time_dependent() const { return kind == KernelKind::TimeVarying || kind == KernelKind::TVGP; }
};

/// Logged rows (user, time, reward, phi) with the feature matrix cached.
/// Rows added through append(Interaction) also keep the Interaction.
class History {
public:
    History() = default;
    explicit History(FeatureLayout layout);

    void append(const Interaction& interaction);
    void append_raw(UserId user, double time, const Vector& phi, double reward);
    void reserve(std::size_t n);

    std::size_t size() const { return rewards_.size(); }
    bool empty() const { return rewards_.empty(); }
    std::size_t dim() const { return dim_; }

    UserId user(std::size_t row) const { return users_[row]; }
    double time(std::size_t row) const { return times_[row]; }
    double reward(std::size_t row) const { return rewards_[row]; }
    Eigen::Map<const Vector> phi(std::size_t row) const {
        return Eigen::Map<const Vector>(features_.data() + row * dim_, Eigen::Index(dim_));
    }
    const std::vector<Interaction>& interactions() const { return interactions_; }
    const FeatureLayout& layout() const { return layout_; }

    /// Copy holding only rows whose user satisfies the predicate.
    template <class Pred>
    History filtered(Pred keep) const {
        History out(layout_);
        out.dim_ = dim_;
        for (std::size_t r = 0; r < size(); ++r) {
            if (!keep(users_[r])) continue;
            out.users_.push_back(users_[r]);
            out.times_.push_back(times_[r]);
            out.rewards_.push_back(rewards_[r]);
            out.features_.insert(out.features_.end(), features_.begin() + long(r * dim_),
                                 features_.begin() + long((r + 1) * dim_));
        }
        return out;
    }

    /// Dense n x p feature matrix.
    Matrix feature_matrix() const;

private:
    FeatureLayout layout_;
    std::size_t dim_ = 0;
    std::vector<UserId> users_;
    std::vector<double> times_;
    std::vector<double> rewards_;
    std::vector<double> features_;  // row-major n x p
    std::vector<Interaction> interactions_;
};

struct KernelPoint {
    const Vector& phi;
    UserId user;
    double time;
};

/// rho(k1,k2) = exp(-|k1-k2|^2 / sigma_rho)
double time_correlation(double t1, double t2, double lengthscale);
/// (1-eps)^{|k1-k2|/2}
double forgetting_correlation(double t1, double t2, double forgetting);

double kernel(const KernelPoint& x1, const KernelPoint& x2, const Hyperparameters& hp,
              const KernelVariant& variant);

/// n x n kernel matrix over the history.
Matrix kernel_matrix(const History& history, const Hyperparameters& hp, const KernelVariant& variant);

/// Prior covariance of the weight vector the variant acts on at decision time.
Matrix prior_weight_cov(const Hyperparameters& hp, const KernelVariant& variant);

/// LLT of a symmetric matrix with escalating diagonal jitter (1e-10 .. 1e-6).
class JitteredCholesky {
public:
    explicit JitteredCholesky(const Matrix& a);

    const Eigen::LLT<Matrix>& llt() const { return llt_; }
    double jitter() const { return jitter_; }
    Matrix solve(const Matrix& b) const { return llt_.solve(b); }
    Vector solve(const Vector& b) const { return llt_.solve(b); }
    double log_det() const;

private:
    Eigen::LLT<Matrix> llt_;
    double jitter_ = 0.0;
};

/// Exact posterior of the target weight vector from the n x n kernel system:
/// mean = mu + M'(K + s2 I)^{-1} R~, cov = Sigma_0 - M'(K + s2 I)^{-1} M.
Posterior posterior(const History& history, UserId target_user, double target_time, const Hyperparameters& hp,
                    const KernelVariant& variant);

/// Rewards centered by the prior mean: r - phi' mu.
Vector centered_rewards(const History& history, const Hyperparameters& hp);

/// Symmetric PSD square-root factor F with F F' = A (columns for eigenvalues
/// above a relative floor are kept).
Matrix psd_sqrt_factor(const Matrix& a);

}  // namespace ipool
