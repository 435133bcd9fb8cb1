#pragma once

#include "ipool/kernel.hpp"

#include <Eigen/Cholesky>

#include <memory>
#include <span>
#include <vector>

namespace ipool {

/// Gram matrices and centered cross-products of a history, grouped per user
/// and per time node. Independent of the variance components, so one instance
/// serves every likelihood evaluation of a hyperparameter search.
class SufficientStatistics {
public:
    struct Cell {
        std::size_t node = 0;
        Matrix gram;   // sum phi phi'
        Vector cross;  // sum phi r~
    };
    struct UserBlock {
        UserId user = 0;
        std::vector<Cell> cells;  // one per time node the user visited
        Matrix gram;
        Vector cross;
        std::size_t count = 0;
    };

    /// `extra_times` are target time coordinates that must exist as nodes
    /// even without data (time-dependent variants only).
    SufficientStatistics(const History& history, const Vector& prior_mean, const KernelVariant& variant,
                         std::span<const double> extra_times = {});

    std::size_t dim() const { return dim_; }
    std::size_t count() const { return count_; }
    double centered_sq() const { return centered_sq_; }
    const std::vector<double>& nodes() const { return nodes_; }
    const std::vector<UserBlock>& users() const { return users_; }
    const std::vector<Cell>& node_totals() const { return node_totals_; }
    const Vector& prior_mean() const { return prior_mean_; }
    const KernelVariant& variant() const { return variant_; }

    /// Index of the node holding `time`; throws if absent.
    std::size_t node_of(double time) const;
    const UserBlock* find_user(UserId user) const;

private:
    std::size_t dim_ = 0;
    std::size_t count_ = 0;
    double centered_sq_ = 0.0;
    Vector prior_mean_;
    KernelVariant variant_;
    std::vector<double> nodes_;
    std::vector<UserBlock> users_;
    std::vector<Cell> node_totals_;
};

/// Exact Gaussian posterior and marginal likelihood of the mixed-effects
/// model in weight space. The latent vector is whitened,
///   w_{i,t} - mu = A_t z_g + U z_i,   z ~ N(0, I),
/// where z_g holds population (and time) coordinates and z_i the user's
/// random effect. The posterior precision is block-arrow, so the user blocks
/// are eliminated by a Schur complement and the cost grows with the number of
/// users, not the number of observations. Agrees with the kernel form of
/// posterior() to rounding.
class MixedModelPosterior {
public:
    MixedModelPosterior(std::shared_ptr<const SufficientStatistics> stats, const Hyperparameters& hp);

    double log_marginal_likelihood() const { return log_marginal_likelihood_; }

    /// Posterior over the weight vector acting for `user` at `time`. Users
    /// without data receive the population posterior plus their prior
    /// random effect.
    Posterior posterior(UserId user, double time) const;

    const SufficientStatistics& statistics() const { return *stats_; }

private:
    struct UserSolve {
        Eigen::LLT<Matrix> chol;  // of Lambda_ii
        Matrix coupling_solved;   // Lambda_ii^{-1} Lambda_ig
        Vector rhs_solved;        // Lambda_ii^{-1} b_i
    };

    Matrix global_loading(std::size_t node) const;

    std::shared_ptr<const SufficientStatistics> stats_;
    Vector prior_mean_;
    Matrix user_loading_;               // U, p x q
    Matrix w_;                          // shared population loading
    Matrix v_;                          // time-effect loading
    Matrix root_;                       // square root of the node correlation, nodes x m
    Eigen::Index global_dim_ = 0;
    std::vector<UserSolve> user_solves_;  // aligned with stats_->users()
    Eigen::LLT<Matrix> schur_chol_;
    Vector global_mean_;
    double log_marginal_likelihood_ = 0.0;
};

/// Convenience: statistics + solver for one history.
MixedModelPosterior make_mixed_model(const History& history, const Hyperparameters& hp, const KernelVariant& variant,
                                     std::span<const double> target_times = {});

}  // namespace ipool
