#include "ipool/mixed_model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace ipool {

namespace {

Matrix kron_row_loading(const Eigen::Ref<const Vector>& weights, const Matrix& block) {
    Matrix out(block.rows(), block.cols() * weights.size());
    for (Eigen::Index s = 0; s < weights.size(); ++s) {
        out.middleCols(s * block.cols(), block.cols()) = weights[s] * block;
    }
    return out;
}

/// Solves (L L') X = B in place by plain substitution; faster than the
/// blocked kernels for the small user blocks.
template <class Dense>
void cholesky_solve_in_place(const Eigen::LLT<Matrix>& chol, Dense& x) {
    const Matrix& l = chol.matrixLLT();
    const Eigen::Index n = l.rows();
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
        for (Eigen::Index i = 0; i < n; ++i) {
            double v = x(i, c);
            for (Eigen::Index k = 0; k < i; ++k) v -= l(i, k) * x(k, c);
            x(i, c) = v / l(i, i);
        }
        for (Eigen::Index i = n; i-- > 0;) {
            double v = x(i, c);
            for (Eigen::Index k = i + 1; k < n; ++k) v -= l(k, i) * x(k, c);
            x(i, c) = v / l(i, i);
        }
    }
}

}  // namespace

SufficientStatistics::SufficientStatistics(const History& history, const Vector& prior_mean,
                                           const KernelVariant& variant, std::span<const double> extra_times)
    : dim_(std::size_t(prior_mean.size())), count_(history.size()), prior_mean_(prior_mean), variant_(variant) {
    if (!history.empty() && history.dim() != dim_) {
        throw std::invalid_argument("history/prior_mean dimension mismatch");
    }
    const auto p = Eigen::Index(dim_);

    if (variant.time_dependent()) {
        for (std::size_t r = 0; r < history.size(); ++r) nodes_.push_back(history.time(r));
        nodes_.insert(nodes_.end(), extra_times.begin(), extra_times.end());
        std::sort(nodes_.begin(), nodes_.end());
        nodes_.erase(std::unique(nodes_.begin(), nodes_.end()), nodes_.end());
    } else {
        nodes_ = {0.0};
    }
    node_totals_.resize(nodes_.size());
    for (std::size_t k = 0; k < nodes_.size(); ++k) {
        node_totals_[k].node = k;
        node_totals_[k].gram = Matrix::Zero(p, p);
        node_totals_[k].cross = Vector::Zero(p);
    }

    std::vector<UserId> ids;
    ids.reserve(history.size());
    for (std::size_t r = 0; r < history.size(); ++r) ids.push_back(history.user(r));
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    users_.resize(ids.size());
    for (std::size_t u = 0; u < ids.size(); ++u) {
        users_[u].user = ids[u];
        users_[u].gram = Matrix::Zero(p, p);
        users_[u].cross = Vector::Zero(p);
    }

    for (std::size_t r = 0; r < history.size(); ++r) {
        const auto phi = history.phi(r);
        const double rc = history.reward(r) - phi.dot(prior_mean);
        centered_sq_ += rc * rc;
        const std::size_t node = variant.time_dependent() ? node_of(history.time(r)) : 0;
        auto& block = users_[std::size_t(std::lower_bound(ids.begin(), ids.end(), history.user(r)) - ids.begin())];
        auto cell = std::find_if(block.cells.begin(), block.cells.end(), [&](const Cell& c) { return c.node == node; });
        if (cell == block.cells.end()) {
            block.cells.push_back({node, Matrix::Zero(p, p), Vector::Zero(p)});
            cell = block.cells.end() - 1;
        }
        cell->gram.selfadjointView<Eigen::Lower>().rankUpdate(phi);
        cell->cross += rc * phi;
        ++block.count;
    }
    for (auto& block : users_) {
        for (auto& cell : block.cells) {
            cell.gram = cell.gram.selfadjointView<Eigen::Lower>();
            block.gram += cell.gram;
            block.cross += cell.cross;
            node_totals_[cell.node].gram += cell.gram;
            node_totals_[cell.node].cross += cell.cross;
        }
    }
}

std::size_t SufficientStatistics::node_of(double time) const {
    if (!variant_.time_dependent()) return 0;
    auto it = std::lower_bound(nodes_.begin(), nodes_.end(), time);
    if (it == nodes_.end() || *it != time) {
        throw std::out_of_range("time coordinate " + std::to_string(time) + " is not a node of this model");
    }
    return std::size_t(it - nodes_.begin());
}

const SufficientStatistics::UserBlock* SufficientStatistics::find_user(UserId user) const {
    auto it = std::lower_bound(users_.begin(), users_.end(), user,
                               [](const UserBlock& b, UserId id) { return b.user < id; });
    return (it != users_.end() && it->user == user) ? &*it : nullptr;
}

MixedModelPosterior::MixedModelPosterior(std::shared_ptr<const SufficientStatistics> stats, const Hyperparameters& hp)
    : stats_(std::move(stats)), prior_mean_(hp.prior_mean) {
    const auto& st = *stats_;
    const auto p = Eigen::Index(st.dim());
    if (hp.dim() != st.dim()) throw std::invalid_argument("hyperparameter dimension mismatch");
    if ((hp.prior_mean - st.prior_mean()).cwiseAbs().maxCoeff() > 0.0) {
        throw std::invalid_argument("statistics were centered with a different prior mean");
    }
    const KernelVariant& variant = st.variant();
    const double s2 = hp.noise_var;

    // Whitened loadings: A_t = [W, root(t,:) (x) V], user effect U.
    const std::size_t n_nodes = st.nodes().size();
    root_ = Matrix::Ones(1, 1);
    switch (variant.kind) {
        case KernelKind::Complete:
            w_ = psd_sqrt_factor(hp.prior_cov);
            user_loading_ = Matrix(p, 0);
            break;
        case KernelKind::Pooled:
            w_ = psd_sqrt_factor(hp.prior_cov);
            user_loading_ = psd_sqrt_factor(hp.random_effect_cov);
            break;
        case KernelKind::PersonSpecific:
            user_loading_ = psd_sqrt_factor(hp.prior_cov + hp.random_effect_cov);
            break;
        case KernelKind::TimeVarying:
        case KernelKind::TVGP: {
            const bool tv = variant.kind == KernelKind::TimeVarying;
            if (tv && (!hp.time_effect_cov || !hp.time_lengthscale)) {
                throw std::invalid_argument("time-varying model needs time_effect_cov and time_lengthscale");
            }
            Matrix corr(static_cast<Eigen::Index>(n_nodes), Eigen::Index(n_nodes));
            for (std::size_t a = 0; a < n_nodes; ++a)
                for (std::size_t b = 0; b < n_nodes; ++b)
                    corr(Eigen::Index(a), Eigen::Index(b)) =
                        tv ? time_correlation(st.nodes()[a], st.nodes()[b], *hp.time_lengthscale)
                           : forgetting_correlation(st.nodes()[a], st.nodes()[b], variant.forgetting);
            root_ = psd_sqrt_factor(corr);
            if (tv) {
                w_ = psd_sqrt_factor(hp.prior_cov);
                v_ = psd_sqrt_factor(*hp.time_effect_cov);
                user_loading_ = psd_sqrt_factor(hp.random_effect_cov);
            } else {
                v_ = psd_sqrt_factor(hp.prior_cov);
                user_loading_ = Matrix(p, 0);
            }
            break;
        }
    }
    if (w_.size() == 0) w_ = Matrix(p, 0);
    if (v_.size() == 0) v_ = Matrix(p, 0);
    const Eigen::Index gw = w_.cols(), gv = v_.cols(), m = root_.cols();
    global_dim_ = gw + m * gv;
    const Eigen::Index g = global_dim_;
    const Eigen::Index q = user_loading_.cols();
    const bool timed = variant.time_dependent();
    auto weights = [&](std::size_t node) { return root_.row(timed ? Eigen::Index(node) : 0); };

    // Population block of the posterior precision and its right-hand side.
    Matrix schur = Matrix::Identity(g, g);
    Vector rhs = Vector::Zero(g);
    {
        Matrix gram_total = Matrix::Zero(p, p);
        Vector cross_total = Vector::Zero(p);
        for (std::size_t t = 0; t < st.node_totals().size(); ++t) {
            const auto& cell = st.node_totals()[t];
            gram_total += cell.gram;
            cross_total += cell.cross;
            if (gv == 0) continue;
            const auto r = weights(t);
            const Matrix gvm = cell.gram.lazyProduct(v_);
            const Matrix vgv = v_.transpose().lazyProduct(gvm);
            const Matrix wgv = w_.transpose().lazyProduct(gvm);
            const Vector vc = v_.transpose() * cell.cross;
            for (Eigen::Index a = 0; a < m; ++a) {
                if (r[a] == 0.0) continue;
                schur.block(0, gw + a * gv, gw, gv) += r[a] * wgv / s2;
                rhs.segment(gw + a * gv, gv) += r[a] * vc / s2;
                for (Eigen::Index b = 0; b < m; ++b)
                    schur.block(gw + a * gv, gw + b * gv, gv, gv) += r[a] * r[b] * vgv / s2;
            }
        }
        if (gw > 0) {
            schur.topLeftCorner(gw, gw) += w_.transpose() * gram_total * w_ / s2;
            rhs.head(gw) += w_.transpose() * cross_total / s2;
        }
        schur.bottomLeftCorner(g - gw, gw) = schur.topRightCorner(gw, g - gw).transpose();
    }

    double quad = 0.0;
    double log_det = 0.0;
    user_solves_.resize(q > 0 ? st.users().size() : 0);
    if (q > 0) {
        for (std::size_t u = 0; u < st.users().size(); ++u) {
            const auto& block = st.users()[u];
            const Matrix ug = user_loading_.transpose().lazyProduct(block.gram);
            Matrix lambda = Matrix::Identity(q, q);
            lambda.noalias() += ug.lazyProduct(user_loading_) / s2;
            Matrix coupling = Matrix::Zero(q, g);
            if (gw > 0) coupling.leftCols(gw) = ug.lazyProduct(w_) / s2;
            if (gv > 0) {
                for (const auto& cell : block.cells) {
                    const Matrix ugv = user_loading_.transpose().lazyProduct(cell.gram.lazyProduct(v_)) / s2;
                    const auto r = weights(cell.node);
                    for (Eigen::Index a = 0; a < m; ++a)
                        if (r[a] != 0.0) coupling.middleCols(gw + a * gv, gv) += r[a] * ugv;
                }
            }
            const Vector b = user_loading_.transpose() * block.cross / s2;
            auto& solve = user_solves_[u];
            solve.chol.compute(lambda);
            if (solve.chol.info() != Eigen::Success) throw FactorizationError("user precision block", 0.0);
            solve.coupling_solved = coupling;
            cholesky_solve_in_place(solve.chol, solve.coupling_solved);
            solve.rhs_solved = b;
            cholesky_solve_in_place(solve.chol, solve.rhs_solved);
            quad += b.dot(solve.rhs_solved);
            log_det += 2.0 * solve.chol.matrixLLT().diagonal().array().log().sum();
            if (g > 0) {
                schur.noalias() -= coupling.transpose().lazyProduct(solve.coupling_solved);
                rhs.noalias() -= coupling.transpose() * solve.rhs_solved;
            }
        }
    }

    schur_chol_.compute(0.5 * (schur + schur.transpose()));
    if (schur_chol_.info() != Eigen::Success) throw FactorizationError("population precision block", 0.0);
    global_mean_ = schur_chol_.solve(rhs);
    quad += rhs.dot(global_mean_);
    log_det += 2.0 * schur_chol_.matrixLLT().diagonal().array().log().sum();

    const double n = double(st.count());
    log_marginal_likelihood_ =
        -0.5 * (st.centered_sq() / s2 - quad + n * std::log(s2) + log_det + n * std::log(2.0 * std::numbers::pi));
}

Posterior MixedModelPosterior::posterior(UserId user, double time) const {
    const auto& st = *stats_;
    const std::size_t node = st.variant().time_dependent() ? st.node_of(time) : 0;
    Matrix a = global_loading(node);
    const Eigen::Index q = user_loading_.cols();

    Posterior post;
    post.mean = prior_mean_;
    post.cov = Matrix::Zero(a.rows(), a.rows());
    const SufficientStatistics::UserBlock* block = q > 0 ? st.find_user(user) : nullptr;
    if (block != nullptr) {
        const auto& solve = user_solves_[std::size_t(block - st.users().data())];
        if (global_dim_ > 0) a -= user_loading_ * solve.coupling_solved;
        post.mean += user_loading_ * solve.rhs_solved;
        const Matrix half = solve.chol.matrixL().solve(user_loading_.transpose());
        post.cov += half.transpose() * half;
    } else if (q > 0) {
        post.cov += user_loading_ * user_loading_.transpose();
    }
    if (global_dim_ > 0) {
        post.mean += a * global_mean_;
        const Matrix half = schur_chol_.matrixL().solve(a.transpose());
        post.cov += half.transpose() * half;
    }
    post.cov = 0.5 * (post.cov + post.cov.transpose());
    return post;
}

Matrix MixedModelPosterior::global_loading(std::size_t node) const {
    const Eigen::Index gw = w_.cols(), gv = v_.cols();
    Matrix a(w_.rows(), global_dim_);
    a.leftCols(gw) = w_;
    if (gv > 0) {
        const auto r = root_.row(stats_->variant().time_dependent() ? Eigen::Index(node) : 0);
        a.rightCols(global_dim_ - gw) = kron_row_loading(r.transpose(), v_);
    }
    return a;
}

MixedModelPosterior make_mixed_model(const History& history, const Hyperparameters& hp, const KernelVariant& variant,
                                     std::span<const double> target_times) {
    auto stats = std::make_shared<const SufficientStatistics>(history, hp.prior_mean, variant, target_times);
    return MixedModelPosterior(std::move(stats), hp);
}

}  // namespace ipool
