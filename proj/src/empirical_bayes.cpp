#include "ipool/empirical_bayes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

namespace ipool {

double marginal_log_likelihood(const History& history, const Hyperparameters& hp, const KernelVariant& variant) {
    if (history.empty()) return 0.0;
    Matrix k = kernel_matrix(history, hp, variant);
    k.diagonal().array() += hp.noise_var;
    const JitteredCholesky chol(k);
    const Vector r = centered_rewards(history, hp);
    const double n = double(history.size());
    return -0.5 * (r.dot(chol.solve(r)) + chol.log_det() + n * std::log(2.0 * std::numbers::pi));
}

SimplexResult minimize_nelder_mead(const std::function<double(const Vector&)>& f, const Vector& start,
                                   const Vector& lower, const Vector& upper, int max_evaluations, double tolerance,
                                   double initial_step) {
    const Eigen::Index d = start.size();
    auto project = [&](Vector x) { return Vector(x.cwiseMax(lower).cwiseMin(upper)); };

    SimplexResult out;
    std::vector<Vector> pts;
    std::vector<double> vals;
    auto eval = [&](const Vector& x) {
        ++out.evaluations;
        const double v = f(x);
        return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
    };

    pts.push_back(project(start));
    vals.push_back(eval(pts[0]));
    for (Eigen::Index j = 0; j < d; ++j) {
        Vector x = pts[0];
        x[j] = x[j] + initial_step <= upper[j] ? x[j] + initial_step : x[j] - initial_step;
        pts.push_back(project(x));
        vals.push_back(eval(pts.back()));
    }

    std::vector<std::size_t> order(pts.size());
    while (out.evaluations < max_evaluations) {
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
        const std::size_t best = order.front(), worst = order.back(), second = order[order.size() - 2];
        if (std::abs(vals[worst] - vals[best]) <= tolerance * (1.0 + std::abs(vals[best]))) break;

        Vector centroid = Vector::Zero(d);
        for (std::size_t i = 0; i + 1 < order.size(); ++i) centroid += pts[order[i]];
        centroid /= double(d);

        const Vector reflected = project(centroid + (centroid - pts[worst]));
        const double fr = eval(reflected);
        if (fr < vals[best]) {
            const Vector expanded = project(centroid + 2.0 * (centroid - pts[worst]));
            const double fe = eval(expanded);
            if (fe < fr) {
                pts[worst] = expanded;
                vals[worst] = fe;
            } else {
                pts[worst] = reflected;
                vals[worst] = fr;
            }
            continue;
        }
        if (fr < vals[second]) {
            pts[worst] = reflected;
            vals[worst] = fr;
            continue;
        }
        const bool outside = fr < vals[worst];
        const Vector contracted =
            outside ? project(centroid + 0.5 * (reflected - centroid)) : project(centroid + 0.5 * (pts[worst] - centroid));
        const double fc = eval(contracted);
        if (fc < std::min(fr, vals[worst])) {
            pts[worst] = contracted;
            vals[worst] = fc;
            continue;
        }
        // Shrink toward the best vertex.
        for (std::size_t i = 0; i < pts.size(); ++i) {
            if (i == best) continue;
            pts[i] = project(pts[best] + 0.5 * (pts[i] - pts[best]));
            vals[i] = eval(pts[i]);
        }
    }
    const auto it = std::min_element(vals.begin(), vals.end());
    out.argmin = pts[std::size_t(it - vals.begin())];
    out.value = *it;
    return out;
}

namespace {

bool fits_random_effects(KernelKind k) {
    return k == KernelKind::Pooled || k == KernelKind::PersonSpecific || k == KernelKind::TimeVarying;
}

/// Maps between the log-scale search vector and Hyperparameters.
class Parameterization {
public:
    Parameterization(const Hyperparameters& hp0, const HyperparamBounds& bounds, const KernelVariant& variant)
        : base_(hp0), bounds_(bounds), kind_(variant.kind) {
        const auto p = hp0.dim();
        auto check_coords = [p](const std::vector<std::size_t>& coords) {
            for (auto c : coords)
                if (c >= p) throw std::invalid_argument("variance-component coordinate out of range");
        };
        check_coords(bounds.random_effect_coords);
        check_coords(bounds.time_effect_coords);
        for (const Bounds& b : {bounds.variance, bounds.noise, bounds.lengthscale}) {
            if (!(b.lower > 0.0 && b.lower < b.upper)) throw std::invalid_argument("bounds need 0 < lower < upper");
        }
        if (kind_ == KernelKind::TimeVarying && (!hp0.time_effect_cov || !hp0.time_lengthscale)) {
            throw std::invalid_argument("time-varying fit needs initial time_effect_cov and time_lengthscale");
        }
        auto add = [&](double value, const Bounds& b, const char* name) {
            if (value < b.lower || value > b.upper) {
                throw std::invalid_argument(std::string("initial ") + name + " outside bounds");
            }
            start_.push_back(std::log(value));
            lower_.push_back(std::log(b.lower));
            upper_.push_back(std::log(b.upper));
        };
        if (fits_random_effects(kind_) && !bounds.random_effect_coords.empty()) {
            if (bounds.tie_random_effects) {
                const auto c0 = Eigen::Index(bounds.random_effect_coords.front());
                add(hp0.random_effect_cov(c0, c0), bounds.variance, "random-effect variance");
            } else {
                for (auto c : bounds.random_effect_coords)
                    add(hp0.random_effect_cov(Eigen::Index(c), Eigen::Index(c)), bounds.variance,
                        "random-effect variance");
            }
        }
        add(hp0.noise_var, bounds.noise, "noise variance");
        if (kind_ == KernelKind::TimeVarying) {
            for (auto c : bounds.time_effect_coords)
                add((*hp0.time_effect_cov)(Eigen::Index(c), Eigen::Index(c)), bounds.variance, "time-effect variance");
            add(*hp0.time_lengthscale, bounds.lengthscale, "time lengthscale");
        }
    }

    Vector start() const { return Eigen::Map<const Vector>(start_.data(), Eigen::Index(start_.size())); }
    Vector lower() const { return Eigen::Map<const Vector>(lower_.data(), Eigen::Index(lower_.size())); }
    Vector upper() const { return Eigen::Map<const Vector>(upper_.data(), Eigen::Index(upper_.size())); }

    Hyperparameters decode(const Vector& theta) const {
        Hyperparameters hp = base_;
        const auto p = Eigen::Index(base_.dim());
        Eigen::Index k = 0;
        auto value = [&](const Bounds& b) { return std::clamp(std::exp(theta[k++]), b.lower, b.upper); };
        if (fits_random_effects(kind_) && !bounds_.random_effect_coords.empty()) {
            hp.random_effect_cov = Matrix::Zero(p, p);
            const double shared = bounds_.tie_random_effects ? value(bounds_.variance) : 0.0;
            for (auto c : bounds_.random_effect_coords)
                hp.random_effect_cov(Eigen::Index(c), Eigen::Index(c)) =
                    bounds_.tie_random_effects ? shared : value(bounds_.variance);
        }
        hp.noise_var = value(bounds_.noise);
        if (kind_ == KernelKind::TimeVarying) {
            Matrix dv = Matrix::Zero(p, p);
            for (auto c : bounds_.time_effect_coords) dv(Eigen::Index(c), Eigen::Index(c)) = value(bounds_.variance);
            hp.time_effect_cov = dv;
            hp.time_lengthscale = value(bounds_.lengthscale);
        }
        return hp;
    }

private:
    Hyperparameters base_;
    HyperparamBounds bounds_;
    KernelKind kind_;
    std::vector<double> start_, lower_, upper_;
};

}  // namespace

FitResult fit_hyperparameters(const History& history, const Hyperparameters& hp0, const HyperparamBounds& bounds,
                              const KernelVariant& variant, const FitOptions& options) {
    const Parameterization param(hp0, bounds, variant);
    auto stats = std::make_shared<const SufficientStatistics>(history, hp0.prior_mean, variant);
    auto objective = [&](const Hyperparameters& hp) {
        try {
            return MixedModelPosterior(stats, hp).log_marginal_likelihood();
        } catch (const FactorizationError&) {
            return -std::numeric_limits<double>::infinity();
        }
    };

    FitResult result;
    result.hp = hp0;
    result.initial_objective = objective(hp0);
    result.objective = result.initial_objective;
    if (history.size() < options.min_observations) {
        result.warning = true;
        result.message = "too few observations for a hyperparameter update";
        return result;
    }

    const Vector lower = param.lower(), upper = param.upper();
    if (history.size() < std::size_t(lower.size())) {
        result.warning = true;
        result.message = "under-determined: fewer observations than searched components";
        return result;
    }
    auto negated = [&](const Vector& theta) { return -objective(param.decode(theta)); };

    std::mt19937_64 rng(options.seed);
    std::uniform_real_distribution<double> jitter(-options.restart_spread, options.restart_spread);
    double best_value = std::numeric_limits<double>::infinity();
    Vector best_theta;
    for (int run = 0; run <= options.restarts; ++run) {
        Vector start = param.start();
        if (run > 0) {
            for (Eigen::Index j = 0; j < start.size(); ++j) start[j] += jitter(rng);
        }
        const SimplexResult sr =
            minimize_nelder_mead(negated, start, lower, upper, options.max_evaluations, options.tolerance);
        result.evaluations += sr.evaluations;
        if (sr.value < best_value) {  // strict: earliest run wins ties
            best_value = sr.value;
            best_theta = sr.argmin;
        }
    }

    const double achieved = -best_value;
    if (!(achieved > result.initial_objective)) {
        result.warning = true;
        result.message = "optimizer did not improve on the initial hyperparameters";
        return result;
    }
    result.hp = param.decode(best_theta);
    result.objective = achieved;
    return result;
}

}  // namespace ipool
