#pragma once

#include "ipool/kernel.hpp"
#include "ipool/mixed_model.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace ipool {

/// -1/2 [ R~'(K + s2 I)^{-1} R~ + log det(K + s2 I) + n log 2pi ], evaluated
/// on the dense n x n kernel system. Zero for an empty history.
double marginal_log_likelihood(const History& history, const Hyperparameters& hp, const KernelVariant& variant);

struct Bounds {
    double lower = 1e-6;
    double upper = 1e3;
};

/// Which variance components are searched, and their admissible ranges
/// (natural scale; the search runs on log scale).
struct HyperparamBounds {
    std::vector<std::size_t> random_effect_coords;
    std::vector<std::size_t> time_effect_coords;
    bool tie_random_effects = false;  // one shared variance for all random-effect coordinates
    Bounds variance{1e-6, 1e3};
    Bounds noise{1e-6, 1e3};
    Bounds lengthscale{1e-2, 1e6};
};

struct FitOptions {
    std::size_t min_observations = 10;
    int restarts = 3;
    int max_evaluations = 400;  // per simplex run
    double tolerance = 1e-7;
    double restart_spread = 1.5;  // half-width of the restart box, log units
    std::uint64_t seed = 0;
};

struct FitResult {
    Hyperparameters hp;
    double objective = 0.0;
    double initial_objective = 0.0;
    bool warning = false;
    std::string message;
    int evaluations = 0;
};

/// Replaces the searched variance components of hp0 by a local maximizer of
/// the marginal likelihood. Prior mean and covariance are left untouched.
/// Never returns a point with a lower objective than hp0; when nothing better
/// is found (or the history is too short) hp0 is returned with `warning` set.
FitResult fit_hyperparameters(const History& history, const Hyperparameters& hp0, const HyperparamBounds& bounds,
                              const KernelVariant& variant, const FitOptions& options = {});

struct SimplexResult {
    Vector argmin;
    double value = 0.0;
    int evaluations = 0;
};

/// Derivative-free Nelder-Mead minimization inside a box; vertices are
/// projected onto [lower, upper].
SimplexResult minimize_nelder_mead(const std::function<double(const Vector&)>& f, const Vector& start,
                                   const Vector& lower, const Vector& upper, int max_evaluations, double tolerance,
                                   double initial_step = 0.5);

}  // namespace ipool
