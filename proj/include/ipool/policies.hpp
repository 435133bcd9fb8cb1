#pragma once

#include "ipool/empirical_bayes.hpp"
#include "ipool/features.hpp"
#include "ipool/kernel.hpp"
#include "ipool/mixed_model.hpp"

#include <memory>
#include <random>
#include <string>
#include <string_view>

namespace ipool {

enum class PolicyKind { IntelligentPooling, PersonSpecific, Complete, IntelligentPoolingTV, TVGP };

std::string_view to_string(PolicyKind kind);
PolicyKind parse_policy(std::string_view name);

KernelVariant variant_for(PolicyKind kind, double forgetting = 0.03);

struct ClipBounds {
    double lo = 0.1;
    double hi = 0.8;

    void validate() const {
        if (!(0.0 < lo && lo < hi && hi < 1.0)) throw std::invalid_argument("clip bounds need 0 < lo < hi < 1");
    }
};

/// Pr{ d' w > 0 } for w ~ N(mean, cov), with d = phi(s,1) - phi(s,0).
double randomization_probability(const Posterior& post, const Vector& action_difference);
double randomization_probability(const Posterior& post, const ContextState& state, const FeatureLayout& layout);

double clip(double pi, const ClipBounds& bounds);

Action select_action(double pi, std::mt19937_64& rng);

struct Decision {
    Action action;
    double probability;  // clipped
    Posterior posterior;
};

/// Decision from a fixed posterior.
Decision decide(const Posterior& post, const ContextState& state, const FeatureLayout& layout,
                const ClipBounds& bounds, std::mt19937_64& rng);

/// One-shot decision: posterior from `history` for (user, time) under the
/// policy's kernel, then probability, clip and draw.
Decision decide(PolicyKind policy, const History& history, const Hyperparameters& hp, UserId user, double time,
                const ContextState& state, std::mt19937_64& rng, const ClipBounds& bounds = {},
                double forgetting = 0.03);

/// Learning state for one policy inside a trial: posteriors are refreshed at
/// update times and reused at every decision time in between.
class Learner {
public:
    struct Options {
        ClipBounds clip;
        double forgetting = 0.03;
        bool fit_hyperparameters = true;
        HyperparamBounds bounds;
        FitOptions fit;
    };

    Learner(PolicyKind kind, FeatureLayout layout, Hyperparameters hp, Options options);

    PolicyKind kind() const { return kind_; }
    const Hyperparameters& hyperparameters() const { return hp_; }
    const FeatureLayout& layout() const { return layout_; }

    /// Empirical-Bayes update of the variance components. Returns the fit
    /// report (hp unchanged when the fit warns).
    FitResult update_hyperparameters(const History& history, std::uint64_t seed);

    /// Recomputes posteriors from the full history. `target_times` lists the
    /// time coordinates decisions will be made at until the next refresh.
    void refresh(const History& history, std::span<const double> target_times);

    Posterior posterior(UserId user, double time) const;
    Decision decide(UserId user, double time, const ContextState& state, std::mt19937_64& rng) const;

private:
    PolicyKind kind_;
    FeatureLayout layout_;
    Hyperparameters hp_;
    Options options_;
    KernelVariant variant_;
    std::unique_ptr<MixedModelPosterior> model_;
};

}  // namespace ipool
