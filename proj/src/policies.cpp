#include "ipool/policies.hpp"

#include <cmath>

namespace ipool {

std::string_view to_string(PolicyKind kind) {
    switch (kind) {
        case PolicyKind::IntelligentPooling: return "intelligent_pooling";
        case PolicyKind::PersonSpecific: return "person_specific";
        case PolicyKind::Complete: return "complete";
        case PolicyKind::IntelligentPoolingTV: return "intelligent_pooling_tv";
        case PolicyKind::TVGP: return "tvgp";
    }
    throw std::logic_error("unknown policy kind");
}

PolicyKind parse_policy(std::string_view name) {
    for (auto k : {PolicyKind::IntelligentPooling, PolicyKind::PersonSpecific, PolicyKind::Complete,
                   PolicyKind::IntelligentPoolingTV, PolicyKind::TVGP}) {
        if (name == to_string(k)) return k;
    }
    throw std::invalid_argument("unknown policy '" + std::string(name) +
                                "' (expected intelligent_pooling, person_specific, complete, "
                                "intelligent_pooling_tv or tvgp)");
}

KernelVariant variant_for(PolicyKind kind, double forgetting) {
    KernelVariant v;
    v.forgetting = forgetting;
    switch (kind) {
        case PolicyKind::IntelligentPooling: v.kind = KernelKind::Pooled; break;
        case PolicyKind::PersonSpecific: v.kind = KernelKind::PersonSpecific; break;
        case PolicyKind::Complete: v.kind = KernelKind::Complete; break;
        case PolicyKind::IntelligentPoolingTV: v.kind = KernelKind::TimeVarying; break;
        case PolicyKind::TVGP: v.kind = KernelKind::TVGP; break;
    }
    return v;
}

double randomization_probability(const Posterior& post, const Vector& action_difference) {
    const double location = action_difference.dot(post.mean);
    const double variance = action_difference.dot(post.cov * action_difference);
    if (!std::isfinite(location) || !std::isfinite(variance)) {
        throw std::invalid_argument("randomization_probability: non-finite posterior");
    }
    if (variance <= 0.0) {
        if (location > 0.0) return 1.0;
        if (location < 0.0) return 0.0;
        return 0.5;
    }
    return 0.5 * std::erfc(-location / std::sqrt(2.0 * variance));
}

double randomization_probability(const Posterior& post, const ContextState& state, const FeatureLayout& layout) {
    return randomization_probability(post, layout.action_difference(state));
}

double clip(double pi, const ClipBounds& bounds) { return std::min(bounds.hi, std::max(bounds.lo, pi)); }

Action select_action(double pi, std::mt19937_64& rng) {
    std::bernoulli_distribution draw(pi);
    return draw(rng) ? Action::ActivitySuggestion : Action::AntiSedentary;
}

Decision decide(const Posterior& post, const ContextState& state, const FeatureLayout& layout,
                const ClipBounds& bounds, std::mt19937_64& rng) {
    const double pi = clip(randomization_probability(post, state, layout), bounds);
    return {select_action(pi, rng), pi, post};
}

Decision decide(PolicyKind policy, const History& history, const Hyperparameters& hp, UserId user, double time,
                const ContextState& state, std::mt19937_64& rng, const ClipBounds& bounds, double forgetting) {
    const double targets[] = {time};
    const auto model = make_mixed_model(history, hp, variant_for(policy, forgetting), targets);
    return decide(model.posterior(user, time), state, history.layout(), bounds, rng);
}

Learner::Learner(PolicyKind kind, FeatureLayout layout, Hyperparameters hp, Options options)
    : kind_(kind),
      layout_(std::move(layout)),
      hp_(std::move(hp)),
      options_(std::move(options)),
      variant_(variant_for(kind, options_.forgetting)) {
    options_.clip.validate();
    hp_.validate();
    if (hp_.dim() != layout_.dim()) throw std::invalid_argument("hyperparameters do not match the feature layout");
}

FitResult Learner::update_hyperparameters(const History& history, std::uint64_t seed) {
    if (!options_.fit_hyperparameters) {
        FitResult skipped;
        skipped.hp = hp_;
        skipped.warning = true;
        skipped.message = "hyperparameter fitting disabled";
        return skipped;
    }
    FitOptions fit = options_.fit;
    fit.seed = seed;
    FitResult result = fit_hyperparameters(history, hp_, options_.bounds, variant_, fit);
    hp_ = result.hp;
    return result;
}

void Learner::refresh(const History& history, std::span<const double> target_times) {
    model_ = std::make_unique<MixedModelPosterior>(make_mixed_model(history, hp_, variant_, target_times));
}

Posterior Learner::posterior(UserId user, double time) const {
    if (!model_) return {hp_.prior_mean, prior_weight_cov(hp_, variant_)};
    return model_->posterior(user, time);
}

Decision Learner::decide(UserId user, double time, const ContextState& state, std::mt19937_64& rng) const {
    return ipool::decide(posterior(user, time), state, layout_, options_.clip, rng);
}

}  // namespace ipool
