#include "ipool/features.hpp"

#include <algorithm>

namespace ipool {

Vector build_phi(std::span<const double> state, double probability, double action) {
    if (!(probability >= 0.0 && probability <= 1.0)) {
        throw std::invalid_argument("probability must lie in [0,1]");
    }
    const auto d = static_cast<Eigen::Index>(state.size());
    Vector phi(3 * d);
    for (Eigen::Index j = 0; j < d; ++j) {
        const double s = state[static_cast<std::size_t>(j)];
        phi[j] = s;
        phi[d + j] = probability * s;
        phi[2 * d + j] = (action - probability) * s;
    }
    return phi;
}

FeatureLayout::FeatureLayout()
    : state_indices_{kIntercept, kTimeOfDay, kDayOfWeek, kPriorActivity, kLocation} {}

FeatureLayout::FeatureLayout(std::vector<std::size_t> state_indices)
    : state_indices_(std::move(state_indices)) {
    if (state_indices_.empty()) throw std::invalid_argument("feature layout needs at least one state entry");
    for (auto idx : state_indices_) {
        if (idx >= kStateDim) throw std::invalid_argument("state index out of range");
    }
}

FeatureLayout FeatureLayout::full() {
    return FeatureLayout({kIntercept, kTimeOfDay, kDayOfWeek, kPriorActivity, kLocation, kTemperature});
}

Vector FeatureLayout::state_vector(const ContextState& s) const {
    const StateVector full = assemble(s);
    Vector out(static_cast<Eigen::Index>(state_indices_.size()));
    for (std::size_t j = 0; j < state_indices_.size(); ++j) out[Eigen::Index(j)] = full[state_indices_[j]];
    return out;
}

Vector FeatureLayout::phi(const ContextState& s, double probability, Action a) const {
    const Vector sv = state_vector(s);
    return build_phi(std::span<const double>(sv.data(), std::size_t(sv.size())), probability, as_double(a));
}

Vector FeatureLayout::action_difference(const ContextState& s) const {
    const auto d = static_cast<Eigen::Index>(state_dim());
    Vector diff = Vector::Zero(3 * d);
    diff.tail(d) = state_vector(s);
    return diff;
}

std::vector<std::size_t> FeatureLayout::coordinates_of(std::span<const std::size_t> state_entries) const {
    std::vector<std::size_t> coords;
    const std::size_t d = state_dim();
    for (std::size_t block = 0; block < 3; ++block) {
        for (auto entry : state_entries) {
            auto it = std::find(state_indices_.begin(), state_indices_.end(), entry);
            if (it == state_indices_.end()) continue;
            coords.push_back(block * d + std::size_t(it - state_indices_.begin()));
        }
    }
    std::sort(coords.begin(), coords.end());
    return coords;
}

std::vector<std::size_t> FeatureLayout::random_effect_coordinates() const {
    const std::size_t entries[] = {kIntercept, kLocation};
    return coordinates_of(entries);
}

RawMeasurements RawMeasurements::from_state(const ContextState& s) {
    RawMeasurements raw;
    raw.hour = s.time_of_day ? 15.0 : 9.0;
    raw.weekday = s.day_of_week ? 5 : 0;
    raw.temperature = s.temperature;
    raw.prior_log_steps = s.prior_activity;
    raw.home_or_work = s.location == 1;
    return raw;
}

EncodingThresholds EncodingThresholds::binary() {
    EncodingThresholds t;
    t.hot_above = 0.5;
    t.step_median = 0.5;
    return t;
}

ContextState encode_state(const RawMeasurements& raw, const EncodingThresholds& thresholds) {
    if (!raw.hour) throw MissingFieldError("hour");
    if (!raw.weekday) throw MissingFieldError("weekday");
    if (!raw.temperature) throw MissingFieldError("temperature");
    if (!raw.prior_log_steps) throw MissingFieldError("prior_log_steps");
    if (!raw.home_or_work) throw MissingFieldError("home_or_work");
    if (*raw.weekday < 0 || *raw.weekday > 6) throw std::invalid_argument("weekday must be in 0..6");

    ContextState s;
    s.time_of_day = *raw.hour >= thresholds.afternoon_from_hour ? 1 : 0;
    s.day_of_week = *raw.weekday >= 5 ? 1 : 0;
    s.temperature = *raw.temperature > thresholds.hot_above ? 1 : 0;
    s.prior_activity = *raw.prior_log_steps > thresholds.step_median ? 1 : 0;
    s.location = *raw.home_or_work ? 1 : 0;
    return s;
}

}  // namespace ipool
