#pragma once

#include "ipool/types.hpp"

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ipool {

/// phi(S, pi, A) = (S, pi*S, (A - pi)*S) for an arbitrary state vector S.
Vector build_phi(std::span<const double> state, double probability, double action);

/// Which entries of the intercept-augmented state enter the feature map, and
/// which feature coordinates carry random effects.
class FeatureLayout {
public:
    /// Default: (intercept, time_of_day, day_of_week, prior_activity, location).
    /// Temperature is part of the generative state only.
    FeatureLayout();
    explicit FeatureLayout(std::vector<std::size_t> state_indices);

    /// Full layout including temperature (all six state entries).
    static FeatureLayout full();

    std::size_t state_dim() const { return state_indices_.size(); }
    std::size_t dim() const { return 3 * state_indices_.size(); }
    const std::vector<std::size_t>& state_indices() const { return state_indices_; }

    /// The masked state vector S used inside phi.
    Vector state_vector(const ContextState& s) const;

    Vector phi(const ContextState& s, double probability, Action a) const;

    /// phi(s, 1) - phi(s, 0) = (0, 0, S); the probability cancels.
    Vector action_difference(const ContextState& s) const;

    /// Feature coordinates of the given state entries in all three blocks.
    std::vector<std::size_t> coordinates_of(std::span<const std::size_t> state_entries) const;

    /// Intercept and location coordinates of each block.
    std::vector<std::size_t> random_effect_coordinates() const;

private:
    std::vector<std::size_t> state_indices_;
};

/// Raw sensor-style measurements before categorical encoding.
struct RawMeasurements {
    std::optional<double> hour;             // local clock hour, e.g. 10.5 for 10:30
    std::optional<int> weekday;             // 0 = Monday ... 6 = Sunday
    std::optional<double> temperature;      // degrees
    std::optional<double> prior_log_steps;  // log step count over the prior 30 minutes
    std::optional<bool> home_or_work;

    /// Canonical raw values that encode back to `s` under binary_thresholds().
    static RawMeasurements from_state(const ContextState& s);
};

struct EncodingThresholds {
    double afternoon_from_hour = 15.0;
    double hot_above = 20.0;
    /// Median of the historical 30-minute log step counts.
    double step_median = 0.0;

    /// Thresholds under which 0/1 inputs map to themselves.
    static EncodingThresholds binary();
};

class MissingFieldError : public std::invalid_argument {
public:
    explicit MissingFieldError(const std::string& field)
        : std::invalid_argument("missing measurement: " + field), field_(field) {}
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

/// Hours before `afternoon_from_hour` are morning (0), the rest afternoon (1);
/// weekend days are 1; temperature and prior steps are 1 strictly above their
/// thresholds.
ContextState encode_state(const RawMeasurements& raw, const EncodingThresholds& thresholds);

}  // namespace ipool
