#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace ipool {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using UserId = int;

/// Binary context at a decision time; codes follow the categorical encoding
/// used throughout the simulator (0/1 per field).
struct ContextState {
    std::uint8_t time_of_day = 0;     // morning 0, afternoon 1
    std::uint8_t day_of_week = 0;     // weekday 0, weekend 1
    std::uint8_t temperature = 0;     // cold 0, hot 1
    std::uint8_t prior_activity = 0;  // low 0, high 1
    std::uint8_t location = 0;        // other 0, home/work 1

    friend bool operator==(const ContextState&, const ContextState&) = default;
};

enum class Action : int { AntiSedentary = 0, ActivitySuggestion = 1 };

inline double as_double(Action a) { return static_cast<double>(static_cast<int>(a)); }

inline Action action_from_int(int value) {
    if (value != 0 && value != 1) {
        throw std::invalid_argument("action must be 0 or 1, got " + std::to_string(value));
    }
    return static_cast<Action>(value);
}

/// Number of entries in the intercept-augmented state vector.
inline constexpr std::size_t kStateDim = 6;

/// Positions inside the intercept-augmented state vector.
enum StateIndex : std::size_t {
    kIntercept = 0,
    kTimeOfDay = 1,
    kDayOfWeek = 2,
    kPriorActivity = 3,
    kLocation = 4,
    kTemperature = 5,
};

using StateVector = std::array<double, kStateDim>;

/// (1, time_of_day, day_of_week, prior_activity, location, temperature)
inline StateVector assemble(const ContextState& s) {
    return {1.0, double(s.time_of_day), double(s.day_of_week), double(s.prior_activity),
            double(s.location), double(s.temperature)};
}

/// One logged decision: the element of the shared dataset.
struct Interaction {
    UserId user = 0;
    int decision_index = 1;
    /// Coordinate used by the time-varying kernels. Defaults to the decision index.
    double time = 1.0;
    ContextState state;
    Action action = Action::AntiSedentary;
    double probability = 0.5;
    double reward = 0.0;
};

struct Hyperparameters {
    Vector prior_mean;                      // mu_w
    Matrix prior_cov;                       // Sigma_w
    Matrix random_effect_cov;               // Sigma_u
    double noise_var = 1.0;                 // sigma_eps^2
    std::optional<Matrix> time_effect_cov;  // D_v
    std::optional<double> time_lengthscale; // sigma_rho

    std::size_t dim() const { return static_cast<std::size_t>(prior_mean.size()); }

    /// Throws std::invalid_argument when shapes disagree or a covariance is
    /// not symmetric PSD (tolerance relative to its scale).
    void validate() const;

    /// Isotropic defaults used in tests: mu=0, Sigma_w=sw*I, Sigma_u=su*I.
    static Hyperparameters isotropic(std::size_t p, double sw, double su, double noise);
};

struct Posterior {
    Vector mean;
    Matrix cov;
};

class FactorizationError : public std::runtime_error {
public:
    FactorizationError(const std::string& what, double jitter)
        : std::runtime_error(what + " (last jitter " + std::to_string(jitter) + ")"),
          jitter_(jitter) {}
    double jitter() const { return jitter_; }

private:
    double jitter_;
};

}  // namespace ipool
