#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ipool {

struct CheckReport {
    std::string name;
    double max_deviation = 0.0;
    double tolerance = 0.0;
    double seconds = 0.0;
    bool passed() const { return max_deviation <= tolerance; }
};

struct OracleCheckOptions {
    std::uint64_t seed = 20200101;
    /// Negative control: the library side sees a perturbed random-effect
    /// covariance (0.1 I added; the large-sigma check pins it to 0.1 instead)
    /// while the oracles keep the true one.
    bool corrupt_kernel = false;
};

/// Scalar two-user closed form against both posterior routes.
CheckReport check_two_user(const OracleCheckOptions& options, int cases = 100);
/// Stacked joint-Gaussian regression against both posterior routes (mean and covariance).
CheckReport check_stacked(const OracleCheckOptions& options, int cases = 25);
/// sigma_u^2 = 1e-12: largest |pi_IP - pi_Complete| over random decisions.
CheckReport check_small_random_effect_probability(const OracleCheckOptions& options, int decisions = 50);
/// sigma_u^2 = 1e-12: largest posterior-mean gap to complete pooling.
CheckReport check_small_random_effect_mean(const OracleCheckOptions& options, int cases = 20);
/// sigma_u^2 = 1e8, scalar: largest relative gap to Y_i / C_i.
CheckReport check_large_random_effect(const OracleCheckOptions& options, int cases = 20);
/// Marginal likelihood against a direct multivariate normal log-density.
CheckReport check_marginal_likelihood(const OracleCheckOptions& options, int cases = 20);
/// Median relative error of fitted (sigma_u^2, sigma_eps^2) over synthetic
/// recovery seeds 0..seeds-1 (users x points each); the larger of the two.
CheckReport check_hyperparameter_recovery(int seeds = 10, int users = 20, int points = 100);

/// The oracle-check suite in a fixed order.
std::vector<CheckReport> run_oracle_checks(const OracleCheckOptions& options);

}  // namespace ipool
