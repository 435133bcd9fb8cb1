#include "ipool/features.hpp"

#include <doctest.h>

#include <random>

using namespace ipool;

namespace {

ContextState random_state(std::mt19937_64& rng) {
    std::bernoulli_distribution b(0.5);
    return {std::uint8_t(b(rng)), std::uint8_t(b(rng)), std::uint8_t(b(rng)), std::uint8_t(b(rng)),
            std::uint8_t(b(rng))};
}

}  // namespace

TEST_CASE("build_phi lays out (S, pi S, (A - pi) S)") {
    const double s[] = {1, 0, 0, 0, 0, 0};
    const Vector phi = build_phi(s, 0.5, 1.0);
    REQUIRE(phi.size() == 18);
    Vector expected = Vector::Zero(18);
    expected[0] = 1.0;
    expected[6] = 0.5;
    expected[12] = 0.5;
    CHECK(phi.isApprox(expected));
}

TEST_CASE("build_phi centering block vanishes when A equals pi") {
    const double s[] = {1, 1, 0, 1, 1, 0};
    CHECK(build_phi(s, 1.0, 1.0).tail(6).isZero(0.0));
    CHECK(build_phi(s, 0.37, 0.37).tail(6).isZero(0.0));
}

TEST_CASE("build_phi third block is -pi S when A = 0") {
    const double s[] = {1, 1, 0, 1, 0, 1};
    const Vector phi = build_phi(s, 0.2, 0.0);
    for (int j = 0; j < 6; ++j) CHECK(phi[12 + j] == doctest::Approx(-0.2 * s[j]));
}

TEST_CASE("build_phi rejects probabilities outside [0,1]") {
    const double s[] = {1, 0};
    CHECK_THROWS_AS(build_phi(s, 1.5, 1.0), std::invalid_argument);
}

TEST_CASE("phi(s,1) - phi(s,0) depends only on the centered block") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const FeatureLayout layout;
    for (int trial = 0; trial < 100; ++trial) {
        const ContextState s = random_state(rng);
        const double pi = u(rng);
        const Vector diff = layout.phi(s, pi, Action::ActivitySuggestion) - layout.phi(s, pi, Action::AntiSedentary);
        CHECK((diff - layout.action_difference(s)).cwiseAbs().maxCoeff() < 1e-15);
        CHECK(diff.head(10).isZero(0.0));
    }
}

TEST_CASE("build_phi is linear in S for fixed (pi, A)") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> z;
    for (int trial = 0; trial < 20; ++trial) {
        double s1[4], s2[4], mix[4];
        const double a = z(rng), b = z(rng);
        for (int j = 0; j < 4; ++j) {
            s1[j] = z(rng);
            s2[j] = z(rng);
            mix[j] = a * s1[j] + b * s2[j];
        }
        const Vector lhs = build_phi(mix, 0.3, 1.0);
        const Vector rhs = a * build_phi(s1, 0.3, 1.0) + b * build_phi(s2, 0.3, 1.0);
        CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("default layout drops temperature and marks intercept/location random effects") {
    const FeatureLayout layout;
    CHECK(layout.dim() == 15);
    ContextState s{1, 0, 1, 1, 1};
    const Vector sv = layout.state_vector(s);
    CHECK(sv.size() == 5);
    CHECK(sv[0] == 1.0);
    CHECK(sv[1] == 1.0);  // time of day
    CHECK(sv[3] == 1.0);  // prior activity
    CHECK(sv[4] == 1.0);  // location
    CHECK(layout.random_effect_coordinates() == std::vector<std::size_t>{0, 4, 5, 9, 10, 14});
    CHECK(FeatureLayout::full().dim() == 18);
}

TEST_CASE("encode_state thresholds raw measurements") {
    EncodingThresholds t;
    t.step_median = 3.0;
    RawMeasurements raw;
    raw.hour = 10.0;
    raw.weekday = 5;  // Saturday
    raw.temperature = 25.0;
    raw.prior_log_steps = 3.5;
    raw.home_or_work = false;
    const ContextState s = encode_state(raw, t);
    CHECK(s.time_of_day == 0);
    CHECK(s.day_of_week == 1);
    CHECK(s.temperature == 1);
    CHECK(s.prior_activity == 1);
    CHECK(s.location == 0);

    raw.hour = 15.0;
    raw.weekday = 2;
    raw.prior_log_steps = 3.0;  // equal to the median: not above
    const ContextState s2 = encode_state(raw, t);
    CHECK(s2.time_of_day == 1);
    CHECK(s2.day_of_week == 0);
    CHECK(s2.prior_activity == 0);
}

TEST_CASE("encode_state reports the missing field") {
    RawMeasurements raw = RawMeasurements::from_state({});
    raw.temperature.reset();
    try {
        encode_state(raw, EncodingThresholds::binary());
        FAIL("expected MissingFieldError");
    } catch (const MissingFieldError& e) {
        CHECK(e.field() == "temperature");
    }
}

TEST_CASE("encode_state is the identity on already-binary inputs") {
    for (int code = 0; code < 32; ++code) {
        ContextState s{std::uint8_t(code & 1), std::uint8_t((code >> 1) & 1), std::uint8_t((code >> 2) & 1),
                       std::uint8_t((code >> 3) & 1), std::uint8_t((code >> 4) & 1)};
        CHECK(encode_state(RawMeasurements::from_state(s), EncodingThresholds::binary()) == s);
    }
}
