#include <cmath>
#include <random>

#include <catch2/catch_amalgamated.hpp>

#include "dcfq/service_time.hpp"

using namespace dcfq;

namespace {

const SystemParams kBasic = preset(Mechanism::Basic);
const SystemParams kRts = preset(Mechanism::RtsCts);
constexpr int kInf = BackoffConfig::kInfinitePhases;

constexpr double kXOp = 0.0024402963186504972;
constexpr double kLambdaPrime = 0.3 / (10.0 * 177.0);

} // namespace

TEST_CASE("derivative triplets of z^m at one") {
    const Dual2 d = zpow_at_one(7.0);
    CHECK(d.v == 1.0);
    CHECK(d.d1 == 7.0);
    CHECK(d.d2 == 42.0);

    // Product rule through the dual type: z^3 * z^4 = z^7.
    const Dual2 prod = zpow_at_one(3.0) * zpow_at_one(4.0);
    CHECK(prod.d1 == Catch::Approx(7.0).epsilon(1e-15));
    CHECK(prod.d2 == Catch::Approx(42.0).epsilon(1e-15));

    // Quotient rule: z^9 / z^2 = z^7.
    const Dual2 quot = zpow_at_one(9.0) / zpow_at_one(2.0);
    CHECK(quot.d1 == Catch::Approx(7.0).epsilon(1e-15));
    CHECK(quot.d2 == Catch::Approx(42.0).epsilon(1e-15));
}

TEST_CASE("transform is a proper distribution at z = 1") {
    for (double x : {0.01, 0.31, 1.0}) {
        for (int K : {1, 5, 40}) {
            const ChannelPoint ch = channel_at(kBasic, x);
            const PgfSystem s = pgf_make(kBasic, ch, {0.4, K});
            CHECK(pgf_eval(s, 1.0) == Catch::Approx(1.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("transform of an uncontended channel is a deterministic delay") {
    // p = alpha = alpha0 = 1: the packet defers, senses once, transmits.
    PgfSystem s{2.0, 177.0, 174.0, 179.0, 1.0, 0.5, 1.0, 1.0, 5};
    for (double z : {0.2, 0.9, 0.99}) {
        CHECK(pgf_eval(s, z) == Catch::Approx(std::pow(z, 180.0)).epsilon(1e-12));
    }
    const PgfMoments m = pgf_moments(s);
    CHECK(m.mean == Catch::Approx(180.0).epsilon(1e-12));
    CHECK(m.second == Catch::Approx(180.0 * 180.0).epsilon(1e-12));
}

TEST_CASE("transform increases in z") {
    const ChannelPoint ch = channel_at(kBasic, 0.1);
    const PgfSystem s = pgf_make(kBasic, ch, {0.3, 20});
    double prev = 0.0;
    for (double z = 0.05; z <= 1.0; z += 0.05) {
        const double v = pgf_eval(s, z);
        CHECK(v > prev);
        CHECK(v <= 1.0 + 1e-12);
        prev = v;
    }
}

TEST_CASE("transform moments at a capped reference point") {
    const ChannelPoint ch = channel_at(kBasic, 0.02);
    const PgfMoments m = pgf_moments(pgf_make(kBasic, ch, {0.6, 7}));
    CHECK(m.mean == Catch::Approx(1448.4903311762634).epsilon(1e-11));
}

TEST_CASE("closed-form moments at reference points") {
    const ChannelPoint b02 = channel_at(kBasic, 0.02);
    const ServiceMoments m1 = moments_closed_form(kBasic, b02, {0.6, kInf});
    CHECK(m1.mean == Catch::Approx(1448.4903311952107).epsilon(1e-12));
    CHECK(m1.second == Catch::Approx(3576182.7628302629).epsilon(1e-11));
    CHECK(m1.second_finite);

    const ServiceMoments m2 = moments_closed_form(kBasic, b02, {0.2, kInf});
    CHECK(m2.mean == Catch::Approx(3865.6742123357161).epsilon(1e-12));

    const ChannelPoint r31 = channel_at(kRts, 0.31);
    const ServiceMoments m3 = moments_closed_form(kRts, r31, {0.77, kInf});
    CHECK(m3.mean == Catch::Approx(12781.43186572785).epsilon(1e-12));
    CHECK(m3.second == Catch::Approx(378309666.77621662).epsilon(1e-11));
}

TEST_CASE("capped transform converges to the closed form") {
    const ChannelPoint ch = channel_at(kBasic, kXOp);
    const ServiceMoments closed = moments_closed_form(kBasic, ch, {0.2, kInf});
    const PgfMoments capped = pgf_moments(pgf_make(kBasic, ch, {0.2, 40}));
    CHECK(std::abs(capped.mean - closed.mean) / closed.mean < 1e-6);
    CHECK(std::abs(capped.second - closed.second) / closed.second < 1e-6);
}

TEST_CASE("idle channel gives the deterministic service time") {
    const ChannelPoint ch = channel_at(kBasic, 0.0);
    const ServiceMoments m = moments_closed_form(kBasic, ch, {0.2, kInf});
    CHECK(m.mean == Catch::Approx(180.0).epsilon(1e-13));
}

TEST_CASE("second moment diverges at and below the boundary") {
    const ChannelPoint ch = channel_at(kRts, 0.31);
    const double boundary = std::sqrt(-std::expm1(-0.31));

    CHECK_FALSE(moments_closed_form(kRts, ch, {boundary - 1e-9, kInf}).second_finite);
    CHECK_FALSE(moments_closed_form(kRts, ch, {boundary - 0.01, kInf}).second_finite);
    CHECK(moments_closed_form(kRts, ch, {boundary + 1e-9, kInf}).second_finite);
    CHECK(moments_closed_form(kRts, ch, {boundary + 0.01, kInf}).second_finite);

    // The leading cap coefficient blows up as the boundary nears from above.
    const double far = std::abs(pk_poly_C(chain_inputs(kRts, ch, boundary + 0.1)));
    const double near = std::abs(pk_poly_C(chain_inputs(kRts, ch, boundary + 1e-6)));
    CHECK(near > 1e4 * far);
}

TEST_CASE("variance is nonnegative wherever the second moment is finite") {
    std::mt19937_64 gen(123);
    std::uniform_real_distribution<double> ux(1e-3, 2.5);
    std::uniform_real_distribution<double> uq(0.05, 0.95);
    int tested = 0;
    while (tested < 200) {
        const double x = ux(gen), q = uq(gen);
        const ChannelPoint ch = channel_at(kBasic, x);
        if (q * q <= 1.0 - ch.p + 1e-6) continue;
        const ServiceMoments m = moments_closed_form(kBasic, ch, {q, kInf});
        REQUIRE(m.second_finite);
        CHECK(m.second >= m.mean * m.mean * (1.0 - 1e-12));
        ++tested;
    }
}

TEST_CASE("mean times arrival rate reproduces the offered load") {
    std::mt19937_64 gen(456);
    std::uniform_real_distribution<double> ux(1e-3, 1.5);
    std::uniform_real_distribution<double> uq(0.05, 0.95);
    int tested = 0;
    while (tested < 100) {
        const double x = ux(gen), q = uq(gen);
        const ChannelPoint ch = channel_at(kBasic, x);
        if (ch.p + q <= 1.0 + 1e-6) continue;
        const BackoffConfig bo{q, BackoffConfig::kInfinitePhases};
        const double lambda = 0.02;   // packets per payload window, per node
        const double lambda_prime = lambda / 177.0;
        const double rho = offered_load(kBasic, ch, bo, lambda).rho;
        const double mean = moments_closed_form(kBasic, ch, bo).mean;
        CHECK(lambda_prime * mean == Catch::Approx(rho).epsilon(1e-8));
        ++tested;
    }
}

TEST_CASE("sojourn time at the reference operating point") {
    const ChannelPoint ch = channel_at(kBasic, kXOp);
    const ServiceMoments m = service_moments(kBasic, ch, {0.2, kInf}, kLambdaPrime);
    CHECK(m.mean == Catch::Approx(565.47859467469968).epsilon(1e-11));
    CHECK(m.second == Catch::Approx(561934.84341080784).epsilon(1e-10));
    CHECK(m.pk_delay == Catch::Approx(618.09525155564632).epsilon(1e-10));
    CHECK(m.delay_bounded);
    CHECK(slots_to_ms(m.pk_delay) == Catch::Approx(30.904762577782316).epsilon(1e-10));
}

TEST_CASE("sojourn reduces to the service mean without arrivals") {
    const PkDelay d = pk_delay(0.0, 500.0, 300000.0, true);
    CHECK(d.value == 500.0);
    CHECK(d.bounded);
}

TEST_CASE("sojourn is unbounded at saturation or with diverging variance") {
    CHECK_FALSE(pk_delay(0.002, 500.0, 300000.0, true).bounded);   // rho = 1
    CHECK_FALSE(pk_delay(0.003, 500.0, 300000.0, true).bounded);   // rho > 1
    CHECK_FALSE(pk_delay(1e-5, 500.0, 0.0, false).bounded);
    CHECK(std::isinf(pk_delay(1e-5, 500.0, 0.0, false).value));
}

TEST_CASE("closed forms require the uncapped policy and a recurrent chain") {
    const ChannelPoint ch = channel_at(kBasic, 0.02);
    CHECK_THROWS_AS(moments_closed_form(kBasic, ch, {0.2, 40}), ConfigError);

    const ChannelPoint far = channel_at(kBasic, 1.2);   // p = 0.30
    CHECK_THROWS_AS(moments_closed_form(kBasic, far, {0.5, kInf}), NonRecurrentError);
}

TEST_CASE("transform rejects invalid arguments") {
    const ChannelPoint ch = channel_at(kBasic, 0.1);
    const PgfSystem s = pgf_make(kBasic, ch, {0.3, 10});
    CHECK_THROWS_AS(pgf_eval(s, 0.0), ConfigError);
    CHECK_THROWS_AS(pgf_eval(s, 1.5), ConfigError);
    CHECK_THROWS_AS(pgf_make(kBasic, ch, {0.3, BackoffConfig::kInfinitePhases}), ConfigError);
}
