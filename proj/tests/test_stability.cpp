#include <cmath>

#include <catch2/catch_amalgamated.hpp>

#include "dcfq/stability.hpp"

using namespace dcfq;

namespace {

const SystemParams kBasic = preset(Mechanism::Basic);
const SystemParams kRts = preset(Mechanism::RtsCts);
const SystemParams kBasicUs = preset(Mechanism::Basic, UnitMode::Microseconds);
const SystemParams kRtsUs = preset(Mechanism::RtsCts, UnitMode::Microseconds);

} // namespace

TEST_CASE("throughput curve values") {
    CHECK(throughput(kBasic, 0.0) == 0.0);
    CHECK(throughput(kBasic, 2.1) == Catch::Approx(0.27212825123327249).epsilon(1e-13));
    CHECK(throughput(kBasic, 60.0) < 1e-20);
    CHECK_THROWS_AS(throughput(kBasic, -0.1), ConfigError);
}

TEST_CASE("throughput curve is unimodal") {
    for (const SystemParams* sp : {&kBasic, &kRts}) {
        int direction_changes = 0;
        double prev = throughput(*sp, 1e-3);
        bool rising = true;
        for (int i = 1; i <= 1000; ++i) {
            const double v = throughput(*sp, 1e-3 + 10.0 * i / 1000.0);
            if (rising && v < prev) {
                rising = false;
                ++direction_changes;
            } else if (!rising && v > prev) {
                ++direction_changes;   // would be a second mode
            }
            prev = v;
        }
        CHECK(direction_changes == 1);
    }
}

TEST_CASE("throughput peak") {
    const ThroughputPeak b = max_throughput(kBasic);
    // The argmax of a smooth peak is only sqrt(eps)-determined; the value is tight.
    CHECK(b.x_star == Catch::Approx(0.10327181593697282).epsilon(1e-6));
    CHECK(b.lambda_max == Catch::Approx(0.82396023203041682).epsilon(1e-13));
    CHECK(throughput(kBasic, b.x_star - 1e-4) < b.lambda_max);
    CHECK(throughput(kBasic, b.x_star + 1e-4) < b.lambda_max);

    const ThroughputPeak r = max_throughput(kRts);
    CHECK(r.x_star == Catch::Approx(0.41021617949820713).epsilon(1e-6));
    CHECK(r.lambda_max == Catch::Approx(0.83433261591995609).epsilon(1e-13));
}

TEST_CASE("demand normalization") {
    CHECK(demand_from_lambda_hat(kBasic, 0.3) ==
          Catch::Approx(0.27796610169491525).epsilon(1e-15));
    CHECK(demand_from_lambda_hat(kRts, 0.3) ==
          Catch::Approx(0.26031746031746032).epsilon(1e-15));
    CHECK(demand_from_lambda_hat(kBasic, 0.0) == 0.0);
}

TEST_CASE("crossing points of the curve with the reference demand") {
    const double demand = demand_from_lambda_hat(kBasic, 0.3);
    const ThroughputRoots r = throughput_roots(kBasic, demand);
    CHECK(r.x_S == Catch::Approx(0.0024402963186504972).epsilon(1e-12));
    CHECK(r.x_L == Catch::Approx(2.0676330466685258).epsilon(1e-12));
    CHECK(r.x_S < r.x_L);
    CHECK(std::abs(throughput(kBasic, r.x_S) - demand) < 1e-10);
    CHECK(std::abs(throughput(kBasic, r.x_L) - demand) < 1e-10);

    const ThroughputRoots rr = throughput_roots(kRts, demand_from_lambda_hat(kRts, 0.3));
    CHECK(rr.x_S == Catch::Approx(0.0022831586199143622).epsilon(1e-12));
    CHECK(rr.x_L == Catch::Approx(5.638039785485448).epsilon(1e-12));
}

TEST_CASE("crossings in microsecond units and their real-time attempt rates") {
    const ThroughputRoots b = throughput_roots(kBasicUs, demand_from_lambda_hat(kBasicUs, 0.3));
    CHECK(b.x_S == Catch::Approx(0.002436562888768483).epsilon(1e-11));
    CHECK(b.x_L == Catch::Approx(2.0737508143629599).epsilon(1e-11));
    CHECK(attempt_rate_per_us(b.x_L) == Catch::Approx(0.041475016287259197).epsilon(1e-11));

    const ThroughputRoots r = throughput_roots(kRtsUs, demand_from_lambda_hat(kRtsUs, 0.3));
    CHECK(attempt_rate_per_us(r.x_L) == Catch::Approx(0.11456463671006541).epsilon(1e-11));
}

TEST_CASE("demands at or above the peak have no crossings") {
    const double peak = max_throughput(kBasic).lambda_max;
    CHECK_THROWS_AS(throughput_roots(kBasic, peak), NoRootsError);
    CHECK_THROWS_AS(throughput_roots(kBasic, peak + 0.01), NoRootsError);
    CHECK_THROWS_AS(throughput_roots(kBasic, 0.0), NoRootsError);
}

TEST_CASE("balance factor at the reference crossings") {
    CHECK(retransmission_factor_h(kBasic, 10, 0.3, 0.0024402963186504972).q ==
          Catch::Approx(0.0024956025869470487).epsilon(1e-11));
    CHECK(retransmission_factor_h(kBasic, 10, 0.3, 2.0676330466685258).q ==
          Catch::Approx(0.87351518868948044).epsilon(1e-11));
    CHECK(retransmission_factor_h(kRts, 10, 0.3, 0.0022831586199143622).q ==
          Catch::Approx(0.0023352085095677732).epsilon(1e-11));
    CHECK(retransmission_factor_h(kRts, 10, 0.3, 5.638039785485448).q ==
          Catch::Approx(0.99644016069384371).epsilon(1e-11));
    CHECK_FALSE(retransmission_factor_h(kRts, 10, 0.3, 5.638039785485448).clamped);
}

TEST_CASE("balance factor increases with the attempt rate") {
    const double x_S = 0.0024402963186504972, x_L = 2.0676330466685258;
    double prev = 0.0;
    for (int i = 0; i <= 100; ++i) {
        const double x = x_S + (x_L - x_S) * i / 100.0;
        const HValue h = retransmission_factor_h(kBasic, 10, 0.3, x);
        CHECK(h.q > prev);
        CHECK_FALSE(h.clamped);
        prev = h.q;
    }
}

TEST_CASE("balance factor is invariant under a pure unit rescale") {
    SystemParams scaled = kBasic;
    scaled.a *= 50.0;
    scaled.T_D *= 50.0;
    scaled.T_S *= 50.0;
    scaled.T_C *= 50.0;
    scaled.E_P *= 50.0;
    for (double x : {0.01, 0.2, 1.0, 2.0}) {
        CHECK(retransmission_factor_h(scaled, 10, 0.3, x).q ==
              Catch::Approx(retransmission_factor_h(kBasic, 10, 0.3, x).q).epsilon(1e-12));
    }
}

TEST_CASE("balance factor approaches the transmission probability for huge populations") {
    const double x_S = 0.0024402963186504972, x_L = 2.0676330466685258;
    for (int i = 0; i <= 20; ++i) {
        const double x = x_S + (x_L - x_S) * i / 20.0;
        const double h = retransmission_factor_h(kBasic, 1'000'000, 0.3, x).q;
        CHECK(std::abs(h - (-std::expm1(-x))) < 1e-3);
    }
}

TEST_CASE("regions of the reference scenario") {
    const RegionReport rep = region_report(kBasic, 10, 0.3);
    CHECK(rep.x_S == Catch::Approx(0.0024402963186504972).epsilon(1e-12));
    CHECK(rep.x_L == Catch::Approx(2.0676330466685258).epsilon(1e-12));
    CHECK(rep.bdc_lo == Catch::Approx(0.049369233497443085).epsilon(1e-11));
    CHECK(rep.h_lo_raw == Catch::Approx(0.0024956025869470487).epsilon(1e-11));

    // Between the raw balance factor and the delay-divergence boundary the
    // demand is carried only with infinite service variance, so the stable
    // interval starts at the larger of the two.
    CHECK(rep.r_t.lo == rep.bdc_lo);
    CHECK(rep.r_t.hi == Catch::Approx(0.87351518868948044).epsilon(1e-11));
    CHECK(rep.r_t.lo_closed);
    CHECK(rep.r_t.hi_closed);
    CHECK_FALSE(rep.hi_clamped);

    CHECK(rep.r_d.lo == rep.bdc_lo);
    CHECK(rep.r_d.hi == rep.r_t.hi);
    CHECK(rep.r_d.lo_closed);
    CHECK_FALSE(rep.r_d.hi_closed);
    CHECK_FALSE(rep.r_d_empty);

    CHECK(rep.r_t.contains(rep.r_t.hi));
    CHECK_FALSE(rep.r_d.contains(rep.r_d.hi));
    CHECK(rep.r_d.contains(rep.r_d.lo));
    CHECK_FALSE(rep.r_d.contains(0.04));
    CHECK(rep.r_d.contains(0.2));
}

TEST_CASE("regions of the handshaking scenario") {
    const RegionReport rep = region_report(kRts, 10, 0.3);
    CHECK(rep.r_t.lo == Catch::Approx(0.047755148369092858).epsilon(1e-11));
    CHECK(rep.r_t.hi == Catch::Approx(0.99644016069384371).epsilon(1e-11));
    CHECK_FALSE(rep.hi_clamped);
    CHECK(rep.r_d.lo == rep.r_t.lo);
}

TEST_CASE("bounded-delay region sits inside the stable-throughput region") {
    for (const SystemParams* sp : {&kBasic, &kRts}) {
        for (int n : {5, 10, 50}) {
            for (double lh : {0.1, 0.3, 0.5}) {
                const RegionReport rep = region_report(*sp, n, lh);
                if (rep.r_d_empty) continue;
                CHECK(rep.r_d.lo >= rep.r_t.lo);
                CHECK(rep.r_d.hi <= rep.r_t.hi);
            }
        }
    }
}

TEST_CASE("near-peak demand empties the bounded-delay region") {
    // demand = 0.999 * peak: the crossings pinch together around x_star,
    // where the delay boundary exceeds the balance factor.
    const double lambda_hat = 0.999 * 0.82396023203041682 * 177.0 / 164.0;
    CHECK_THROWS_AS(bounded_delay_region(kBasic, 10, lambda_hat), EmptyRegionError);
    const RegionInterval rt = stable_region(kBasic, 10, lambda_hat);
    CHECK(rt.lo <= rt.hi);   // falls back to the raw balance factor
}

TEST_CASE("slot-unit and microsecond presets agree on regions within two percent") {
    const RegionReport a = region_report(kBasic, 10, 0.3);
    const RegionReport b = region_report(kBasicUs, 10, 0.3);
    CHECK(std::abs(b.x_S / a.x_S - 1.0) < 0.02);
    CHECK(std::abs(b.x_L / a.x_L - 1.0) < 0.02);
    CHECK(std::abs(b.lambda_max / a.lambda_max - 1.0) < 0.02);
    CHECK(std::abs(b.r_t.lo / a.r_t.lo - 1.0) < 0.02);
    CHECK(std::abs(b.r_t.hi / a.r_t.hi - 1.0) < 0.02);
}
