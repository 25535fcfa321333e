#pragma once

#include <algorithm>
#include <cmath>

#include "dcfq/channel.hpp"
#include "dcfq/errors.hpp"
#include "dcfq/hol_chain.hpp"
#include "dcfq/params.hpp"

namespace dcfq {

// Normalized payload throughput of the network when attempts arrive at rate
// x per mini-slot: payload air time per unit of real time.
inline double throughput(const SystemParams& sp, double x) {
    if (x < 0.0) throw ConfigError("attempt rate x must be nonnegative");
    if (x == 0.0) return 0.0;
    const double xe = x * std::exp(-x);
    const double P_t = -std::expm1(-x);
    return xe * sp.E_P / (sp.a * (1.0 - P_t) + sp.T_S * xe + sp.T_C * (P_t - xe));
}

// Offered network load in the same normalized units as `throughput`.
inline double demand_from_lambda_hat(const SystemParams& sp, double lambda_hat) {
    if (lambda_hat < 0.0) throw ConfigError("lambda_hat must be nonnegative");
    return lambda_hat * sp.E_P / (sp.T_S - sp.T_D);
}

struct ThroughputPeak {
    double x_star;
    double lambda_max;
};

// The throughput curve rises from zero, peaks once, and decays; a coarse
// scan brackets the peak and golden-section polishes it.
inline ThroughputPeak max_throughput(const SystemParams& sp) {
    const int grid = 600;
    const double x_hi_scan = 30.0;
    double best_x = 0.0, best_v = 0.0;
    int best_i = 0;
    for (int i = 1; i <= grid; ++i) {
        const double x = x_hi_scan * i / grid;
        const double v = throughput(sp, x);
        if (v > best_v) {
            best_v = v;
            best_x = x;
            best_i = i;
        }
    }
    double lo = x_hi_scan * (best_i - 1) / grid;
    double hi = x_hi_scan * (best_i + 1) / grid;
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = hi - gr * (hi - lo), d = lo + gr * (hi - lo);
    double fc = throughput(sp, c), fd = throughput(sp, d);
    for (int it = 0; it < 200; ++it) {
        if (fc > fd) {
            hi = d; d = c; fd = fc;
            c = hi - gr * (hi - lo);
            fc = throughput(sp, c);
        } else {
            lo = c; c = d; fc = fd;
            d = lo + gr * (hi - lo);
            fd = throughput(sp, d);
        }
    }
    best_x = 0.5 * (lo + hi);
    return {best_x, throughput(sp, best_x)};
}

struct ThroughputRoots {
    double x_S;     // smaller crossing: light contention carrying the demand
    double x_L;     // larger crossing: heavy contention carrying the demand
};

namespace detail {

template <typename F>
double bisect(F f, double lo, double hi) {
    double flo = f(lo);
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double fm = f(mid);
        if ((flo <= 0.0) == (fm <= 0.0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

} // namespace detail

// Both solutions of throughput(x) = demand. Demands at or above the peak
// have no crossings and raise NoRootsError.
inline ThroughputRoots throughput_roots(const SystemParams& sp, double demand) {
    const ThroughputPeak peak = max_throughput(sp);
    if (!(demand > 0.0) || demand >= peak.lambda_max)
        throw NoRootsError("demand " + std::to_string(demand) +
                           " is not below the throughput peak " +
                           std::to_string(peak.lambda_max));
    auto f = [&](double x) { return throughput(sp, x) - demand; };
    const double x_S = detail::bisect(f, 0.0, peak.x_star);
    double hi = 2.0 * peak.x_star;
    while (f(hi) > 0.0) {
        hi *= 2.0;
        if (hi > 1e6) throw NoConvergenceError("no upper crossing below x = 1e6");
    }
    const double x_L = detail::bisect(f, peak.x_star, hi);
    return {x_S, x_L};
}

// Coefficients of the per-node attempt balance at one channel point, shared
// by the retransmission-factor map and the fixed-point solver. A and Wp are
// in the time units of `sp`; the per-node mean service time is A + Wp/(p+q-1).
struct AttemptBalance {
    double A;
    double Wp;
    double c;        // alpha * alpha0 * a: fresh-attempt contribution scale
};

inline AttemptBalance attempt_balance(const SystemParams& sp, const ChannelPoint& ch) {
    const double T_W = waiting_duration(sp, ch.p);
    const double M = 1.0 - ch.p * ch.alpha * ch.alpha0;
    AttemptBalance b;
    b.A = T_W * (1.0 - ch.alpha * ch.alpha0) + sp.T_S + sp.a * ch.alpha0 - sp.T_C +
          (sp.T_C - sp.a) / ch.p;
    b.Wp = M * (sp.a + T_W - ch.alpha * T_W) / ch.alpha;
    b.c = ch.alpha * ch.alpha0 * sp.a;
    return b;
}

struct HValue {
    double q;
    bool clamped;    // the balance asked for q >= 1; reported as q = 1
};

// Retransmission factor q at which n nodes offering lambda_hat would sustain
// the aggregate attempt rate x. Solves the attempt balance for u = p + q - 1
// as the positive root of a quadratic, using the subtraction-free branch.
inline HValue retransmission_factor_h(const SystemParams& sp, int n, double lambda_hat,
                                      double x) {
    if (n < 1) throw ConfigError("node count must be >= 1");
    if (!(lambda_hat > 0.0)) throw ConfigError("lambda_hat must be positive");
    if (x < 0.0) throw ConfigError("attempt rate x must be nonnegative");
    const ChannelPoint ch = channel_at(sp, x);
    const AttemptBalance b = attempt_balance(sp, ch);
    const double Lam = lambda_hat / (sp.T_S - sp.T_D);
    const double p = ch.p;
    const double beta =
        0.5 * (b.c * p * (1.0 - Lam * b.A / n) / b.A + b.Wp / b.A - x * p / (Lam * b.A));
    const double C = b.c * Lam * b.Wp * p / (n * b.A);
    // C >= 0 always, so the discriminant beta^2 + C cannot go negative and
    // the root below is real. The beta >= 0 branch rewrites -beta + sqrt to
    // avoid cancellation when beta dominates.
    const double disc = std::sqrt(beta * beta + C);
    const double u = beta >= 0.0 ? C / (beta + disc) : -beta + disc;
    const double q = -std::expm1(-x) + u;
    if (q >= 1.0) return {1.0, true};
    return {q, false};
}

enum class RegionKind { StableThroughput, BoundedDelay };

struct RegionInterval {
    double lo = 0.0;
    double hi = 0.0;
    bool lo_closed = true;
    bool hi_closed = true;
    RegionKind kind = RegionKind::StableThroughput;

    bool contains(double q) const {
        if (q < lo || q > hi) return false;
        if (q == lo && !lo_closed) return false;
        if (q == hi && !hi_closed) return false;
        return true;
    }
};

struct RegionReport {
    double demand = 0.0;
    double lambda_max = 0.0;
    double x_star = 0.0;
    double x_S = 0.0;
    double x_L = 0.0;
    RegionInterval r_t;            // q values whose equilibrium carries the demand
    RegionInterval r_d;            // q values with finite mean sojourn on top of that
    double h_lo_raw = 0.0;         // balance factor at x_S before reconciliation
    double bdc_lo = 0.0;           // delay-divergence boundary sqrt(1 - e^{-x_S})
    bool hi_clamped = false;       // upper factor hit 1 and was clamped
    bool r_d_empty = false;
};

// Full region analysis for a demand level. The stable-throughput interval
// runs between the balance factors at the two crossings; its lower end is
// lifted to the delay-divergence boundary when the two are ordered, since
// points between them carry the demand only with infinite service variance.
inline RegionReport region_report(const SystemParams& sp, int n, double lambda_hat) {
    sp.validate();
    RegionReport rep;
    rep.demand = demand_from_lambda_hat(sp, lambda_hat);
    const ThroughputPeak peak = max_throughput(sp);
    rep.lambda_max = peak.lambda_max;
    rep.x_star = peak.x_star;
    const ThroughputRoots roots = throughput_roots(sp, rep.demand);
    rep.x_S = roots.x_S;
    rep.x_L = roots.x_L;

    const HValue h_lo = retransmission_factor_h(sp, n, lambda_hat, roots.x_S);
    const HValue h_hi = retransmission_factor_h(sp, n, lambda_hat, roots.x_L);
    rep.h_lo_raw = h_lo.q;
    rep.bdc_lo = std::sqrt(-std::expm1(-roots.x_S));
    rep.hi_clamped = h_hi.clamped;

    rep.r_t.kind = RegionKind::StableThroughput;
    rep.r_t.hi = h_hi.q;
    rep.r_t.lo = (std::max(h_lo.q, rep.bdc_lo) <= h_hi.q) ? std::max(h_lo.q, rep.bdc_lo)
                                                          : h_lo.q;
    rep.r_t.lo_closed = true;
    rep.r_t.hi_closed = true;

    rep.r_d.kind = RegionKind::BoundedDelay;
    rep.r_d.lo = rep.bdc_lo;
    rep.r_d.hi = h_hi.q;
    rep.r_d.lo_closed = true;
    rep.r_d.hi_closed = false;
    rep.r_d_empty = !(rep.r_d.lo < rep.r_d.hi);
    return rep;
}

inline RegionInterval stable_region(const SystemParams& sp, int n, double lambda_hat) {
    return region_report(sp, n, lambda_hat).r_t;
}

inline RegionInterval bounded_delay_region(const SystemParams& sp, int n, double lambda_hat) {
    const RegionReport rep = region_report(sp, n, lambda_hat);
    if (rep.r_d_empty)
        throw EmptyRegionError("bounded-delay interval is empty: its lower bound " +
                               std::to_string(rep.r_d.lo) + " meets the upper bound " +
                               std::to_string(rep.r_d.hi));
    return rep.r_d;
}

} // namespace dcfq
