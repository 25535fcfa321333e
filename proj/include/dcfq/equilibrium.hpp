#pragma once

#include <atomic>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "dcfq/channel.hpp"
#include "dcfq/errors.hpp"
#include "dcfq/service_time.hpp"
#include "dcfq/stability.hpp"

namespace dcfq {

enum class Stability {
    Stable,                 // carries the demand with finite mean sojourn
    ThroughputOnlyStable,   // carries the demand but the sojourn diverges
    Unstable                // cannot carry the demand
};

inline const char* to_string(Stability s) {
    switch (s) {
        case Stability::Stable: return "stable";
        case Stability::ThroughputOnlyStable: return "throughput_only";
        default: return "unstable";
    }
}

struct Equilibrium {
    double x = 0.0;                // attempt-balance root of h(x) = q
    ChannelPoint channel;          // channel at the balance root
    double x_op = 0.0;             // operating attempt rate carrying the demand
    double rho = 0.0;              // per-node utilization at x_op
    double rho_root = 0.0;         // utilization at the balance root, clamped to 1
    double rho_root_raw = 0.0;     // same before clamping, as a diagnostic
    ServiceMoments moments;        // closed-form moments and sojourn at x_op
    double delay = 0.0;            // mean sojourn in mini-slots (inf if unbounded)
    Stability status = Stability::Unstable;
    int iterations = 0;
    double residual = 0.0;         // |h(x) - q| at the returned root
};

namespace detail {

// One step of the attempt balance with utilization clamped to [0, 1], the
// form the damped iteration walks on. Returns false when the iterate has
// left the region where the balance is defined (p + q <= 1).
inline bool balance_rhs(const SystemParams& sp, int n, double lambda_hat, double q,
                        double x, double& out) {
    const ChannelPoint ch = channel_at(sp, x);
    const double u = q + ch.p - 1.0;
    if (!(u > 0.0)) return false;
    const AttemptBalance b = attempt_balance(sp, ch);
    const double Lam = lambda_hat / (sp.T_S - sp.T_D);
    const double rho_raw = (Lam / n) * (b.A + b.Wp / u);
    const double rho = std::min(1.0, std::max(0.0, rho_raw));
    out = b.c * Lam * (1.0 - rho) + n * rho * u / ch.p;
    return std::isfinite(out);
}

} // namespace detail

// Self-consistent operating point for n nodes, each offered lambda_hat / n
// packets per payload window, retransmitting with factor q.
//
// The root search runs the damped balance iteration first; the balance is
// stiff near its root and the clamped iteration reliably steps into the
// non-recurrent zone, so on any such exit the solver falls back to bisecting
// the equivalent monotone form h(x) = q. Residuals are reported in q-space:
// the balance in x-space multiplies rounding noise by the slope of the
// geometric tail, which is astronomically steep at realistic loads.
inline Equilibrium solve(const SystemParams& sp, int n, double lambda_hat, double q,
                         double damping = 0.25) {
    sp.validate();
    if (n < 1) throw ConfigError("node count must be >= 1");
    if (!(q > 0.0 && q < 1.0)) throw ConfigError("retransmission factor q must lie in (0, 1)");
    if (lambda_hat < 0.0) throw ConfigError("lambda_hat must be nonnegative");

    Equilibrium eq;
    const BackoffConfig bo{q, BackoffConfig::kInfinitePhases};

    if (lambda_hat == 0.0) {
        eq.channel = channel_at(sp, 0.0);
        eq.moments = service_moments(sp, eq.channel, bo, 0.0);
        eq.delay = eq.moments.pk_delay;
        eq.status = Stability::Stable;
        return eq;
    }

    const RegionReport regions = region_report(sp, n, lambda_hat);

    int iterations = 0;
    double x = 0.0;
    bool found = false;
    double prev = 0.0;
    for (; iterations < 2000; ++iterations) {
        double rhs;
        if (!detail::balance_rhs(sp, n, lambda_hat, q, prev, rhs)) break;
        const double next = (1.0 - damping) * prev + damping * rhs;
        if (!(next >= 0.0) || !std::isfinite(next)) break;
        if (std::abs(next - prev) <= 1e-10 * std::max(1.0, std::abs(next))) {
            if (std::abs(retransmission_factor_h(sp, n, lambda_hat, next).q - q) < 1e-9) {
                x = next;
                found = true;
            }
            break;
        }
        prev = next;
    }
    if (!found) {
        // h is continuous with h(0) < q and h(x) > q at the recurrence edge
        // x = -ln(1 - q), so this bracket always holds a crossing.
        const double hi = -std::log1p(-q);
        x = detail::bisect(
            [&](double xx) { return retransmission_factor_h(sp, n, lambda_hat, xx).q - q; },
            0.0, hi);
        iterations += 200;
    }

    eq.x = x;
    eq.channel = channel_at(sp, x);
    eq.residual = std::abs(retransmission_factor_h(sp, n, lambda_hat, x).q - q);
    eq.iterations = iterations;

    eq.x_op = regions.x_S;
    const ChannelPoint ch_op = channel_at(sp, eq.x_op);
    const double lambda_prime = lambda_hat * sp.a / (n * (sp.T_S - sp.T_D));
    eq.moments = service_moments(sp, ch_op, bo, lambda_prime);
    eq.delay = eq.moments.pk_delay;
    eq.rho = offered_load(sp, ch_op, bo, lambda_hat / n).rho;

    const double u_root = q - (-std::expm1(-x));
    if (u_root > 0.0) {
        const AttemptBalance b = attempt_balance(sp, eq.channel);
        eq.rho_root_raw = lambda_prime * (b.A + b.Wp / u_root) / sp.a;
    } else {
        eq.rho_root_raw = std::numeric_limits<double>::infinity();
    }
    eq.rho_root = std::min(1.0, eq.rho_root_raw);

    // Demand is carried between the raw balance factors at the two
    // crossings; the published stable interval may start higher (at the
    // delay-divergence boundary), and points in between carry the demand
    // with infinite service variance.
    const bool carried =
        eq.rho < 1.0 && q >= regions.h_lo_raw && q <= regions.r_t.hi;
    if (!carried) {
        eq.status = Stability::Unstable;
    } else if (!regions.r_d_empty && regions.r_d.contains(q) && eq.moments.delay_bounded) {
        eq.status = Stability::Stable;
    } else {
        eq.status = Stability::ThroughputOnlyStable;
    }
    return eq;
}

// One grid point of a sweep: the equilibrium, or the error that prevented it.
struct SweepPoint {
    double value = 0.0;            // the swept coordinate (q or lambda_hat)
    std::optional<Equilibrium> eq;
    std::string error;
};

namespace detail {

template <typename F>
void parallel_for(std::size_t count, F body) {
    unsigned hw = std::thread::hardware_concurrency();
    std::size_t workers = std::min<std::size_t>(count, hw == 0 ? 4 : std::min(hw, 16u));
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    std::atomic<std::size_t> next{0};
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) body(i);
        });
    }
    for (auto& t : pool) t.join();
}

} // namespace detail

inline std::vector<SweepPoint> sweep_q(const SystemParams& sp, int n, double lambda_hat,
                                       const std::vector<double>& qs) {
    std::vector<SweepPoint> out(qs.size());
    detail::parallel_for(qs.size(), [&](std::size_t i) {
        out[i].value = qs[i];
        try {
            out[i].eq = solve(sp, n, lambda_hat, qs[i]);
        } catch (const std::exception& e) {
            out[i].error = e.what();
        }
    });
    return out;
}

inline std::vector<SweepPoint> sweep_lambda(const SystemParams& sp, int n, double q,
                                            const std::vector<double>& lambdas) {
    std::vector<SweepPoint> out(lambdas.size());
    detail::parallel_for(lambdas.size(), [&](std::size_t i) {
        out[i].value = lambdas[i];
        try {
            out[i].eq = solve(sp, n, lambdas[i], q);
        } catch (const std::exception& e) {
            out[i].error = e.what();
        }
    });
    return out;
}

} // namespace dcfq
