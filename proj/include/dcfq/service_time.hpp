#pragma once

#include <cmath>
#include <limits>

#include "dcfq/channel.hpp"
#include "dcfq/errors.hpp"
#include "dcfq/hol_chain.hpp"
#include "dcfq/params.hpp"

namespace dcfq {

// Value together with first and second derivatives, for propagating exact
// derivatives through the generating-function recurrence at z = 1.
struct Dual2 {
    double v = 0.0, d1 = 0.0, d2 = 0.0;

    friend Dual2 operator+(Dual2 a, Dual2 b) { return {a.v + b.v, a.d1 + b.d1, a.d2 + b.d2}; }
    friend Dual2 operator-(Dual2 a, Dual2 b) { return {a.v - b.v, a.d1 - b.d1, a.d2 - b.d2}; }
    friend Dual2 operator*(Dual2 a, Dual2 b) {
        return {a.v * b.v, a.d1 * b.v + a.v * b.d1, a.d2 * b.v + 2.0 * a.d1 * b.d1 + a.v * b.d2};
    }
    friend Dual2 operator/(Dual2 a, Dual2 b) {
        const double v = a.v / b.v;
        const double d1 = (a.d1 - v * b.d1) / b.v;
        const double d2 = (a.d2 - 2.0 * d1 * b.d1 - v * b.d2) / b.v;
        return {v, d1, d2};
    }
    friend Dual2 operator*(double s, Dual2 a) { return {s * a.v, s * a.d1, s * a.d2}; }
    friend Dual2 operator+(double s, Dual2 a) { return {s + a.v, a.d1, a.d2}; }
    friend Dual2 operator-(double s, Dual2 a) { return {s - a.v, -a.d1, -a.d2}; }
};

// z^m evaluated at z = 1. The exponent may be fractional: slot counts are
// integral in slot units but genuinely fractional in microsecond mode, and
// the mean waiting count is fractional in both.
inline Dual2 zpow_at_one(double m) { return {1.0, m, m * (m - 1.0)}; }

// 1 - z^m at z = 1, exact where forming 1 - zpow_at_one(m) would cancel.
inline Dual2 one_minus_zpow_at_one(double m) { return {0.0, -m, -m * (m - 1.0)}; }

// Inputs of the service-time transform, all in mini-slot counts. t_w is kept
// real-valued: rounding it to an integer shifts the mean by roughly a fifth
// of a percent, far beyond the agreement the closed forms are held to.
struct PgfSystem {
    double t_a, t_s, t_c, t_w;
    double p, q, alpha, alpha0;
    int K;

    void validate() const {
        if (!(p > 0.0 && p <= 1.0)) throw ConfigError("p must lie in (0, 1]");
        if (!(q > 0.0 && q < 1.0)) throw ConfigError("q must lie in (0, 1)");
        if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in (0, 1]");
        if (!(alpha0 > 0.0 && alpha0 <= 1.0)) throw ConfigError("alpha0 must lie in (0, 1]");
        if (K < 1) throw ConfigError("transform evaluation needs a finite phase cap >= 1");
        if (!(t_a >= 0.0 && t_s > 0.0 && t_c > 0.0 && t_w > 0.0))
            throw ConfigError("slot counts must be positive (t_a may be zero)");
    }
};

inline PgfSystem pgf_make(const SystemParams& sp, const ChannelPoint& ch,
                          const BackoffConfig& bo) {
    if (bo.is_infinite())
        throw ConfigError("transform evaluation needs a finite phase cap");
    PgfSystem s;
    s.t_a = sp.t_a();
    s.t_s = sp.t_s();
    s.t_c = sp.t_c();
    s.t_w = waiting_duration(sp, ch.p) / sp.a;
    s.p = ch.p;
    s.q = bo.q;
    s.alpha = ch.alpha;
    s.alpha0 = ch.alpha0;
    s.K = bo.cutoff;
    return s;
}

namespace detail {

// Plain-value counterpart of Dual2 for evaluating the transform away from
// z = 1. Namespace scope matters: operators of a function-local type are
// invisible to argument-dependent lookup inside the shared recurrence.
struct Scalar {
    double v;
    friend Scalar operator+(Scalar a, Scalar b) { return {a.v + b.v}; }
    friend Scalar operator-(Scalar a, Scalar b) { return {a.v - b.v}; }
    friend Scalar operator*(Scalar a, Scalar b) { return {a.v * b.v}; }
    friend Scalar operator/(Scalar a, Scalar b) { return {a.v / b.v}; }
    friend Scalar operator*(double s, Scalar a) { return {s * a.v}; }
    friend Scalar operator+(double s, Scalar a) { return {s + a.v}; }
    friend Scalar operator-(double s, Scalar a) { return {s - a.v}; }
};

// Back-substitution through the sensing phases, generic over the scalar so
// the same recurrence serves plain evaluation and derivative propagation.
// `omp(m)` must produce 1 - z^m without cancellation: each phase denominator
// is the tiny escape probability alpha p q^i plus corrections in 1 - z^m, and
// assembling it as 1 minus order-one terms would lose it entirely once q^i
// drops below rounding noise.
template <typename T, typename Pow, typename OneMinusPow>
T pgf_recurrence(const PgfSystem& s, Pow zp, OneMinusPow omp) {
    const double al = s.alpha, p = s.p, q = s.q;
    const T zS = zp(s.t_s + 1.0);
    const T zC = zp(s.t_c + 1.0);
    const T zW = zp(s.t_w + 1.0);
    const T omC = omp(s.t_c + 1.0);
    const T omW = omp(s.t_w + 1.0);
    const T om1 = omp(1.0);

    double qi = std::pow(q, s.K);
    T den = (al * qi * p) + (al * qi * (1.0 - p)) * omC + (1.0 - al) * omW +
            (al * (1.0 - qi)) * om1;
    if (den.v <= 0.0) throw SingularPgfError("vanishing denominator in terminal phase");
    T S = ((al * qi * p) * zS) / den;
    for (int i = s.K - 1; i >= 1; --i) {
        qi /= q;
        den = (al * qi) + (1.0 - al) * omW + (al * (1.0 - qi)) * om1;
        if (den.v <= 0.0) throw SingularPgfError("vanishing denominator in phase " + std::to_string(i));
        S = ((al * qi * p) * zS + (al * qi * (1.0 - p)) * zC * S) / den;
    }
    const T S0 = (al * p) * zS + ((al * (1.0 - p)) * zC + (1.0 - al) * zW) * S;
    return zp(s.t_a) * (s.alpha0 * S0 + (1.0 - s.alpha0) * zp(s.t_w) * S);
}

} // namespace detail

// Service-time transform E[z^X] with X counted in mini-slots.
inline double pgf_eval(const PgfSystem& s, double z) {
    s.validate();
    if (!(z > 0.0 && z <= 1.0)) throw ConfigError("transform argument must lie in (0, 1]");
    const double lz = std::log(z);
    return detail::pgf_recurrence<detail::Scalar>(
               s, [z](double m) { return detail::Scalar{std::pow(z, m)}; },
               [lz](double m) { return detail::Scalar{-std::expm1(m * lz)}; })
        .v;
}

struct PgfMoments {
    double mean;      // E[X] in mini-slots
    double second;    // E[X^2] in mini-slots squared
};

// First two factorial-derivative moments at z = 1, via exact derivative
// triplets rather than finite differences.
inline PgfMoments pgf_moments(const PgfSystem& s) {
    s.validate();
    const Dual2 act = detail::pgf_recurrence<Dual2>(
        s, [](double m) { return zpow_at_one(m); },
        [](double m) { return one_minus_zpow_at_one(m); });
    return {act.d1, act.d2 + act.d1};
}

// Chain inputs for the closed-form moment polynomials, decoupled from
// SystemParams so property tests can drive them with free coordinates.
struct ChainInputs {
    double t_a, t_s, t_c, t_w;
    double p, q, alpha, alpha0;
};

inline ChainInputs chain_inputs(const SystemParams& sp, const ChannelPoint& ch, double q) {
    return {sp.t_a(), sp.t_s(), sp.t_c(), waiting_duration(sp, ch.p) / sp.a,
            ch.p, q, ch.alpha, ch.alpha0};
}

// Mean service time in mini-slots for the uncapped policy.
inline double ex_closed(const ChainInputs& c) {
    const double u = c.p + c.q - 1.0;
    if (!(u > 0.0)) throw NonRecurrentError(c.p, c.q);
    const double M = 1.0 - c.alpha * c.alpha0 * c.p;
    return (c.t_a + c.t_s) + c.alpha0 + c.t_w * (1.0 - c.alpha * c.alpha0) +
           c.t_c * (1.0 - c.p) / c.p +
           (c.t_w * (1.0 - c.alpha) * c.p + c.p) * M / (c.alpha * c.p * u);
}

// Second moment E[X^2] in mini-slots squared for the uncapped policy.
// Finite only when q^2 > 1 - p; the caller checks that boundary.
inline double pk_poly_D(const ChainInputs& c) {
    const double tA = c.t_a, tS = c.t_s, tC = c.t_c, tW = c.t_w;
    const double p = c.p, q = c.q, al = c.alpha, al0 = c.alpha0;
    const double u = p + q - 1.0;
    if (!(u > 0.0)) throw NonRecurrentError(p, q);
    const double M = 1.0 - al * al0 * p;
    const double big = al * u * (tS * p + tC - p * tC) + tW * (1.0 - al) * p + p;
    const double wfree = tW - al * tW + 1.0;

    double s = 0.0;
    s += (tA + tC + 1.0) * (tA + tC) * al * al0 * (1.0 - p);
    s += (tA + tW) * (tA + tW - 1.0) * (1.0 - al0);
    s += 2.0 / (p * p) * M * (tC - tC * p - p) * (tS * p + tC - p * tC);
    s += (tA + tW + 1.0) * (tA + tW) * (1.0 - al) * al0;
    s += (tA + tS + 1.0) * (tA + tS) * al * al0 * p;
    s += tC * (tC + 1.0) * (1.0 - p) * M / p;
    s += tS * (tS + 1.0) * M;
    s += 2.0 * (tA * M + tC * al * al0 * (1.0 - p) + tW * (1.0 - al * al0) + al0 * (1.0 - al * p)) *
         big / (al * p * u);
    s += 2.0 * wfree * ((tC + 1.0) * (1.0 - p) - q) * M / (al * u * u);
    s += 2.0 * wfree * (tS * p + tC - p * tC) * M / (al * p * u);
    s += 2.0 * wfree * wfree * q * M / (al * al * u * (p + q * q - 1.0));
    s += tW * (tW + 1.0) * (1.0 - al) * M / (al * u);
    return s + ex_closed(c);
}

// Leading coefficient of the capped chain's second moment as the cap grows;
// its sign carries the q^2 > 1 - p divergence boundary.
inline double pk_poly_C(const ChainInputs& c) {
    const double p = c.p, q = c.q, al = c.alpha, tW = c.t_w;
    const double u = p + q - 1.0;
    const double u2 = p + q * q - 1.0;
    const double M = 1.0 - al * c.alpha0 * p;
    const double wfree = tW * (1.0 - al) + 1.0;
    return 2.0 * wfree * wfree * (u2 * (u - q * p + q * p * p) - q * q * q * p * p) * M /
           (al * al * q * q * p * p * u * u2);
}

struct ServiceMoments {
    double mean = 0.0;             // E[X] in mini-slots
    double second = 0.0;           // E[X^2] in mini-slots squared
    bool second_finite = true;
    double lambda_prime = 0.0;     // per-node arrivals per mini-slot
    double pk_delay = 0.0;         // mean sojourn E[T] in mini-slots
    bool delay_bounded = true;
};

// Closed-form moments at a channel point. Only the uncapped policy has these
// closed forms; capped chains go through pgf_moments.
inline ServiceMoments moments_closed_form(const SystemParams& sp, const ChannelPoint& ch,
                                          const BackoffConfig& bo) {
    if (!bo.is_infinite())
        throw ConfigError("closed-form moments hold for the uncapped policy only");
    bo.validate();
    const ChainInputs c = chain_inputs(sp, ch, bo.q);
    ServiceMoments m;
    m.mean = ex_closed(c);
    if (bo.q * bo.q > 1.0 - ch.p) {
        m.second = pk_poly_D(c);
    } else {
        m.second = std::numeric_limits<double>::infinity();
        m.second_finite = false;
    }
    return m;
}

struct PkDelay {
    double value = 0.0;            // mean sojourn in mini-slots
    bool bounded = true;
};

// Mean queueing sojourn of an M/G/1-type node: service mean plus the
// Pollaczek-Khinchine waiting term. Unbounded when the queue saturates or
// the service second moment diverges.
inline PkDelay pk_delay(double lambda_prime, double mean, double second, bool second_finite) {
    if (lambda_prime < 0.0) throw ConfigError("arrival rate must be nonnegative");
    PkDelay d;
    const double rho = lambda_prime * mean;
    if (!second_finite || rho >= 1.0) {
        d.value = std::numeric_limits<double>::infinity();
        d.bounded = false;
        return d;
    }
    d.value = mean + (lambda_prime * second - lambda_prime * mean) / (2.0 * (1.0 - rho));
    return d;
}

// One-call bundle: closed-form moments plus the sojourn at arrival rate
// lambda_prime (per-node packets per mini-slot).
inline ServiceMoments service_moments(const SystemParams& sp, const ChannelPoint& ch,
                                      const BackoffConfig& bo, double lambda_prime) {
    ServiceMoments m = moments_closed_form(sp, ch, bo);
    m.lambda_prime = lambda_prime;
    const PkDelay d = pk_delay(lambda_prime, m.mean, m.second, m.second_finite);
    m.pk_delay = d.value;
    m.delay_bounded = d.bounded;
    return m;
}

// Mini-slots are 50 microseconds of air time in both unit modes.
inline double slots_to_ms(double slots) { return slots * kMiniSlotUs / 1000.0; }

} // namespace dcfq
