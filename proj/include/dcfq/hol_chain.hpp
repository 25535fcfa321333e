#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "dcfq/channel.hpp"
#include "dcfq/errors.hpp"
#include "dcfq/params.hpp"

namespace dcfq {

// Mean residual busy period a node waits out after sensing the channel busy:
// a success with chance p, a collision otherwise, minus the sensing mini-slot
// already spent.
inline double waiting_duration(const SystemParams& sp, double p) {
    return p * sp.T_S + (1.0 - p) * sp.T_C - sp.a;
}

// Time-stationary distribution of the head-of-line packet's state machine.
// Vectors are indexed by sensing phase. For an uncapped policy the final
// entry aggregates the analytic tail of all phases at and beyond the
// evaluation cutoff, so the probabilities always sum to one.
struct HolSteadyState {
    double b_act = 0.0;            // DIFS deferral after the previous delivery
    double b_suc = 0.0;            // transmitting the payload of a success
    std::vector<double> b_s;       // sensing in phase i
    std::vector<double> b_w;       // waiting out a busy period entered from phase i
    std::vector<double> b_col;     // caught in a collision attempted from phase i
    double D = 0.0;                // normalizing mean cycle length (time units)
    double T_W = 0.0;              // waiting_duration at this channel point
    int K = 0;                     // phase cutoff (evaluation cutoff if uncapped)
    bool truncated = false;        // true when the final entries are tail lumps
};

// Mean regeneration-cycle length of the chain, in the time units of `sp`.
// The tail factor collapses to p*q when the phase cap is removed.
inline double chain_normalizer_D(const SystemParams& sp, const ChannelPoint& ch,
                                 const BackoffConfig& bo) {
    const double p = ch.p, q = bo.q, al = ch.alpha, al0 = ch.alpha0;
    const double u = p + q - 1.0;
    if (!(u > 0.0)) throw NonRecurrentError(p, q);
    const double T_W = waiting_duration(sp, p);
    const double M = 1.0 - p * al * al0;
    const double head = (T_W - al0 * al * T_W + sp.T_S + sp.a * al0 - sp.T_C) * al * p +
                        (sp.T_C - sp.a) * al;
    double bracket = p * q;
    if (!bo.is_infinite()) {
        const double r = (1.0 - p) / q;
        bracket += (u - p * q) * std::pow(r, bo.cutoff - 1);
    }
    return head + M * (sp.a + T_W - al * T_W) / (q * u) * bracket;
}

inline HolSteadyState steady_state(const SystemParams& sp, const ChannelPoint& ch,
                                   const BackoffConfig& bo) {
    const double p = ch.p, q = bo.q, al = ch.alpha, al0 = ch.alpha0;
    const double u = p + q - 1.0;
    if (!(u > 0.0)) throw NonRecurrentError(p, q);

    HolSteadyState st;
    st.T_W = waiting_duration(sp, p);
    st.D = chain_normalizer_D(sp, ch, bo);
    const double T_W = st.T_W;
    const double M = 1.0 - p * al * al0;
    const double r = (1.0 - p) / q;

    int K;
    if (bo.is_infinite()) {
        // Truncate where the geometric phase tail drops below double noise,
        // then fold the exact remainder into the final entry.
        double k_needed = 512.0;
        if (r < 1.0 && r > 0.0)
            k_needed = 1.0 - 12.0 * std::log(10.0) / std::log(r);
        else if (r == 0.0)
            k_needed = 8.0;
        K = static_cast<int>(std::clamp(k_needed, 8.0, 512.0));
        st.truncated = true;
    } else {
        K = bo.cutoff;
    }
    st.K = K;

    std::vector<double> ws(K + 1), ww(K + 1), wc(K + 1);
    const double w_act = (sp.T_D - sp.a) * al * p;
    const double w_suc = (sp.T_S - sp.T_D) * al * p;
    ws[0] = sp.a * al0 * al * p;
    ww[0] = T_W * al * p * (1.0 - al * al0);
    wc[0] = al * al * al0 * p * (sp.T_C - sp.a) * (1.0 - p);

    double geo = 1.0 / q;          // (1-p)^{i-1} / q^i at i = 1
    double colp = 1.0 - p;         // (1-p)^i at i = 1
    for (int i = 1; i < K; ++i) {
        ws[i] = sp.a * p * M * geo;
        ww[i] = T_W * p * (1.0 - al) * M * geo;
        wc[i] = al * p * (sp.T_C - sp.a) * M * colp;
        geo *= r;
        colp *= 1.0 - p;
    }
    if (st.truncated) {
        // Exact geometric tails from phase K onward.
        ws[K] = sp.a * p * M * geo / (1.0 - r);
        ww[K] = T_W * p * (1.0 - al) * M * geo / (1.0 - r);
        wc[K] = al * p * (sp.T_C - sp.a) * M * colp / p;
    } else {
        // The terminal phase retries with probability q^K forever, which
        // inflates its sensing and collision residence by 1/p relative to
        // the mid-phase pattern.
        ws[K] = sp.a * M * geo;                // a M (1-p)^{K-1} q^{-K}
        ww[K] = T_W * (1.0 - al) * M * geo;
        wc[K] = al * (sp.T_C - sp.a) * M * colp;
    }

    st.b_act = w_act / st.D;
    st.b_suc = w_suc / st.D;
    st.b_s.resize(K + 1);
    st.b_w.resize(K + 1);
    st.b_col.resize(K + 1);
    for (int i = 0; i <= K; ++i) {
        st.b_s[i] = ws[i] / st.D;
        st.b_w[i] = ww[i] / st.D;
        st.b_col[i] = wc[i] / st.D;
    }
    return st;
}

struct OfferedLoad {
    double rho = 0.0;
    bool unstable = false;         // rho >= 1: the queue cannot keep up
};

// Utilization of one node's queue when packets arrive at `lambda` packets per
// payload window t_suc. Values above one are reported as-is with the flag
// set, so callers can see how far past saturation an operating point lies.
inline OfferedLoad offered_load(const SystemParams& sp, const ChannelPoint& ch,
                                const BackoffConfig& bo, double lambda) {
    if (lambda < 0.0) throw ConfigError("arrival rate must be nonnegative");
    const double D = chain_normalizer_D(sp, ch, bo);
    OfferedLoad ol;
    ol.rho = lambda * D / ((sp.T_S - sp.T_D) * ch.alpha * ch.p);
    ol.unstable = ol.rho >= 1.0;
    return ol;
}

} // namespace dcfq
