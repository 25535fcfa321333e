#pragma once

#include <cmath>

#include "dcfq/errors.hpp"
#include "dcfq/params.hpp"

namespace dcfq {

// Channel seen by one tagged node when the aggregate attempt process behaves
// like Poisson traffic with rate x attempts per mini-slot:
//   p       chance a given attempt sees no competing attempt in its mini-slot
//   P_t     chance an arbitrary mini-slot carries at least one attempt
//   P_s     chance a busy mini-slot carries exactly one attempt
//   alpha   chance a mini-slot is available for a new attempt
//   alpha0  chance the whole DIFS deferral passes without interruption
struct ChannelPoint {
    double x = 0.0;
    double p = 1.0;
    double P_t = 0.0;
    double P_s = 1.0;
    double alpha = 1.0;
    double alpha0 = 1.0;
};

inline double attempt_probability(double x) {
    if (x < 0.0) throw ConfigError("attempt rate x must be nonnegative");
    return -std::expm1(-x);
}

// Probability that a transmission mini-slot holds exactly one attempt, given
// it holds at least one: x e^{-x} / (1 - e^{-x}) with limit 1 at x = 0.
inline double success_probability_cond(double x) {
    if (x < 0.0) throw ConfigError("attempt rate x must be nonnegative");
    if (x == 0.0) return 1.0;
    return x * std::exp(-x) / (-std::expm1(-x));
}

inline double availability(const SystemParams& sp, double x) {
    if (x < 0.0) throw ConfigError("attempt rate x must be nonnegative");
    if (x == 0.0) return 1.0;
    const double xe = x * std::exp(-x);        // P_t * P_s
    const double P_t = -std::expm1(-x);
    // Mean cycle: one idle/attempt mini-slot plus the busy period it may open.
    const double denom = sp.a * (1.0 - P_t) + sp.T_S * xe + sp.T_C * (P_t - xe);
    return sp.a / denom;
}

inline double success_probability(const SystemParams& sp, double x) {
    const double alpha = availability(sp, x);
    return std::pow(alpha, (sp.T_D - sp.a) / sp.a);
}

inline ChannelPoint channel_at(const SystemParams& sp, double x) {
    if (x < 0.0) throw ConfigError("attempt rate x must be nonnegative");
    ChannelPoint c;
    c.x = x;
    c.p = std::exp(-x);
    c.P_t = -std::expm1(-x);
    c.P_s = success_probability_cond(x);
    c.alpha = availability(sp, x);
    c.alpha0 = std::pow(c.alpha, (sp.T_D - sp.a) / sp.a);
    return c;
}

} // namespace dcfq
