#pragma once

#include <stdexcept>
#include <string>

namespace dcfq {

// Invalid or inconsistent user-supplied configuration (parameters, scenario
// files, CLI combinations).
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// The HOL chain has no stationary distribution: requires p + q > 1.
struct NonRecurrentError : std::domain_error {
    NonRecurrentError(double p, double q)
        : std::domain_error("HOL chain is not positive recurrent: p + q = " +
                            std::to_string(p + q) + " <= 1 (p=" + std::to_string(p) +
                            ", q=" + std::to_string(q) + ")"),
          p(p), q(q) {}
    double p, q;
};

// Demand at or above the throughput curve's peak: the characteristic equation
// has no crossing points.
struct NoRootsError : std::domain_error {
    using std::domain_error::domain_error;
};

// A fixed-point search exhausted its iteration budget.
struct NoConvergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A generating-function back-substitution denominator vanished. Cannot happen
// for z in (0,1) with valid probabilities; kept as a defensive signal.
struct SingularPgfError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// The bounded-delay interval is empty (its lower bound meets or exceeds the
// upper bound), which happens when demand is pushed close to the peak.
struct EmptyRegionError : std::domain_error {
    using std::domain_error::domain_error;
};

} // namespace dcfq
