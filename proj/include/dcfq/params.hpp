#pragma once

#include <cmath>
#include <limits>
#include <string>

#include "dcfq/errors.hpp"

namespace dcfq {

// Duration of one mini-slot in microseconds. Attempt rates are reported per
// microsecond through this constant regardless of the unit mode in use.
inline constexpr double kMiniSlotUs = 50.0;

enum class Mechanism { Basic, RtsCts };

// SlotUnits expresses every duration as a count of mini-slots (a = 1);
// Microseconds keeps the raw 802.11 timing values (a = 50).
enum class UnitMode { SlotUnits, Microseconds };

inline const char* to_string(Mechanism m) {
    return m == Mechanism::Basic ? "basic" : "rts_cts";
}

inline const char* to_string(UnitMode u) {
    return u == UnitMode::SlotUnits ? "slots" : "us";
}

// Timing description of one access mechanism. All five durations share one
// unit (mini-slots or microseconds); ratios are what the model consumes.
//   a    mini-slot duration
//   T_D  DIFS deferral, including the sensing mini-slot
//   T_S  busy period seen by others when a transmission succeeds
//   T_C  busy period seen by others when transmissions collide
//   E_P  payload transmission time carried by one packet
struct SystemParams {
    double a = 1.0;
    double T_D = 3.0;
    double T_S = 180.0;
    double T_C = 175.0;
    double E_P = 164.0;
    Mechanism mechanism = Mechanism::Basic;

    // Payload-delivery window: the part of a successful busy period that the
    // next head-of-line packet cannot reuse. Serves as the time scale for
    // normalized throughput and arrival rates.
    double t_suc() const { return (T_S - T_D) / a; }

    // Slot-count views of the durations. Integral in SlotUnits presets; in
    // Microseconds mode they are genuinely fractional (e.g. 78/50).
    double t_a() const { return (T_D - a) / a; }
    double t_s() const { return (T_S - T_D) / a; }
    double t_c() const { return (T_C - a) / a; }

    bool integer_counts(double tol = 1e-9) const {
        auto near_int = [tol](double v) { return std::abs(v - std::round(v)) <= tol; };
        return near_int(t_a()) && near_int(t_s()) && near_int(t_c());
    }

    void validate() const {
        if (!(a > 0.0)) throw ConfigError("mini-slot duration a must be positive");
        if (!(T_D > a)) throw ConfigError("T_D must exceed the mini-slot a");
        if (!(T_S > T_D)) throw ConfigError("T_S must exceed T_D");
        if (!(T_C > a)) throw ConfigError("T_C must exceed the mini-slot a");
        if (!(E_P > 0.0)) throw ConfigError("payload time E_P must be positive");
        if (!(E_P <= T_S)) throw ConfigError("payload time E_P cannot exceed T_S");
    }
};

// Retransmission policy: in sensing phase i the head-of-line packet transmits
// with probability q^i. Phases advance on collision up to `cutoff`, after
// which the probability stays q^cutoff. cutoff = kInfinitePhases removes the
// cap.
struct BackoffConfig {
    static constexpr int kInfinitePhases = -1;

    double q = 0.5;
    int cutoff = kInfinitePhases;

    bool is_infinite() const { return cutoff < 0; }

    void validate() const {
        if (!(q > 0.0 && q < 1.0))
            throw ConfigError("retransmission factor q must lie in (0, 1)");
        if (cutoff == 0)
            throw ConfigError("phase cutoff must be >= 1, or negative for no cap");
    }
};

inline SystemParams preset(Mechanism mech, UnitMode units = UnitMode::SlotUnits) {
    SystemParams p;
    p.mechanism = mech;
    if (units == UnitMode::SlotUnits) {
        p.a = 1.0;
        p.T_D = 3.0;
        p.E_P = 164.0;
        if (mech == Mechanism::Basic) {
            p.T_S = 180.0;
            p.T_C = 175.0;
        } else {
            p.T_S = 192.0;
            p.T_C = 9.0;
        }
    } else {
        p.a = 50.0;
        p.T_D = 128.0;
        p.E_P = 8184.0;
        if (mech == Mechanism::Basic) {
            p.T_S = 8982.0;
            p.T_C = 8713.0;
        } else {
            p.T_S = 9568.0;
            p.T_C = 417.0;
        }
    }
    return p;
}

// Converts the dimensionless per-mini-slot attempt rate x into an attempt
// rate per microsecond of real time.
inline double attempt_rate_per_us(double x) { return x / kMiniSlotUs; }

} // namespace dcfq
