#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "dcfq/channel.hpp"
#include "dcfq/equilibrium.hpp"
#include "dcfq/errors.hpp"
#include "dcfq/params.hpp"
#include "dcfq/rng.hpp"

namespace dcfq {

struct SimConfig {
    SystemParams params;
    int n = 10;
    double lambda_hat = 0.3;          // network packets offered per payload window
    BackoffConfig backoff{0.2, 40};
    std::uint64_t horizon = 1'000'000;    // mini-slots simulated
    std::int64_t warmup = -1;             // mini-slots discarded; <0 = 10% of horizon
    std::uint64_t seed = 1;
    int batches = 20;
    std::int64_t buffer_capacity = -1;    // packets held per node incl. HOL; <0 = unbounded

    std::uint64_t warmup_slots() const {
        return warmup < 0 ? horizon / 10 : static_cast<std::uint64_t>(warmup);
    }

    void validate() const {
        params.validate();
        backoff.validate();
        if (!params.integer_counts())
            throw ConfigError("the mini-slot timeline needs integral slot counts; "
                              "use slot-unit parameters");
        if (n < 1) throw ConfigError("node count must be >= 1");
        if (lambda_hat < 0.0) throw ConfigError("lambda_hat must be nonnegative");
        if (horizon < 1000) throw ConfigError("horizon must be at least 1000 mini-slots");
        if (warmup_slots() >= horizon) throw ConfigError("warmup must end before the horizon");
        if (batches < 2 || static_cast<std::uint64_t>(batches) > horizon - warmup_slots())
            throw ConfigError("batch count must be >= 2 and fit the measurement span");
        const double lp = lambda_hat * params.a / (n * (params.T_S - params.T_D));
        if (lp > 1.0)
            throw ConfigError("per-node arrival probability exceeds one mini-slot");
    }
};

// Everything measured over one run. Counters labelled "measured" cover the
// post-warmup span; the conservation counters cover the whole horizon.
struct SimStats {
    // configuration echo
    Mechanism mechanism = Mechanism::Basic;
    int n = 0;
    double lambda_hat = 0.0;
    double q = 0.0;
    int cutoff = 0;
    std::uint64_t seed = 0;
    std::uint64_t horizon = 0;
    std::uint64_t warmup = 0;

    // whole-horizon conservation
    std::uint64_t packets_arrived = 0;     // accepted into a queue
    std::uint64_t packets_dropped = 0;     // rejected by a full buffer
    std::uint64_t packets_delivered = 0;
    std::uint64_t packets_in_system = 0;   // still queued or in service at the horizon
    std::uint64_t busy_slots = 0;          // inside a transmission window (horizon-capped)
    std::uint64_t idle_slots = 0;          // free slots that opened no window

    // channel activity, whole horizon
    std::uint64_t success_windows = 0;
    std::uint64_t collision_windows = 0;
    std::uint64_t colliding_packets = 0;

    // measurement span
    std::uint64_t measured_slots = 0;
    std::uint64_t deliveries_measured = 0;
    double throughput = 0.0;               // delivered packets per payload window
    double throughput_ci = 0.0;            // 95% half-width from batch means
    double mean_sojourn_slots = 0.0;        // arrival to delivery, mini-slots
    double mean_sojourn_ci = 0.0;
    double mean_service_slots = 0.0;        // head-of-line to delivery, mini-slots
    double collision_rate = 0.0;            // collided windows / all windows
    double measured_x = 0.0;                // attempt-rate estimate from window openings
    std::vector<double> phase_occupancy;    // share of sensing slots per phase
    std::vector<double> phase_occupancy_sigma;  // batch-based std. error of those shares
};

namespace detail {

inline double student_t975(int df) {
    static constexpr double table[] = {
        12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228,
        2.201,  2.179, 2.160, 2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086,
        2.080,  2.074, 2.069, 2.064, 2.060, 2.056, 2.052, 2.048, 2.045, 2.042};
    if (df < 1) return table[0];
    if (df <= 30) return table[df - 1];
    return 1.96;
}

// Sample mean and 95% half-width from batch means.
inline void batch_ci(const std::vector<double>& means, double& mean, double& half) {
    const int B = static_cast<int>(means.size());
    mean = 0.0;
    for (double v : means) mean += v;
    mean /= B;
    double ss = 0.0;
    for (double v : means) ss += (v - mean) * (v - mean);
    const double sd = B > 1 ? std::sqrt(ss / (B - 1)) : 0.0;
    half = student_t975(B - 1) * sd / std::sqrt(static_cast<double>(B));
}

} // namespace detail

// Mini-slot discrete-event run of n queues sharing the channel.
//
// Timeline: a transmission opened in mini-slot t occupies exactly T_S/a
// (success) or T_C/a (collision) slots including t. Every contender senses
// again on the first slot after the window. A successful delivery completes
// once the payload is down, (T_S - T_D)/a slots in; the trailing slots are
// the DIFS deferral that the successor packet of the same queue spends as
// its own head-of-line deferral.
//
// Phase rules: fresh packets attempt unconditionally once their deferral
// completes; an interrupted deferral or an arrival to a busy channel sends
// the packet through the wait state into phase 1; later waits keep their
// phase; collisions advance it up to the cutoff.
inline SimStats run(const SimConfig& cfg) {
    cfg.validate();
    const SystemParams& sp = cfg.params;
    const int n = cfg.n;
    const double q = cfg.backoff.q;

    const auto slots = [&](double v) {
        return static_cast<std::uint64_t>(std::llround(v / sp.a));
    };
    const std::uint64_t win_succ = slots(sp.T_S);
    const std::uint64_t win_coll = slots(sp.T_C);
    const std::uint64_t t_defer = slots(sp.T_D - sp.a);
    const std::uint64_t t_payload = slots(sp.T_S - sp.T_D);

    const double p_arr = cfg.lambda_hat * sp.a / (n * (sp.T_S - sp.T_D));
    const std::uint64_t warmup = cfg.warmup_slots();
    const std::uint64_t horizon = cfg.horizon;
    const std::uint64_t span = horizon - warmup;
    const int B = cfg.batches;
    const auto batch_of = [&](std::uint64_t t) {
        return static_cast<int>(((t - warmup) * static_cast<std::uint64_t>(B)) / span);
    };

    // Attempt probability per sensing slot by phase; beyond the table the
    // probability is below 1e-180 and treated as never.
    const int cap = cfg.backoff.is_infinite() ? -1 : cfg.backoff.cutoff;
    std::vector<double> q_pow(256);
    q_pow[0] = 1.0;
    for (int i = 1; i < 256; ++i) q_pow[i] = q_pow[i - 1] * q;

    enum class Mode : std::uint8_t { Empty, Defer, Sense, Wait };
    struct Node {
        Mode mode = Mode::Empty;
        int phase = 0;
        std::uint64_t defer_left = 0;
        std::uint64_t wake = 0;
        int wake_phase = 0;
        std::deque<std::uint64_t> queue;   // arrival slots, front = head of line
        std::uint64_t hol_start = 0;
    };
    std::vector<Node> nodes(n);

    const CounterRng rng(cfg.seed);
    const std::uint64_t arrival_stream = 0;   // decision streams are 1..n

    SimStats st;
    st.mechanism = sp.mechanism;
    st.n = n;
    st.lambda_hat = cfg.lambda_hat;
    st.q = q;
    st.cutoff = cap;
    st.seed = cfg.seed;
    st.horizon = horizon;
    st.warmup = warmup;

    constexpr int kPhaseTrack = 64;   // tallies lump phases beyond this
    std::vector<std::uint64_t> deliveries_b(B, 0);
    std::vector<double> sojourn_b(B, 0.0);
    std::vector<double> service_b(B, 0.0);
    std::vector<std::vector<std::uint64_t>> sense_b(B, std::vector<std::uint64_t>(kPhaseTrack, 0));
    std::uint64_t windows_meas = 0, idle_meas = 0;

    std::uint64_t busy_end = 0;
    bool pending_active = false;
    std::uint64_t pending_slot = 0;
    int pending_node = 0;

    std::vector<int> attempts;
    attempts.reserve(n);

    for (std::uint64_t t = 0; t < horizon; ++t) {
        for (auto& nd : nodes)
            if (nd.mode == Mode::Wait && t >= nd.wake) {
                nd.mode = Mode::Sense;
                nd.phase = nd.wake_phase;
            }

        if (pending_active && t == pending_slot) {
            pending_active = false;
            Node& nd = nodes[pending_node];
            const std::uint64_t arrived = nd.queue.front();
            nd.queue.pop_front();
            ++st.packets_delivered;
            if (t >= warmup) {
                const int b = batch_of(t);
                ++deliveries_b[b];
                sojourn_b[b] += static_cast<double>(t - arrived + 1);
                service_b[b] += static_cast<double>(t - nd.hol_start + 1);
            }
            if (nd.queue.empty()) {
                nd.mode = Mode::Empty;
                nd.phase = 0;
            } else {
                // Successor spends the tail of this window as its deferral
                // and senses fresh right after it.
                nd.hol_start = t + 1;
                nd.mode = Mode::Wait;
                nd.wake = busy_end;
                nd.wake_phase = 0;
            }
        }

        for (int i = 0; i < n; ++i) {
            if (rng.uniform(arrival_stream, t * static_cast<std::uint64_t>(n) + i) >= p_arr)
                continue;
            Node& nd = nodes[i];
            if (cfg.buffer_capacity >= 0 &&
                nd.queue.size() >= static_cast<std::size_t>(cfg.buffer_capacity)) {
                ++st.packets_dropped;
                continue;
            }
            nd.queue.push_back(t);
            ++st.packets_arrived;
            if (nd.mode == Mode::Empty) {
                nd.hol_start = t;
                nd.phase = 0;
                if (t < busy_end) {
                    nd.mode = Mode::Wait;
                    nd.wake = busy_end;
                    nd.wake_phase = 1;
                } else {
                    nd.mode = Mode::Defer;
                    nd.defer_left = t_defer;
                }
            }
        }

        if (t < busy_end) continue;

        attempts.clear();
        for (int i = 0; i < n; ++i) {
            Node& nd = nodes[i];
            if (nd.mode != Mode::Sense) continue;
            if (t >= warmup)
                ++sense_b[batch_of(t)][std::min(nd.phase, kPhaseTrack - 1)];
            bool fire;
            if (nd.phase == 0) {
                fire = true;
            } else {
                const double pq = nd.phase < 256 ? q_pow[nd.phase] : 0.0;
                fire = pq > 0.0 && rng.uniform(1 + static_cast<std::uint64_t>(i), t) < pq;
            }
            if (fire) attempts.push_back(i);
        }

        if (attempts.empty()) {
            ++st.idle_slots;
            if (t >= warmup) ++idle_meas;
            for (auto& nd : nodes) {
                if (nd.mode != Mode::Defer) continue;
                if (nd.defer_left > 0) --nd.defer_left;
                if (nd.defer_left == 0) {
                    nd.mode = Mode::Sense;
                    nd.phase = 0;
                }
            }
            continue;
        }

        const bool success = attempts.size() == 1;
        const std::uint64_t win = success ? win_succ : win_coll;
        busy_end = t + win;
        st.busy_slots += std::min(busy_end, horizon) - t;
        if (t >= warmup) ++windows_meas;

        if (success) {
            ++st.success_windows;
            const int i = attempts[0];
            pending_active = true;
            pending_slot = t + t_payload;
            pending_node = i;
            Node& nd = nodes[i];
            nd.mode = Mode::Wait;   // superseded at delivery time
            nd.wake = busy_end;
            nd.wake_phase = 0;
        } else {
            ++st.collision_windows;
            st.colliding_packets += attempts.size();
            for (int i : attempts) {
                Node& nd = nodes[i];
                nd.phase = cap >= 0 ? std::min(nd.phase + 1, cap) : nd.phase + 1;
                nd.mode = Mode::Wait;
                nd.wake = busy_end;
                nd.wake_phase = nd.phase;
            }
        }

        for (int i = 0; i < n; ++i) {
            Node& nd = nodes[i];
            if (nd.mode == Mode::Defer) {
                // Interrupted deferral: wait out the window, then phase 1.
                nd.mode = Mode::Wait;
                nd.wake = busy_end;
                nd.wake_phase = 1;
            } else if (nd.mode == Mode::Sense) {
                // Declined this slot and the channel went busy: keep phase.
                nd.mode = Mode::Wait;
                nd.wake = busy_end;
                nd.wake_phase = nd.phase;
            }
        }
    }

    for (const auto& nd : nodes) st.packets_in_system += nd.queue.size();

    st.measured_slots = span;
    st.deliveries_measured = 0;
    for (int b = 0; b < B; ++b) st.deliveries_measured += deliveries_b[b];

    const double t_suc = static_cast<double>(t_payload);
    std::vector<double> thr_b(B);
    const double batch_span = static_cast<double>(span) / B;
    for (int b = 0; b < B; ++b)
        thr_b[b] = deliveries_b[b] * t_suc / batch_span;
    detail::batch_ci(thr_b, st.throughput, st.throughput_ci);

    double soj_sum = 0.0, svc_sum = 0.0;
    for (int b = 0; b < B; ++b) {
        soj_sum += sojourn_b[b];
        svc_sum += service_b[b];
    }
    if (st.deliveries_measured > 0) {
        st.mean_sojourn_slots = soj_sum / st.deliveries_measured;
        st.mean_service_slots = svc_sum / st.deliveries_measured;
        std::vector<double> means;
        means.reserve(B);
        for (int b = 0; b < B; ++b)
            if (deliveries_b[b] > 0) means.push_back(sojourn_b[b] / deliveries_b[b]);
        if (means.size() >= 2) {
            double m, h;
            detail::batch_ci(means, m, h);
            st.mean_sojourn_ci = h;
        }
    }

    const std::uint64_t windows_all = st.success_windows + st.collision_windows;
    if (windows_all > 0)
        st.collision_rate = static_cast<double>(st.collision_windows) / windows_all;
    if (windows_meas + idle_meas > 0) {
        const double pt = static_cast<double>(windows_meas) / (windows_meas + idle_meas);
        st.measured_x = pt < 1.0 ? -std::log1p(-pt) : std::numeric_limits<double>::infinity();
    }

    std::vector<std::uint64_t> sense_total(kPhaseTrack, 0);
    std::uint64_t sense_all = 0;
    for (int b = 0; b < B; ++b)
        for (int i = 0; i < kPhaseTrack; ++i) {
            sense_total[i] += sense_b[b][i];
            sense_all += sense_b[b][i];
        }
    int top = kPhaseTrack;
    while (top > 1 && sense_total[top - 1] == 0) --top;
    st.phase_occupancy.assign(top, 0.0);
    st.phase_occupancy_sigma.assign(top, 0.0);
    if (sense_all > 0) {
        for (int i = 0; i < top; ++i) {
            st.phase_occupancy[i] = static_cast<double>(sense_total[i]) / sense_all;
            std::vector<double> shares;
            shares.reserve(B);
            for (int b = 0; b < B; ++b) {
                std::uint64_t tot = 0;
                for (int j = 0; j < kPhaseTrack; ++j) tot += sense_b[b][j];
                if (tot > 0) shares.push_back(static_cast<double>(sense_b[b][i]) / tot);
            }
            if (shares.size() >= 2) {
                double m, h;
                detail::batch_ci(shares, m, h);
                st.phase_occupancy_sigma[i] = h / detail::student_t975(static_cast<int>(shares.size()) - 1);
            }
        }
    }
    return st;
}

// Side-by-side of one run against the analytical operating point for the
// same offered load. The analytical side is the uncapped-policy closed form;
// with the default cutoff of 40 the difference is far below simulation noise.
struct Comparison {
    SimStats sim;
    std::optional<Equilibrium> analysis;
    std::string analysis_error;
    double rel_throughput_err = 0.0;   // sim vs offered demand
    double rel_service_err = 0.0;      // sim vs closed-form mean service
    double rel_sojourn_err = 0.0;      // sim vs closed-form mean sojourn
};

inline Comparison measure_vs_analysis(const SimConfig& cfg) {
    Comparison cmp;
    cmp.sim = run(cfg);
    try {
        const Equilibrium eq = solve(cfg.params, cfg.n, cfg.lambda_hat, cfg.backoff.q);
        cmp.analysis = eq;
        if (cfg.lambda_hat > 0.0)
            cmp.rel_throughput_err = cmp.sim.throughput / cfg.lambda_hat - 1.0;
        if (eq.moments.mean > 0.0)
            cmp.rel_service_err = cmp.sim.mean_service_slots / eq.moments.mean - 1.0;
        if (eq.moments.delay_bounded && eq.delay > 0.0)
            cmp.rel_sojourn_err = cmp.sim.mean_sojourn_slots / eq.delay - 1.0;
    } catch (const std::exception& e) {
        cmp.analysis_error = e.what();
    }
    return cmp;
}

} // namespace dcfq
