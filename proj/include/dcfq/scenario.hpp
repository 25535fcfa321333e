#pragma once

#include <fstream>
#include <optional>
#include <set>
#include <string>

#include <json.hpp>

#include "dcfq/errors.hpp"
#include "dcfq/simulator.hpp"

namespace dcfq {

// Sweep request inside a scenario: vary one coordinate over a closed grid.
struct SweepSpec {
    std::string variable;     // "q" or "lambda_hat"
    double start = 0.0;
    double stop = 0.0;
    double step = 0.0;

    std::vector<double> grid() const {
        if (!(step > 0.0)) throw ConfigError("sweep step must be positive");
        if (stop < start) throw ConfigError("sweep stop must be >= start");
        std::vector<double> g;
        // Count-based stepping keeps the grid free of accumulated rounding.
        const auto count = static_cast<std::size_t>((stop - start) / step + 1e-9) + 1;
        g.reserve(count);
        for (std::size_t i = 0; i < count; ++i) g.push_back(start + step * static_cast<double>(i));
        return g;
    }
};

struct Scenario {
    SimConfig sim;
    std::optional<SweepSpec> sweep;
    std::string out;          // optional output path
};

namespace detail {

inline void reject_unknown(const nlohmann::json& j, const std::set<std::string>& allowed,
                           const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            throw ConfigError("unknown key \"" + it.key() + "\" in " + where);
}

inline Mechanism parse_mechanism(const std::string& s) {
    if (s == "basic") return Mechanism::Basic;
    if (s == "rts_cts" || s == "rts") return Mechanism::RtsCts;
    throw ConfigError("mechanism must be \"basic\" or \"rts_cts\", got \"" + s + "\"");
}

inline UnitMode parse_units(const std::string& s) {
    if (s == "slots") return UnitMode::SlotUnits;
    if (s == "us" || s == "microseconds") return UnitMode::Microseconds;
    throw ConfigError("units must be \"slots\" or \"us\", got \"" + s + "\"");
}

} // namespace detail

// Strict scenario parser: every key must be known, so a typo fails loudly
// instead of silently running the defaults.
inline Scenario parse_scenario(const nlohmann::json& j) {
    detail::reject_unknown(j,
                           {"mechanism", "units", "n", "lambda_hat", "q", "K", "horizon",
                            "warmup", "seed", "batches", "buffer_capacity", "params", "sweep",
                            "out"},
                           "scenario");
    Scenario sc;
    Mechanism mech = Mechanism::Basic;
    UnitMode units = UnitMode::SlotUnits;
    if (j.contains("mechanism")) mech = detail::parse_mechanism(j.at("mechanism").get<std::string>());
    if (j.contains("units")) units = detail::parse_units(j.at("units").get<std::string>());
    sc.sim.params = preset(mech, units);

    if (j.contains("params")) {
        const auto& p = j.at("params");
        detail::reject_unknown(p, {"a", "T_D", "T_S", "T_C", "E_P"}, "scenario params");
        if (p.contains("a")) sc.sim.params.a = p.at("a").get<double>();
        if (p.contains("T_D")) sc.sim.params.T_D = p.at("T_D").get<double>();
        if (p.contains("T_S")) sc.sim.params.T_S = p.at("T_S").get<double>();
        if (p.contains("T_C")) sc.sim.params.T_C = p.at("T_C").get<double>();
        if (p.contains("E_P")) sc.sim.params.E_P = p.at("E_P").get<double>();
        sc.sim.params.validate();
    }

    if (j.contains("n")) sc.sim.n = j.at("n").get<int>();
    if (j.contains("lambda_hat")) sc.sim.lambda_hat = j.at("lambda_hat").get<double>();
    if (j.contains("q")) sc.sim.backoff.q = j.at("q").get<double>();
    if (j.contains("K")) {
        const auto& k = j.at("K");
        if (k.is_string()) {
            const auto s = k.get<std::string>();
            if (s != "infinite" && s != "inf")
                throw ConfigError("K must be an integer or \"infinite\", got \"" + s + "\"");
            sc.sim.backoff.cutoff = BackoffConfig::kInfinitePhases;
        } else {
            sc.sim.backoff.cutoff = k.get<int>();
        }
    }
    if (j.contains("horizon")) sc.sim.horizon = j.at("horizon").get<std::uint64_t>();
    if (j.contains("warmup")) sc.sim.warmup = j.at("warmup").get<std::int64_t>();
    if (j.contains("seed")) sc.sim.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("batches")) sc.sim.batches = j.at("batches").get<int>();
    if (j.contains("buffer_capacity")) {
        const auto& bc = j.at("buffer_capacity");
        if (bc.is_string()) {
            const auto s = bc.get<std::string>();
            if (s != "infinite" && s != "inf")
                throw ConfigError("buffer_capacity must be an integer or \"infinite\"");
            sc.sim.buffer_capacity = -1;
        } else {
            sc.sim.buffer_capacity = bc.get<std::int64_t>();
        }
    }

    if (j.contains("sweep")) {
        const auto& sw = j.at("sweep");
        detail::reject_unknown(sw, {"variable", "start", "stop", "step"}, "scenario sweep");
        SweepSpec spec;
        spec.variable = sw.at("variable").get<std::string>();
        if (spec.variable != "q" && spec.variable != "lambda_hat")
            throw ConfigError("sweep variable must be \"q\" or \"lambda_hat\"");
        spec.start = sw.at("start").get<double>();
        spec.stop = sw.at("stop").get<double>();
        spec.step = sw.at("step").get<double>();
        (void)spec.grid();   // validates the stepping
        sc.sweep = spec;
    }

    if (j.contains("out")) sc.out = j.at("out").get<std::string>();
    return sc;
}

inline Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open scenario file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("malformed scenario JSON in " + path + ": " + e.what());
    }
    if (!j.is_object()) throw ConfigError("scenario root must be a JSON object");
    try {
        return parse_scenario(j);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("malformed scenario value in " + path + ": " + e.what());
    }
}

} // namespace dcfq
