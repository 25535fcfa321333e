#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dcfq/dcfq.hpp"
#include "dcfq/version.hpp"

namespace {

using namespace dcfq;

struct CommonOpts {
    std::string mechanism = "basic";
    std::string units = "slots";
    int n = 10;
    double lambda_hat = 0.3;
    double q = 0.2;
    std::string K = "40";
    std::uint64_t seed = 1;
    std::uint64_t horizon = 1'000'000;
    std::int64_t warmup = -1;
    std::string out;
    std::string scenario;
};

int parse_cutoff(const std::string& s) {
    if (s == "inf" || s == "infinite") return BackoffConfig::kInfinitePhases;
    try {
        std::size_t pos = 0;
        const int k = std::stoi(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return k;
    } catch (const std::exception&) {
        throw ConfigError("--K expects an integer or \"inf\", got \"" + s + "\"");
    }
}

// Output sink: --out file when given, stdout otherwise.
struct Sink {
    std::ofstream file;
    std::ostream* os = &std::cout;

    explicit Sink(const std::string& path) {
        if (!path.empty()) {
            file.open(path);
            if (!file) throw ConfigError("cannot open output file: " + path);
            os = &file;
        }
    }
};

void add_common(CLI::App* cmd, CommonOpts& o, bool with_sim_flags) {
    cmd->add_option("--mechanism", o.mechanism, "Access mechanism: basic or rts_cts")
        ->check(CLI::IsMember({"basic", "rts_cts", "rts"}));
    cmd->add_option("--units", o.units, "Parameter units: slots or us")
        ->check(CLI::IsMember({"slots", "us", "microseconds"}));
    cmd->add_option("-n,--n", o.n, "Number of nodes");
    cmd->add_option("--lambda", o.lambda_hat, "Offered load, packets per payload window");
    cmd->add_option("-q,--q", o.q, "Retransmission factor in (0,1)");
    cmd->add_option("--K", o.K, "Sensing-phase cutoff, integer or \"inf\"");
    cmd->add_option("--out", o.out, "Write CSV here instead of stdout");
    cmd->add_option("--scenario", o.scenario, "JSON scenario file with the same keys");
    if (with_sim_flags) {
        cmd->add_option("--seed", o.seed, "Simulation seed");
        cmd->add_option("--horizon", o.horizon, "Simulated mini-slots");
        cmd->add_option("--warmup", o.warmup, "Warmup mini-slots (-1 = 10% of horizon)");
    }
}

// True when the option exists on this subcommand and the user passed it.
// Subcommands without simulation flags never register --seed and friends,
// so a plain count() would throw on the lookup.
bool given(const CLI::App* cmd, const std::string& name) {
    const CLI::Option* opt = cmd->get_option_no_throw(name);
    return opt != nullptr && opt->count() > 0;
}

// Merge precedence: defaults < scenario file < explicit flags.
SimConfig build_config(const CLI::App* cmd, const CommonOpts& o) {
    SimConfig cfg;
    if (!o.scenario.empty()) {
        cfg = load_scenario(o.scenario).sim;
    } else {
        cfg.params = preset(detail::parse_mechanism(o.mechanism),
                            detail::parse_units(o.units));
    }
    if (given(cmd, "--mechanism") || given(cmd, "--units")) {
        const Mechanism mech = given(cmd, "--mechanism")
                                   ? detail::parse_mechanism(o.mechanism)
                                   : cfg.params.mechanism;
        const UnitMode units =
            given(cmd, "--units") ? detail::parse_units(o.units)
                                  : (cfg.params.a == 1.0 ? UnitMode::SlotUnits
                                                         : UnitMode::Microseconds);
        cfg.params = preset(mech, units);
    }
    if (given(cmd, "--n")) cfg.n = o.n;
    if (given(cmd, "--lambda")) cfg.lambda_hat = o.lambda_hat;
    if (given(cmd, "--q")) cfg.backoff.q = o.q;
    if (given(cmd, "--K")) cfg.backoff.cutoff = parse_cutoff(o.K);
    if (given(cmd, "--seed")) cfg.seed = o.seed;
    if (given(cmd, "--horizon")) cfg.horizon = o.horizon;
    if (given(cmd, "--warmup")) cfg.warmup = o.warmup;
    // Simulation commands validate the whole config later; analytic commands
    // would otherwise accept and ignore out-of-range values here.
    cfg.backoff.validate();
    if (cfg.n < 1) throw ConfigError("node count must be >= 1");
    return cfg;
}

std::string cutoff_str(int cutoff) {
    return cutoff < 0 ? "inf" : std::to_string(cutoff);
}

int cmd_curve(const CommonOpts& o, const SimConfig& cfg, double x_min, double x_max, int points) {
    if (points < 2) throw ConfigError("--points must be >= 2");
    if (!(x_min >= 0.0) || !(x_max > x_min)) throw ConfigError("need 0 <= x-min < x-max");
    Sink sink(o.out);
    CsvWriter csv(*sink.os);
    csv.row({"g_per_us", "x", "lambda_out"});
    for (int i = 0; i < points; ++i) {
        const double x = x_min + (x_max - x_min) * i / (points - 1);
        csv.row({csv_num(attempt_rate_per_us(x)), csv_num(x),
                 csv_num(throughput(cfg.params, x))});
    }
    return 0;
}

int cmd_regions(const CommonOpts& o, const SimConfig& cfg) {
    const RegionReport rep = region_report(cfg.params, cfg.n, cfg.lambda_hat);
    std::ostringstream hum;
    hum << "mechanism=" << to_string(cfg.params.mechanism)
        << " n=" << cfg.n << " lambda_hat=" << csv_num(cfg.lambda_hat) << "\n"
        << "demand=" << csv_num(rep.demand) << " lambda_max=" << csv_num(rep.lambda_max)
        << " x_star=" << csv_num(rep.x_star) << "\n"
        << "x_S=" << csv_num(rep.x_S) << " x_L=" << csv_num(rep.x_L) << "\n"
        << "stable throughput: q in [" << csv_num(rep.r_t.lo) << ", " << csv_num(rep.r_t.hi)
        << (rep.hi_clamped ? "] (upper end clamped to 1)" : "]") << "\n";
    if (rep.r_d_empty)
        hum << "bounded delay:     empty\n";
    else
        hum << "bounded delay:     q in [" << csv_num(rep.r_d.lo) << ", "
            << csv_num(rep.r_d.hi) << ")\n";
    std::cerr << hum.str();

    Sink sink(o.out);
    CsvWriter csv(*sink.os);
    csv.row({"mechanism", "units", "n", "lambda_hat", "demand", "lambda_max", "x_star",
             "x_S", "x_L", "rt_lo", "rt_hi", "rt_hi_clamped", "rd_lo", "rd_hi", "rd_empty",
             "h_lo_raw", "bdc_lo"});
    csv.row({to_string(cfg.params.mechanism),
             cfg.params.a == 1.0 ? "slots" : "us",
             csv_num(cfg.n), csv_num(cfg.lambda_hat), csv_num(rep.demand),
             csv_num(rep.lambda_max), csv_num(rep.x_star), csv_num(rep.x_S), csv_num(rep.x_L),
             csv_num(rep.r_t.lo), csv_num(rep.r_t.hi), rep.hi_clamped ? "1" : "0",
             csv_num(rep.r_d.lo), csv_num(rep.r_d.hi), rep.r_d_empty ? "1" : "0",
             csv_num(rep.h_lo_raw), csv_num(rep.bdc_lo)});
    return 0;
}

void sweep_header(CsvWriter& csv, bool with_sim) {
    std::vector<std::string> h = {"mechanism", "units", "n", "lambda_hat", "q", "K",
                                  "x_root", "x_op", "rho", "rho_root", "status", "residual",
                                  "service_mean_slots", "service_second_slots2",
                                  "delay_slots", "delay_ms", "error"};
    if (with_sim) {
        for (const char* c : {"sim_seed", "sim_horizon", "sim_throughput", "sim_throughput_ci",
                              "sim_sojourn_slots", "sim_sojourn_ci", "sim_service_slots",
                              "sim_collision_rate"})
            h.push_back(c);
    }
    csv.row(h);
}

int cmd_sweep(const CommonOpts& o, const SimConfig& cfg, const std::string& var, double from,
              double to, double step, bool simulate, const std::string& gnuplot) {
    SweepSpec spec{var == "lambda" ? "lambda_hat" : var, from, to, step};
    if (spec.variable != "q" && spec.variable != "lambda_hat")
        throw ConfigError("--var must be q or lambda");
    const std::vector<double> grid = spec.grid();
    const bool vary_q = spec.variable == "q";

    std::vector<SweepPoint> pts = vary_q ? sweep_q(cfg.params, cfg.n, cfg.lambda_hat, grid)
                                         : sweep_lambda(cfg.params, cfg.n, cfg.backoff.q, grid);

    std::vector<SimStats> sims(simulate ? pts.size() : 0);
    std::vector<std::string> sim_errs(simulate ? pts.size() : 0);
    if (simulate) {
        detail::parallel_for(pts.size(), [&](std::size_t i) {
            SimConfig sc = cfg;
            if (vary_q)
                sc.backoff.q = grid[i];
            else
                sc.lambda_hat = grid[i];
            sc.seed = cfg.seed + i;   // decorrelate rows, still reproducible
            try {
                sims[i] = run(sc);
            } catch (const std::exception& e) {
                sim_errs[i] = e.what();
            }
        });
    }

    Sink sink(o.out);
    CsvWriter csv(*sink.os);
    sweep_header(csv, simulate);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const double qv = vary_q ? grid[i] : cfg.backoff.q;
        const double lv = vary_q ? cfg.lambda_hat : grid[i];
        std::vector<std::string> row = {to_string(cfg.params.mechanism),
                                        cfg.params.a == 1.0 ? "slots" : "us",
                                        csv_num(cfg.n), csv_num(lv), csv_num(qv), "inf"};
        if (pts[i].eq) {
            const Equilibrium& eq = *pts[i].eq;
            row.insert(row.end(),
                       {csv_num(eq.x), csv_num(eq.x_op), csv_num(eq.rho), csv_num(eq.rho_root),
                        to_string(eq.status), csv_num(eq.residual), csv_num(eq.moments.mean),
                        csv_num(eq.moments.second), csv_num(eq.delay),
                        csv_num(slots_to_ms(eq.delay)), ""});
        } else {
            row.insert(row.end(), {"", "", "", "", "", "", "", "", "", "",
                                   '"' + pts[i].error + '"'});
        }
        if (simulate) {
            if (sim_errs[i].empty()) {
                const SimStats& s = sims[i];
                row.insert(row.end(),
                           {csv_num(s.seed), csv_num(s.horizon), csv_num(s.throughput),
                            csv_num(s.throughput_ci), csv_num(s.mean_sojourn_slots),
                            csv_num(s.mean_sojourn_ci), csv_num(s.mean_service_slots),
                            csv_num(s.collision_rate)});
            } else {
                row.insert(row.end(), {"", "", "", "", "", "", "", ""});
            }
        }
        csv.row(row);
    }

    if (!gnuplot.empty()) {
        if (o.out.empty())
            throw ConfigError("--gnuplot needs --out so the script has a data file to read");
        std::ofstream gp(gnuplot);
        if (!gp) throw ConfigError("cannot open gnuplot script path: " + gnuplot);
        gp << "set datafile separator ','\n"
           << "set key autotitle columnhead\n"
           << "set xlabel '" << (vary_q ? "q" : "lambda_hat") << "'\n"
           << "set ylabel 'mean delay (ms)'\n"
           << "set logscale y\n"
           << "plot '" << o.out << "' using 5:16 with linespoints title 'analytic'"
           << (simulate ? ", '' using 5:($22*0.05) with points title 'simulated'" : "")
           << "\n";
    }
    return 0;
}

int cmd_simulate(const CommonOpts& o, const SimConfig& cfg) {
    const SimStats s = run(cfg);
    Sink sink(o.out);
    CsvWriter csv(*sink.os);
    csv.row({"mechanism", "n", "lambda_hat", "q", "K", "seed", "horizon", "throughput",
             "throughput_ci", "mean_sojourn_slots", "mean_sojourn_ci", "mean_service",
             "collision_rate"});
    csv.row({to_string(s.mechanism), csv_num(s.n), csv_num(s.lambda_hat), csv_num(s.q),
             cutoff_str(s.cutoff), csv_num(s.seed), csv_num(s.horizon), csv_num(s.throughput),
             csv_num(s.throughput_ci), csv_num(s.mean_sojourn_slots),
             csv_num(s.mean_sojourn_ci), csv_num(s.mean_service_slots),
             csv_num(s.collision_rate)});
    return 0;
}

int cmd_compare(const CommonOpts& o, const SimConfig& cfg) {
    const Comparison cmp = measure_vs_analysis(cfg);
    Sink sink(o.out);
    CsvWriter csv(*sink.os);
    csv.row({"mechanism", "units", "n", "lambda_hat", "q", "K", "seed", "horizon", "status",
             "an_throughput", "an_service_slots", "an_delay_slots", "an_delay_ms",
             "sim_throughput", "sim_service_slots", "sim_sojourn_slots",
             "rel_err_throughput", "rel_err_service", "rel_err_sojourn", "analysis_error"});
    std::vector<std::string> row = {to_string(cfg.params.mechanism),
                                    cfg.params.a == 1.0 ? "slots" : "us",
                                    csv_num(cfg.n), csv_num(cfg.lambda_hat),
                                    csv_num(cfg.backoff.q), cutoff_str(cfg.backoff.cutoff),
                                    csv_num(cfg.seed), csv_num(cfg.horizon)};
    if (cmp.analysis) {
        const Equilibrium& eq = *cmp.analysis;
        row.insert(row.end(),
                   {to_string(eq.status), csv_num(cfg.lambda_hat), csv_num(eq.moments.mean),
                    csv_num(eq.delay), csv_num(slots_to_ms(eq.delay)),
                    csv_num(cmp.sim.throughput), csv_num(cmp.sim.mean_service_slots),
                    csv_num(cmp.sim.mean_sojourn_slots), csv_num(cmp.rel_throughput_err),
                    csv_num(cmp.rel_service_err), csv_num(cmp.rel_sojourn_err), ""});
    } else {
        row.insert(row.end(),
                   {"", "", "", "", "", csv_num(cmp.sim.throughput),
                    csv_num(cmp.sim.mean_service_slots), csv_num(cmp.sim.mean_sojourn_slots),
                    "", "", "", '"' + cmp.analysis_error + '"'});
    }
    csv.row(row);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Queueing analysis and mini-slot simulation of DCF nodes under "
                 "probabilistic retransmission backoff"};
    app.set_version_flag("--version", dcfq::kVersion);
    app.require_subcommand(1);

    CommonOpts o;
    double x_min = 0.0, x_max = 8.0;
    int points = 401;
    std::string var = "q";
    double from = 0.05, to = 0.95, step = 0.05;
    bool with_sim = false;
    std::string gnuplot;

    CLI::App* curve = app.add_subcommand("curve", "Tabulate the throughput curve over x");
    add_common(curve, o, false);
    curve->add_option("--x-min", x_min, "Smallest attempt rate");
    curve->add_option("--x-max", x_max, "Largest attempt rate");
    curve->add_option("--points", points, "Grid size");

    CLI::App* regions = app.add_subcommand(
        "regions", "Stable-throughput and bounded-delay ranges of q for one demand");
    add_common(regions, o, false);

    CLI::App* sweep = app.add_subcommand("sweep", "Equilibria over a grid of q or lambda");
    add_common(sweep, o, true);
    sweep->add_option("--var", var, "Swept coordinate: q or lambda")
        ->check(CLI::IsMember({"q", "lambda", "lambda_hat"}));
    sweep->add_option("--from", from, "Grid start");
    sweep->add_option("--to", to, "Grid end (inclusive)");
    sweep->add_option("--step", step, "Grid step");
    sweep->add_flag("--simulate", with_sim, "Also simulate every grid point");
    sweep->add_option("--gnuplot", gnuplot, "Write a gnuplot script next to the CSV");

    CLI::App* simulate = app.add_subcommand("simulate", "One simulation run");
    add_common(simulate, o, true);

    CLI::App* compare =
        app.add_subcommand("compare", "One simulation run against the analytical point");
    add_common(compare, o, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (curve->parsed()) return cmd_curve(o, build_config(curve, o), x_min, x_max, points);
        if (regions->parsed()) return cmd_regions(o, build_config(regions, o));
        if (sweep->parsed())
            return cmd_sweep(o, build_config(sweep, o), var, from, to, step, with_sim, gnuplot);
        if (simulate->parsed()) return cmd_simulate(o, build_config(simulate, o));
        if (compare->parsed()) return cmd_compare(o, build_config(compare, o));
    } catch (const dcfq::NoRootsError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const dcfq::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
