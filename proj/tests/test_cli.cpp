#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

namespace {

struct CliResult {
    int exit_code = -1;
    std::string out;
};

CliResult run_cli(const std::string& args) {
    const std::string cmd = std::string(DCFQ_CLI_PATH) + " " + args + " 2>/dev/null";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    CliResult r;
    char buf[4096];
    while (std::size_t got = std::fread(buf, 1, sizeof buf, pipe)) r.out.append(buf, got);
    const int status = pclose(pipe);
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> lines;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) lines.push_back(line);
    return lines;
}

std::vector<std::string> fields_of(const std::string& line) {
    std::vector<std::string> fields;
    std::istringstream in(line);
    std::string f;
    while (std::getline(in, f, ',')) fields.push_back(f);
    return fields;
}

std::size_t column(const std::vector<std::string>& header, const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return i;
    FAIL("missing column " << name);
    return 0;
}

} // namespace

TEST_CASE("version and help") {
    const CliResult v = run_cli("--version");
    CHECK(v.exit_code == 0);
    CHECK(v.out.find("1.0.0") != std::string::npos);

    const CliResult h = run_cli("--help");
    CHECK(h.exit_code == 0);
    for (const char* sub : {"curve", "regions", "sweep", "simulate", "compare"})
        CHECK(h.out.find(sub) != std::string::npos);
}

TEST_CASE("bad flags exit with a usage error") {
    CHECK(run_cli("regions --no-such-flag").exit_code == 2);
    CHECK(run_cli("simulate --q 1.5 --horizon 2000").exit_code == 2);
}

TEST_CASE("curve emits a unimodal throughput profile") {
    const CliResult r = run_cli("curve --x-min 0.05 --x-max 3.0 --points 40");
    REQUIRE(r.exit_code == 0);
    const auto rows = lines_of(r.out);
    REQUIRE(rows.size() == 41);
    const auto header = fields_of(rows[0]);
    const std::size_t lam = column(header, "lambda_out");

    int direction_changes = 0;
    double prev = -1.0;
    bool rising = true;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const double v = std::stod(fields_of(rows[i])[lam]);
        if (i >= 2) {
            const bool up = v > prev;
            if (rising && !up) { rising = false; ++direction_changes; }
            else if (!rising && up) ++direction_changes;
        }
        prev = v;
    }
    CHECK(direction_changes == 1);
}

TEST_CASE("regions reports the reference operating intervals") {
    const CliResult r = run_cli("regions --mechanism basic -n 10 --lambda 0.3");
    REQUIRE(r.exit_code == 0);
    const auto rows = lines_of(r.out);
    REQUIRE(rows.size() == 2);
    const auto header = fields_of(rows[0]);
    const auto vals = fields_of(rows[1]);

    auto get = [&](const std::string& name) { return std::stod(vals[column(header, name)]); };
    CHECK(get("x_S") == Catch::Approx(0.0024402963186504972).epsilon(1e-10));
    CHECK(get("x_L") == Catch::Approx(2.0676330466685258).epsilon(1e-10));
    CHECK(get("rt_lo") == Catch::Approx(0.049369233497443085).epsilon(1e-10));
    CHECK(get("rt_hi") == Catch::Approx(0.87351518868948044).epsilon(1e-10));
    CHECK(get("rd_lo") == get("rt_lo"));
    CHECK(vals[column(header, "rd_empty")] == "0");
}

TEST_CASE("infeasible demand exits with the no-roots code") {
    CHECK(run_cli("regions --mechanism basic -n 10 --lambda 0.9").exit_code == 3);
}

TEST_CASE("sweep walks the requested grid in order") {
    const CliResult r = run_cli("sweep --var q --from 0.1 --to 0.5 --step 0.1 -n 10 --lambda 0.3");
    REQUIRE(r.exit_code == 0);
    const auto rows = lines_of(r.out);
    REQUIRE(rows.size() == 6);
    const auto header = fields_of(rows[0]);
    const std::size_t qc = column(header, "q");
    const std::size_t sc = column(header, "status");
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto vals = fields_of(rows[i]);
        CHECK(std::stod(vals[qc]) == Catch::Approx(0.1 * double(i)).margin(1e-12));
        CHECK(vals[sc] == "stable");
    }
}

TEST_CASE("simulate emits the documented columns deterministically") {
    const std::string args =
        "simulate --mechanism basic -n 10 --lambda 0.3 --q 0.2 --K 40 "
        "--horizon 50000 --seed 9";
    const CliResult a = run_cli(args);
    REQUIRE(a.exit_code == 0);
    const auto rows = lines_of(a.out);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0] ==
          "mechanism,n,lambda_hat,q,K,seed,horizon,throughput,throughput_ci,"
          "mean_sojourn_slots,mean_sojourn_ci,mean_service,collision_rate");

    const CliResult b = run_cli(args);
    CHECK(a.out == b.out);
}

TEST_CASE("scenario files drive the run and flags override them") {
    const std::string path = "/tmp/dcfq_cli_scenario.json";
    {
        std::ofstream f(path);
        f << R"({"mechanism":"basic","n":10,"lambda_hat":0.3,"q":0.2,"K":40,)"
          << R"("horizon":50000,"seed":9})";
    }
    const CliResult from_file = run_cli("simulate --scenario " + path);
    REQUIRE(from_file.exit_code == 0);
    const CliResult from_flags = run_cli(
        "simulate --mechanism basic -n 10 --lambda 0.3 --q 0.2 --K 40 "
        "--horizon 50000 --seed 9");
    CHECK(from_file.out == from_flags.out);

    const CliResult overridden = run_cli("simulate --scenario " + path + " --seed 10");
    REQUIRE(overridden.exit_code == 0);
    CHECK(overridden.out != from_file.out);
    std::remove(path.c_str());
}
