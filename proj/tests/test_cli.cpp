#include <catch_amalgamated.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <random>
#include <sstream>

#include "fdjb/cli.hpp"
#include "fixture_library.hpp"

using namespace fdjb;
namespace fs = std::filesystem;

namespace {

template <class Fn>
std::pair<std::string, std::string> error_of(Fn&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return {e.code(), e.what()};
    }
    return {"", ""};
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream is(fixtures::slurp(p));
    std::string line;
    while (std::getline(is, line)) {
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ls(line);
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (!line.empty() && line.back() == ',') cells.emplace_back();
        rows.push_back(cells);
    }
    return rows;
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("fdjb_test_cli_" + name);
    fs::remove_all(p);
    return p;
}

RunConfig fixture(const std::string& stem) {
    return parse_config(fixtures::slurp(fs::path(FDJB_FIXTURE_DIR) / (stem + ".ini")));
}

}  // namespace

TEST_CASE("CSV number formatting") {
    CHECK(format_csv(0.0) == "0");
    CHECK(format_csv(-0.0) == "0");
    CHECK(format_csv(std::nan("")) == "nan");
    CHECK(format_csv(0.5) == "0.5");
    CHECK(format_csv(-1.25) == "-1.25");
    CHECK(format_csv(1e-4) == "1.00000000e-04");
    CHECK(format_csv(1e-3) == "0.001");
    CHECK(format_csv(123456.789) == "123456.789");
    CHECK(format_csv(1e6) == "1.00000000e+06");
    CHECK(format_csv(1.0 / 3.0) == "0.333333333");
}

TEST_CASE("minimal config fills documented defaults") {
    const auto rc = parse_config("command = jacobian\n[device.a]\ntype = gfl\n");
    CHECK(rc.command == "jacobian");
    REQUIRE(rc.devices.size() == 1);
    CHECK(rc.devices[0].gfl == GflParams{});
    CHECK(rc.devices[0].P_ac0 == 1.0);
    CHECK(rc.grid.n_points == 400);
    CHECK(rc.grid.f_min == 0.01);
    CHECK(rc.grid.f_max == 1000.0);
    CHECK(rc.testbench.breakers == BreakerState{});
    CHECK(rc.scenario.dt == 1e-4);
    CHECK(rc.scenario.window == 0.5);
    CHECK(rc.scenario.threshold == 1.5);
    CHECK(rc.output.decimation == 1e-3);
}

TEST_CASE("config errors") {
    const auto unknown = error_of([] { parse_config("command = stability\n[device.a]\ntype = gfl\n[testbench]\nzz_s_ac = j0.1\n"); });
    CHECK(unknown.first == "config-unknown-key");
    CHECK(unknown.second == "config-unknown-key: testbench.zz_s_ac");
    CHECK(error_of([] { parse_config("[device.a]\ntype = gfl\n"); }).first == "config-no-command");
    CHECK(error_of([] { parse_config("command = jacobian\n[device.a]\ntype = gfl\nK_q = 1\n"); }).first == "config-unknown-key");
    CHECK(error_of([] { parse_config("command = jacobian\ncommand = sweep\n"); }).first == "config-duplicate-key");
    CHECK(error_of([] { parse_config("command = jacobian\n[device.a\n"); }).first == "config-syntax");
    CHECK(error_of([] { parse_config("command = jacobian\n[device.a]\ntype = gfl\nK_d_dc = abc\n"); }).first == "config-bad-value");
    CHECK(error_of([] { parse_config("command = jacobian\n[device.a]\ntype = gfl\nK_d_dc = -1\n"); }).first == "bad-parameter");
    CHECK(error_of([] { parse_config("command = fly\n"); }).first == "config-bad-value");
    CHECK(error_of([] { parse_config("command = simulate\n[device.a]\ntype = gfl\n[scenario]\nevent = 1 jump z 2\n"); }).first ==
          "config-bad-event");
}

TEST_CASE("impedance strings") {
    const auto z = parse_impedance("0.001+j0.15", Side::DC);
    CHECK(z.R == 0.001);
    CHECK(z.L == 0.15);
    CHECK(z.side == Side::DC);
    CHECK(parse_impedance("j0.325", Side::AC).R == 0.0);
    CHECK(parse_impedance("j0.325", Side::AC).L == 0.325);
    CHECK(parse_impedance("0.5", Side::AC).L == 0.0);
    CHECK(parse_impedance(" 1e-3+j2E-1 ", Side::AC).L == 0.2);
    for (const char* bad : {"-0.1+j0.2", "0.1-j0.2", "0.1+0.2", "abc", "0.1+j", "", "j-0.3"}) {
        CHECK(error_of([&] { parse_impedance(bad, Side::AC); }).first == "config-bad-impedance");
    }
    // X is a reactance at omega_b: the branch inductance is X / omega_b.
    const auto branch = detail::dc_branch("b", z.R, z.L, kOmegaBase);
    CHECK(branch.a()(0, 0) == Catch::Approx(-z.R / (z.L / kOmegaBase)));
}

TEST_CASE("every fixture round-trips through serialization") {
    for (const auto& f : fixtures::list()) {
        const auto rc = parse_config(fixtures::slurp(f));
        CHECK(parse_config(serialize_config(rc)) == rc);
    }
}

TEST_CASE("randomized configs round-trip") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int k = 0; k < 50; ++k) {
        RunConfig rc;
        rc.command = "simulate";
        rc.id = "r" + std::to_string(k);
        DeviceSpec d;
        d.name = "dev";
        d.type = u(rng) < 0.5 ? "gfl" : "gfm-vsm";
        d.P_ac0 = u(rng);
        d.Q_ac0 = u(rng) - 0.5;
        d.theta0 = u(rng) / 3.0;
        // only the active type's parameter block is serialized
        if (d.type == "gfl") d.gfl.K_d_dc = 10 * u(rng);
        else d.gfm.L_v = 0.05 + u(rng) / 7.0;
        rc.devices.push_back(d);
        rc.testbench.z_s_ac = {u(rng) / 10, u(rng), Side::AC};
        rc.testbench.z_g_dc = ImpedanceBranch{u(rng) / 10, u(rng), Side::DC};
        rc.testbench.breakers.cb_g_dc = u(rng) < 0.5;
        rc.scenario.t_end = 1 + u(rng);
        rc.scenario.events = {{0.1 * u(rng), SetInput{"dVs_dc", u(rng) / 100}},
                              {0.5, SwapBranch{"z_s_dc", {u(rng), u(rng), Side::DC}}},
                              {0.7, SetBreaker{"cb_g_ac", true}}};
        rc.bands.bands = {{1 + u(rng), 20 + u(rng)}};
        rc.stability.slot = "z_g_ac";
        rc.stability.steps = {{u(rng), u(rng), Side::AC}};
        rc.report_inputs = {"a", "b"};
        CHECK(parse_config(serialize_config(rc)) == rc);
    }
}

TEST_CASE("constant-power GFL fixture has zero DC-power sensitivity at the lowest frequency") {
    const auto out = scratch("jac");
    const auto rr = run(fixture("jacobian_gfl_k0"), out.string());
    CHECK(rr.exit_code == kExitOk);
    const auto rows = read_csv(out / "gfl_jacobian.csv");
    REQUIRE(rows.front() == std::vector<std::string>{"freq_hz", "element", "re", "im", "mag", "phase_deg"});
    const std::string f0 = rows[1][0];
    bool found = false;
    for (const auto& r : rows) {
        if (r[0] == f0 && r[1] == "J_pdc_vdc") {
            CHECK(std::stod(r[4]) < 1e-6);
            found = true;
        }
    }
    CHECK(found);
    const auto bands = read_csv(out / "gfl_band_metrics.csv");
    CHECK(bands[1][0] == "4");
    CHECK(bands[1][1] == "40");
}

TEST_CASE("AC sequence fixture yields three ordered verdict rows") {
    const auto out = scratch("ac");
    const auto rr = run(fixture("stability_ac_integration_lv0075"), out.string());
    CHECK(rr.exit_code == kExitUnstable);
    std::vector<std::string> z;
    for (const auto& r : read_csv(out / "verdicts.csv")) {
        if (r.size() > 5 && r[5] == "eigen") z.push_back(r[4]);
    }
    CHECK(z == std::vector<std::string>{"0+j0.325", "0+j0.425", "0+j0.475"});
}

TEST_CASE("no-event simulation from rest writes an all-zero series") {
    const auto out = scratch("zero");
    const auto rr = run(fixture("simulate_zero"), out.string());
    CHECK(rr.exit_code == kExitOk);
    const auto rows = read_csv(out / "timeseries.csv");
    REQUIRE(rows.size() > 2);
    CHECK(rows[0][0] == "t_s");
    for (std::size_t i = 1; i < rows.size(); ++i)
        for (std::size_t c = 1; c < rows[i].size(); ++c) REQUIRE(rows[i][c] == "0");
}

TEST_CASE("support-test passes for both device types") {
    for (const char* f : {"support_gfm", "support_gfl"}) {
        const auto out = scratch(f);
        const auto rr = run(fixture(f), out.string());
        CHECK(rr.exit_code == kExitOk);
        const auto rows = read_csv(out / "support_summary.csv");
        CHECK(rows[1][3] == "yes");
    }
}

TEST_CASE("bus-G voltages come from the load flow") {
    auto rc = fixture("stability_ac_stabilizing_lv015");
    const auto cfg = build_testbench(rc);
    CHECK_NOTHROW(assemble(cfg));
    rc.devices[1].V_ac0 = 1.01;
    CHECK(error_of([&] { build_testbench(rc); }).first == "config-conflict");
}

TEST_CASE("worker pool keeps order and propagates the first error") {
    setenv("FDJB_NUM_WORKERS", "3", 1);
    CHECK(worker_count() == 3);
    std::vector<int> out(50, -1);
    parallel_for(out.size(), [&](std::size_t i) { out[i] = static_cast<int>(i * i); });
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == static_cast<int>(i * i));
    const auto err = error_of([] {
        parallel_for(10, [](std::size_t i) {
            if (i == 4 || i == 7) throw Error("e" + std::to_string(i), "x");
        });
    });
    CHECK(err.first == "e4");
    setenv("FDJB_NUM_WORKERS", "0", 1);
    CHECK(error_of([] { worker_count(); }).first == "bad-environment");
    unsetenv("FDJB_NUM_WORKERS");
}

TEST_CASE("fixture library is deterministic and fast") {
    const auto t0 = std::chrono::steady_clock::now();
    setenv("FDJB_NUM_WORKERS", "1", 1);
    const auto a = fixtures::run_all(scratch("lib_a"));
    unsetenv("FDJB_NUM_WORKERS");
    const auto b = fixtures::run_all(scratch("lib_b"));
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    CHECK(secs < 60.0);
    CHECK(a.files == b.files);
    CHECK(a.files.size() > 30);
    for (const auto& [stem, code] : a.exit_codes) CHECK(code != kExitError);
    CHECK(a.exit_codes.at("stability_dc_integration_k0") == kExitUnstable);
    CHECK(a.exit_codes.at("stability_dc_integration_k10") == kExitOk);
    CHECK(a.files.count("zz_report/report_verdicts.csv") == 1);
}

TEST_CASE("report collates verdicts and band metrics") {
    const auto root = scratch("report");
    run(fixture("stability_dc_integration_k5"), (root / "stability_dc_integration_k5").string());
    run(fixture("jacobian_gfm_lv0075"), (root / "jacobian_gfm_lv0075").string());
    RunConfig rc;
    rc.command = "report";
    rc.report_inputs = {"stability_dc_integration_k5", "jacobian_gfm_lv0075"};
    const auto rr = run(rc, (root / "rep").string());
    CHECK(rr.exit_code == kExitOk);
    const auto v = read_csv(root / "rep" / "report_verdicts.csv");
    CHECK(v.size() == 1 + 6);
    CHECK(v[1][0] == "stability_dc_integration_k5");
    const auto b = read_csv(root / "rep" / "report_band_metrics.csv");
    CHECK(b[1][1] == "gfm");
    rc.report_inputs = {"missing"};
    CHECK(error_of([&] { run(rc, (root / "rep2").string()); }).first == "io-error");
}
