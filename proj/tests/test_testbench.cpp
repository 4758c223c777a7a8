#include <catch_amalgamated.hpp>

#include <algorithm>
#include <random>
#include <set>

#include "fdjb/jacobian.hpp"
#include "oracles.hpp"
#include "scenarios.hpp"

using namespace fdjb;
using Catch::Approx;

namespace {

template <class Fn>
std::string error_code(Fn&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return "";
}

FrequencyResponse scalar_response(double k, double a, const FrequencyGrid& g) {
    const StateSpaceModel m(Matrix::Constant(1, 1, -a), Matrix::Ones(1, 1), Matrix::Constant(1, 1, k), Matrix::Zero(1, 1),
                            {"u"}, {"y"});
    return freq_response(m, g);
}

FrequencyResponse ones(const FrequencyGrid& g, Eigen::Index n) {
    FrequencyResponse r{g, {}, {}, {}};
    for (std::size_t k = 0; k < g.size(); ++k) r.samples.push_back(CMatrix::Identity(n, n));
    return r;
}

std::vector<Complex> sorted(std::vector<Complex> v) {
    std::sort(v.begin(), v.end(), [](Complex a, Complex b) {
        return a.real() != b.real() ? a.real() < b.real() : a.imag() < b.imag();
    });
    return v;
}

ConverterModel default_gfl(double k = 0.0) {
    GflParams p;
    p.K_d_dc = k;
    return build_gfl(p, scen::nominal());
}

}  // namespace

TEST_CASE("support mode reproduces the device Jacobian for every device type") {
    const auto grid = default_grid();
    std::vector<ConverterModel> devices{build_gfm_vsm({}, scen::nominal()), default_gfl(0.0), default_gfl(10.0),
                                        build_gfl({}, solve_operating_point(0.6, 0.2, 1.0, 0.4, 1.0))};
    for (const auto& m : devices) {
        const auto nm = assemble(scen::single(m));
        const auto tf = select(nm.realization, source_channels(), {"dut.dP_ac", "dut.dQ_ac", "dut.dP_dc"});
        const auto fr = freq_response(tf, grid);
        const auto jr = sweep_jacobian(m, grid);
        double worst = 0.0;
        for (std::size_t k = 0; k < grid.size(); ++k) {
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c)
                    worst = std::max(worst, std::abs(fr.samples[k](r, c) - jr.samples[k].J(r, c)) /
                                                std::max(std::abs(jr.samples[k].J(r, c)), 1e-6));
        }
        CHECK(worst <= 1e-9);
    }
}

TEST_CASE("static DC divider halves the source step") {
    const auto dev = scen::dc_scalar_device(0.0, 0.0);
    // Replace the dynamic channel by a unit static conductance (outward -1).
    const ConverterModel g(StateSpaceModel::static_gain((Matrix(3, 3) << 0, 0, 0, 0, 0, 0, 0, 0, -1).finished(),
                                                        device_input_labels(), device_output_labels()),
                           dev.op());
    const auto nm = assemble(scen::single(g, {0, 0, Side::AC}, {1.0, 0.0, Side::DC}));
    const auto tf = select(nm.realization, {"dVs_dc"}, {"dc.T.v"});
    for (const auto& s : freq_response(tf, FrequencyGrid::log_hz(0.01, 1000, 20)).samples) {
        CHECK(std::abs(s(0, 0) - 0.5) < 1e-12);
    }
}

TEST_CASE("two identical devices on a merged bus double the terminal current") {
    const auto m = default_gfl(5.0);
    TestbenchConfig one = scen::single(m);
    TestbenchConfig two = one;
    two.breakers.cb_g_ac = true;
    two.z_g_ac = ImpedanceBranch{0, 0, Side::AC};
    two.devices.push_back({"twin", m, Bus::G, Bus::T});
    const Labels out{"ac.src.i_d", "ac.src.i_q", "dc.src.i"};
    const auto grid = FrequencyGrid::log_hz(0.01, 1000, 40);
    const auto f1 = freq_response(select(assemble(one).realization, source_channels(), out), grid);
    const auto f2 = freq_response(select(assemble(two).realization, source_channels(), out), grid);
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const CMatrix ac1 = f1.samples[k].topRows(2), ac2 = f2.samples[k].topRows(2);
        CHECK((ac2 - 2.0 * ac1).norm() <= 1e-9 * ac1.norm());
    }
}

TEST_CASE("passive RL device against a passive RL grid is stable") {
    const auto nm = assemble(scen::single(scen::rl_device(0.1, 0.3), {0.02, 0.2, Side::AC}, {0, 0, Side::DC}));
    const auto v = eig_stability(nm);
    CHECK(v.stable == Verdict::Stable);
    CHECK(v.margin < 0.0);
    CHECK(v.method == "eigen");
    CHECK(v.dominant.size() == 6);
    for (std::size_t i = 1; i < v.dominant.size(); ++i) CHECK(v.dominant[i - 1].real() >= v.dominant[i].real());
}

TEST_CASE("negative scalar admittance against a resistive grid puts a pole at +1") {
    // Passive-sign admittance y = -2/(s+1) is outward +2/(s+1).
    const auto dev = scen::dc_scalar_device(2.0, 1.0);
    auto cfg = scen::single(dev, {0, 0, Side::AC}, {1.0, 0.0, Side::DC});
    const auto nm = assemble(cfg);
    const auto v = eig_stability(nm);
    CHECK(v.stable == Verdict::Unstable);
    CHECK(v.margin == Approx(1.0));
    const auto ny = device_nyquist(cfg, "dut", FrequencyGrid::log_hz(1e-4, 1e4, 2000));
    CHECK(ny.encirclements == 1);
    CHECK(ny.stable == Verdict::Unstable);
}

TEST_CASE("marginal band on the spectral abscissa") {
    const StateSpaceModel m(Matrix::Constant(1, 1, 5e-4), Matrix::Zero(1, 0), Matrix::Zero(0, 1), Matrix::Zero(0, 0), {}, {});
    CHECK(eig_stability({m, {}}).stable == Verdict::Marginal);
    const StateSpaceModel s(Matrix::Constant(1, 1, -2e-3), Matrix::Zero(1, 0), Matrix::Zero(0, 1), Matrix::Zero(0, 0), {}, {});
    CHECK(eig_stability({s, {}}).stable == Verdict::Stable);
}

TEST_CASE("scalar Nyquist examples") {
    const auto g = FrequencyGrid::log_hz(1e-4, 1e4, 4000);
    const auto stable = nyquist_stability(scalar_response(0.5, 1.0, g), ones(g, 1));
    CHECK(stable.encirclements == 0);
    CHECK(stable.stable == Verdict::Stable);
    CHECK(std::isnan(stable.margin));
    const auto unstable = nyquist_stability(scalar_response(-2.0, 1.0, g), ones(g, 1));
    CHECK(unstable.encirclements == 1);
    CHECK(unstable.stable == Verdict::Unstable);

    // Block-diagonal union of both channels.
    auto a = scalar_response(0.5, 1.0, g), b = scalar_response(-2.0, 1.0, g);
    FrequencyResponse blk{g, {}, {}, {}};
    for (std::size_t k = 0; k < g.size(); ++k) {
        CMatrix s = CMatrix::Zero(2, 2);
        s(0, 0) = a.samples[k](0, 0);
        s(1, 1) = b.samples[k](0, 0);
        blk.samples.push_back(s);
    }
    const auto both = nyquist_stability(blk, ones(g, 2));
    CHECK(both.stable == Verdict::Unstable);
    CHECK(both.encirclements == 1);
}

TEST_CASE("Nyquist guards") {
    const auto g1 = FrequencyGrid::log_hz(1e-2, 1e2, 50), g2 = FrequencyGrid::log_hz(1e-2, 1e2, 51);
    CHECK(error_code([&] { nyquist_stability(ones(g1, 1), ones(g2, 1)); }) == "grid-mismatch");
    // L(0) = -1 exactly: the locus touches the critical point.
    const auto touch = nyquist_stability(scalar_response(-1.0, 1.0, FrequencyGrid({1e-9, 1.0})), ones(FrequencyGrid({1e-9, 1.0}), 1));
    CHECK(touch.stable == Verdict::Marginal);
    CHECK(touch.note == "critical-proximity");
}

TEST_CASE("assembly errors") {
    const auto m = default_gfl(5.0);
    auto cfg = scen::single(m);
    cfg.breakers.cb_s_ac = false;
    CHECK(error_code([&] { assemble(cfg); }) == "open-circuit-terminal");
    CHECK(error_code([] { assemble(TestbenchConfig{}); }) == "bad-testbench");

    auto mismatch = scen::single(m);
    mismatch.devices.push_back({"other", build_gfl({}, solve_operating_point(1.0, 0.0, 1.02, 0.0, 1.0)), Bus::T, Bus::T});
    CHECK(error_code([&] { assemble(mismatch); }) == "inconsistent-operating-point");

    // Inductive DC branch into a node without capacitance.
    const auto bare = scen::dc_scalar_device(1.0, 1.0);
    CHECK(error_code([&] { assemble(scen::single(bare, {0, 0, Side::AC}, {0.1, 0.2, Side::DC})); }) ==
          "ill-posed-interconnection");

    auto neg = scen::single(m, {-0.1, 0.2, Side::AC});
    CHECK(error_code([&] { assemble(neg); }) == "bad-branch");
}

TEST_CASE("network model exposes the documented channels") {
    const auto nm = assemble(scen::single(default_gfl(5.0), {0.01, 0.2, Side::AC}, {0.01, 0.3, Side::DC}));
    const auto& r = nm.realization;
    for (const auto& l : source_channels()) CHECK_NOTHROW(r.input_index(l));
    for (const char* s : {"dut.dP_ac", "dut.dQ_ac", "dut.dP_dc", "dut.dv_dc", "dut.dv_d", "dut.dv_q"})
        CHECK_NOTHROW(r.output_index(s));
    const std::set<std::string> st(r.states().begin(), r.states().end());
    for (const char* s : {"ac.src.i_d", "ac.src.i_q", "dc.src.i", "ac.T.v_d", "dc.T.v", "dut.theta_pll"})
        CHECK(st.count(s) == 1);
    // dq branch (2) + AC node (2) + DC branch (1) + DC node (1) + device (6).
    CHECK(r.n_states() == 12);
}

TEST_CASE("opening CB_g removes exactly the grid path") {
    const auto m = default_gfl(5.0);
    const Complex v_g = grid_bus_voltage(Complex(1.0, 0.0), Complex(1.0, 0.0), Complex(0.0, 0.01), 0.05);
    const auto sub = build_gfl({}, solve_operating_point(1.0, 0.0, std::abs(v_g), std::arg(v_g), 1.0));
    TestbenchConfig closed = scen::single(m, {0.01, 0.2, Side::AC}, {0.01, 0.3, Side::DC});
    closed.z_g_ac = ImpedanceBranch{0.0, 0.01, Side::AC};
    closed.breakers.cb_g_ac = true;
    closed.devices.push_back({"sub", sub, Bus::G, Bus::T});
    TestbenchConfig opened = closed;
    opened.breakers.cb_g_ac = false;
    const TestbenchConfig never = scen::single(m, {0.01, 0.2, Side::AC}, {0.01, 0.3, Side::DC});

    const auto nc = assemble(closed), no = assemble(opened), nn = assemble(never);
    std::set<std::string> extra;
    for (const auto& s : nc.realization.states()) {
        if (std::find(no.realization.states().begin(), no.realization.states().end(), s) == no.realization.states().end())
            extra.insert(s);
    }
    for (const auto& s : extra) {
        const bool grid_path = s.rfind("ac.g.", 0) == 0 || s.rfind("ac.G.", 0) == 0 || s.rfind("sub.", 0) == 0;
        CHECK(grid_path);
    }
    CHECK(extra.count("ac.g.i_d") == 1);
    const auto a = sorted(eigenvalues(no.realization.a()).values), b = sorted(eigenvalues(nn.realization.a()).values);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-8);
    CHECK(eig_stability(nc).stable == Verdict::Stable);
}

TEST_CASE("bus G operating point must match the Z_g drop") {
    const auto m = default_gfl(5.0);
    TestbenchConfig cfg = scen::single(m);
    cfg.z_g_ac = ImpedanceBranch{0.0, 0.05, Side::AC};
    cfg.breakers.cb_g_ac = true;
    cfg.devices.push_back({"sub", build_gfl({}, scen::nominal()), Bus::G, Bus::T});
    CHECK(error_code([&] { assemble(cfg); }) == "inconsistent-operating-point");

    const double vg = grid_bus_dc_voltage(1.0, 1.0, 0.02);
    CHECK(vg == Approx(1.0 - 0.02 / vg).margin(1e-14));
    CHECK(vg * vg - vg + 0.02 == Approx(0.0).margin(1e-12));
}

TEST_CASE("growing DC impedance sequence never improves the constant-power margin") {
    const auto m = default_gfl(0.0);
    double prev = -std::numeric_limits<double>::infinity();
    for (auto z : {Complex(0.001, 0.15), Complex(0.0035, 0.525), Complex(0.006, 0.9)}) {
        const double margin = eig_stability(assemble(scen::single(m, {0, 0, Side::AC}, {z.real(), z.imag(), Side::DC}))).margin;
        CHECK(margin >= prev - 1e-9);
        prev = margin;
    }
}

TEST_CASE("eigen and Nyquist verdicts agree on random open-loop-stable interconnections") {
    std::mt19937_64 rng(314);
    const auto grid = FrequencyGrid::log_hz(1e-3, 1e4, 4000);
    int checked = 0, unstable = 0;
    while (checked < 20) {
        const auto cfg = scen::random_interconnection(rng);
        if (!cfg) continue;
        if (!scen::open_loop_stable(network_impedance(*cfg, "dut"))) continue;
        const auto ev = eig_stability(assemble(*cfg));
        if (ev.stable == Verdict::Marginal) continue;
        const auto nv = device_nyquist(*cfg, "dut", grid);
        CHECK(nv.stable == ev.stable);
        unstable += ev.stable == Verdict::Unstable;
        ++checked;
    }
    CHECK(unstable > 0);
}

TEST_CASE("network impedance of a stiff source is zero") {
    const auto z = network_impedance(scen::single(default_gfl(5.0)), "dut");
    for (const auto& s : freq_response(z, FrequencyGrid::log_hz(0.1, 100, 10)).samples) CHECK(s.norm() < 1e-12);
    CHECK(error_code([] { network_impedance(scen::single(default_gfl(5.0)), "ghost"); }) == "unknown-signal");
}
