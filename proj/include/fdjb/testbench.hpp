#pragma once

// Benchmark test system: AC and DC Thevenin sources behind Z_s, an optional
// grid branch Z_g to a second bus G, breakers, and attached devices.
//
// Bus T per side is one of
//   stiff      Z_s = 0, v_T follows the source
//   algebraic  L = 0, no node capacitance: v_T = v_s + R * i_injected
//   capacitive node capacitance > 0, with an RL (or purely resistive) branch
// and bus G is built the same way with T as its reference. AC nodes carry a
// shunt susceptance; a DC node's capacitance is the sum of the C_dc of the
// devices attached to it.

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Eigenvalues>

#include "fdjb/converter.hpp"
#include "fdjb/error.hpp"
#include "fdjb/jacobian.hpp"
#include "fdjb/lti.hpp"

namespace fdjb {

enum class Side { AC, DC };
enum class Bus { T, G };

/// Series R + jX with X the reactance at omega_b (L = X / omega_b).
struct ImpedanceBranch {
    double R = 0.0;
    double L = 0.0;
    Side side = Side::AC;

    [[nodiscard]] bool is_zero() const { return R == 0.0 && L == 0.0; }
    [[nodiscard]] Complex z() const { return {R, L}; }
    bool operator==(const ImpedanceBranch&) const = default;
};

struct BreakerState {
    bool cb_s_ac = true;
    bool cb_g_ac = false;
    bool cb_s_dc = true;
    bool cb_g_dc = false;
    bool operator==(const BreakerState&) const = default;
};

struct DeviceAttachment {
    std::string name;
    ConverterModel model;
    Bus ac_bus = Bus::T;
    Bus dc_bus = Bus::T;
};

inline const Labels& source_channels() {
    static const Labels l{"dVs_ac", "dthetas_ac", "dVs_dc"};
    return l;
}

struct TestbenchConfig {
    BreakerState breakers;
    ImpedanceBranch z_s_ac{0.0, 0.0, Side::AC};
    ImpedanceBranch z_s_dc{0.0, 0.0, Side::DC};
    std::optional<ImpedanceBranch> z_g_ac;
    std::optional<ImpedanceBranch> z_g_dc;
    /// Shunt susceptance (p.u.) at AC bus T and at AC bus G.
    double b_bus_ac_t = 0.05;
    double b_bus_ac_g = 0.05;
    double omega_b = kOmegaBase;
    std::vector<DeviceAttachment> devices;
};

struct NetworkModel {
    StateSpaceModel realization;
    /// Devices actually connected, in config order.
    std::vector<std::string> devices;
};

enum class Verdict { Stable, Unstable, Marginal };

inline const char* to_string(Verdict v) {
    switch (v) {
        case Verdict::Stable: return "stable";
        case Verdict::Unstable: return "unstable";
        case Verdict::Marginal: return "marginal";
    }
    return "?";
}

struct StabilityVerdict {
    std::string method;
    Verdict stable = Verdict::Marginal;
    std::vector<Complex> dominant;
    int encirclements = 0;
    /// Spectral abscissa (eigen); NaN for nyquist.
    double margin = std::numeric_limits<double>::quiet_NaN();
    /// Smallest eigenlocus distance to -1 (nyquist).
    double critical_distance = std::numeric_limits<double>::quiet_NaN();
    std::string note;
};

inline constexpr double kMarginalBand = 1e-3;

namespace detail {

struct Wiring {
    std::vector<StateSpaceModel> blocks;
    std::vector<Connection> conns;
    Labels ext_in;
    Labels ext_out;

    void connect(const std::string& from, const std::string& to, double g = 1.0) {
        conns.push_back({from, to, g});
    }
};

inline Labels suffixed(const std::string& base, std::initializer_list<const char*> sfx) {
    Labels out;
    for (const char* s : sfx) out.push_back(base + s);
    return out;
}

/// Injection-driven capacitive AC node, dq frame.
inline StateSpaceModel ac_cap_node(const std::string& n, double b, double wb) {
    Matrix a(2, 2), bm(2, 2);
    a << 0.0, wb, -wb, 0.0;
    bm = Matrix::Identity(2, 2) * (wb / b);
    const Labels v = suffixed(n, {".v_d", ".v_q"});
    return StateSpaceModel(a, bm, Matrix::Identity(2, 2), Matrix::Zero(2, 2),
                           suffixed(n, {".i_d", ".i_q"}), v, v);
}

inline StateSpaceModel dc_cap_node(const std::string& n, double c) {
    Matrix a = Matrix::Zero(1, 1), b(1, 1);
    b(0, 0) = 1.0 / c;
    return StateSpaceModel(a, b, Matrix::Identity(1, 1), Matrix::Zero(1, 1), {n + ".i"},
                           {n + ".v"}, {n + ".v"});
}

/// v = v_ref + R * inj; link current (reference -> node) = -inj.
inline StateSpaceModel ac_algebraic_node(const std::string& n, const std::string& link, double r) {
    Matrix d(4, 4);
    d << r, 0, 1, 0,  //
        0, r, 0, 1,   //
        -1, 0, 0, 0,  //
        0, -1, 0, 0;
    Labels in = suffixed(n, {".i_d", ".i_q", ".vr_d", ".vr_q"});
    Labels out = suffixed(n, {".v_d", ".v_q"});
    out.push_back(link + ".i_d");
    out.push_back(link + ".i_q");
    return StateSpaceModel::static_gain(d, in, out);
}

inline StateSpaceModel dc_algebraic_node(const std::string& n, const std::string& link, double r) {
    Matrix d(2, 2);
    d << r, 1, -1, 0;
    return StateSpaceModel::static_gain(d, {n + ".i", n + ".vr"}, {n + ".v", link + ".i"});
}

/// Branch current a -> b. X > 0 gives a dq RL state pair; X = 0 is static.
inline StateSpaceModel ac_branch(const std::string& br, double r, double x, double wb) {
    const Labels in = suffixed(br, {".va_d", ".va_q", ".vb_d", ".vb_q"});
    const Labels out = suffixed(br, {".i_d", ".i_q"});
    if (x == 0.0) {
        Matrix d(2, 4);
        d << 1, 0, -1, 0, 0, 1, 0, -1;
        return StateSpaceModel::static_gain(d / r, in, out);
    }
    const double k = wb / x;
    Matrix a(2, 2), b(2, 4);
    a << -k * r, wb, -wb, -k * r;
    b << k, 0, -k, 0, 0, k, 0, -k;
    return StateSpaceModel(a, b, Matrix::Identity(2, 2), Matrix::Zero(2, 4), in, out, out);
}

inline StateSpaceModel dc_branch(const std::string& br, double r, double x, double wb) {
    const Labels in{br + ".va", br + ".vb"};
    const Labels out{br + ".i"};
    if (x == 0.0) {
        Matrix d(1, 2);
        d << 1.0 / r, -1.0 / r;
        return StateSpaceModel::static_gain(d, in, out);
    }
    const double l = x / wb;
    Matrix a(1, 1), b(1, 2);
    a << -r / l;
    b << 1.0 / l, -1.0 / l;
    return StateSpaceModel(a, b, Matrix::Identity(1, 1), Matrix::Zero(1, 2), in, out, out);
}

/// Linearized terminal power meter of one device.
inline StateSpaceModel meter(const std::string& dev, const OperatingPoint& op) {
    // inputs: v_d v_q v_dc i_d i_q i_dc
    Matrix d = Matrix::Zero(6, 6);
    d.row(0) << op.i_d0, op.i_q0, 0, op.v_d0, op.v_q0, 0;
    d.row(1) << -op.i_q0, op.i_d0, 0, op.v_q0, -op.v_d0, 0;
    d.row(2) << 0, 0, op.i_dc0, 0, 0, op.v_dc0;
    for (int k = 0; k < 3; ++k) d(3 + k, k) = 1.0;
    const std::string m = dev + ".m";
    return StateSpaceModel::static_gain(
        d, suffixed(m, {".v_d", ".v_q", ".v_dc", ".i_d", ".i_q", ".i_dc"}),
        suffixed(dev, {".dP_ac", ".dQ_ac", ".dP_dc", ".dv_d", ".dv_q", ".dv_dc"}));
}

inline ConverterModel zero_device(const ConverterModel& like) {
    StateSpaceModel ss(Matrix(0, 0), Matrix(0, 3), Matrix(3, 0), Matrix::Zero(3, 3),
                       device_input_labels(), device_output_labels());
    return ConverterModel(std::move(ss), like.op(), like.c_dc(), "zero");
}

inline void check_branch(const ImpedanceBranch& z, Side side, const char* slot) {
    if (!(z.R >= 0.0) || !(z.L >= 0.0) || !std::isfinite(z.R) || !std::isfinite(z.L)) {
        throw Error("bad-branch", std::string(slot) + ": R and X must be finite and >= 0");
    }
    if (z.side != side) throw Error("bad-branch", std::string(slot) + ": wrong side");
}

enum class NodeKind { Stiff, Algebraic, Capacitive };

inline NodeKind node_kind(const ImpedanceBranch& z, double cap, const std::string& where) {
    if (z.is_zero()) return NodeKind::Stiff;
    if (cap > 0.0) return NodeKind::Capacitive;
    if (z.L == 0.0) return NodeKind::Algebraic;
    throw Error("ill-posed-interconnection",
                where + ": inductive branch into a node without capacitance");
}

struct SideLayout {
    bool g_active = false;
    std::vector<std::size_t> on_t;
    std::vector<std::size_t> on_g;
};

/// Builds the network. With `probe`, that device is replaced by a zero
/// admittance (keeping its C_dc) and current-injection inputs
/// probe.i_d/i_q/i_dc are added at its buses.
inline NetworkModel assemble_impl(const TestbenchConfig& cfg, const std::string& probe) {
    if (cfg.devices.empty()) throw Error("bad-testbench", "no devices attached");
    check_branch(cfg.z_s_ac, Side::AC, "z_s_ac");
    check_branch(cfg.z_s_dc, Side::DC, "z_s_dc");
    if (cfg.z_g_ac) check_branch(*cfg.z_g_ac, Side::AC, "z_g_ac");
    if (cfg.z_g_dc) check_branch(*cfg.z_g_dc, Side::DC, "z_g_dc");
    if (cfg.b_bus_ac_t < 0.0 || cfg.b_bus_ac_g < 0.0) {
        throw Error("bad-testbench", "bus susceptance must be >= 0");
    }
    {
        Labels names;
        for (const auto& d : cfg.devices) {
            if (d.name.empty() || d.name.find('.') != std::string::npos) {
                throw Error("bad-testbench", "device name '" + d.name + "' must be non-empty without '.'");
            }
            names.push_back(d.name);
        }
        require_unique(names, "device");
    }
    const double wb = cfg.omega_b;

    // Which devices are connected; G merged into T when Z_g = 0.
    const auto g_state = [&](const std::optional<ImpedanceBranch>& zg, bool closed,
                             const char* side) -> int {
        // 0: open (G devices excluded), 1: merged into T, 2: separate bus
        if (!closed) return 0;
        bool any = false;
        for (const auto& d : cfg.devices) {
            any |= (side[0] == 'a' ? d.ac_bus : d.dc_bus) == Bus::G;
        }
        if (!any) return 2;
        if (!zg) throw Error("bad-testbench", std::string(side) + " device on bus G but no z_g declared");
        return zg->is_zero() ? 1 : 2;
    };
    const int g_ac = g_state(cfg.z_g_ac, cfg.breakers.cb_g_ac, "ac");
    const int g_dc = g_state(cfg.z_g_dc, cfg.breakers.cb_g_dc, "dc");

    std::vector<std::size_t> included;
    for (std::size_t k = 0; k < cfg.devices.size(); ++k) {
        const auto& d = cfg.devices[k];
        if (d.ac_bus == Bus::G && g_ac == 0) continue;
        if (d.dc_bus == Bus::G && g_dc == 0) continue;
        included.push_back(k);
    }
    if (!probe.empty()) {
        const bool found = std::any_of(included.begin(), included.end(),
                                       [&](std::size_t k) { return cfg.devices[k].name == probe; });
        if (!found) throw Error("unknown-signal", "probe device '" + probe + "' is not connected");
    }
    SideLayout ac, dc;
    for (std::size_t k : included) {
        const auto& d = cfg.devices[k];
        ((d.ac_bus == Bus::G && g_ac == 2) ? ac.on_g : ac.on_t).push_back(k);
        ((d.dc_bus == Bus::G && g_dc == 2) ? dc.on_g : dc.on_t).push_back(k);
    }
    ac.g_active = !ac.on_g.empty();
    dc.g_active = !dc.on_g.empty();
    if (included.empty()) throw Error("open-circuit-terminal", "no device is connected");
    if (!cfg.breakers.cb_s_ac) throw Error("open-circuit-terminal", "AC source breaker open");
    if (!cfg.breakers.cb_s_dc) throw Error("open-circuit-terminal", "DC source breaker open");
    if (ac.on_t.empty()) throw Error("bad-testbench", "no device on AC bus T");
    if (dc.on_t.empty()) throw Error("bad-testbench", "no device on DC bus T");

    const auto dev = [&](std::size_t k) -> const ConverterModel& { return cfg.devices[k].model; };
    constexpr double tol = 1e-6;

    // Steady state: shared bus voltages, branch currents, source voltages.
    const Complex v_t = dev(ac.on_t.front()).op().v();
    const double vdc_t = dev(dc.on_t.front()).op().v_dc0;
    for (std::size_t k : ac.on_t) {
        if (std::abs(dev(k).op().v() - v_t) > tol) {
            throw Error("inconsistent-operating-point", "devices on AC bus T disagree on voltage");
        }
    }
    for (std::size_t k : dc.on_t) {
        if (std::abs(dev(k).op().v_dc0 - vdc_t) > tol) {
            throw Error("inconsistent-operating-point", "devices on DC bus T disagree on voltage");
        }
    }
    const double b_t = cfg.z_s_ac.is_zero() ? 0.0 : cfg.b_bus_ac_t;
    Complex i_g_ac(0.0, 0.0);
    double i_g_dc = 0.0;
    double c_dc_g = 0.0;
    if (ac.g_active) {
        const Complex v_g = dev(ac.on_g.front()).op().v();
        Complex sum(0.0, 0.0);
        for (std::size_t k : ac.on_g) {
            if (std::abs(dev(k).op().v() - v_g) > tol) {
                throw Error("inconsistent-operating-point", "devices on AC bus G disagree on voltage");
            }
            sum += dev(k).op().i();
        }
        i_g_ac = Complex(0.0, cfg.b_bus_ac_g) * v_g - sum;
        if (std::abs(v_t - cfg.z_g_ac->z() * i_g_ac - v_g) > tol) {
            throw Error("inconsistent-operating-point", "AC bus G voltage inconsistent with Z_g drop");
        }
    }
    if (dc.g_active) {
        const double v_g = dev(dc.on_g.front()).op().v_dc0;
        double sum = 0.0;
        for (std::size_t k : dc.on_g) {
            if (std::abs(dev(k).op().v_dc0 - v_g) > tol) {
                throw Error("inconsistent-operating-point", "devices on DC bus G disagree on voltage");
            }
            sum += dev(k).op().i_dc0;
            c_dc_g += dev(k).c_dc();
        }
        i_g_dc = -sum;
        if (std::abs(vdc_t - cfg.z_g_dc->R * i_g_dc - v_g) > tol) {
            throw Error("inconsistent-operating-point", "DC bus G voltage inconsistent with Z_g drop");
        }
    }
    Complex i_src_ac = i_g_ac + Complex(0.0, b_t) * v_t;
    double i_src_dc = i_g_dc;
    double c_dc_t = 0.0;
    for (std::size_t k : ac.on_t) i_src_ac -= dev(k).op().i();
    for (std::size_t k : dc.on_t) {
        i_src_dc -= dev(k).op().i_dc0;
        c_dc_t += dev(k).c_dc();
    }
    OperatingPoint src_op;
    const Complex v_s = v_t + cfg.z_s_ac.z() * i_src_ac;
    src_op.v_d0 = v_s.real();
    src_op.v_q0 = v_s.imag();

    Wiring w;
    w.ext_in = source_channels();

    // Sources.
    w.blocks.push_back(StateSpaceModel::static_gain(polar_transform(src_op), {"dVs_ac", "dthetas_ac"},
                                                    {"ac.src.v_d", "ac.src.v_q"}));
    w.blocks.push_back(StateSpaceModel::static_gain(Matrix::Identity(1, 1), {"dVs_dc"}, {"dc.src.v"}));

    // AC buses.
    const auto add_ac_bus = [&](const std::string& bus, const std::string& ref, const std::string& link,
                                const ImpedanceBranch& z, double b) {
        const std::string n = "ac." + bus;
        const std::string l = "ac." + link;
        const NodeKind kind = node_kind(z, z.is_zero() ? 0.0 : b, "AC bus " + bus);
        if (kind == NodeKind::Capacitive) {
            w.blocks.push_back(ac_cap_node(n, b, wb));
            w.blocks.push_back(ac_branch(l, z.R, z.L, wb));
            w.connect(ref + ".v_d", l + ".va_d");
            w.connect(ref + ".v_q", l + ".va_q");
            w.connect(n + ".v_d", l + ".vb_d");
            w.connect(n + ".v_q", l + ".vb_q");
            w.connect(l + ".i_d", n + ".i_d");
            w.connect(l + ".i_q", n + ".i_q");
        } else {
            w.blocks.push_back(ac_algebraic_node(n, l, kind == NodeKind::Stiff ? 0.0 : z.R));
            w.connect(ref + ".v_d", n + ".vr_d");
            w.connect(ref + ".v_q", n + ".vr_q");
        }
        w.ext_out.push_back(n + ".v_d");
        w.ext_out.push_back(n + ".v_q");
        w.ext_out.push_back(l + ".i_d");
        w.ext_out.push_back(l + ".i_q");
    };
    const auto add_dc_bus = [&](const std::string& bus, const std::string& ref, const std::string& link,
                                const ImpedanceBranch& z, double c) {
        const std::string n = "dc." + bus;
        const std::string l = "dc." + link;
        const NodeKind kind = node_kind(z, z.is_zero() ? 0.0 : c, "DC bus " + bus);
        if (kind == NodeKind::Capacitive) {
            w.blocks.push_back(dc_cap_node(n, c));
            w.blocks.push_back(dc_branch(l, z.R, z.L, wb));
            w.connect(ref + ".v", l + ".va");
            w.connect(n + ".v", l + ".vb");
            w.connect(l + ".i", n + ".i");
        } else {
            w.blocks.push_back(dc_algebraic_node(n, l, kind == NodeKind::Stiff ? 0.0 : z.R));
            w.connect(ref + ".v", n + ".vr");
        }
        w.ext_out.push_back(n + ".v");
        w.ext_out.push_back(l + ".i");
    };
    add_ac_bus("T", "ac.src", "src", cfg.z_s_ac, cfg.b_bus_ac_t);
    add_dc_bus("T", "dc.src", "src", cfg.z_s_dc, c_dc_t);
    if (ac.g_active) {
        add_ac_bus("G", "ac.T", "g", *cfg.z_g_ac, cfg.b_bus_ac_g);
        // the grid branch leaves T
        w.connect("ac.g.i_d", "ac.T.i_d", -1.0);
        w.connect("ac.g.i_q", "ac.T.i_q", -1.0);
    }
    if (dc.g_active) {
        add_dc_bus("G", "dc.T", "g", *cfg.z_g_dc, c_dc_g);
        w.connect("dc.g.i", "dc.T.i", -1.0);
    }

    // Devices and meters.
    NetworkModel nm{StateSpaceModel::static_gain(Matrix(0, 0), {}, {}), {}};
    for (std::size_t k : included) {
        const auto& att = cfg.devices[k];
        const std::string& name = att.name;
        const bool is_probe = name == probe;
        const ConverterModel model = is_probe ? zero_device(att.model) : att.model;
        const std::string p = name + ".";
        const std::string an = std::string("ac.") + (std::count(ac.on_g.begin(), ac.on_g.end(), k) ? "G" : "T");
        const std::string dn = std::string("dc.") + (std::count(dc.on_g.begin(), dc.on_g.end(), k) ? "G" : "T");
        w.blocks.push_back(model.prefixed(p));
        w.blocks.push_back(meter(name, model.op()));
        w.connect(an + ".v_d", p + "dv_d");
        w.connect(an + ".v_q", p + "dv_q");
        w.connect(dn + ".v", p + "dv_dc");
        w.connect(an + ".v_d", p + "m.v_d");
        w.connect(an + ".v_q", p + "m.v_q");
        w.connect(dn + ".v", p + "m.v_dc");
        w.connect(p + "di_d", p + "m.i_d");
        w.connect(p + "di_q", p + "m.i_q");
        w.connect(p + "di_dc", p + "m.i_dc");
        w.connect(p + "di_d", an + ".i_d");
        w.connect(p + "di_q", an + ".i_q");
        w.connect(p + "di_dc", dn + ".i");
        if (is_probe) {
            w.ext_in.insert(w.ext_in.end(), {"probe.i_d", "probe.i_q", "probe.i_dc"});
            w.connect("probe.i_d", an + ".i_d");
            w.connect("probe.i_q", an + ".i_q");
            w.connect("probe.i_dc", dn + ".i");
        }
        for (const char* s : {".dP_ac", ".dQ_ac", ".dP_dc", ".dv_d", ".dv_q", ".dv_dc", ".di_d",
                              ".di_q", ".di_dc"}) {
            w.ext_out.push_back(name + s);
        }
        nm.devices.push_back(name);
    }
    nm.realization = interconnect(w.blocks, w.conns, w.ext_in, w.ext_out);
    return nm;
}

}  // namespace detail

inline NetworkModel assemble(const TestbenchConfig& cfg) { return detail::assemble_impl(cfg, ""); }

/// Transfer matrix from the listed inputs to the listed outputs.
inline StateSpaceModel select(const StateSpaceModel& m, const Labels& inputs, const Labels& outputs) {
    Matrix b(m.b().rows(), static_cast<Eigen::Index>(inputs.size()));
    Matrix d(static_cast<Eigen::Index>(outputs.size()), static_cast<Eigen::Index>(inputs.size()));
    Matrix c(static_cast<Eigen::Index>(outputs.size()), m.c().cols());
    for (std::size_t j = 0; j < inputs.size(); ++j) {
        b.col(static_cast<Eigen::Index>(j)) = m.b().col(static_cast<Eigen::Index>(m.input_index(inputs[j])));
    }
    for (std::size_t i = 0; i < outputs.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(m.output_index(outputs[i]));
        c.row(static_cast<Eigen::Index>(i)) = m.c().row(r);
        for (std::size_t j = 0; j < inputs.size(); ++j) {
            d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                m.d()(r, static_cast<Eigen::Index>(m.input_index(inputs[j])));
        }
    }
    return StateSpaceModel(m.a(), b, c, d, inputs, outputs, m.states());
}

inline StabilityVerdict eig_stability(const NetworkModel& nm) {
    const EigenSet es = eigenvalues(nm.realization.a());
    StabilityVerdict v;
    v.method = "eigen";
    v.margin = es.values.empty() ? -std::numeric_limits<double>::infinity() : es.abscissa();
    const std::size_t k = std::min<std::size_t>(6, es.values.size());
    v.dominant.assign(es.values.begin(), es.values.begin() + static_cast<std::ptrdiff_t>(k));
    if (std::abs(v.margin) <= kMarginalBand) {
        v.stable = Verdict::Marginal;
    } else {
        v.stable = v.margin < 0.0 ? Verdict::Stable : Verdict::Unstable;
    }
    return v;
}

/// Generalized Nyquist test on L = Y Z over the positive grid. The winding
/// of det(I + L) over the grid is doubled by conjugate symmetry; closed-loop
/// right-half-plane poles = -(phase change over w > 0) / pi for open-loop
/// stable Y and Z.
inline StabilityVerdict nyquist_stability(const FrequencyResponse& y_resp,
                                          const FrequencyResponse& z_resp) {
    if (!(y_resp.grid == z_resp.grid)) throw Error("grid-mismatch", "Y and Z grids differ");
    if (y_resp.samples.empty()) throw Error("grid-mismatch", "empty responses");
    const auto n = y_resp.samples.front().rows();
    for (std::size_t k = 0; k < y_resp.samples.size(); ++k) {
        const auto& y = y_resp.samples[k];
        const auto& z = z_resp.samples[k];
        if (y.rows() != n || y.cols() != n || z.rows() != n || z.cols() != n) {
            throw Error("grid-mismatch", "Y and Z must be square with equal dimensions");
        }
    }
    StabilityVerdict v;
    v.method = "nyquist";
    double phase = 0.0;
    double prev = 0.0;
    double dist = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < y_resp.samples.size(); ++k) {
        const CMatrix l = y_resp.samples[k] * z_resp.samples[k];
        const CMatrix f = CMatrix::Identity(n, n) + l;
        const double arg = std::arg(f.determinant());
        if (k > 0) {
            double step = arg - prev;
            while (step > kPi) step -= kTwoPi;
            while (step <= -kPi) step += kTwoPi;
            phase += step;
        }
        prev = arg;
        Eigen::ComplexEigenSolver<CMatrix> ces(l, false);
        for (Eigen::Index i = 0; i < ces.eigenvalues().size(); ++i) {
            dist = std::min(dist, std::abs(ces.eigenvalues()(i) + Complex(1.0, 0.0)));
        }
    }
    v.critical_distance = dist;
    v.encirclements = static_cast<int>(std::lround(-phase / kPi));
    if (dist <= 1e-6) {
        v.stable = Verdict::Marginal;
        v.note = "critical-proximity";
    } else {
        v.stable = v.encirclements == 0 ? Verdict::Stable : Verdict::Unstable;
    }
    return v;
}

/// Network impedance seen by `device`: probe current injections to the
/// device's terminal voltages, with the device itself removed.
inline StateSpaceModel network_impedance(const TestbenchConfig& cfg, const std::string& device) {
    const NetworkModel nm = detail::assemble_impl(cfg, device);
    return select(nm.realization, {"probe.i_d", "probe.i_q", "probe.i_dc"},
                  {device + ".dv_d", device + ".dv_q", device + ".dv_dc"});
}

/// Minor-loop Nyquist verdict for one device against the rest of the
/// testbench. The device admittance enters in passive sign (current into
/// the device).
inline StabilityVerdict device_nyquist(const TestbenchConfig& cfg, const std::string& device,
                                       const FrequencyGrid& grid) {
    const auto it = std::find_if(cfg.devices.begin(), cfg.devices.end(),
                                 [&](const DeviceAttachment& d) { return d.name == device; });
    if (it == cfg.devices.end()) throw Error("unknown-signal", "no device '" + device + "'");
    FrequencyResponse y = freq_response(it->model.realization(), grid);
    for (auto& s : y.samples) s = -s;
    const FrequencyResponse z = freq_response(network_impedance(cfg, device), grid);
    return nyquist_stability(y, z);
}

/// AC voltage of bus G whose devices draw total S = P + jQ (outward),
/// fed from bus T through Z_g, with shunt susceptance b at G.
inline Complex grid_bus_voltage(Complex v_t, Complex s_total, Complex z_g, double b) {
    Complex v_g = v_t;
    for (int it = 0; it < 500; ++it) {
        const Complex i_dev = std::conj(s_total / v_g);
        const Complex next = v_t - z_g * (Complex(0.0, b) * v_g - i_dev);
        if (std::abs(next - v_g) < 1e-15) return next;
        v_g = next;
    }
    throw Error("inconsistent-operating-point", "bus G voltage iteration did not converge");
}

/// DC voltage of bus G whose devices export total AC power p, so their DC
/// current is -p / v_g, fed from bus T through resistance r_g.
inline double grid_bus_dc_voltage(double v_t, double p, double r_g) {
    // v_g = v_t - r_g * p / v_g  =>  v_g^2 - v_t v_g + r_g p = 0
    const double disc = v_t * v_t - 4.0 * r_g * p;
    if (disc < 0.0) throw Error("inconsistent-operating-point", "no DC load-flow solution at bus G");
    return 0.5 * (v_t + std::sqrt(disc));
}

}  // namespace fdjb
