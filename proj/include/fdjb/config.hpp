#pragma once

// Run configuration: a flat sectioned key-value text format.
//
//   # comment
//   command = stability            top level: command (required), id
//   id = dc-integration-k0
//
//   [device.<name>]                one section per device
//   type = gfl                     gfm-vsm | gfl (required)
//   ac_bus = T                     T | G
//   dc_bus = T
//   P_ac0 = 1.0                    operating point (V_ac0, theta0, V_dc0 only on bus T)
//   K_d_dc = 10                    any parameter of the device type
//
//   [testbench]  cb_s_ac, cb_g_ac, cb_s_dc, cb_g_dc = closed | open
//                z_s_ac, z_s_dc, z_g_ac, z_g_dc = R+jX (p.u.), b_bus_ac_t, b_bus_ac_g
//   [grid]       f_min, f_max (Hz), n_points
//   [bands]      bands = lo:hi, lo:hi (Hz); elements = J_pac_th, ...
//   [stability]  slot = z_s_dc; steps = R+jX, R+jX; device = <name>; nyquist = auto | off
//   [scenario]   t_end, dt, window, threshold, x0_random, and repeatable
//                event = <t> set-input <channel> <value>
//                event = <t> swap-branch <slot> <R+jX>
//                event = <t> set-breaker <name> closed|open
//   [output]     dir, decimation (s)
//   [report]     inputs = <dir>, <dir>
//
// Angles accept a "deg" suffix and are radians otherwise.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "fdjb/converter.hpp"
#include "fdjb/error.hpp"
#include "fdjb/jacobian.hpp"
#include "fdjb/testbench.hpp"
#include "fdjb/timesim.hpp"

namespace fdjb {

inline const std::vector<std::string>& known_commands() {
    static const std::vector<std::string> c{"sweep", "jacobian", "support-test", "stability",
                                            "simulate", "report"};
    return c;
}

struct DeviceSpec {
    std::string name;
    std::string type;  // gfm-vsm | gfl
    Bus ac_bus = Bus::T;
    Bus dc_bus = Bus::T;
    double P_ac0 = 1.0;
    double Q_ac0 = 0.0;
    double V_ac0 = 1.0;
    double theta0 = 0.0;
    double V_dc0 = 1.0;
    GfmVsmParams gfm;
    GflParams gfl;
    bool operator==(const DeviceSpec&) const = default;
};

struct TestbenchSpec {
    BreakerState breakers;
    ImpedanceBranch z_s_ac{0.0, 0.0, Side::AC};
    ImpedanceBranch z_s_dc{0.0, 0.0, Side::DC};
    std::optional<ImpedanceBranch> z_g_ac;
    std::optional<ImpedanceBranch> z_g_dc;
    double b_bus_ac_t = 0.05;
    double b_bus_ac_g = 0.05;
    bool operator==(const TestbenchSpec&) const = default;
};

struct GridSpec {
    double f_min = 0.01;
    double f_max = 1000.0;
    std::size_t n_points = 400;
    bool operator==(const GridSpec&) const = default;
};

struct BandSpec {
    std::vector<std::pair<double, double>> bands;  // user bands; 4-40 Hz is always reported
    std::vector<std::string> elements = {jacobian_element_names().begin(),
                                         jacobian_element_names().end()};
    bool operator==(const BandSpec&) const = default;
};

struct StabilitySpec {
    std::string slot;  // empty: evaluate the base testbench only
    std::vector<ImpedanceBranch> steps;
    std::string device;  // nyquist device; empty: first device
    bool nyquist = true;
    bool operator==(const StabilitySpec&) const = default;
};

struct ScenarioSpec {
    double t_end = 1.0;
    double dt = 1e-4;
    double window = 0.5;
    double threshold = 1.5;
    double x0_random = 0.0;
    std::vector<Event> events;
    bool operator==(const ScenarioSpec&) const = default;
};

struct OutputSpec {
    std::string dir = "out";
    double decimation = 1e-3;
    bool operator==(const OutputSpec&) const = default;
};

struct RunConfig {
    std::string command;
    std::string id = "run";
    std::vector<DeviceSpec> devices;
    TestbenchSpec testbench;
    GridSpec grid;
    BandSpec bands;
    StabilitySpec stability;
    ScenarioSpec scenario;
    OutputSpec output;
    std::vector<std::string> report_inputs;
    bool operator==(const RunConfig&) const = default;
};

namespace detail {

template <class P>
using ParamTable = std::vector<std::pair<const char*, double P::*>>;

inline const ParamTable<GfmVsmParams>& gfm_params() {
    static const ParamTable<GfmVsmParams> t{
        {"J_v", &GfmVsmParams::J_v},       {"D_p", &GfmVsmParams::D_p},
        {"K_q", &GfmVsmParams::K_q},       {"tau_q", &GfmVsmParams::tau_q},
        {"L_v", &GfmVsmParams::L_v},       {"R_v", &GfmVsmParams::R_v},
        {"L_f", &GfmVsmParams::L_f},       {"R_f", &GfmVsmParams::R_f},
        {"kp_cc", &GfmVsmParams::kp_cc},   {"ki_cc", &GfmVsmParams::ki_cc},
        {"tau_v", &GfmVsmParams::tau_v},   {"C_dc", &GfmVsmParams::C_dc},
        {"omega_b", &GfmVsmParams::omega_b}};
    return t;
}

inline const ParamTable<GflParams>& gfl_params() {
    static const ParamTable<GflParams> t{
        {"kp_pll", &GflParams::kp_pll}, {"ki_pll", &GflParams::ki_pll},
        {"kp_cc", &GflParams::kp_cc},   {"ki_cc", &GflParams::ki_cc},
        {"K_d_dc", &GflParams::K_d_dc}, {"L_f", &GflParams::L_f},
        {"R_f", &GflParams::R_f},       {"C_dc", &GflParams::C_dc},
        {"omega_b", &GflParams::omega_b}};
    return t;
}

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(s);
    while (std::getline(is, cur, sep)) {
        cur = trim(cur);
        if (!cur.empty()) out.push_back(cur);
    }
    return out;
}

inline std::vector<std::string> words(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream is(s);
    std::string w;
    while (is >> w) out.push_back(w);
    return out;
}

inline double parse_number(const std::string& text, const std::string& path) {
    const std::string s = trim(text);
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v)) {
        throw Error("config-bad-value", path + ": '" + text + "' is not a number");
    }
    return v;
}

inline double parse_angle(const std::string& text, const std::string& path) {
    std::string s = trim(text);
    if (s.size() > 3 && s.compare(s.size() - 3, 3, "deg") == 0) {
        return parse_number(s.substr(0, s.size() - 3), path) * kPi / 180.0;
    }
    return parse_number(s, path);
}

inline std::size_t parse_count(const std::string& text, const std::string& path) {
    const double v = parse_number(text, path);
    if (v < 0 || v != std::floor(v) || v > 1e9) {
        throw Error("config-bad-value", path + ": expected a non-negative integer");
    }
    return static_cast<std::size_t>(v);
}

inline bool parse_breaker(const std::string& text, const std::string& path) {
    const std::string s = trim(text);
    if (s == "closed") return true;
    if (s == "open") return false;
    throw Error("config-bad-value", path + ": expected closed | open");
}

inline Bus parse_bus(const std::string& text, const std::string& path) {
    const std::string s = trim(text);
    if (s == "T") return Bus::T;
    if (s == "G") return Bus::G;
    throw Error("config-bad-value", path + ": expected T | G");
}

}  // namespace detail

/// Parses "R+jX", "jX", "R" (p.u.). R and X must be >= 0.
inline ImpedanceBranch parse_impedance(const std::string& text, Side side) {
    std::string s;
    for (char c : text) {
        if (!std::isspace(static_cast<unsigned char>(c))) s += c;
    }
    static const std::regex re(R"(^([0-9.eE+-]+?)?(?:(^|\+)j([0-9.eE+-]+))?$)");
    std::smatch m;
    if (s.empty() || !std::regex_match(s, m, re) || (!m[1].matched && !m[3].matched)) {
        throw Error("config-bad-impedance", "'" + text + "' is not of the form R+jX");
    }
    ImpedanceBranch z;
    z.side = side;
    try {
        if (m[1].matched) z.R = detail::parse_number(m[1].str(), "impedance");
        if (m[3].matched) z.L = detail::parse_number(m[3].str(), "impedance");
    } catch (const Error&) {
        throw Error("config-bad-impedance", "'" + text + "' is not of the form R+jX");
    }
    if (z.R < 0.0 || z.L < 0.0) {
        throw Error("config-bad-impedance", "'" + text + "' must have R >= 0 and X >= 0");
    }
    return z;
}

/// Shortest text that parses back to exactly the same double.
inline std::string exact_number(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline std::string format_impedance(const ImpedanceBranch& z) {
    return exact_number(z.R) + "+j" + exact_number(z.L);
}

inline Event parse_event(const std::string& text, const std::string& path) {
    const auto w = detail::words(text);
    if (w.size() != 4) throw Error("config-bad-event", path + ": expected '<t> <kind> <name> <value>'");
    Event ev;
    ev.t = detail::parse_number(w[0], path);
    if (w[1] == "set-input") {
        ev.action = SetInput{w[2], detail::parse_angle(w[3], path)};
    } else if (w[1] == "swap-branch") {
        const bool dc = w[2] == "z_s_dc" || w[2] == "z_g_dc";
        if (!dc && w[2] != "z_s_ac" && w[2] != "z_g_ac") {
            throw Error("config-bad-event", path + ": unknown branch slot '" + w[2] + "'");
        }
        ev.action = SwapBranch{w[2], parse_impedance(w[3], dc ? Side::DC : Side::AC)};
    } else if (w[1] == "set-breaker") {
        static const std::set<std::string> names{"cb_s_ac", "cb_g_ac", "cb_s_dc", "cb_g_dc"};
        if (!names.count(w[2])) throw Error("config-bad-event", path + ": unknown breaker '" + w[2] + "'");
        ev.action = SetBreaker{w[2], detail::parse_breaker(w[3], path)};
    } else {
        throw Error("config-bad-event", path + ": unknown event kind '" + w[1] + "'");
    }
    return ev;
}

inline std::string format_event(const Event& ev) {
    std::string s = exact_number(ev.t) + " ";
    if (const auto* si = std::get_if<SetInput>(&ev.action)) {
        s += "set-input " + si->channel + " " + exact_number(si->value);
    } else if (const auto* sb = std::get_if<SwapBranch>(&ev.action)) {
        s += "swap-branch " + sb->slot + " " + format_impedance(sb->branch);
    } else {
        const auto& bk = std::get<SetBreaker>(ev.action);
        s += "set-breaker " + bk.name + (bk.closed ? " closed" : " open");
    }
    return s;
}

inline RunConfig parse_config(const std::string& text) {
    struct Entry {
        std::string value;
        std::string path;
    };
    // section -> ordered (key, entry) list
    std::vector<std::pair<std::string, std::vector<std::pair<std::string, Entry>>>> sections;
    sections.push_back({"", {}});
    {
        std::istringstream is(text);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
            line = detail::trim(line);
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']') {
                    throw Error("config-syntax", "line " + std::to_string(lineno) + ": bad section header");
                }
                const std::string name = detail::trim(line.substr(1, line.size() - 2));
                for (const auto& s : sections) {
                    if (s.first == name) throw Error("config-duplicate-key", name);
                }
                sections.push_back({name, {}});
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos) {
                throw Error("config-syntax", "line " + std::to_string(lineno) + ": expected key = value");
            }
            const std::string key = detail::trim(line.substr(0, eq));
            const std::string value = detail::trim(line.substr(eq + 1));
            auto& sec = sections.back();
            const std::string path = sec.first.empty() ? key : sec.first + "." + key;
            if (key.empty()) throw Error("config-syntax", "line " + std::to_string(lineno) + ": empty key");
            if (key != "event") {
                for (const auto& kv : sec.second) {
                    if (kv.first == key) throw Error("config-duplicate-key", path);
                }
            }
            sec.second.push_back({key, {value, path}});
        }
    }

    RunConfig rc;
    bool have_command = false;
    for (const auto& [section, entries] : sections) {
        if (section.empty()) {
            for (const auto& [k, e] : entries) {
                if (k == "command") {
                    if (std::find(known_commands().begin(), known_commands().end(), e.value) ==
                        known_commands().end()) {
                        throw Error("config-bad-value", "command: unknown command '" + e.value + "'");
                    }
                    rc.command = e.value;
                    have_command = true;
                } else if (k == "id") {
                    if (e.value.empty()) throw Error("config-bad-value", "id: must not be empty");
                    rc.id = e.value;
                } else {
                    throw Error("config-unknown-key", e.path);
                }
            }
        } else if (section.rfind("device.", 0) == 0) {
            DeviceSpec d;
            d.name = section.substr(7);
            if (d.name.empty() || d.name.find('.') != std::string::npos) {
                throw Error("config-bad-value", section + ": device name must be non-empty without '.'");
            }
            for (const auto& [k, e] : entries) {
                if (k == "type") d.type = e.value;
            }
            if (d.type != "gfm-vsm" && d.type != "gfl") {
                throw Error("config-bad-value", section + ".type: expected gfm-vsm | gfl");
            }
            for (const auto& [k, e] : entries) {
                if (k == "type") continue;
                if (k == "ac_bus") d.ac_bus = detail::parse_bus(e.value, e.path);
                else if (k == "dc_bus") d.dc_bus = detail::parse_bus(e.value, e.path);
                else if (k == "P_ac0") d.P_ac0 = detail::parse_number(e.value, e.path);
                else if (k == "Q_ac0") d.Q_ac0 = detail::parse_number(e.value, e.path);
                else if (k == "V_ac0") d.V_ac0 = detail::parse_number(e.value, e.path);
                else if (k == "theta0") d.theta0 = detail::parse_angle(e.value, e.path);
                else if (k == "V_dc0") d.V_dc0 = detail::parse_number(e.value, e.path);
                else {
                    bool found = false;
                    if (d.type == "gfm-vsm") {
                        for (const auto& [name, mp] : detail::gfm_params()) {
                            if (k == name) { d.gfm.*mp = detail::parse_number(e.value, e.path); found = true; }
                        }
                    } else {
                        for (const auto& [name, mp] : detail::gfl_params()) {
                            if (k == name) { d.gfl.*mp = detail::parse_number(e.value, e.path); found = true; }
                        }
                    }
                    if (!found) throw Error("config-unknown-key", e.path);
                }
            }
            if (d.type == "gfm-vsm") validate(d.gfm);
            else validate(d.gfl);
            for (const auto& o : rc.devices) {
                if (o.name == d.name) throw Error("config-duplicate-key", section);
            }
            rc.devices.push_back(d);
        } else if (section == "testbench") {
            auto& t = rc.testbench;
            for (const auto& [k, e] : entries) {
                if (k == "cb_s_ac") t.breakers.cb_s_ac = detail::parse_breaker(e.value, e.path);
                else if (k == "cb_g_ac") t.breakers.cb_g_ac = detail::parse_breaker(e.value, e.path);
                else if (k == "cb_s_dc") t.breakers.cb_s_dc = detail::parse_breaker(e.value, e.path);
                else if (k == "cb_g_dc") t.breakers.cb_g_dc = detail::parse_breaker(e.value, e.path);
                else if (k == "z_s_ac") t.z_s_ac = parse_impedance(e.value, Side::AC);
                else if (k == "z_s_dc") t.z_s_dc = parse_impedance(e.value, Side::DC);
                else if (k == "z_g_ac") t.z_g_ac = parse_impedance(e.value, Side::AC);
                else if (k == "z_g_dc") t.z_g_dc = parse_impedance(e.value, Side::DC);
                else if (k == "b_bus_ac_t") t.b_bus_ac_t = detail::parse_number(e.value, e.path);
                else if (k == "b_bus_ac_g") t.b_bus_ac_g = detail::parse_number(e.value, e.path);
                else throw Error("config-unknown-key", e.path);
            }
        } else if (section == "grid") {
            for (const auto& [k, e] : entries) {
                if (k == "f_min") rc.grid.f_min = detail::parse_number(e.value, e.path);
                else if (k == "f_max") rc.grid.f_max = detail::parse_number(e.value, e.path);
                else if (k == "n_points") rc.grid.n_points = detail::parse_count(e.value, e.path);
                else throw Error("config-unknown-key", e.path);
            }
        } else if (section == "bands") {
            for (const auto& [k, e] : entries) {
                if (k == "bands") {
                    rc.bands.bands.clear();
                    for (const auto& b : detail::split(e.value, ',')) {
                        const auto c = b.find(':');
                        if (c == std::string::npos) throw Error("config-bad-value", e.path + ": expected lo:hi");
                        rc.bands.bands.emplace_back(detail::parse_number(b.substr(0, c), e.path),
                                                    detail::parse_number(b.substr(c + 1), e.path));
                    }
                } else if (k == "elements") {
                    rc.bands.elements = detail::split(e.value, ',');
                    for (const auto& el : rc.bands.elements) jacobian_element_index(el);
                } else {
                    throw Error("config-unknown-key", e.path);
                }
            }
        } else if (section == "stability") {
            auto& s = rc.stability;
            for (const auto& [k, e] : entries) {
                if (k == "slot") s.slot = e.value;
                else if (k == "steps") {
                    s.steps.clear();
                    for (const auto& z : detail::split(e.value, ',')) s.steps.push_back(parse_impedance(z, Side::AC));
                } else if (k == "device") s.device = e.value;
                else if (k == "nyquist") {
                    if (e.value != "auto" && e.value != "off") throw Error("config-bad-value", e.path + ": auto | off");
                    s.nyquist = e.value == "auto";
                } else {
                    throw Error("config-unknown-key", e.path);
                }
            }
            if (!s.slot.empty() && s.slot != "z_s_ac" && s.slot != "z_s_dc" && s.slot != "z_g_ac" &&
                s.slot != "z_g_dc") {
                throw Error("config-bad-value", "stability.slot: unknown slot '" + s.slot + "'");
            }
            const Side side = (s.slot == "z_s_dc" || s.slot == "z_g_dc") ? Side::DC : Side::AC;
            for (auto& z : s.steps) z.side = side;
        } else if (section == "scenario") {
            auto& s = rc.scenario;
            for (const auto& [k, e] : entries) {
                if (k == "t_end") s.t_end = detail::parse_number(e.value, e.path);
                else if (k == "dt") s.dt = detail::parse_number(e.value, e.path);
                else if (k == "window") s.window = detail::parse_number(e.value, e.path);
                else if (k == "threshold") s.threshold = detail::parse_number(e.value, e.path);
                else if (k == "x0_random") s.x0_random = detail::parse_number(e.value, e.path);
                else if (k == "event") s.events.push_back(parse_event(e.value, e.path));
                else throw Error("config-unknown-key", e.path);
            }
            std::stable_sort(s.events.begin(), s.events.end(),
                             [](const Event& a, const Event& b) { return a.t < b.t; });
        } else if (section == "output") {
            for (const auto& [k, e] : entries) {
                if (k == "dir") rc.output.dir = e.value;
                else if (k == "decimation") rc.output.decimation = detail::parse_number(e.value, e.path);
                else throw Error("config-unknown-key", e.path);
            }
        } else if (section == "report") {
            for (const auto& [k, e] : entries) {
                if (k == "inputs") rc.report_inputs = detail::split(e.value, ',');
                else throw Error("config-unknown-key", e.path);
            }
        } else {
            throw Error("config-unknown-key", section);
        }
    }
    if (!have_command) throw Error("config-no-command", "the document names no command");
    if (rc.command != "report" && rc.devices.empty()) {
        throw Error("config-bad-value", "at least one [device.<name>] section is required");
    }
    return rc;
}

/// Writes every field, defaults included; parse_config(serialize(rc)) == rc.
inline std::string serialize_config(const RunConfig& rc) {
    std::ostringstream os;
    const auto num = exact_number;
    const auto cb = [](bool c) { return c ? "closed" : "open"; };
    const auto bus = [](Bus b) { return b == Bus::T ? "T" : "G"; };
    os << "command = " << rc.command << "\n";
    os << "id = " << rc.id << "\n";
    for (const auto& d : rc.devices) {
        os << "\n[device." << d.name << "]\n";
        os << "type = " << d.type << "\n";
        os << "ac_bus = " << bus(d.ac_bus) << "\ndc_bus = " << bus(d.dc_bus) << "\n";
        os << "P_ac0 = " << num(d.P_ac0) << "\nQ_ac0 = " << num(d.Q_ac0) << "\n";
        os << "V_ac0 = " << num(d.V_ac0) << "\ntheta0 = " << num(d.theta0) << "\n";
        os << "V_dc0 = " << num(d.V_dc0) << "\n";
        if (d.type == "gfm-vsm") {
            for (const auto& [name, mp] : detail::gfm_params()) os << name << " = " << num(d.gfm.*mp) << "\n";
        } else {
            for (const auto& [name, mp] : detail::gfl_params()) os << name << " = " << num(d.gfl.*mp) << "\n";
        }
    }
    const auto& t = rc.testbench;
    os << "\n[testbench]\n";
    os << "cb_s_ac = " << cb(t.breakers.cb_s_ac) << "\ncb_g_ac = " << cb(t.breakers.cb_g_ac) << "\n";
    os << "cb_s_dc = " << cb(t.breakers.cb_s_dc) << "\ncb_g_dc = " << cb(t.breakers.cb_g_dc) << "\n";
    os << "z_s_ac = " << format_impedance(t.z_s_ac) << "\nz_s_dc = " << format_impedance(t.z_s_dc) << "\n";
    if (t.z_g_ac) os << "z_g_ac = " << format_impedance(*t.z_g_ac) << "\n";
    if (t.z_g_dc) os << "z_g_dc = " << format_impedance(*t.z_g_dc) << "\n";
    os << "b_bus_ac_t = " << num(t.b_bus_ac_t) << "\nb_bus_ac_g = " << num(t.b_bus_ac_g) << "\n";
    os << "\n[grid]\nf_min = " << num(rc.grid.f_min) << "\nf_max = " << num(rc.grid.f_max)
       << "\nn_points = " << rc.grid.n_points << "\n";
    os << "\n[bands]\n";
    if (!rc.bands.bands.empty()) {
        os << "bands = ";
        for (std::size_t k = 0; k < rc.bands.bands.size(); ++k) {
            os << (k ? ", " : "") << num(rc.bands.bands[k].first) << ":" << num(rc.bands.bands[k].second);
        }
        os << "\n";
    }
    os << "elements = ";
    for (std::size_t k = 0; k < rc.bands.elements.size(); ++k) os << (k ? ", " : "") << rc.bands.elements[k];
    os << "\n";
    const auto& s = rc.stability;
    os << "\n[stability]\n";
    if (!s.slot.empty()) os << "slot = " << s.slot << "\n";
    if (!s.steps.empty()) {
        os << "steps = ";
        for (std::size_t k = 0; k < s.steps.size(); ++k) os << (k ? ", " : "") << format_impedance(s.steps[k]);
        os << "\n";
    }
    if (!s.device.empty()) os << "device = " << s.device << "\n";
    os << "nyquist = " << (s.nyquist ? "auto" : "off") << "\n";
    const auto& sc = rc.scenario;
    os << "\n[scenario]\nt_end = " << num(sc.t_end) << "\ndt = " << num(sc.dt) << "\nwindow = " << num(sc.window)
       << "\nthreshold = " << num(sc.threshold) << "\nx0_random = " << num(sc.x0_random) << "\n";
    for (const auto& ev : sc.events) os << "event = " << format_event(ev) << "\n";
    os << "\n[output]\ndir = " << rc.output.dir << "\ndecimation = " << num(rc.output.decimation) << "\n";
    if (!rc.report_inputs.empty()) {
        os << "\n[report]\ninputs = ";
        for (std::size_t k = 0; k < rc.report_inputs.size(); ++k) os << (k ? ", " : "") << rc.report_inputs[k];
        os << "\n";
    }
    return os.str();
}

}  // namespace fdjb
