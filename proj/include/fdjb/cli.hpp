#pragma once

// Batch front end: builds models from a RunConfig, runs the requested
// analysis and writes CSV artifacts.

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <optional>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "fdjb/config.hpp"
#include "fdjb/converter.hpp"
#include "fdjb/error.hpp"
#include "fdjb/jacobian.hpp"
#include "fdjb/testbench.hpp"
#include "fdjb/timesim.hpp"

namespace fdjb {

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitUnstable = 2;
inline constexpr const char* kVerdictSchema = "1";

struct RunResult {
    int exit_code = kExitOk;
    std::vector<std::string> files;
    std::string message;
};

/// 9 significant digits; scientific when |x| < 1e-3 or |x| >= 1e6.
inline std::string format_csv(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    if (x == 0.0) return "0";
    char buf[40];
    const double a = std::abs(x);
    std::snprintf(buf, sizeof(buf), (a < 1e-3 || a >= 1e6) ? "%.8e" : "%.9g", x);
    return buf;
}

/// FDJB_NUM_WORKERS when set to a positive integer, else hardware threads.
inline std::size_t worker_count() {
    if (const char* env = std::getenv("FDJB_NUM_WORKERS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
        throw Error("bad-environment", "FDJB_NUM_WORKERS must be a positive integer");
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(0..n-1) on up to worker_count() threads. Results are written by
/// index, so output order never depends on scheduling; the lowest-index
/// exception is rethrown.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn) {
    const std::size_t workers = std::min(worker_count(), n);
    std::vector<std::exception_ptr> errors(n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) {
            try { fn(i); } catch (...) { errors[i] = std::current_exception(); }
        }
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < n; i = next++) {
                    try { fn(i); } catch (...) { errors[i] = std::current_exception(); }
                }
            });
        }
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

inline FrequencyGrid make_grid(const GridSpec& g) { return FrequencyGrid::log_hz(g.f_min, g.f_max, g.n_points); }

/// Devices with operating points consistent with the testbench load flow:
/// bus-T devices use their stated voltages, bus-G voltages follow from the
/// Z_g drop.
inline std::vector<DeviceAttachment> build_devices(const RunConfig& rc) {
    const auto& tb = rc.testbench;
    const DeviceSpec* first_t_ac = nullptr;
    const DeviceSpec* first_t_dc = nullptr;
    Complex s_g(0.0, 0.0);
    double p_g = 0.0;
    for (const auto& d : rc.devices) {
        if (d.ac_bus == Bus::T && !first_t_ac) first_t_ac = &d;
        if (d.dc_bus == Bus::T && !first_t_dc) first_t_dc = &d;
        if (d.ac_bus == Bus::G) s_g += Complex(d.P_ac0, d.Q_ac0);
        if (d.dc_bus == Bus::G) p_g += d.P_ac0;
    }
    const Complex v_t = first_t_ac ? std::polar(first_t_ac->V_ac0, first_t_ac->theta0) : Complex(1.0, 0.0);
    const double vdc_t = first_t_dc ? first_t_dc->V_dc0 : 1.0;
    const auto is_default_voltage = [](const DeviceSpec& d, bool ac) {
        return ac ? (d.V_ac0 == 1.0 && d.theta0 == 0.0) : d.V_dc0 == 1.0;
    };
    std::vector<DeviceAttachment> out;
    for (const auto& d : rc.devices) {
        Complex v = std::polar(d.V_ac0, d.theta0);
        double vdc = d.V_dc0;
        if (d.ac_bus == Bus::G) {
            if (!is_default_voltage(d, true)) {
                throw Error("config-conflict", "device." + d.name + ": bus-G AC voltage follows from the load flow");
            }
            v = (tb.z_g_ac && !tb.z_g_ac->is_zero()) ? grid_bus_voltage(v_t, s_g, tb.z_g_ac->z(), tb.b_bus_ac_g) : v_t;
        }
        if (d.dc_bus == Bus::G) {
            if (!is_default_voltage(d, false)) {
                throw Error("config-conflict", "device." + d.name + ": bus-G DC voltage follows from the load flow");
            }
            vdc = (tb.z_g_dc && !tb.z_g_dc->is_zero()) ? grid_bus_dc_voltage(vdc_t, p_g, tb.z_g_dc->R) : vdc_t;
        }
        const OperatingPoint op = solve_operating_point(d.P_ac0, d.Q_ac0, std::abs(v), std::arg(v), vdc);
        ConverterModel model = d.type == "gfm-vsm" ? build_gfm_vsm(d.gfm, op) : build_gfl(d.gfl, op);
        out.push_back({d.name, std::move(model), d.ac_bus, d.dc_bus});
    }
    return out;
}

inline TestbenchConfig build_testbench(const RunConfig& rc) {
    TestbenchConfig cfg;
    cfg.breakers = rc.testbench.breakers;
    cfg.z_s_ac = rc.testbench.z_s_ac;
    cfg.z_s_dc = rc.testbench.z_s_dc;
    cfg.z_g_ac = rc.testbench.z_g_ac;
    cfg.z_g_dc = rc.testbench.z_g_dc;
    cfg.b_bus_ac_t = rc.testbench.b_bus_ac_t;
    cfg.b_bus_ac_g = rc.testbench.b_bus_ac_g;
    cfg.devices = build_devices(rc);
    return cfg;
}

namespace detail {

inline void write_file(const std::filesystem::path& p, const std::string& content, RunResult& rr) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw Error("io-error", "cannot write " + p.string());
    f << content;
    if (!f) throw Error("io-error", "write failed for " + p.string());
    rr.files.push_back(p.string());
}

inline std::string freq_header() { return "freq_hz,element,re,im,mag,phase_deg\n"; }

template <class Names>
std::string freq_rows(const FrequencyGrid& grid, const std::vector<CMatrix3>& samples, const Names& names) {
    std::string s = freq_header();
    for (std::size_t k = 0; k < grid.size(); ++k) {
        for (int e = 0; e < 9; ++e) {
            const Complex z = samples[k](e / 3, e % 3);
            s += format_csv(grid.hz(k)) + "," + names[static_cast<std::size_t>(e)] + "," + format_csv(z.real()) +
                 "," + format_csv(z.imag()) + "," + format_csv(std::abs(z)) + "," + format_csv(phase_deg(z)) + "\n";
        }
    }
    return s;
}

inline std::string band_header() { return "f_lo_hz,f_hi_hz,element,mean_mag,mean_phase_dev_deg,n_points\n"; }

inline std::string band_row(const BandMetrics& b) {
    return format_csv(b.f_lo) + "," + format_csv(b.f_hi) + "," + b.element + "," + format_csv(b.mean_mag) + "," +
           format_csv(b.mean_phase_dev) + "," + std::to_string(b.n_points) + "\n";
}

inline std::string verdict_header() {
    return "schema_version,scenario,step,slot,z,method,verdict,margin,encirclements,onset_s,note\n";
}

inline std::string verdict_row(const std::string& scenario, std::size_t step, const std::string& slot,
                               const std::string& z, const std::string& method, const std::string& verdict,
                               double margin, const std::string& enc, const std::string& onset,
                               const std::string& note) {
    return std::string(kVerdictSchema) + "," + scenario + "," + std::to_string(step) + "," + slot + "," + z + "," +
           method + "," + verdict + "," + format_csv(margin) + "," + enc + "," + onset + "," + note + "\n";
}

inline RunResult run_sweep(const RunConfig& rc, const std::filesystem::path& out) {
    RunResult rr;
    const auto devices = build_devices(rc);
    const FrequencyGrid grid = make_grid(rc.grid);
    std::vector<std::string> csv(devices.size());
    parallel_for(devices.size(), [&](std::size_t i) {
        std::vector<CMatrix3> ys;
        for (const auto& a : sweep_admittance(devices[i].model, grid)) ys.push_back(a.Y);
        csv[i] = freq_rows(grid, ys, admittance_element_names());
    });
    for (std::size_t i = 0; i < devices.size(); ++i) {
        write_file(out / (devices[i].name + "_admittance.csv"), csv[i], rr);
    }
    return rr;
}

inline RunResult run_jacobian(const RunConfig& rc, const std::filesystem::path& out) {
    RunResult rr;
    const auto devices = build_devices(rc);
    const FrequencyGrid grid = make_grid(rc.grid);
    std::vector<std::pair<double, double>> bands{{4.0, 40.0}};
    for (const auto& b : rc.bands.bands) {
        if (std::find(bands.begin(), bands.end(), b) == bands.end()) bands.push_back(b);
    }
    std::vector<std::string> jcsv(devices.size()), bcsv(devices.size());
    parallel_for(devices.size(), [&](std::size_t i) {
        const JacobianResponse jr = sweep_jacobian(devices[i].model, grid);
        std::vector<CMatrix3> js;
        for (const auto& s : jr.samples) js.push_back(s.J);
        jcsv[i] = freq_rows(grid, js, jacobian_element_names());
        std::string b = band_header();
        for (const auto& [lo, hi] : bands) {
            for (const auto& el : rc.bands.elements) b += band_row(band_metrics(jr, el, lo, hi));
        }
        bcsv[i] = b;
    });
    for (std::size_t i = 0; i < devices.size(); ++i) {
        write_file(out / (devices[i].name + "_jacobian.csv"), jcsv[i], rr);
        write_file(out / (devices[i].name + "_band_metrics.csv"), bcsv[i], rr);
    }
    return rr;
}

/// Support mode (Z_s = 0, grid breakers open) per device; compares the
/// assembled source-to-power transfers against the bridged Jacobian.
inline RunResult run_support_test(const RunConfig& rc, const std::filesystem::path& out) {
    RunResult rr;
    const auto devices = build_devices(rc);
    const FrequencyGrid grid = make_grid(rc.grid);
    constexpr double tol = 1e-9;
    std::vector<std::string> csv(devices.size());
    std::vector<double> worst(devices.size(), 0.0);
    parallel_for(devices.size(), [&](std::size_t i) {
        TestbenchConfig cfg;
        cfg.breakers = {true, false, true, false};
        cfg.devices.push_back({devices[i].name, devices[i].model, Bus::T, Bus::T});
        const NetworkModel nm = assemble(cfg);
        const std::string& n = devices[i].name;
        const StateSpaceModel tf = select(nm.realization, source_channels(), {n + ".dP_ac", n + ".dQ_ac", n + ".dP_dc"});
        const FrequencyResponse fr = freq_response(tf, grid);
        const JacobianResponse jr = sweep_jacobian(devices[i].model, grid);
        std::string s = "freq_hz,element,assembled_re,assembled_im,jacobian_re,jacobian_im,rel_residual\n";
        for (std::size_t k = 0; k < grid.size(); ++k) {
            for (int e = 0; e < 9; ++e) {
                const Complex a = fr.samples[k](e / 3, e % 3);
                const Complex j = jr.samples[k].J(e / 3, e % 3);
                const double res = std::abs(a - j) / std::max(std::abs(j), 1e-6);
                worst[i] = std::max(worst[i], res);
                s += format_csv(grid.hz(k)) + "," + jacobian_element_names()[static_cast<std::size_t>(e)] + "," +
                     format_csv(a.real()) + "," + format_csv(a.imag()) + "," + format_csv(j.real()) + "," +
                     format_csv(j.imag()) + "," + format_csv(res) + "\n";
            }
        }
        csv[i] = s;
    });
    std::string summary = "device,max_rel_residual,tolerance,pass\n";
    bool ok = true;
    for (std::size_t i = 0; i < devices.size(); ++i) {
        write_file(out / (devices[i].name + "_support_residuals.csv"), csv[i], rr);
        ok &= worst[i] <= tol;
        summary += devices[i].name + "," + format_csv(worst[i]) + "," + format_csv(tol) + "," +
                   (worst[i] <= tol ? "yes" : "no") + "\n";
    }
    write_file(out / "support_summary.csv", summary, rr);
    if (!ok) {
        rr.exit_code = kExitError;
        rr.message = "support-identity-violated";
    }
    return rr;
}

inline void set_slot(TestbenchConfig& cfg, const std::string& slot, const ImpedanceBranch& z) {
    Event ev;
    ev.action = SwapBranch{slot, z};
    apply_structural(cfg, ev);
}

inline bool open_loop_stable(const StateSpaceModel& m) {
    return m.n_states() == 0 || eigenvalues(m.a()).abscissa() < -1e-9;
}

inline RunResult run_stability(const RunConfig& rc, const std::filesystem::path& out) {
    RunResult rr;
    const TestbenchConfig base = build_testbench(rc);
    const FrequencyGrid grid = make_grid(rc.grid);
    const auto& st = rc.stability;
    std::string dut = st.device.empty() ? base.devices.front().name : st.device;
    const auto dev_it = std::find_if(base.devices.begin(), base.devices.end(),
                                     [&](const DeviceAttachment& d) { return d.name == dut; });
    if (dev_it == base.devices.end()) throw Error("config-bad-value", "stability.device: no device '" + dut + "'");
    std::vector<std::optional<ImpedanceBranch>> steps;
    if (st.slot.empty() || st.steps.empty()) steps.push_back(std::nullopt);
    for (const auto& z : st.steps) steps.push_back(z);
    std::vector<std::string> rows(steps.size());
    std::vector<bool> unstable(steps.size(), false);
    parallel_for(steps.size(), [&](std::size_t i) {
        TestbenchConfig cfg = base;
        if (steps[i]) set_slot(cfg, st.slot, *steps[i]);
        const std::string z = steps[i] ? format_impedance(*steps[i]) : "";
        const NetworkModel nm = assemble(cfg);
        const StabilityVerdict ev = eig_stability(nm);
        unstable[i] = ev.stable == Verdict::Unstable;
        rows[i] = verdict_row(rc.id, i, st.slot, z, "eigen", to_string(ev.stable), ev.margin, "", "", "");
        if (st.nyquist) {
            const StateSpaceModel znet = network_impedance(cfg, dut);
            if (open_loop_stable(znet) && open_loop_stable(dev_it->model.realization())) {
                const StabilityVerdict nv = device_nyquist(cfg, dut, grid);
                rows[i] += verdict_row(rc.id, i, st.slot, z, "nyquist", to_string(nv.stable), nv.margin,
                                       std::to_string(nv.encirclements), "", nv.note);
            } else {
                rows[i] += verdict_row(rc.id, i, st.slot, z, "nyquist", "skipped",
                                       std::numeric_limits<double>::quiet_NaN(), "", "", "open-loop-not-stable");
            }
        }
    });
    std::string csv = verdict_header();
    for (const auto& r : rows) csv += r;
    write_file(out / "verdicts.csv", csv, rr);
    if (std::find(unstable.begin(), unstable.end(), true) != unstable.end()) rr.exit_code = kExitUnstable;
    return rr;
}

inline RunResult run_simulate(const RunConfig& rc, const std::filesystem::path& out, std::uint64_t seed) {
    RunResult rr;
    Scenario sc;
    sc.base = build_testbench(rc);
    sc.events = rc.scenario.events;
    sc.t_end = rc.scenario.t_end;
    sc.dt = rc.scenario.dt;
    if (rc.scenario.x0_random > 0.0) {
        const NetworkModel nm = assemble(sc.base);
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> dist(-rc.scenario.x0_random, rc.scenario.x0_random);
        for (const auto& s : nm.realization.states()) sc.x0[s] = dist(rng);
    }
    const TimeSeries ts = simulate(sc);
    const double dec = rc.output.decimation;
    const auto stride = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(dec / sc.dt)));
    std::string csv = "t_s";
    for (const auto& n : ts.names) csv += "," + n;
    csv += "\n";
    for (std::size_t k = 0; k < ts.t.size(); k += stride) {
        csv += format_csv(ts.t[k]);
        for (const auto& ch : ts.channels) csv += "," + format_csv(ch[k]);
        csv += "\n";
    }
    write_file(out / "timeseries.csv", csv, rr);
    std::optional<double> onset;
    const double span = ts.t.back() - ts.t.front();
    if (ts.halted && span < 2.0 * rc.scenario.window) {
        onset = ts.t.back();
    } else if (span >= rc.scenario.window) {
        onset = detect_instability(ts, rc.scenario.window, rc.scenario.threshold);
    }
    const std::string note = ts.halted ? "halted" : "";
    write_file(out / "verdicts.csv",
               verdict_header() + verdict_row(rc.id, 0, "", "", "time", onset ? "unstable" : "stable",
                                              std::numeric_limits<double>::quiet_NaN(), "",
                                              onset ? format_csv(*onset) : "", note),
               rr);
    if (onset) rr.exit_code = kExitUnstable;
    return rr;
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw Error("io-error", "cannot read " + p.string());
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

/// Concatenates verdicts.csv and *_band_metrics.csv from the input
/// directories, tagging each row with its source directory. Relative
/// inputs resolve against the parent of the output directory.
inline RunResult run_report(const RunConfig& rc, const std::filesystem::path& out) {
    namespace fs = std::filesystem;
    RunResult rr;
    if (rc.report_inputs.empty()) throw Error("config-bad-value", "report.inputs: no input directories");
    std::string verdicts = "source," + verdict_header();
    std::string bands = "source,device," + band_header();
    bool unstable = false;
    fs::path base = fs::absolute(out);
    if (!base.has_filename()) base = base.parent_path();
    base = base.parent_path();
    for (const auto& in : rc.report_inputs) {
        fs::path dir(in);
        if (dir.is_relative()) dir = base / dir;
        if (!fs::is_directory(dir)) throw Error("io-error", "report input '" + in + "' is not a directory");
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(dir)) files.push_back(e.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            const std::string name = f.filename().string();
            const bool is_verdict = name == "verdicts.csv";
            const std::string suffix = "_band_metrics.csv";
            const bool is_band = name.size() > suffix.size() &&
                                 name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
            if (!is_verdict && !is_band) continue;
            std::istringstream is(read_file(f));
            std::string line;
            std::getline(is, line);  // header
            while (std::getline(is, line)) {
                if (line.empty()) continue;
                if (is_verdict) {
                    verdicts += in + "," + line + "\n";
                    unstable |= line.find(",unstable,") != std::string::npos;
                } else {
                    bands += in + "," + name.substr(0, name.size() - suffix.size()) + "," + line + "\n";
                }
            }
        }
    }
    write_file(out / "report_verdicts.csv", verdicts, rr);
    write_file(out / "report_band_metrics.csv", bands, rr);
    if (unstable) rr.exit_code = kExitUnstable;
    return rr;
}

}  // namespace detail

/// Dispatches the command. Module errors propagate as fdjb::Error; the
/// returned exit code is 0 (success) or 2 (analysis found instability).
inline RunResult run(const RunConfig& rc, const std::string& out_dir = "", std::uint64_t seed = 0) {
    const std::filesystem::path out(out_dir.empty() ? rc.output.dir : out_dir);
    std::filesystem::create_directories(out);
    if (rc.command == "sweep") return detail::run_sweep(rc, out);
    if (rc.command == "jacobian") return detail::run_jacobian(rc, out);
    if (rc.command == "support-test") return detail::run_support_test(rc, out);
    if (rc.command == "stability") return detail::run_stability(rc, out);
    if (rc.command == "simulate") return detail::run_simulate(rc, out, seed);
    if (rc.command == "report") return detail::run_report(rc, out);
    throw Error("config-no-command", "unknown command '" + rc.command + "'");
}

}  // namespace fdjb
