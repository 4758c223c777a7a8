#pragma once

// Piecewise-LTI replay of testbench scenarios with exact zero-order-hold
// discretization, plus window-RMS instability detection.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "fdjb/error.hpp"
#include "fdjb/lti.hpp"
#include "fdjb/testbench.hpp"

namespace fdjb {

struct SetInput {
    std::string channel;
    double value = 0.0;
    bool operator==(const SetInput&) const = default;
};
struct SwapBranch {
    std::string slot;  // z_s_ac | z_s_dc | z_g_ac | z_g_dc
    ImpedanceBranch branch;
    bool operator==(const SwapBranch&) const = default;
};
struct SetBreaker {
    std::string name;  // cb_s_ac | cb_g_ac | cb_s_dc | cb_g_dc
    bool closed = true;
    bool operator==(const SetBreaker&) const = default;
};

struct Event {
    double t = 0.0;
    std::variant<SetInput, SwapBranch, SetBreaker> action;
    bool operator==(const Event&) const = default;
};

struct Scenario {
    TestbenchConfig base;
    std::vector<Event> events;
    double t_end = 1.0;
    double dt = 1e-4;
    /// Initial state deviations by label; unlisted states start at 0.
    std::map<std::string, double> x0;
};

struct TimeSeries {
    std::vector<double> t;
    Labels names;
    std::vector<std::vector<double>> channels;
    /// Set when a channel exceeded the blow-up limit and integration stopped.
    bool halted = false;

    [[nodiscard]] const std::vector<double>& channel(const std::string& name) const {
        for (std::size_t k = 0; k < names.size(); ++k) {
            if (names[k] == name) return channels[k];
        }
        throw Error("unknown-signal", "no channel '" + name + "'");
    }
};

inline constexpr double kBlowUpLimit = 1e3;

namespace detail {

struct Discrete {
    Matrix phi;
    Matrix gamma;
};

/// exp([A B; 0 0] dt) = [Phi Gamma; 0 I].
inline Discrete zoh(const StateSpaceModel& m, double dt) {
    const auto n = m.a().rows();
    const auto k = m.b().cols();
    Matrix aug = Matrix::Zero(n + k, n + k);
    aug.topLeftCorner(n, n) = m.a() * dt;
    aug.topRightCorner(n, k) = m.b() * dt;
    const Matrix e = aug.exp();
    return {e.topLeftCorner(n, n), e.topRightCorner(n, k)};
}

inline std::size_t lattice_index(double t, double dt) {
    return static_cast<std::size_t>(std::ceil(t / dt - 1e-9));
}

/// Shared stepping core: models[s] is active from lattice index starts[s].
/// `on_switch` maps the pre-switch state to the next model's initial state.
template <class InputAt, class OnSwitch>
TimeSeries integrate(const std::vector<const StateSpaceModel*>& models,
                     const std::vector<std::size_t>& starts, Eigen::VectorXd x,
                     std::size_t n_steps, double dt, InputAt&& input_at, OnSwitch&& on_switch) {
    TimeSeries ts;
    std::unordered_map<std::string, std::size_t> idx;
    for (const auto* m : models) {
        for (const auto& o : m->outputs()) {
            if (idx.emplace(o, ts.names.size()).second) ts.names.push_back(o);
        }
    }
    ts.channels.assign(ts.names.size(), {});
    std::vector<Discrete> disc;
    disc.reserve(models.size());
    for (const auto* m : models) disc.push_back(zoh(*m, dt));
    std::vector<std::vector<std::size_t>> out_map(models.size());
    for (std::size_t s = 0; s < models.size(); ++s) {
        for (const auto& o : models[s]->outputs()) out_map[s].push_back(idx.at(o));
    }

    std::size_t seg = 0;
    Eigen::VectorXd y_full(static_cast<Eigen::Index>(ts.names.size()));
    for (std::size_t k = 0; k <= n_steps; ++k) {
        while (seg + 1 < models.size() && starts[seg + 1] <= k) {
            const Eigen::VectorXd u_pre = input_at(seg, k, true);
            x = on_switch(seg, x, u_pre);
            ++seg;
        }
        const StateSpaceModel& m = *models[seg];
        const Eigen::VectorXd u = input_at(seg, k, false);
        const Eigen::VectorXd y = m.c() * x + m.d() * u;
        y_full.setZero();
        for (Eigen::Index i = 0; i < y.size(); ++i) y_full(static_cast<Eigen::Index>(out_map[seg][static_cast<std::size_t>(i)])) = y(i);
        ts.t.push_back(static_cast<double>(k) * dt);
        bool blown = false;
        for (Eigen::Index i = 0; i < y_full.size(); ++i) {
            ts.channels[static_cast<std::size_t>(i)].push_back(y_full(i));
            blown |= !(std::abs(y_full(i)) <= kBlowUpLimit);
        }
        if (blown) {
            ts.halted = true;
            break;
        }
        if (k < n_steps) x = disc[seg].phi * x + disc[seg].gamma * u;
    }
    return ts;
}

inline void check_lattice(double t_end, double dt) {
    if (!(t_end > 0.0)) throw Error("bad-scenario", "t_end must be > 0");
    if (!(dt > 0.0) || dt > 1e-3 * t_end * (1.0 + 1e-12)) {
        throw Error("bad-scenario", "dt must satisfy 0 < dt <= 1e-3 t_end");
    }
}

inline bool apply_structural(TestbenchConfig& cfg, const Event& ev) {
    if (const auto* sb = std::get_if<SwapBranch>(&ev.action)) {
        ImpedanceBranch br = sb->branch;
        if (sb->slot == "z_s_ac") {
            br.side = Side::AC;
            cfg.z_s_ac = br;
        } else if (sb->slot == "z_s_dc") {
            br.side = Side::DC;
            cfg.z_s_dc = br;
        } else if (sb->slot == "z_g_ac") {
            br.side = Side::AC;
            cfg.z_g_ac = br;
        } else if (sb->slot == "z_g_dc") {
            br.side = Side::DC;
            cfg.z_g_dc = br;
        } else {
            throw Error("unknown-signal", "no branch slot '" + sb->slot + "'");
        }
        return true;
    }
    if (const auto* bk = std::get_if<SetBreaker>(&ev.action)) {
        auto& b = cfg.breakers;
        if (bk->name == "cb_s_ac") b.cb_s_ac = bk->closed;
        else if (bk->name == "cb_g_ac") b.cb_g_ac = bk->closed;
        else if (bk->name == "cb_s_dc") b.cb_s_dc = bk->closed;
        else if (bk->name == "cb_g_dc") b.cb_g_dc = bk->closed;
        else throw Error("unknown-signal", "no breaker '" + bk->name + "'");
        return true;
    }
    return false;
}

inline bool starts_with(const std::string& s, const std::string& p) {
    return s.size() >= p.size() && s.compare(0, p.size(), p) == 0;
}

}  // namespace detail

/// Simulates one LTI model from x0 with inputs held piecewise constant:
/// input_steps[k] = (time, full input vector) applied from that time on.
inline TimeSeries simulate_lti(const StateSpaceModel& model, const Eigen::VectorXd& x0,
                               const std::vector<std::pair<double, Eigen::VectorXd>>& input_steps,
                               double t_end, double dt) {
    detail::check_lattice(t_end, dt);
    if (x0.size() != static_cast<Eigen::Index>(model.n_states())) {
        throw Error("bad-dimensions", "x0 size must equal the state count");
    }
    const auto m = static_cast<Eigen::Index>(model.n_inputs());
    std::vector<std::pair<std::size_t, Eigen::VectorXd>> steps;
    for (const auto& [t, u] : input_steps) {
        if (u.size() != m) throw Error("bad-dimensions", "input vector size must equal m");
        steps.emplace_back(detail::lattice_index(t, dt), u);
    }
    const auto n_steps = static_cast<std::size_t>(std::llround(t_end / dt));
    const auto input_at = [&](std::size_t, std::size_t k, bool) {
        Eigen::VectorXd u = Eigen::VectorXd::Zero(m);
        for (const auto& [ks, us] : steps) {
            if (ks <= k) u = us;
        }
        return u;
    };
    const auto no_switch = [](std::size_t, const Eigen::VectorXd& x, const Eigen::VectorXd&) { return x; };
    return detail::integrate({&model}, {0}, x0, n_steps, dt, input_at, no_switch);
}

/// Replays a scenario. All intermediate networks are assembled up front;
/// states carry over by label, a new state takes the pre-switch output of
/// the same label, and states of newly connected devices or of a newly
/// formed bus-G path start at zero deviation.
inline TimeSeries simulate(const Scenario& sc) {
    detail::check_lattice(sc.t_end, sc.dt);
    for (std::size_t e = 0; e < sc.events.size(); ++e) {
        if (!(sc.events[e].t >= 0.0)) throw Error("bad-scenario", "event times must be >= 0");
        if (e > 0 && sc.events[e].t < sc.events[e - 1].t) {
            throw Error("bad-scenario", "events must be sorted by time");
        }
    }
    const double dt = sc.dt;
    const auto n_steps = static_cast<std::size_t>(std::llround(sc.t_end / dt));

    std::vector<NetworkModel> nets;
    std::vector<std::size_t> starts{0};
    nets.push_back(assemble(sc.base));
    TestbenchConfig cfg = sc.base;
    for (std::size_t e = 0; e < sc.events.size(); ++e) {
        if (!detail::apply_structural(cfg, sc.events[e])) continue;
        try {
            nets.push_back(assemble(cfg));
        } catch (const Error& err) {
            throw Error("event-induced-ill-posedness",
                        "event " + std::to_string(e) + " (t = " + std::to_string(sc.events[e].t) +
                            "): " + err.what());
        }
        starts.push_back(detail::lattice_index(sc.events[e].t, dt));
    }
    std::vector<const StateSpaceModel*> models;
    for (const auto& n : nets) models.push_back(&n.realization);

    // Inputs: every network exposes the same source channels.
    const Labels& in_labels = models.front()->inputs();
    std::vector<std::pair<std::size_t, std::pair<std::size_t, double>>> input_events;
    for (const auto& ev : sc.events) {
        if (const auto* si = std::get_if<SetInput>(&ev.action)) {
            const std::size_t ch = models.front()->input_index(si->channel);
            input_events.push_back({detail::lattice_index(ev.t, dt), {ch, si->value}});
        }
    }
    const auto input_at = [&](std::size_t, std::size_t k, bool before_events_at_k) {
        Eigen::VectorXd u = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(in_labels.size()));
        for (const auto& [ks, cv] : input_events) {
            if (ks < k || (ks == k && !before_events_at_k)) u(static_cast<Eigen::Index>(cv.first)) = cv.second;
        }
        return u;
    };

    Labels device_prefixes;
    for (const auto& d : sc.base.devices) device_prefixes.push_back(d.name + ".");
    const auto on_switch = [&](std::size_t seg, const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
        const StateSpaceModel& from = *models[seg];
        const StateSpaceModel& to = *models[seg + 1];
        const Eigen::VectorXd y = from.c() * x + from.d() * u;
        std::unordered_map<std::string, double> known;
        for (std::size_t i = 0; i < from.outputs().size(); ++i) known[from.outputs()[i]] = y(static_cast<Eigen::Index>(i));
        for (std::size_t i = 0; i < from.states().size(); ++i) known[from.states()[i]] = x(static_cast<Eigen::Index>(i));
        Eigen::VectorXd xn = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(to.n_states()));
        for (std::size_t i = 0; i < to.states().size(); ++i) {
            const std::string& l = to.states()[i];
            if (auto it = known.find(l); it != known.end()) {
                xn(static_cast<Eigen::Index>(i)) = it->second;
                continue;
            }
            const bool fresh = std::any_of(device_prefixes.begin(), device_prefixes.end(),
                                           [&](const std::string& p) { return detail::starts_with(l, p); }) ||
                               detail::starts_with(l, "ac.G.") || detail::starts_with(l, "ac.g.") ||
                               detail::starts_with(l, "dc.G.") || detail::starts_with(l, "dc.g.");
            if (!fresh) throw Error("state-carryover-gap", "no pre-switch value for state '" + l + "'");
        }
        return xn;
    };

    Eigen::VectorXd x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(models.front()->n_states()));
    for (const auto& [label, value] : sc.x0) {
        const auto& st = models.front()->states();
        const auto it = std::find(st.begin(), st.end(), label);
        if (it == st.end()) throw Error("unknown-signal", "no state '" + label + "'");
        x(it - st.begin()) = value;
    }
    return detail::integrate(models, starts, x, n_steps, dt, input_at, on_switch);
}

/// Earliest start of three consecutive non-overlapping windows in which some
/// channel's RMS exceeds growth_threshold times its RMS over the preceding
/// window. A halted (blown-up) series is unstable even if no window fires.
inline std::optional<double> detect_instability(const TimeSeries& ts, double window,
                                                double growth_threshold) {
    if (ts.t.size() < 2) throw Error("bad-window", "time series too short");
    const double t0 = ts.t.front();
    const double span = ts.t.back() - t0;
    const double spacing = ts.t[1] - ts.t[0];
    if (!(window > 0.0) || window > span * (1.0 + 1e-12) || window < 2.0 * spacing) {
        throw Error("bad-window", "window must lie in [2 sample spacings, series span]");
    }
    if (!(growth_threshold > 1.0)) throw Error("bad-window", "growth_threshold must be > 1");
    const auto n_win = static_cast<std::size_t>(std::floor(span / window + 1e-9));
    std::optional<double> onset;
    for (const auto& ch : ts.channels) {
        std::vector<double> rms(n_win, 0.0);
        std::vector<std::size_t> cnt(n_win, 0);
        for (std::size_t k = 0; k < ts.t.size(); ++k) {
            const auto w = static_cast<std::size_t>(std::floor((ts.t[k] - t0) / window + 1e-9));
            if (w >= n_win) continue;
            rms[w] += ch[k] * ch[k];
            ++cnt[w];
        }
        for (std::size_t w = 0; w < n_win; ++w) rms[w] = cnt[w] ? std::sqrt(rms[w] / static_cast<double>(cnt[w])) : 0.0;
        int run = 0;
        for (std::size_t w = 1; w < n_win; ++w) {
            const bool grows = rms[w] > growth_threshold * rms[w - 1];
            run = grows ? run + 1 : 0;
            if (run == 3) {
                const double t_on = t0 + static_cast<double>(w - 2) * window;
                if (!onset || t_on < *onset) onset = t_on;
                break;
            }
        }
    }
    if (!onset && ts.halted) onset = ts.t.back();
    return onset;
}

}  // namespace fdjb
