#pragma once

// Linear time-invariant machinery shared by every other module: labeled
// state-space models, frequency response, eigenvalues and label-based
// interconnection.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "fdjb/error.hpp"

namespace fdjb {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXd;
using CMatrix = Eigen::MatrixXcd;
using Labels = std::vector<std::string>;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

namespace detail {

inline void require_unique(const Labels& labels, const char* what) {
    std::unordered_set<std::string> seen;
    for (const auto& l : labels) {
        if (!seen.insert(l).second) {
            throw Error("duplicate-label", std::string(what) + " label '" + l + "' repeated");
        }
    }
}

inline std::optional<std::size_t> find_label(const Labels& labels, const std::string& name) {
    auto it = std::find(labels.begin(), labels.end(), name);
    if (it == labels.end()) return std::nullopt;
    return static_cast<std::size_t>(it - labels.begin());
}

}  // namespace detail

/// Real-matrix LTI realization x' = Ax + Bu, y = Cx + Du with labeled
/// inputs, outputs and states. Immutable after construction.
class StateSpaceModel {
public:
    StateSpaceModel(Matrix a, Matrix b, Matrix c, Matrix d, Labels inputs, Labels outputs,
                    Labels states = {})
        : a_(std::move(a)), b_(std::move(b)), c_(std::move(c)), d_(std::move(d)),
          inputs_(std::move(inputs)), outputs_(std::move(outputs)), states_(std::move(states)) {
        const auto n = a_.rows();
        if (a_.cols() != n) throw Error("bad-dimensions", "A must be square");
        if (b_.rows() != n) throw Error("bad-dimensions", "B must have n rows");
        if (c_.cols() != n) throw Error("bad-dimensions", "C must have n columns");
        if (d_.rows() != c_.rows() || d_.cols() != b_.cols()) {
            throw Error("bad-dimensions", "D must be p x m");
        }
        if (static_cast<Eigen::Index>(inputs_.size()) != b_.cols()) {
            throw Error("bad-dimensions", "input label count must equal m");
        }
        if (static_cast<Eigen::Index>(outputs_.size()) != c_.rows()) {
            throw Error("bad-dimensions", "output label count must equal p");
        }
        if (states_.empty()) {
            for (Eigen::Index i = 0; i < n; ++i) states_.push_back("x" + std::to_string(i));
        } else if (static_cast<Eigen::Index>(states_.size()) != n) {
            throw Error("bad-dimensions", "state label count must equal n");
        }
        detail::require_unique(inputs_, "input");
        detail::require_unique(outputs_, "output");
        detail::require_unique(states_, "state");
    }

    /// Memoryless block y = D u.
    static StateSpaceModel static_gain(Matrix d, Labels inputs, Labels outputs) {
        const auto p = d.rows();
        const auto m = d.cols();
        return StateSpaceModel(Matrix(0, 0), Matrix(0, m), Matrix(p, 0), std::move(d),
                               std::move(inputs), std::move(outputs));
    }

    [[nodiscard]] const Matrix& a() const noexcept { return a_; }
    [[nodiscard]] const Matrix& b() const noexcept { return b_; }
    [[nodiscard]] const Matrix& c() const noexcept { return c_; }
    [[nodiscard]] const Matrix& d() const noexcept { return d_; }
    [[nodiscard]] const Labels& inputs() const noexcept { return inputs_; }
    [[nodiscard]] const Labels& outputs() const noexcept { return outputs_; }
    [[nodiscard]] const Labels& states() const noexcept { return states_; }

    [[nodiscard]] std::size_t n_states() const noexcept { return states_.size(); }
    [[nodiscard]] std::size_t n_inputs() const noexcept { return inputs_.size(); }
    [[nodiscard]] std::size_t n_outputs() const noexcept { return outputs_.size(); }

    [[nodiscard]] std::size_t input_index(const std::string& label) const {
        if (auto i = detail::find_label(inputs_, label)) return *i;
        throw Error("unknown-signal", "no input '" + label + "'");
    }
    [[nodiscard]] std::size_t output_index(const std::string& label) const {
        if (auto i = detail::find_label(outputs_, label)) return *i;
        throw Error("unknown-signal", "no output '" + label + "'");
    }

private:
    Matrix a_, b_, c_, d_;
    Labels inputs_, outputs_, states_;
};

/// Strictly increasing, positive angular frequencies (rad/s).
class FrequencyGrid {
public:
    explicit FrequencyGrid(std::vector<double> omegas) : omegas_(std::move(omegas)) {
        if (omegas_.empty()) throw Error("bad-grid", "empty frequency grid");
        for (std::size_t k = 0; k < omegas_.size(); ++k) {
            if (!(omegas_[k] > 0.0) || !std::isfinite(omegas_[k])) {
                throw Error("bad-grid", "grid entries must be finite and > 0");
            }
            if (k > 0 && !(omegas_[k] > omegas_[k - 1])) {
                throw Error("bad-grid", "grid must be strictly increasing");
            }
        }
    }

    /// n logarithmically spaced points from f_min to f_max (Hz, inclusive).
    static FrequencyGrid log_hz(double f_min, double f_max, std::size_t n) {
        if (n < 2 || !(f_min > 0.0) || !(f_max > f_min)) {
            throw Error("bad-grid", "log grid needs n >= 2 and 0 < f_min < f_max");
        }
        std::vector<double> w(n);
        const double l0 = std::log10(f_min);
        const double l1 = std::log10(f_max);
        for (std::size_t k = 0; k < n; ++k) {
            const double t = static_cast<double>(k) / static_cast<double>(n - 1);
            w[k] = kTwoPi * std::pow(10.0, l0 + t * (l1 - l0));
        }
        w.front() = kTwoPi * f_min;
        w.back() = kTwoPi * f_max;
        return FrequencyGrid(std::move(w));
    }

    [[nodiscard]] const std::vector<double>& omegas() const noexcept { return omegas_; }
    [[nodiscard]] std::size_t size() const noexcept { return omegas_.size(); }
    [[nodiscard]] double omega(std::size_t k) const { return omegas_.at(k); }
    [[nodiscard]] double hz(std::size_t k) const { return omegas_.at(k) / kTwoPi; }

    bool operator==(const FrequencyGrid&) const = default;

private:
    std::vector<double> omegas_;
};

/// Default analysis grid: 400 log-spaced points, 0.01 Hz to 1 kHz.
inline FrequencyGrid default_grid() { return FrequencyGrid::log_hz(0.01, 1000.0, 400); }

struct FrequencyResponse {
    FrequencyGrid grid;
    std::vector<CMatrix> samples;
    Labels input_labels;
    Labels output_labels;
};

/// Samples C (jwI - A)^-1 B + D at every grid point via a complex LU of
/// (jwI - A). Throws "resonant-grid-point" when the resolvent is singular.
inline FrequencyResponse freq_response(const StateSpaceModel& model, const FrequencyGrid& grid) {
    FrequencyResponse out{grid, {}, model.inputs(), model.outputs()};
    out.samples.reserve(grid.size());
    const auto n = static_cast<Eigen::Index>(model.n_states());
    const CMatrix a = model.a().cast<Complex>();
    const CMatrix b = model.b().cast<Complex>();
    const CMatrix c = model.c().cast<Complex>();
    const CMatrix d = model.d().cast<Complex>();
    for (double w : grid.omegas()) {
        if (n == 0) {
            out.samples.push_back(d);
            continue;
        }
        CMatrix m = -a;
        m.diagonal().array() += Complex(0.0, w);
        Eigen::PartialPivLU<CMatrix> lu(m);
        if (!(lu.rcond() > 1e-12)) {
            throw Error("resonant-grid-point",
                        "jwI - A singular at w = " + std::to_string(w) + " rad/s");
        }
        out.samples.push_back(c * lu.solve(b) + d);
    }
    return out;
}

/// -C A^-1 B + D; requires A nonsingular.
inline Matrix dc_gain(const StateSpaceModel& model) {
    if (model.n_states() == 0) return model.d();
    Eigen::PartialPivLU<Matrix> lu(model.a());
    if (!(lu.rcond() > 1e-14)) throw Error("singular-dc-gain", "A is singular");
    return -model.c() * lu.solve(model.b()) + model.d();
}

struct EigenSet {
    std::vector<Complex> values;

    [[nodiscard]] double abscissa() const {
        double m = -std::numeric_limits<double>::infinity();
        for (const auto& v : values) m = std::max(m, v.real());
        return m;
    }
};

namespace detail {

/// Diagonal similarity scaling by powers of two so row and column norms
/// are comparable (Parlett-Reinsch). Eigenvalues are unchanged.
inline Matrix balance(Matrix m) {
    constexpr double radix = 2.0;
    constexpr double sqrdx = radix * radix;
    const auto n = m.rows();
    bool done = false;
    while (!done) {
        done = true;
        for (Eigen::Index i = 0; i < n; ++i) {
            double r = 0.0;
            double c = 0.0;
            for (Eigen::Index j = 0; j < n; ++j) {
                if (j == i) continue;
                c += std::abs(m(j, i));
                r += std::abs(m(i, j));
            }
            if (c == 0.0 || r == 0.0) continue;
            double g = r / radix;
            double f = 1.0;
            const double s = c + r;
            while (c < g) {
                f *= radix;
                c *= sqrdx;
            }
            g = r * radix;
            while (c > g) {
                f /= radix;
                c /= sqrdx;
            }
            if ((c + r) / f < 0.95 * s) {
                done = false;
                m.row(i) /= f;
                m.col(i) *= f;
            }
        }
    }
    return m;
}

}  // namespace detail

/// Eigenvalues of a real square matrix: balancing followed by Hessenberg
/// reduction and implicitly shifted (Francis) QR, capped at 30 n sweeps.
/// Sorted by real part descending, then imaginary part descending.
inline EigenSet eigenvalues(const Matrix& m) {
    if (m.rows() != m.cols()) throw Error("bad-dimensions", "eigenvalues of non-square matrix");
    if (!m.allFinite()) throw Error("non-finite", "matrix has non-finite entries");
    EigenSet out;
    const auto n = m.rows();
    if (n == 0) return out;
    Eigen::EigenSolver<Matrix> solver;
    solver.setMaxIterations(static_cast<Eigen::Index>(30) * n);
    solver.compute(detail::balance(m), false);
    if (solver.info() != Eigen::Success) {
        throw Error("eigen-noconverge", "QR iteration cap reached for n = " + std::to_string(n));
    }
    const auto ev = solver.eigenvalues();
    out.values.assign(ev.data(), ev.data() + ev.size());
    std::sort(out.values.begin(), out.values.end(), [](const Complex& x, const Complex& y) {
        if (x.real() != y.real()) return x.real() > y.real();
        return x.imag() > y.imag();
    });
    return out;
}

/// One wire: `from` (a subsystem output or an external input) is scaled
/// by `gain` and summed into subsystem input `to`.
struct Connection {
    std::string from;
    std::string to;
    double gain = 1.0;
};

/// Closes label-based wiring among subsystems. Subsystem inputs are driven
/// by the sum of their incoming connections; an external input that names a
/// subsystem input drives it directly. Algebraic loops are eliminated
/// exactly through (I - D M)^-1, which must have condition number <= 1e12.
inline StateSpaceModel interconnect(const std::vector<StateSpaceModel>& subsystems,
                                    const std::vector<Connection>& connections,
                                    const Labels& external_inputs,
                                    const Labels& external_outputs) {
    Eigen::Index n = 0;
    Eigen::Index m = 0;
    Eigen::Index p = 0;
    for (const auto& s : subsystems) {
        n += static_cast<Eigen::Index>(s.n_states());
        m += static_cast<Eigen::Index>(s.n_inputs());
        p += static_cast<Eigen::Index>(s.n_outputs());
    }
    Matrix a = Matrix::Zero(n, n);
    Matrix b = Matrix::Zero(n, m);
    Matrix c = Matrix::Zero(p, n);
    Matrix d = Matrix::Zero(p, m);
    Labels all_inputs, all_outputs, all_states;
    {
        Eigen::Index xo = 0, uo = 0, yo = 0;
        for (const auto& s : subsystems) {
            const auto sn = static_cast<Eigen::Index>(s.n_states());
            const auto sm = static_cast<Eigen::Index>(s.n_inputs());
            const auto sp = static_cast<Eigen::Index>(s.n_outputs());
            a.block(xo, xo, sn, sn) = s.a();
            b.block(xo, uo, sn, sm) = s.b();
            c.block(yo, xo, sp, sn) = s.c();
            d.block(yo, uo, sp, sm) = s.d();
            all_inputs.insert(all_inputs.end(), s.inputs().begin(), s.inputs().end());
            all_outputs.insert(all_outputs.end(), s.outputs().begin(), s.outputs().end());
            all_states.insert(all_states.end(), s.states().begin(), s.states().end());
            xo += sn;
            uo += sm;
            yo += sp;
        }
    }
    detail::require_unique(all_inputs, "subsystem input");
    detail::require_unique(all_outputs, "subsystem output");
    detail::require_unique(all_states, "subsystem state");
    detail::require_unique(external_inputs, "external input");
    detail::require_unique(external_outputs, "external output");

    std::unordered_map<std::string, Eigen::Index> in_idx, out_idx, ext_idx;
    for (Eigen::Index i = 0; i < m; ++i) in_idx[all_inputs[static_cast<std::size_t>(i)]] = i;
    for (Eigen::Index i = 0; i < p; ++i) out_idx[all_outputs[static_cast<std::size_t>(i)]] = i;
    const auto w = static_cast<Eigen::Index>(external_inputs.size());
    for (Eigen::Index i = 0; i < w; ++i) ext_idx[external_inputs[static_cast<std::size_t>(i)]] = i;

    Matrix mconn = Matrix::Zero(m, p);  // u <- y
    Matrix econn = Matrix::Zero(m, w);  // u <- external
    for (Eigen::Index i = 0; i < w; ++i) {
        const auto& l = external_inputs[static_cast<std::size_t>(i)];
        if (auto it = in_idx.find(l); it != in_idx.end()) econn(it->second, i) += 1.0;
    }
    for (const auto& cn : connections) {
        auto to = in_idx.find(cn.to);
        if (to == in_idx.end()) throw Error("unknown-signal", "no subsystem input '" + cn.to + "'");
        if (auto fo = out_idx.find(cn.from); fo != out_idx.end()) {
            mconn(to->second, fo->second) += cn.gain;
        } else if (auto fe = ext_idx.find(cn.from); fe != ext_idx.end()) {
            econn(to->second, fe->second) += cn.gain;
        } else {
            throw Error("unknown-signal", "no output or external input '" + cn.from + "'");
        }
    }
    for (const auto& l : external_inputs) {
        if (in_idx.count(l) == 0) {
            const bool used = std::any_of(connections.begin(), connections.end(),
                                          [&](const Connection& cn) { return cn.from == l; });
            if (!used) throw Error("unknown-signal", "external input '" + l + "' drives nothing");
        }
    }

    // y = F (C x + D E w), F = (I - D M)^-1
    Matrix f = Matrix::Identity(p, p);
    if (p > 0) {
        const Matrix loop = Matrix::Identity(p, p) - d * mconn;
        Eigen::JacobiSVD<Matrix> svd(loop);
        const auto& sv = svd.singularValues();
        const double smax = sv(0);
        const double smin = sv(sv.size() - 1);
        if (!(smin > 0.0) || smax / smin > 1e12) {
            throw Error("ill-posed-interconnection", "I - D_loop is singular or ill-conditioned");
        }
        f = loop.partialPivLu().solve(Matrix::Identity(p, p));
    }
    const Matrix yx = f * c;
    const Matrix yw = f * d * econn;
    const Matrix ux = mconn * yx;
    const Matrix uw = mconn * yw + econn;

    Matrix sel = Matrix::Zero(static_cast<Eigen::Index>(external_outputs.size()), p);
    for (std::size_t k = 0; k < external_outputs.size(); ++k) {
        auto it = out_idx.find(external_outputs[k]);
        if (it == out_idx.end()) {
            throw Error("unknown-signal", "no subsystem output '" + external_outputs[k] + "'");
        }
        sel(static_cast<Eigen::Index>(k), it->second) = 1.0;
    }
    return StateSpaceModel(a + b * ux, b * uw, sel * yx, sel * yw, external_inputs,
                           external_outputs, all_states);
}

}  // namespace fdjb
