#pragma once

// Admittance-to-Jacobian bridge and frequency-band metrics.

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "fdjb/converter.hpp"
#include "fdjb/error.hpp"
#include "fdjb/lti.hpp"

namespace fdjb {

using Matrix2 = Eigen::Matrix2d;
using CMatrix3 = Eigen::Matrix3cd;

/// Y rows/columns ordered (d, q, dc).
struct AdmittanceSample {
    double omega = 0.0;
    CMatrix3 Y = CMatrix3::Zero();
};

/// J rows (P_ac, Q_ac, P_dc), columns (|v_ac|, theta_ac, v_dc).
struct JacobianSample {
    double omega = 0.0;
    CMatrix3 J = CMatrix3::Zero();
};

struct JacobianResponse {
    FrequencyGrid grid;
    std::vector<JacobianSample> samples;
};

struct BandMetrics {
    double f_lo = 0.0;
    double f_hi = 0.0;
    std::string element;
    double mean_mag = 0.0;
    double mean_phase_dev = 0.0;
    std::size_t n_points = 0;
};

inline const std::array<std::string, 9>& jacobian_element_names() {
    static const std::array<std::string, 9> names{
        "J_pac_vac", "J_pac_th", "J_pac_vdc", "J_qac_vac", "J_qac_th",
        "J_qac_vdc", "J_pdc_vac", "J_pdc_th", "J_pdc_vdc"};
    return names;
}

inline const std::array<std::string, 9>& admittance_element_names() {
    static const std::array<std::string, 9> names{
        "Y_dd", "Y_dq", "Y_d_dc", "Y_qd", "Y_qq", "Y_q_dc", "Y_dc_d", "Y_dc_q", "Y_dc_dc"};
    return names;
}

/// Row-major index of a named J element; throws "unknown-element".
inline std::pair<int, int> jacobian_element_index(const std::string& name) {
    const auto& names = jacobian_element_names();
    for (int k = 0; k < 9; ++k) {
        if (names[static_cast<std::size_t>(k)] == name) return {k / 3, k % 3};
    }
    throw Error("unknown-element", "no Jacobian element '" + name + "'");
}

/// Maps (d|v_ac|, d theta_ac) to (dv_d, dv_q).
inline Matrix2 polar_transform(const OperatingPoint& op) {
    const double v0 = op.v_mag();
    if (!(v0 > 0.0)) throw Error("degenerate-operating-point", "|v_ac| must be > 0");
    const double c = op.v_d0 / v0;
    const double s = op.v_q0 / v0;
    Matrix2 t;
    t << c, -v0 * s, s, v0 * c;
    return t;
}

inline JacobianSample bridge(const AdmittanceSample& ys, const OperatingPoint& op) {
    const Eigen::Matrix2cd t = polar_transform(op).cast<Complex>();
    const auto& y = ys.Y;
    const Eigen::Matrix2cd y_ac = y.topLeftCorner<2, 2>();
    const Eigen::RowVector2cd v_row(op.v_d0, op.v_q0);
    const Eigen::RowVector2cd i_row(op.i_d0, op.i_q0);
    const Eigen::RowVector2cd vq_row(op.v_q0, -op.v_d0);
    const Eigen::RowVector2cd iq_row(-op.i_q0, op.i_d0);

    JacobianSample js;
    js.omega = ys.omega;
    js.J.block<1, 2>(0, 0) = (v_row * y_ac + i_row) * t;
    js.J(0, 2) = op.v_d0 * y(0, 2) + op.v_q0 * y(1, 2);
    js.J.block<1, 2>(1, 0) = (vq_row * y_ac + iq_row) * t;
    js.J(1, 2) = -op.v_d0 * y(1, 2) + op.v_q0 * y(0, 2);
    js.J.block<1, 2>(2, 0) = op.v_dc0 * y.block<1, 2>(2, 0) * t;
    js.J(2, 2) = op.v_dc0 * y(2, 2) + op.i_dc0;
    return js;
}

/// Admittance samples of a device over a grid.
inline std::vector<AdmittanceSample> sweep_admittance(const ConverterModel& model,
                                                      const FrequencyGrid& grid) {
    const FrequencyResponse fr = freq_response(model.realization(), grid);
    std::vector<AdmittanceSample> out(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) {
        out[k].omega = grid.omega(k);
        out[k].Y = fr.samples[k];
    }
    return out;
}

inline JacobianResponse sweep_jacobian(const ConverterModel& model, const FrequencyGrid& grid) {
    JacobianResponse jr{grid, {}};
    jr.samples.reserve(grid.size());
    for (const auto& ys : sweep_admittance(model, grid)) jr.samples.push_back(bridge(ys, model.op()));
    return jr;
}

/// Principal-value phase in degrees, (-180, 180].
inline double phase_deg(const Complex& z) {
    double p = std::arg(z) * 180.0 / kPi;
    if (p <= -180.0) p += 360.0;
    return p;
}

/// |phase - 180 deg| wrapped to [0, 180].
inline double phase_deviation_from_180(const Complex& z) {
    double d = phase_deg(z) - 180.0;  // (-360, 0]
    if (d <= -180.0) d += 360.0;
    return std::abs(d);
}

/// Log-frequency trapezoidal averages over grid points in [f_lo, f_hi]
/// (inclusive edges).
inline BandMetrics band_metrics(const JacobianResponse& jr, const std::string& element,
                                double f_lo, double f_hi) {
    const auto [r, c] = jacobian_element_index(element);
    if (!(f_lo < f_hi)) throw Error("empty-band", "band requires f_lo < f_hi");
    constexpr double slack = 1e-9;
    std::vector<double> lw, mag, dev;
    for (std::size_t k = 0; k < jr.grid.size(); ++k) {
        const double f = jr.grid.hz(k);
        if (f < f_lo * (1.0 - slack) || f > f_hi * (1.0 + slack)) continue;
        const Complex z = jr.samples[k].J(r, c);
        lw.push_back(std::log(jr.grid.omega(k)));
        mag.push_back(std::abs(z));
        dev.push_back(phase_deviation_from_180(z));
    }
    if (lw.size() < 2) {
        throw Error("empty-band", "fewer than 2 grid points in [" + std::to_string(f_lo) + ", " +
                                      std::to_string(f_hi) + "] Hz");
    }
    double im = 0.0, ip = 0.0;
    for (std::size_t k = 1; k < lw.size(); ++k) {
        const double h = lw[k] - lw[k - 1];
        im += 0.5 * h * (mag[k] + mag[k - 1]);
        ip += 0.5 * h * (dev[k] + dev[k - 1]);
    }
    const double span = lw.back() - lw.front();
    BandMetrics bm;
    bm.f_lo = f_lo;
    bm.f_hi = f_hi;
    bm.element = element;
    bm.mean_mag = im / span;
    bm.mean_phase_dev = std::clamp(ip / span, 0.0, 180.0);
    bm.n_points = lw.size();
    return bm;
}

}  // namespace fdjb
