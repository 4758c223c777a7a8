#pragma once

// Averaged converter models linearized around a solved operating point.
// Every device is a 3x3 admittance (dv_d, dv_q, dv_dc) -> (di_d, di_q, di_dc)
// with currents and powers directed out of the converter.

#include <cmath>
#include <complex>
#include <string>
#include <utility>

#include "fdjb/error.hpp"
#include "fdjb/lti.hpp"

namespace fdjb {

inline constexpr double kOmegaBase = kTwoPi * 50.0;

inline const Labels& device_input_labels() {
    static const Labels l{"dv_d", "dv_q", "dv_dc"};
    return l;
}
inline const Labels& device_output_labels() {
    static const Labels l{"di_d", "di_q", "di_dc"};
    return l;
}

struct OperatingPoint {
    double v_d0 = 1.0;
    double v_q0 = 0.0;
    double i_d0 = 0.0;
    double i_q0 = 0.0;
    double v_dc0 = 1.0;
    double i_dc0 = 0.0;
    double theta0 = 0.0;

    [[nodiscard]] double v_mag() const { return std::hypot(v_d0, v_q0); }
    [[nodiscard]] Complex v() const { return {v_d0, v_q0}; }
    [[nodiscard]] Complex i() const { return {i_d0, i_q0}; }
    [[nodiscard]] double p_ac() const { return v_d0 * i_d0 + v_q0 * i_q0; }
    [[nodiscard]] double q_ac() const { return v_q0 * i_d0 - v_d0 * i_q0; }
    [[nodiscard]] double p_dc() const { return v_dc0 * i_dc0; }

    bool operator==(const OperatingPoint&) const = default;
};

/// Throws "degenerate-operating-point" unless V0 > 0, v_dc0 > 0 and the
/// AC and DC powers cancel to 1e-9.
inline void validate_operating_point(const OperatingPoint& op) {
    if (!(op.v_mag() > 0.0)) throw Error("degenerate-operating-point", "|v_ac| must be > 0");
    if (!(op.v_dc0 > 0.0)) throw Error("degenerate-operating-point", "v_dc must be > 0");
    if (std::abs(op.p_ac() + op.p_dc()) > 1e-9) {
        throw Error("degenerate-operating-point", "AC and DC powers do not balance");
    }
}

inline OperatingPoint solve_operating_point(double p_ac0, double q_ac0, double v_ac0, double theta0,
                                            double v_dc0) {
    if (!(v_ac0 > 0.0)) throw Error("degenerate-operating-point", "V_ac0 must be > 0");
    if (!(v_dc0 > 0.0)) throw Error("degenerate-operating-point", "V_dc0 must be > 0");
    const Complex v = std::polar(v_ac0, theta0);
    // S = v conj(i)
    const Complex i = std::conj(Complex(p_ac0, q_ac0) / v);
    OperatingPoint op;
    op.v_d0 = v.real();
    op.v_q0 = v.imag();
    op.i_d0 = i.real();
    op.i_q0 = i.imag();
    op.v_dc0 = v_dc0;
    op.i_dc0 = -p_ac0 / v_dc0;
    op.theta0 = theta0;
    return op;
}

/// Virtual synchronous machine: swing equation on the measured active
/// power, first-order reactive droop on the EMF magnitude, quasi-static
/// virtual impedance producing the current reference, and a PI current
/// loop on the L_f filter. The measured voltage is low-pass filtered with
/// time constant tau_v before it enters the controller.
struct GfmVsmParams {
    double J_v = 4.0;
    double D_p = 100.0;
    double K_q = 0.1;
    double tau_q = 0.02;
    double L_v = 0.075;
    double R_v = 0.0;
    double L_f = 0.15;
    double R_f = 0.005;
    double kp_cc = 0.7;
    double ki_cc = 50.0;
    double tau_v = 0.005;
    double C_dc = 0.1;
    double omega_b = kOmegaBase;

    bool operator==(const GfmVsmParams&) const = default;
};

/// Grid-following converter: SRF-PLL, PI current control, active-current
/// reference from the power setpoint plus DC-voltage droop.
struct GflParams {
    double kp_pll = 0.5;
    double ki_pll = 20.0;
    double kp_cc = 0.7;
    double ki_cc = 50.0;
    double K_d_dc = 0.0;
    double L_f = 0.15;
    double R_f = 0.005;
    double C_dc = 0.1;
    double omega_b = kOmegaBase;

    bool operator==(const GflParams&) const = default;
};

/// A device admittance realization with its operating point. c_dc is the
/// DC-link capacitance the testbench places on the device's DC node.
class ConverterModel {
public:
    ConverterModel(StateSpaceModel realization, OperatingPoint op, double c_dc = 0.0,
                   std::string kind = "custom")
        : realization_(std::move(realization)), op_(op), c_dc_(c_dc), kind_(std::move(kind)) {
        if (realization_.inputs() != device_input_labels() ||
            realization_.outputs() != device_output_labels()) {
            throw Error("bad-device", "device labels must be (dv_d, dv_q, dv_dc) -> (di_d, di_q, di_dc)");
        }
        if (!(op_.v_mag() > 0.0) || !(op_.v_dc0 > 0.0)) {
            throw Error("degenerate-operating-point", "device operating voltage must be > 0");
        }
        if (c_dc_ < 0.0) throw Error("bad-device", "C_dc must be >= 0");
    }

    [[nodiscard]] const StateSpaceModel& realization() const noexcept { return realization_; }
    [[nodiscard]] const OperatingPoint& op() const noexcept { return op_; }
    [[nodiscard]] double c_dc() const noexcept { return c_dc_; }
    [[nodiscard]] const std::string& kind() const noexcept { return kind_; }

    /// Copy with state labels prefixed, for embedding in a larger network.
    [[nodiscard]] StateSpaceModel prefixed(const std::string& prefix) const {
        Labels in, out, st;
        for (const auto& l : realization_.inputs()) in.push_back(prefix + l);
        for (const auto& l : realization_.outputs()) out.push_back(prefix + l);
        for (const auto& l : realization_.states()) st.push_back(prefix + l);
        return StateSpaceModel(realization_.a(), realization_.b(), realization_.c(),
                               realization_.d(), in, out, st);
    }

private:
    StateSpaceModel realization_;
    OperatingPoint op_;
    double c_dc_;
    std::string kind_;
};

namespace detail {

/// Complex-valued linear form in the state and input perturbations:
/// Re = xr.dx + ur.du, Im = xi.dx + ui.du.
struct Lin {
    Eigen::RowVectorXd xr, xi, ur, ui;

    static Lin zero(Eigen::Index n, Eigen::Index m) {
        return {Eigen::RowVectorXd::Zero(n), Eigen::RowVectorXd::Zero(n),
                Eigen::RowVectorXd::Zero(m), Eigen::RowVectorXd::Zero(m)};
    }
    static Lin state_pair(Eigen::Index n, Eigen::Index m, Eigen::Index re, Eigen::Index im) {
        Lin l = zero(n, m);
        l.xr(re) = 1.0;
        l.xi(im) = 1.0;
        return l;
    }
    static Lin input_pair(Eigen::Index n, Eigen::Index m, Eigen::Index re, Eigen::Index im) {
        Lin l = zero(n, m);
        l.ur(re) = 1.0;
        l.ui(im) = 1.0;
        return l;
    }

    friend Lin operator+(Lin a, const Lin& b) {
        a.xr += b.xr;
        a.xi += b.xi;
        a.ur += b.ur;
        a.ui += b.ui;
        return a;
    }
    friend Lin operator-(Lin a, const Lin& b) {
        a.xr -= b.xr;
        a.xi -= b.xi;
        a.ur -= b.ur;
        a.ui -= b.ui;
        return a;
    }
    friend Lin operator*(const Complex& w, const Lin& a) {
        return {w.real() * a.xr - w.imag() * a.xi, w.imag() * a.xr + w.real() * a.xi,
                w.real() * a.ur - w.imag() * a.ui, w.imag() * a.ur + w.real() * a.ui};
    }

    /// Adds c * dx_k to the complex value.
    Lin& add_state(Eigen::Index k, const Complex& c) {
        xr(k) += c.real();
        xi(k) += c.imag();
        return *this;
    }
};

/// Perturbation of x^c = x * e^{-j phi} with phi = phi0 + d_phi (state k):
/// e^{-j phi0} dx - j x^c_0 d_phi.
inline Lin to_rotating(const Lin& dx, const Complex& xc0, double phi0, Eigen::Index phi_state) {
    Lin l = std::polar(1.0, -phi0) * dx;
    l.add_state(phi_state, Complex(0.0, -1.0) * xc0);
    return l;
}

/// Perturbation of x^c * e^{j phi}: e^{j phi0} (dx^c + j x0^c d_phi).
inline Lin from_rotating(const Lin& dxc, const Complex& xc0, double phi0, Eigen::Index phi_state) {
    Lin l = dxc;
    l.add_state(phi_state, Complex(0.0, 1.0) * xc0);
    return std::polar(1.0, phi0) * l;
}

/// Filter current rows: L/w_b di/dt = u - v - R i - j L i (global frame).
inline void filter_rows(Matrix& a, Matrix& b, const Lin& u, Eigen::Index id, Eigen::Index iq,
                        double l_f, double r_f, double omega_b) {
    const double k = omega_b / l_f;
    a.row(id) = k * u.xr;
    a(id, id) -= k * r_f;
    a(id, iq) += omega_b;
    b.row(id) = k * u.ur;
    b(id, 0) -= k;
    a.row(iq) = k * u.xi;
    a(iq, iq) -= k * r_f;
    a(iq, id) -= omega_b;
    b.row(iq) = k * u.ui;
    b(iq, 1) -= k;
}

/// Output rows shared by all averaged devices: terminal currents are the
/// filter states; the DC port is lossless, P_dc = -P_ac instantaneously,
/// so di_dc = (-dP_ac - i_dc0 dv_dc) / v_dc0.
inline void output_rows(Matrix& c, Matrix& d, const OperatingPoint& op, Eigen::Index id,
                        Eigen::Index iq) {
    c.row(0).setZero();
    c.row(1).setZero();
    c(0, id) = 1.0;
    c(1, iq) = 1.0;
    c.row(2).setZero();
    c(2, id) = -op.v_d0 / op.v_dc0;
    c(2, iq) = -op.v_q0 / op.v_dc0;
    d.setZero();
    d(2, 0) = -op.i_d0 / op.v_dc0;
    d(2, 1) = -op.i_q0 / op.v_dc0;
    d(2, 2) = -op.i_dc0 / op.v_dc0;
}

inline void require_standalone_stable(const Matrix& a, const char* kind) {
    const double abscissa = eigenvalues(a).abscissa();
    if (!(abscissa < 0.0)) {
        throw Error("unstable-device", std::string(kind) +
                                           " is not stable against ideal sources (abscissa " +
                                           std::to_string(abscissa) + ")");
    }
}

}  // namespace detail

inline void validate(const GfmVsmParams& p) {
    const bool ok = p.J_v > 0 && p.D_p > 0 && p.K_q > 0 && p.tau_q > 0 && p.L_v > 0 &&
                    p.R_v >= 0 && p.L_f > 0 && p.R_f >= 0 && p.kp_cc > 0 && p.ki_cc > 0 &&
                    p.tau_v > 0 && p.C_dc > 0 && p.omega_b > 0;
    if (!ok) throw Error("bad-parameter", "GFM parameters must be > 0 (R_v, R_f >= 0)");
}

inline void validate(const GflParams& p) {
    const bool ok = p.kp_pll >= 0 && p.ki_pll >= 0 && p.kp_cc >= 0 && p.ki_cc >= 0 &&
                    p.K_d_dc >= 0 && p.L_f > 0 && p.R_f >= 0 && p.C_dc > 0 && p.omega_b > 0;
    if (!ok) throw Error("bad-parameter", "GFL gains must be >= 0; L_f, C_dc, omega_b > 0");
}

/// States: delta, omega, E, x_d, x_q (current-loop integrators, VSM frame),
/// i_d, i_q (filter current), vf_d, vf_q (filtered terminal voltage).
inline ConverterModel build_gfm_vsm(const GfmVsmParams& p, const OperatingPoint& op) {
    validate(p);
    validate_operating_point(op);
    using detail::Lin;
    constexpr Eigen::Index n = 9, m = 3;
    enum : Eigen::Index { kDelta, kOmega, kE, kXd, kXq, kId, kIq, kVfd, kVfq };

    const Complex v0 = op.v();
    const Complex i0 = op.i();
    const Complex zv(p.R_v, p.L_v);
    const Complex e0 = v0 + zv * i0;
    const double delta0 = std::arg(e0);
    const Complex rot0 = std::polar(1.0, -delta0);
    const Complex vc0 = v0 * rot0;
    const Complex ic0 = i0 * rot0;
    const Complex uc0 = vc0 + Complex(p.R_f, p.L_f) * ic0;

    const Lin vf_c = detail::to_rotating(Lin::state_pair(n, m, kVfd, kVfq), vc0, delta0, kDelta);
    const Lin i_c = detail::to_rotating(Lin::state_pair(n, m, kId, kIq), ic0, delta0, kDelta);
    Lin de = Lin::zero(n, m);
    de.xr(kE) = 1.0;
    const Lin i_ref = (1.0 / zv) * (de - vf_c);
    const Lin err = i_ref - i_c;
    Lin uc = p.kp_cc * Complex(1.0, 0.0) * err + Lin::state_pair(n, m, kXd, kXq) + vf_c +
             Complex(0.0, p.L_f) * i_c;
    const Lin u = detail::from_rotating(uc, uc0, delta0, kDelta);

    Matrix a = Matrix::Zero(n, n);
    Matrix b = Matrix::Zero(n, m);
    // P_ac = v.i, Q_ac = Im(v conj i), linearized
    Eigen::RowVectorXd p_x = Eigen::RowVectorXd::Zero(n), q_x = Eigen::RowVectorXd::Zero(n);
    p_x(kId) = op.v_d0;
    p_x(kIq) = op.v_q0;
    q_x(kId) = op.v_q0;
    q_x(kIq) = -op.v_d0;
    Eigen::RowVector3d p_u(op.i_d0, op.i_q0, 0.0), q_u(-op.i_q0, op.i_d0, 0.0);

    a(kDelta, kOmega) = p.omega_b;
    a.row(kOmega) = -p_x / p.J_v;
    a(kOmega, kOmega) -= p.D_p / p.J_v;
    b.row(kOmega) = -p_u / p.J_v;
    a.row(kE) = -p.K_q * q_x / p.tau_q;
    a(kE, kE) -= 1.0 / p.tau_q;
    b.row(kE) = -p.K_q * q_u / p.tau_q;
    a.row(kXd) = p.ki_cc * err.xr;
    b.row(kXd) = p.ki_cc * err.ur;
    a.row(kXq) = p.ki_cc * err.xi;
    b.row(kXq) = p.ki_cc * err.ui;
    detail::filter_rows(a, b, u, kId, kIq, p.L_f, p.R_f, p.omega_b);
    a(kVfd, kVfd) = -1.0 / p.tau_v;
    b(kVfd, 0) = 1.0 / p.tau_v;
    a(kVfq, kVfq) = -1.0 / p.tau_v;
    b(kVfq, 1) = 1.0 / p.tau_v;

    Matrix c = Matrix::Zero(3, n);
    Matrix d = Matrix::Zero(3, 3);
    detail::output_rows(c, d, op, kId, kIq);
    detail::require_standalone_stable(a, "GFM VSM");
    StateSpaceModel ss(a, b, c, d, device_input_labels(), device_output_labels(),
                       {"delta", "omega", "E", "x_d", "x_q", "i_d", "i_q", "vf_d", "vf_q"});
    return ConverterModel(std::move(ss), op, p.C_dc, "gfm-vsm");
}

/// States: theta_pll, x_pll, x_d, x_q (current-loop integrators, PLL frame),
/// i_d, i_q (filter current).
inline ConverterModel build_gfl(const GflParams& p, const OperatingPoint& op) {
    validate(p);
    validate_operating_point(op);
    using detail::Lin;
    constexpr Eigen::Index n = 6, m = 3;
    enum : Eigen::Index { kTheta, kXpll, kXd, kXq, kId, kIq };

    const double th0 = op.theta0;
    const Complex rot0 = std::polar(1.0, -th0);
    const Complex vc0 = op.v() * rot0;
    const Complex ic0 = op.i() * rot0;
    const Complex uc0 = vc0 + Complex(p.R_f, p.L_f) * ic0;
    if (!(vc0.real() > 0.0)) throw Error("degenerate-operating-point", "PLL-frame v_d must be > 0");
    // power references held at the operating point
    const double p_ref = op.p_ac();
    const double q_ref = op.q_ac();

    const Lin v_c = detail::to_rotating(Lin::input_pair(n, m, 0, 1), vc0, th0, kTheta);
    const Lin i_c = detail::to_rotating(Lin::state_pair(n, m, kId, kIq), ic0, th0, kTheta);

    // i_d* = (p* + K (v_dc - v_dc*)) / v_d^c, i_q* = -q* / v_d^c
    const double vd0 = vc0.real();
    Lin i_ref = Lin::zero(n, m);
    i_ref.xr = -p_ref / (vd0 * vd0) * v_c.xr;
    i_ref.ur = -p_ref / (vd0 * vd0) * v_c.ur;
    i_ref.ur(2) += p.K_d_dc / vd0;
    i_ref.xi = q_ref / (vd0 * vd0) * v_c.xr;
    i_ref.ui = q_ref / (vd0 * vd0) * v_c.ur;
    const Lin err = i_ref - i_c;
    const Lin uc = p.kp_cc * Complex(1.0, 0.0) * err + Lin::state_pair(n, m, kXd, kXq) + v_c +
                   Complex(0.0, p.L_f) * i_c;
    const Lin u = detail::from_rotating(uc, uc0, th0, kTheta);

    Matrix a = Matrix::Zero(n, n);
    Matrix b = Matrix::Zero(n, m);
    // omega_pll = kp v_q^c + x_pll
    a.row(kTheta) = p.omega_b * p.kp_pll * v_c.xi;
    a(kTheta, kXpll) += p.omega_b;
    b.row(kTheta) = p.omega_b * p.kp_pll * v_c.ui;
    a.row(kXpll) = p.ki_pll * v_c.xi;
    b.row(kXpll) = p.ki_pll * v_c.ui;
    a.row(kXd) = p.ki_cc * err.xr;
    b.row(kXd) = p.ki_cc * err.ur;
    a.row(kXq) = p.ki_cc * err.xi;
    b.row(kXq) = p.ki_cc * err.ui;
    detail::filter_rows(a, b, u, kId, kIq, p.L_f, p.R_f, p.omega_b);

    Matrix c = Matrix::Zero(3, n);
    Matrix d = Matrix::Zero(3, 3);
    detail::output_rows(c, d, op, kId, kIq);
    detail::require_standalone_stable(a, "GFL");
    StateSpaceModel ss(a, b, c, d, device_input_labels(), device_output_labels(),
                       {"theta_pll", "x_pll", "x_d", "x_q", "i_d", "i_q"});
    return ConverterModel(std::move(ss), op, p.C_dc, "gfl");
}

}  // namespace fdjb
