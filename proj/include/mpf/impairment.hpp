#ifndef MPF_IMPAIRMENT_HPP
#define MPF_IMPAIRMENT_HPP

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mpf/vehicle.hpp"

namespace mpf {

enum class ChannelKind { Identity, Gain, Clip, FirstOrder, PureDelay, OnRails };

inline std::string to_string(ChannelKind k) {
    switch (k) {
        case ChannelKind::Identity: return "identity";
        case ChannelKind::Gain: return "gain";
        case ChannelKind::Clip: return "clip";
        case ChannelKind::FirstOrder: return "first-order";
        case ChannelKind::PureDelay: return "pure-delay";
        case ChannelKind::OnRails: return "on-rails";
    }
    return "?";
}

// Serializable description of one actuator channel operator.
struct ChannelSpec {
    ChannelKind kind = ChannelKind::Identity;
    double gain = 1.0;      // Gain
    double lo = 0.0;        // Clip
    double hi = 0.0;        // Clip
    double tau = 0.0;       // FirstOrder / PureDelay, s
};

struct OnsetTrigger {
    enum class Kind { None, Time, PositionX };
    Kind kind = Kind::None;
    double threshold = 0.0;  // s or m
};

// Serializable per-vehicle impairment: one operator per actuator channel
// plus the onset trigger. Before onset both channels act as identity.
struct DeltaSpec {
    ChannelSpec steer;
    ChannelSpec accel;
    OnsetTrigger onset;

    bool is_identity() const {
        return steer.kind == ChannelKind::Identity && accel.kind == ChannelKind::Identity;
    }
};

namespace detail {

// Stateful scalar channel advanced once per simulation sub-step, starting
// from rest. First-order lag uses the exact zero-order-hold discretization;
// delay is a FIFO of round(tau / sim_dt) samples.
class ChannelState {
public:
    ChannelState(const ChannelSpec& spec, double sim_dt) : spec_(spec) {
        if (spec_.kind == ChannelKind::FirstOrder) {
            phi_ = std::exp(-sim_dt / spec_.tau);
        } else if (spec_.kind == ChannelKind::PureDelay) {
            fifo_.assign(std::max<std::size_t>(
                             1, static_cast<std::size_t>(std::llround(spec_.tau / sim_dt))),
                         0.0);
        }
    }

    double apply(double u_cmd) {
        switch (spec_.kind) {
            case ChannelKind::Identity:
            case ChannelKind::OnRails:  // handled at the DeltaModel level
                return u_cmd;
            case ChannelKind::Gain:
                return spec_.gain * u_cmd;
            case ChannelKind::Clip:
                return std::clamp(u_cmd, spec_.lo, spec_.hi);
            case ChannelKind::FirstOrder:
                state_ = phi_ * state_ + (1.0 - phi_) * u_cmd;
                return state_;
            case ChannelKind::PureDelay: {
                const double out = fifo_[pos_];
                fifo_[pos_] = u_cmd;
                pos_ = (pos_ + 1) % fifo_.size();
                return out;
            }
        }
        return u_cmd;
    }

private:
    ChannelSpec spec_;
    double phi_ = 0.0;
    double state_ = 0.0;
    std::vector<double> fifo_;
    std::size_t pos_ = 0;
};

}  // namespace detail

// Actuator uncertainty operator for one vehicle: maps the commanded control
// to the actual one, advancing channel state. Must be called once per
// simulation sub-step in time order.
class DeltaModel {
public:
    DeltaModel() : DeltaModel(DeltaSpec{}, 0.01) {}
    DeltaModel(const DeltaSpec& spec, double sim_dt)
        : spec_(spec), steer_(spec.steer, sim_dt), accel_(spec.accel, sim_dt) {}

    const DeltaSpec& spec() const { return spec_; }

    bool triggered(double t, const VehicleState& s) const {
        switch (spec_.onset.kind) {
            case OnsetTrigger::Kind::None: return true;
            case OnsetTrigger::Kind::Time: return t >= spec_.onset.threshold;
            case OnsetTrigger::Kind::PositionX: return s.x >= spec_.onset.threshold;
        }
        return true;
    }

    ControlInput apply(const ControlInput& u_star, double t, const VehicleState& s,
                       const ControlInput& u0) {
        if (!triggered(t, s)) return u_star;
        ControlInput out;
        out.delta = (spec_.steer.kind == ChannelKind::OnRails) ? u0.delta
                                                               : steer_.apply(u_star.delta);
        out.ac = (spec_.accel.kind == ChannelKind::OnRails) ? u0.ac : accel_.apply(u_star.ac);
        return out;
    }

private:
    DeltaSpec spec_;
    detail::ChannelState steer_;
    detail::ChannelState accel_;
};

// ---------------------------------------------------------------------------
// Passivity classification of scalar LTI channels
// ---------------------------------------------------------------------------

// Scalar linear channel z' = Az + Bu, y = Cz + Du, optionally followed by a
// pure transport delay. A must be Hurwitz for the classification to apply.
struct LtiChannel {
    std::vector<std::vector<double>> A;  // n x n
    std::vector<double> B;               // n
    std::vector<double> C;               // n
    double D = 0.0;
    double delay = 0.0;                  // s

    int order() const { return static_cast<int>(A.size()); }

    std::complex<double> response(double omega) const;
    bool hurwitz() const;

    static LtiChannel from_gain(double k) { return {{}, {}, {}, k, 0.0}; }
    static LtiChannel from_first_order(double tau) {
        return {{{-1.0 / tau}}, {1.0 / tau}, {1.0}, 0.0, 0.0};
    }
    static LtiChannel from_delay(double tau) { return {{}, {}, {}, 1.0, tau}; }

    // LTI description of a channel spec, when one exists (Clip and OnRails
    // are not LTI operators).
    static std::optional<LtiChannel> from_spec(const ChannelSpec& s) {
        switch (s.kind) {
            case ChannelKind::Identity: return from_gain(1.0);
            case ChannelKind::Gain: return from_gain(s.gain);
            case ChannelKind::FirstOrder: return from_first_order(s.tau);
            case ChannelKind::PureDelay: return from_delay(s.tau);
            default: return std::nullopt;
        }
    }
};

namespace detail {

// Characteristic polynomial coefficients (monic, descending) via the
// Faddeev-LeVerrier recursion.
inline std::vector<double> char_poly(const std::vector<std::vector<double>>& a) {
    const int n = static_cast<int>(a.size());
    std::vector<double> coeffs(n + 1, 0.0);
    coeffs[0] = 1.0;
    std::vector<std::vector<double>> m(n, std::vector<double>(n, 0.0));
    for (int k = 1; k <= n; ++k) {
        // M <- A*M + c_{k-1} I
        std::vector<std::vector<double>> am(n, std::vector<double>(n, 0.0));
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                double s = (i == j) ? coeffs[k - 1] : 0.0;
                for (int l = 0; l < n; ++l) s += a[i][l] * m[l][j];
                am[i][j] = s;
            }
        }
        m = am;
        double tr = 0.0;
        for (int i = 0; i < n; ++i) {
            double s = 0.0;
            for (int l = 0; l < n; ++l) s += a[i][l] * m[l][i];
            tr += s;
        }
        coeffs[k] = -tr / k;
    }
    return coeffs;
}

// Routh-Hurwitz test on a monic polynomial (descending coefficients).
// Marginal cases (zero first-column entries) are reported as not Hurwitz.
inline bool routh_hurwitz(const std::vector<double>& c) {
    const int n = static_cast<int>(c.size()) - 1;
    if (n == 0) return true;
    std::vector<std::vector<double>> rows(2);
    for (int i = 0; i <= n; i += 2) rows[0].push_back(c[i]);
    for (int i = 1; i <= n; i += 2) rows[1].push_back(c[i]);
    rows[1].resize(rows[0].size(), 0.0);
    if (rows[1][0] == 0.0) return n == 0;
    for (int r = 2; r <= n; ++r) {
        const std::vector<double>& top = rows[r - 2];
        const std::vector<double>& bot = rows[r - 1];
        std::vector<double> next(top.size(), 0.0);
        for (std::size_t j = 0; j + 1 < top.size(); ++j) {
            next[j] = (bot[0] * top[j + 1] - top[0] * bot[j + 1]) / bot[0];
        }
        if (std::abs(next[0]) < 1e-300) return false;
        rows.push_back(next);
        rows.erase(rows.begin());
    }
    // all first-column entries of the final triangle must share a sign
    double first = c[0];
    if (rows[0][0] * first <= 0.0 || rows[1][0] * first <= 0.0) return false;
    return true;
}

// Solve (jw I - A) x = B with complex Gaussian elimination (small n).
inline std::vector<std::complex<double>> resolvent_apply(
    const std::vector<std::vector<double>>& a, const std::vector<double>& b, double omega) {
    using cplx = std::complex<double>;
    const int n = static_cast<int>(a.size());
    std::vector<std::vector<cplx>> m(n, std::vector<cplx>(n));
    std::vector<cplx> x(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) m[i][j] = (i == j ? cplx(0.0, omega) : cplx(0.0, 0.0)) - a[i][j];
        x[i] = b[i];
    }
    for (int col = 0; col < n; ++col) {
        int piv = col;
        for (int r = col + 1; r < n; ++r) {
            if (std::abs(m[r][col]) > std::abs(m[piv][col])) piv = r;
        }
        std::swap(m[col], m[piv]);
        std::swap(x[col], x[piv]);
        for (int r = col + 1; r < n; ++r) {
            const cplx f = m[r][col] / m[col][col];
            for (int cc = col; cc < n; ++cc) m[r][cc] -= f * m[col][cc];
            x[r] -= f * x[col];
        }
    }
    for (int i = n - 1; i >= 0; --i) {
        cplx s = x[i];
        for (int j = i + 1; j < n; ++j) s -= m[i][j] * x[j];
        x[i] = s / m[i][i];
    }
    return x;
}

}  // namespace detail

inline std::complex<double> LtiChannel::response(double omega) const {
    std::complex<double> g(D, 0.0);
    if (order() > 0) {
        const auto x = detail::resolvent_apply(A, B, omega);
        std::complex<double> cx(0.0, 0.0);
        for (int i = 0; i < order(); ++i) cx += C[i] * x[i];
        g += cx;
    }
    if (delay > 0.0) g *= std::exp(std::complex<double>(0.0, -omega * delay));
    return g;
}

inline bool LtiChannel::hurwitz() const {
    if (order() == 0) return true;
    return detail::routh_hurwitz(detail::char_poly(A));
}

enum class PassivityClass { NotPassive, Passive, Isp };

inline std::string to_string(PassivityClass c) {
    switch (c) {
        case PassivityClass::NotPassive: return "not-passive";
        case PassivityClass::Passive: return "passive";
        case PassivityClass::Isp: return "isp";
    }
    return "?";
}

struct PassivityReport {
    PassivityClass cls = PassivityClass::Passive;
    double nu = 0.0;  // estimated input-passivity excess
};

// Logarithmic grid over [1e-3, 1e4] rad/s.
inline std::vector<double> default_freq_grid(int points = 400) {
    std::vector<double> grid(points);
    const double lo = std::log10(1e-3);
    const double hi = std::log10(1e4);
    for (int i = 0; i < points; ++i) {
        grid[i] = std::pow(10.0, lo + (hi - lo) * i / (points - 1));
    }
    return grid;
}

// Frequency-sampled estimate of the input passivity excess:
//   nu = inf_w Re{Delta(jw)}  (plus the w -> inf limit, which equals D).
// A numerical diagnostic, not a certificate.
inline PassivityReport classify_passivity(const LtiChannel& c,
                                          const std::vector<double>& freq_grid) {
    if (!c.hurwitz()) {
        throw std::invalid_argument("classify_passivity: A matrix is not Hurwitz");
    }
    double nu = c.D;  // w -> inf limit (the delay factor has no limit; D bounds it)
    if (c.delay > 0.0 && c.order() == 0) nu = std::min(nu, -std::abs(c.D));
    for (double w : freq_grid) nu = std::min(nu, c.response(w).real());
    constexpr double kTol = 1e-9;
    PassivityReport rep;
    rep.nu = nu;
    if (nu > kTol) {
        rep.cls = PassivityClass::Isp;
    } else if (nu >= -kTol) {
        rep.cls = PassivityClass::Passive;
        rep.nu = 0.0;
    } else {
        rep.cls = PassivityClass::NotPassive;
    }
    return rep;
}

inline PassivityReport classify_passivity(const LtiChannel& c) {
    return classify_passivity(c, default_freq_grid());
}

}  // namespace mpf

#endif  // MPF_IMPAIRMENT_HPP
