#ifndef MPF_FASTLOOP_HPP
#define MPF_FASTLOOP_HPP

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace mpf {

enum class DdeMode { FullMpf, SplitMpf };

inline std::string to_string(DdeMode m) {
    return m == DdeMode::FullMpf ? "full-mpf" : "split-mpf";
}

// Scalar fast-loop model reduced from the active-constraint dynamics with an
// equal transport delay tau_d in every actuation channel:
//   full-MPF :  eps * etad(t) = -k *  eta(t - tau_d)            + c
//   split-MPF:  eps * etad(t) = -k * (eta(t) + eta(t - tau_d))  + c
// k is 1 for the full-MPF loop and 2 b1^2 b2^2 / |b|^4 (in (0, 1/2]) for the
// split one; the slow drift enters only as the constant forcing c.
struct ScalarDde {
    double eps = 0.2;     // s
    double delay = 0.0;   // s
    double gain = 1.0;    // k
    double forcing = 0.0; // c
    DdeMode mode = DdeMode::FullMpf;
};

enum class DdeVerdict { converged, oscillatory_decay, diverged };

inline std::string to_string(DdeVerdict v) {
    switch (v) {
        case DdeVerdict::converged: return "converged";
        case DdeVerdict::oscillatory_decay: return "oscillatory-decay";
        case DdeVerdict::diverged: return "diverged";
    }
    return "?";
}

struct StabilityReport {
    double delay_over_eps = 0.0;
    DdeVerdict verdict = DdeVerdict::converged;
    double decay_rate = 0.0;  // envelope slope of log|eta|, 1/s; negative = decay
};

namespace detail {

// eta(t - delay) with linear interpolation into the stored trajectory;
// zero before t = 0.
inline double delayed_value(const std::vector<double>& traj, double idx) {
    if (idx < 0.0) return 0.0;
    const std::size_t lo = static_cast<std::size_t>(idx);
    if (lo + 1 >= traj.size()) return traj.back();
    const double frac = idx - static_cast<double>(lo);
    return (1.0 - frac) * traj[lo] + frac * traj[lo + 1];
}

}  // namespace detail

// Fixed-step explicit midpoint integration from eta(0) = 1 with zero
// pre-history, dt = eps/100 unless overridden. Stops early past the 1e6
// divergence threshold.
inline std::vector<double> dde_trajectory(const ScalarDde& m, double horizon, double dt = 0.0) {
    if (dt <= 0.0) dt = m.eps / 100.0;
    const std::size_t steps = static_cast<std::size_t>(std::ceil(horizon / dt));
    const double delay_steps = m.delay / dt;

    std::vector<double> traj;
    traj.reserve(steps + 1);
    traj.push_back(1.0);

    auto rhs = [&](double eta, double eta_delayed) {
        if (m.mode == DdeMode::FullMpf) {
            return (-m.gain * eta_delayed + m.forcing) / m.eps;
        }
        return (-m.gain * (eta + eta_delayed) + m.forcing) / m.eps;
    };

    for (std::size_t i = 0; i < steps; ++i) {
        const double t_idx = static_cast<double>(i);
        const double eta = traj[i];
        const double k1 = rhs(eta, detail::delayed_value(traj, t_idx - delay_steps));
        const double eta_mid = eta + 0.5 * dt * k1;
        const double k2 = rhs(eta_mid, detail::delayed_value(traj, t_idx + 0.5 - delay_steps));
        const double next = eta + dt * k2;
        traj.push_back(next);
        if (std::abs(next) > 1e6) break;
    }
    return traj;
}

// The verdict comes from the trajectory norm over the horizon (divergence
// threshold 1e6) and an envelope fit of log|eta|.
inline StabilityReport simulate_dde(const ScalarDde& m, double horizon, double dt = 0.0) {
    if (dt <= 0.0) dt = m.eps / 100.0;
    const std::vector<double> traj = dde_trajectory(m, horizon, dt);
    const bool exceeded = !traj.empty() && std::abs(traj.back()) > 1e6;

    StabilityReport rep;
    rep.delay_over_eps = m.delay / m.eps;

    // envelope: |eta| at its local maxima; falls back to all samples when the
    // response is monotone
    std::vector<std::pair<double, double>> peaks;
    for (std::size_t i = 1; i + 1 < traj.size(); ++i) {
        const double a = std::abs(traj[i]);
        if (a > std::abs(traj[i - 1]) && a >= std::abs(traj[i + 1]) && a > 1e-140) {
            peaks.emplace_back(i * dt, std::log(a));
        }
    }
    if (peaks.size() < 3) {
        peaks.clear();
        for (std::size_t i = 0; i < traj.size(); ++i) {
            const double a = std::abs(traj[i]);
            if (a > 1e-140) peaks.emplace_back(i * dt, std::log(a));
        }
    }
    double slope = 0.0;
    if (peaks.size() >= 2) {
        double st = 0.0, sy = 0.0, stt = 0.0, sty = 0.0;
        for (auto& [t, y] : peaks) {
            st += t;
            sy += y;
            stt += t * t;
            sty += t * y;
        }
        const double nn = static_cast<double>(peaks.size());
        const double denom = nn * stt - st * st;
        if (denom > 0.0) slope = (nn * sty - st * sy) / denom;
    }
    rep.decay_rate = slope;

    bool crossed = false;
    for (std::size_t i = 1; i < traj.size(); ++i) {
        if (traj[i] * traj[i - 1] < 0.0) {
            crossed = true;
            break;
        }
    }

    if (exceeded || slope > 0.0) {
        rep.verdict = DdeVerdict::diverged;
    } else if (crossed) {
        rep.verdict = DdeVerdict::oscillatory_decay;
    } else {
        rep.verdict = DdeVerdict::converged;
    }
    return rep;
}

// Bisection on tau_d/eps in [0.1, 3.0] for the converged/diverged transition
// of the unforced loop, to 1e-3. Empty when the bracket has no sign change
// (the split-MPF loop is delay-independent there).
inline std::optional<double> find_stability_boundary(DdeMode mode, double k, double eps,
                                                     double dt = 0.0) {
    auto diverged = [&](double ratio) {
        ScalarDde m{eps, ratio * eps, k, 0.0, mode};
        return simulate_dde(m, 100.0 * eps, dt).verdict == DdeVerdict::diverged;
    };
    double lo = 0.1, hi = 3.0;
    if (diverged(lo) || !diverged(hi)) return std::nullopt;
    while (hi - lo > 1e-3) {
        const double mid = 0.5 * (lo + hi);
        (diverged(mid) ? hi : lo) = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace mpf

#endif  // MPF_FASTLOOP_HPP
