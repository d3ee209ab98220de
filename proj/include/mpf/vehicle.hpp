#ifndef MPF_VEHICLE_HPP
#define MPF_VEHICLE_HPP

#include <algorithm>
#include <cmath>

namespace mpf {

inline constexpr double kPi = 3.14159265358979323846;

// Planar pose and longitudinal speed of one agent.
struct VehicleState {
    double x = 0.0;      // m
    double y = 0.0;      // m
    double theta = 0.0;  // rad, kept in (-pi, pi]
    double v = 0.0;      // m/s, never negative
};

// Steering angle and longitudinal acceleration command.
struct ControlInput {
    double delta = 0.0;  // rad
    double ac = 0.0;     // m/s^2
};

struct VehicleParams {
    double wheelbase = 3.0;  // m
    ControlInput u_min{-kPi / 7.0, -8.0};
    ControlInput u_max{kPi / 7.0, 4.0};
};

struct StateDerivative {
    double dx = 0.0;
    double dy = 0.0;
    double dtheta = 0.0;
    double dv = 0.0;
};

// wrap to (-pi, pi]
inline double wrap_angle(double a) {
    a = std::fmod(a, 2.0 * kPi);
    if (a <= -kPi) {
        a += 2.0 * kPi;
    } else if (a > kPi) {
        a -= 2.0 * kPi;
    }
    return a;
}

inline ControlInput saturate(const ControlInput& u, const VehicleParams& p) {
    return {std::clamp(u.delta, p.u_min.delta, p.u_max.delta),
            std::clamp(u.ac, p.u_min.ac, p.u_max.ac)};
}

// Kinematic bicycle model. Expects u already saturated.
inline StateDerivative derivative(const VehicleState& s, const ControlInput& u,
                                  const VehicleParams& p) {
    return {s.v * std::cos(s.theta), s.v * std::sin(s.theta),
            s.v * u.delta / p.wheelbase, u.ac};
}

namespace detail {

inline VehicleState rk4_substep(const VehicleState& s, const ControlInput& u,
                                const VehicleParams& p, double dt) {
    auto advance = [](const VehicleState& base, const StateDerivative& d, double h) {
        return VehicleState{base.x + h * d.dx, base.y + h * d.dy,
                            base.theta + h * d.dtheta, base.v + h * d.dv};
    };
    const StateDerivative k1 = derivative(s, u, p);
    const StateDerivative k2 = derivative(advance(s, k1, 0.5 * dt), u, p);
    const StateDerivative k3 = derivative(advance(s, k2, 0.5 * dt), u, p);
    const StateDerivative k4 = derivative(advance(s, k3, dt), u, p);
    VehicleState out;
    out.x = s.x + dt / 6.0 * (k1.dx + 2.0 * k2.dx + 2.0 * k3.dx + k4.dx);
    out.y = s.y + dt / 6.0 * (k1.dy + 2.0 * k2.dy + 2.0 * k3.dy + k4.dy);
    out.theta = s.theta + dt / 6.0 * (k1.dtheta + 2.0 * k2.dtheta + 2.0 * k3.dtheta + k4.dtheta);
    out.v = s.v + dt / 6.0 * (k1.dv + 2.0 * k2.dv + 2.0 * k3.dv + k4.dv);
    return out;
}

}  // namespace detail

// RK4 under zero-order-hold control, sub-stepped at 10 ms. Speed is clamped
// at zero (no reversing) and heading wrapped after every sub-step.
inline VehicleState step(VehicleState s, const ControlInput& u, const VehicleParams& p,
                         double dt) {
    constexpr double kMaxSubStep = 0.01;
    const int n_sub = std::max(1, static_cast<int>(std::ceil(dt / kMaxSubStep - 1e-12)));
    const double h = dt / n_sub;
    for (int k = 0; k < n_sub; ++k) {
        s = detail::rk4_substep(s, u, p, h);
        s.theta = wrap_angle(s.theta);
        if (s.v < 0.0) s.v = 0.0;
    }
    return s;
}

}  // namespace mpf

#endif  // MPF_VEHICLE_HPP
