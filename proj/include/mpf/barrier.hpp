#ifndef MPF_BARRIER_HPP
#define MPF_BARRIER_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mpf/vehicle.hpp"

namespace mpf {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 v) { return {s * v.x, s * v.y}; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double norm(Vec2 v) { return std::sqrt(dot(v, v)); }

inline Vec2 heading_vec(double theta) { return {std::cos(theta), std::sin(theta)}; }
inline Vec2 heading_perp(double theta) { return {-std::sin(theta), std::cos(theta)}; }

// Ellipse protecting one agent: other agents' centers must stay outside.
// The barrier value is the focal-distance sum minus the major axis length.
struct EllipseParams {
    double r = 2.0;      // semi-minor axis, m
    double alpha = 3.0;  // major/minor axis ratio, > 1
    double margin = 0.1; // controller-side inflation applied to r

    double rho() const { return r * std::sqrt(alpha * alpha - 1.0); }

    // Params the safety filter enforces: r scaled by (1 + margin), alpha
    // unchanged. Metrics always use the unscaled reference params.
    EllipseParams control() const { return {r * (1.0 + margin), alpha, 0.0}; }
};

struct RoadGeometry {
    double rb_r = -3.5;       // right boundary lateral position, m
    double rb_l = 3.5;        // left boundary lateral position, m
    double lane_width = 3.5;  // m
    std::vector<double> lane_centers{-1.75, 1.75};

    double centerline() const { return 0.5 * (rb_r + rb_l); }
};

// Second-order constraint composition hdd + l1*hd + l0*h >= 0. Roots of
// s^2 + l1 s + l0 must be real and negative. lambda is the first-order rate
// of the generic filter form hd + lambda*h >= 0; the vehicle constraints are
// all relative degree two and do not use it.
struct CbfGains {
    double l0 = 0.8;     // 1/s^2  (roots at -0.4 and -2.0)
    double l1 = 2.4;     // 1/s
    double lambda = 1.0; // 1/s
};

struct ConstraintTag {
    enum class Kind : std::uint8_t { Pair, Road };
    enum class Side : std::uint8_t { Right = 0, Left = 1 };

    Kind kind = Kind::Pair;
    int i = 0;      // owning agent (whose ellipse / whose road constraint)
    int j = 0;      // other agent (Pair) or side as int (Road)

    static ConstraintTag pair(int i, int j) { return {Kind::Pair, i, j}; }
    static ConstraintTag road(int i, Side s) { return {Kind::Road, i, static_cast<int>(s)}; }

    bool operator==(const ConstraintTag&) const = default;

    std::string str() const {
        if (kind == Kind::Pair) return "pair:" + std::to_string(i) + "-" + std::to_string(j);
        return "road:" + std::to_string(i) + (j == 0 ? ":right" : ":left");
    }
};

// One affine constraint  a + sum_i (b_delta_i * delta_i + b_ac_i * ac_i) >= 0.
// A pair row touches exactly two agents, a road row exactly one.
struct ConstraintRow {
    struct Coeff {
        int agent = -1;
        double b_delta = 0.0;
        double b_ac = 0.0;
    };

    double a = 0.0;
    std::array<Coeff, 2> coeffs{};
    int n_coeffs = 0;
    ConstraintTag tag;

    // b . u with u flattened as [delta_0, ac_0, delta_1, ac_1, ...]
    double dot_b(const std::vector<double>& u) const {
        double s = 0.0;
        for (int k = 0; k < n_coeffs; ++k) {
            const Coeff& c = coeffs[k];
            s += c.b_delta * u[2 * c.agent] + c.b_ac * u[2 * c.agent + 1];
        }
        return s;
    }

    double value(const std::vector<double>& u) const { return a + dot_b(u); }
};

// Focal-sum ellipse barrier (agent i's ellipse against agent j's center).
// Negative iff X_j lies strictly inside the ellipse of agent i.
inline double ellipse_h(const VehicleState& si, const VehicleState& sj,
                        const EllipseParams& e) {
    const Vec2 xi{si.x, si.y};
    const Vec2 xj{sj.x, sj.y};
    const Vec2 f = e.rho() * heading_vec(si.theta);
    return norm(xi + f - xj) + norm(xi - f - xj) - 2.0 * e.alpha * e.r;
}

namespace detail {

// Unit vector of d with the gradient-singularity fallback: below 1e-9 m the
// direction is taken along agent i's heading.
inline Vec2 safe_unit(Vec2 d, double& len_out, const Vec2& heading) {
    const double len = norm(d);
    len_out = len;
    if (len < 1e-9) return heading;
    return {d.x / len, d.y / len};
}

}  // namespace detail

// Constraint row for the inter-agent ellipse CBF of agent i against agent j.
//
// The barrier is differentiated twice along the bicycle dynamics. The first
// derivative is affine in delta_i (the focal points rotate with the
// heading); the second derivative picks up input products, so the affine row
// is the exact linearization of (hdd + l1*hd + l0*h) at u = 0:
//
//   h   = |d+| + |d-| - 2*alpha*r,          d+- = X_i +- rho*phi_i - X_j
//   hd  = m . g + mu * delta_i              m = n+ + n-,  g = v_i phi_i - v_j phi_j
//   mu  = rho (v_i/L) (n+ - n-) . phi_i_perp
//
// with n+- the unit focal vectors and P+- = I - n n^T their tangent
// projectors. Acceleration enters only at second order (b_ac = m . phi).
inline ConstraintRow pair_constraint_row(int i, const VehicleState& si, int j,
                                         const VehicleState& sj, const EllipseParams& e,
                                         const CbfGains& g, const VehicleParams& p) {
    const double rho = e.rho();
    const Vec2 phi_i = heading_vec(si.theta);
    const Vec2 phi_i_perp = heading_perp(si.theta);
    const Vec2 phi_j = heading_vec(sj.theta);
    const Vec2 phi_j_perp = heading_perp(sj.theta);

    const Vec2 xi{si.x, si.y};
    const Vec2 xj{sj.x, sj.y};
    const Vec2 dp = xi + rho * phi_i - xj;
    const Vec2 dm = xi - rho * phi_i - xj;

    double lp = 0.0, lm = 0.0;
    const Vec2 np = detail::safe_unit(dp, lp, phi_i);
    const Vec2 nm = detail::safe_unit(dm, lm, phi_i);
    const double dist_p = std::max(lp, 1e-9);
    const double dist_m = std::max(lm, 1e-9);

    const double h = lp + lm - 2.0 * e.alpha * e.r;

    const Vec2 m = np + nm;
    const Vec2 grel = si.v * phi_i - sj.v * phi_j;

    const double sigma = dot(m, grel);                       // hd at u = 0
    const double q = dot(np - nm, phi_i_perp);
    const double mu = rho * si.v / p.wheelbase * q;

    // tangent-projected quantities (P v = v - n (n.v))
    const double g_np = dot(np, grel);
    const double g_nm = dot(nm, grel);
    const double gg = dot(grel, grel);
    const double drift = (gg - g_np * g_np) / dist_p + (gg - g_nm * g_nm) / dist_m;

    // phi_i_perp^T (P+/D+ - P-/D-) g
    const double perp_g = dot(phi_i_perp, grel);
    const double w_perp = (perp_g - dot(np, phi_i_perp) * g_np) / dist_p -
                          (perp_g - dot(nm, phi_i_perp) * g_nm) / dist_m;

    ConstraintRow row;
    row.tag = ConstraintTag::pair(i, j);
    row.a = drift + g.l1 * sigma + g.l0 * h;
    row.coeffs[0] = {i,
                     si.v * si.v / p.wheelbase * dot(m, phi_i_perp) +
                         2.0 * rho * si.v / p.wheelbase * w_perp + g.l1 * mu,
                     dot(m, phi_i)};
    row.coeffs[1] = {j, -sj.v * sj.v / p.wheelbase * dot(m, phi_j_perp), -dot(m, phi_j)};
    row.n_coeffs = 2;
    return row;
}

// Road-boundary rows for agent i: h_r = y - rb_r and h_l = rb_l - y, each
// composed to second order. Exactly
//   a_r = l1 v sin(theta) + l0 h_r,   b_r = [v^2 cos(theta)/L, sin(theta)]
// and the left row with mirrored signs.
inline std::pair<ConstraintRow, ConstraintRow> road_constraint_rows(
    int i, const VehicleState& si, const RoadGeometry& road, const CbfGains& g,
    const VehicleParams& p) {
    const double st = std::sin(si.theta);
    const double ct = std::cos(si.theta);
    const double vv_l = si.v * si.v / p.wheelbase;

    ConstraintRow right;
    right.tag = ConstraintTag::road(i, ConstraintTag::Side::Right);
    right.a = g.l1 * si.v * st + g.l0 * (si.y - road.rb_r);
    right.coeffs[0] = {i, vv_l * ct, st};
    right.n_coeffs = 1;

    ConstraintRow left;
    left.tag = ConstraintTag::road(i, ConstraintTag::Side::Left);
    left.a = -g.l1 * si.v * st + g.l0 * (road.rb_l - si.y);
    left.coeffs[0] = {i, -vv_l * ct, -st};
    left.n_coeffs = 1;

    return {right, left};
}

struct RowAssemblyOptions {
    double pair_window = 50.0;  // m, longitudinal pruning distance
    double h_prune = 20.0;      // m, rows with larger barrier value are omitted
};

// All active constraint rows for the fleet: both ordered pair rows for every
// nearby pair, then the two road rows per agent. Order is deterministic.
inline std::vector<ConstraintRow> assemble_rows(const std::vector<VehicleState>& states,
                                                const EllipseParams& e,
                                                const RoadGeometry& road, const CbfGains& g,
                                                const VehicleParams& p,
                                                const RowAssemblyOptions& opts = {}) {
    const int n = static_cast<int>(states.size());
    std::vector<ConstraintRow> rows;
    rows.reserve(static_cast<std::size_t>(n) * 6);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            if (std::abs(states[i].x - states[j].x) > opts.pair_window) continue;
            if (ellipse_h(states[i], states[j], e) > opts.h_prune) continue;
            rows.push_back(pair_constraint_row(i, states[i], j, states[j], e, g, p));
        }
    }
    for (int i = 0; i < n; ++i) {
        auto [right, left] = road_constraint_rows(i, states[i], road, g, p);
        rows.push_back(right);
        rows.push_back(left);
    }
    return rows;
}

}  // namespace mpf

#endif  // MPF_BARRIER_HPP
