#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "mpf/barrier.hpp"
#include "mpf/rng.hpp"
#include "mpf/vehicle.hpp"
#include "oracles.hpp"

using namespace mpf;
using oracles::row_value_fd;

namespace {

VehicleState random_state(Rng& rng) {
    return {rng.uniform(-30, 30), rng.uniform(-30, 30), rng.uniform(-kPi, kPi),
            rng.uniform(1.0, 30.0)};
}

}  // namespace

TEST_CASE("ellipse barrier closed-form points") {
    EllipseParams e{2.0, 3.0, 0.0};
    const double rho = e.rho();
    CHECK(rho == Catch::Approx(2.0 * std::sqrt(8.0)).epsilon(1e-15));

    SECTION("coincident centers") {
        VehicleState a{5, -3, 0.7, 20};
        VehicleState b{5, -3, -1.2, 18};
        CHECK(ellipse_h(a, b, e) == Catch::Approx(2.0 * rho - 12.0).epsilon(1e-12));
        CHECK(ellipse_h(a, b, e) == Catch::Approx(-0.686291501015239).epsilon(1e-9));
    }
    SECTION("other center on the ellipse vertex") {
        VehicleState a{0, 0, 0, 20};
        VehicleState b{6.0, 0, 0, 20};  // alpha * r ahead
        CHECK(ellipse_h(a, b, e) == Catch::Approx(0.0).margin(1e-12));
    }
    SECTION("other center on the co-vertex") {
        VehicleState a{0, 0, 0, 20};
        VehicleState b{0, 2.0, 0, 20};  // r to the side
        CHECK(ellipse_h(a, b, e) == Catch::Approx(0.0).margin(1e-12));
    }
}

TEST_CASE("ellipse barrier is invariant under rigid motions") {
    EllipseParams e{2.0, 3.0, 0.0};
    Rng rng(42);
    for (int trial = 0; trial < 300; ++trial) {
        VehicleState a = random_state(rng);
        VehicleState b = random_state(rng);
        const double h = ellipse_h(a, b, e);

        const double tx = rng.uniform(-100, 100), ty = rng.uniform(-100, 100);
        VehicleState at = a, bt = b;
        at.x += tx;
        at.y += ty;
        bt.x += tx;
        bt.y += ty;
        REQUIRE(ellipse_h(at, bt, e) == Catch::Approx(h).margin(1e-9));

        const double c = std::cos(0.9), s = std::sin(0.9);
        auto rot = [&](const VehicleState& v) {
            return VehicleState{c * v.x - s * v.y, s * v.x + c * v.y,
                                wrap_angle(v.theta + 0.9), v.v};
        };
        REQUIRE(ellipse_h(rot(a), rot(b), e) == Catch::Approx(h).margin(1e-9));
    }
}

TEST_CASE("controller ellipse inflates r only") {
    EllipseParams e{2.0, 3.0, 0.1};
    EllipseParams c = e.control();
    CHECK(c.r == Catch::Approx(2.2));
    CHECK(c.alpha == 3.0);
    CHECK(c.rho() == Catch::Approx(2.2 * std::sqrt(8.0)));
}

TEST_CASE("road constraint rows match the closed form") {
    CbfGains g;  // l0 = 0.8, l1 = 2.4
    VehicleParams p;
    RoadGeometry road;

    SECTION("quoted expansion") {
        VehicleState s{0, road.rb_r + 2.0, 0, 20};
        auto [right, left] = road_constraint_rows(3, s, road, g, p);
        CHECK(right.a == Catch::Approx(1.6).epsilon(1e-14));
        CHECK(right.coeffs[0].agent == 3);
        CHECK(right.coeffs[0].b_delta == Catch::Approx(400.0 / 3.0).epsilon(1e-14));
        CHECK(right.coeffs[0].b_ac == 0.0);
        CHECK(right.n_coeffs == 1);
        CHECK(left.n_coeffs == 1);
    }
    SECTION("zero heading kills the acceleration coefficient") {
        VehicleState s{10, 1.0, 0, 24};
        auto [right, left] = road_constraint_rows(0, s, road, g, p);
        CHECK(right.coeffs[0].b_ac == 0.0);
        CHECK(left.coeffs[0].b_ac == 0.0);
    }
    SECTION("mirror symmetry about the centerline") {
        Rng rng(7);
        for (int trial = 0; trial < 200; ++trial) {
            VehicleState s{rng.uniform(-50, 50), rng.uniform(-3.4, 3.4),
                           rng.uniform(-0.5, 0.5), rng.uniform(1, 30)};
            VehicleState sm{s.x, -s.y, -s.theta, s.v};
            auto [right, left] = road_constraint_rows(0, s, road, g, p);
            auto [right_m, left_m] = road_constraint_rows(0, sm, road, g, p);
            // mirroring flips the lateral axis, so steering flips sign too
            REQUIRE(right_m.a == Catch::Approx(left.a).margin(1e-12));
            REQUIRE(right_m.coeffs[0].b_delta ==
                    Catch::Approx(-left.coeffs[0].b_delta).margin(1e-12));
            REQUIRE(right_m.coeffs[0].b_ac == Catch::Approx(left.coeffs[0].b_ac).margin(1e-12));
        }
    }
}

TEST_CASE("pair row sign and symmetry structure") {
    EllipseParams e{2.0, 3.0, 0.0};
    CbfGains g;
    VehicleParams p;

    SECTION("far-apart head-on pair is inactive at zero input") {
        VehicleState a{0, 0, 0, 20};
        VehicleState b{200, 0, kPi, 20};
        ConstraintRow row = pair_constraint_row(0, a, 1, b, e, g, p);
        CHECK(row.a > 0.0);
    }
    SECTION("parallel-heading pair has antisymmetric acceleration coefficients") {
        Rng rng(19);
        for (int trial = 0; trial < 200; ++trial) {
            const double theta = rng.uniform(-kPi, kPi);
            VehicleState a{0, 0, theta, rng.uniform(5, 25)};
            VehicleState b{rng.uniform(8, 25), rng.uniform(-4, 4), theta, rng.uniform(5, 25)};
            ConstraintRow row = pair_constraint_row(0, a, 1, b, e, g, p);
            REQUIRE(row.coeffs[0].b_ac == Catch::Approx(-row.coeffs[1].b_ac).margin(1e-12));
        }
    }
}

TEST_CASE("analytic row matches the finite-difference oracle") {
    EllipseParams e{2.0, 3.0, 0.0};
    CbfGains g;
    VehicleParams p;
    Rng rng(2024);

    const double step_u = 1e-5;
    int checked = 0;
    while (checked < 1000) {
        VehicleState a = random_state(rng);
        VehicleState b = random_state(rng);
        // keep clear of the focal-gradient singularity
        const Vec2 f = e.rho() * heading_vec(a.theta);
        const Vec2 xa{a.x, a.y}, xb{b.x, b.y};
        if (norm(xa + f - xb) < 0.5 || norm(xa - f - xb) < 0.5) continue;
        ++checked;

        ConstraintRow row = pair_constraint_row(0, a, 1, b, e, g, p);
        auto rel = [](double got, double want) {
            return std::abs(got - want) / std::max(1.0, std::abs(want));
        };

        const double a_fd = row_value_fd(a, b, {0, 0}, {0, 0}, e, g, p);
        REQUIRE(rel(row.a, a_fd) < 1e-4);

        auto fd_coeff = [&](int which) {
            return oracles::fd_row_coeff(a, b, which, e, g, p, step_u);
        };

        REQUIRE(rel(row.coeffs[0].b_delta, fd_coeff(0)) < 1e-4);
        REQUIRE(rel(row.coeffs[0].b_ac, fd_coeff(1)) < 1e-4);
        REQUIRE(rel(row.coeffs[1].b_delta, fd_coeff(2)) < 1e-4);
        REQUIRE(rel(row.coeffs[1].b_ac, fd_coeff(3)) < 1e-4);
    }
}

TEST_CASE("enforcing the row keeps the barrier from crossing zero") {
    // follower/leader at equal speed: h(0) > 0, hd(0) = 0; a minimum-norm
    // input enforcing a + b.u = 0 drives h along the critically damped
    // second-order profile, which never undershoots materially
    EllipseParams e{2.0, 3.0, 0.0};
    CbfGains g;
    VehicleParams p;

    VehicleState follower{0, 0, 0, 20};
    VehicleState leader{20, 0, 0, 20};
    const double h0 = ellipse_h(follower, leader, e);
    REQUIRE(h0 > 0.0);
    {
        ConstraintRow r0 = pair_constraint_row(0, follower, 1, leader, e, g, p);
        const double sigma0 = r0.a - g.l0 * h0;  // l1*hd + drift, drift >= 0
        REQUIRE(std::abs(sigma0) < g.l1 * 1e-9 + 1.0);  // hd(0) ~ 0
    }

    const double dt = 1e-3;
    double h_min = h0;
    VehicleState si = follower, sj = leader;
    for (int k = 0; k < 10000; ++k) {
        ConstraintRow row = pair_constraint_row(0, si, 1, sj, e, g, p);
        // minimum-norm exact enforcement of a + b.u = 0
        const double bvec[4] = {row.coeffs[0].b_delta, row.coeffs[0].b_ac,
                                row.coeffs[1].b_delta, row.coeffs[1].b_ac};
        double bb = 0.0;
        for (double v : bvec) bb += v * v;
        REQUIRE(bb > 1e-12);
        const double scale = -row.a / bb;
        const ControlInput ui{scale * bvec[0], scale * bvec[1]};
        const ControlInput uj{scale * bvec[2], scale * bvec[3]};
        si = step(si, ui, p, dt);
        sj = step(sj, uj, p, dt);
        h_min = std::min(h_min, ellipse_h(si, sj, e));
    }
    CHECK(h_min >= -0.01 * h0);
}

TEST_CASE("row assembly prunes far pairs and keeps road rows") {
    EllipseParams e{2.0, 3.0, 0.0};
    CbfGains g;
    VehicleParams p;
    RoadGeometry road;

    std::vector<VehicleState> states{{0, -1.75, 0, 22}, {10, 1.75, 0, 22}, {200, -1.75, 0, 22}};
    auto rows = assemble_rows(states, e, road, g, p);

    int pair_rows = 0, road_rows = 0;
    for (const ConstraintRow& r : rows) {
        if (r.tag.kind == ConstraintTag::Kind::Pair) {
            ++pair_rows;
            REQUIRE(r.n_coeffs == 2);
            // agent 2 is 190 m away from everyone
            REQUIRE(r.tag.i != 2);
            REQUIRE(r.tag.j != 2);
        } else {
            ++road_rows;
            REQUIRE(r.n_coeffs == 1);
        }
    }
    CHECK(pair_rows == 2);  // (0,1) and (1,0)
    CHECK(road_rows == 6);
}
