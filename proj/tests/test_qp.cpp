#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstring>
#include <limits>
#include <vector>

#include "mpf/qp.hpp"
#include "mpf/rng.hpp"
#include "oracles.hpp"

using namespace mpf;

namespace {

ConstraintRow make_row(double a, const std::vector<double>& b) {
    ConstraintRow row;
    row.a = a;
    row.n_coeffs = static_cast<int>((b.size() + 1) / 2);
    for (int c = 0; c < row.n_coeffs; ++c) {
        row.coeffs[c].agent = c;
        row.coeffs[c].b_delta = b[2 * c];
        row.coeffs[c].b_ac = (2 * c + 1 < static_cast<int>(b.size())) ? b[2 * c + 1] : 0.0;
    }
    row.tag = ConstraintTag::pair(0, 1);
    return row;
}

// pads b to an even length so the agent/channel packing works for odd n
std::vector<double> pad_even(std::vector<double> b) {
    if (b.size() % 2 != 0) b.push_back(0.0);
    return b;
}

// Rows address two channels per agent, so odd sizes get one inert padding
// variable (zero coefficients everywhere, reference 0).
QpProblem make_problem(int n, std::vector<double> u0,
                       const std::vector<std::pair<double, std::vector<double>>>& rows,
                       std::vector<double> lb, std::vector<double> ub, double w = 1e6) {
    QpProblem p;
    if (n % 2 != 0) {
        ++n;
        u0.push_back(0.0);
        lb.push_back(-1.0);
        ub.push_back(1.0);
    }
    p.n = n;
    p.u0 = std::move(u0);
    p.lb = std::move(lb);
    p.ub = std::move(ub);
    p.slack_weight = w;
    for (const auto& [a, b] : rows) p.rows.push_back(make_row(a, pad_even(b)));
    return p;
}

using oracles::brute_force;
using oracles::BruteResult;

}  // namespace

TEST_CASE("unconstrained problem returns the reference input") {
    QpProblem p = make_problem(2, {0.3, -1.2}, {}, {-8, -8}, {4, 4});
    QpSolution sol = solve(p);
    CHECK(sol.status == QpSolution::Status::optimal);
    CHECK(sol.u_star[0] == Catch::Approx(0.3).margin(1e-12));
    CHECK(sol.u_star[1] == Catch::Approx(-1.2).margin(1e-12));
}

TEST_CASE("single soft constraint lands next to the hard solution") {
    QpProblem p = make_problem(1, {0.0}, {{-1.0, {1.0}}}, {-8}, {4});
    QpSolution sol = solve(p);
    CHECK(sol.status == QpSolution::Status::optimal);
    CHECK(sol.u_star[0] == Catch::Approx(1.0).margin(2e-6));
    CHECK(sol.slacks[0] == Catch::Approx(1e-6).margin(2e-6));
    CHECK(sol.kkt_residual < 1e-8);
}

TEST_CASE("two-variable projection onto a half-space") {
    QpProblem p = make_problem(2, {0.0, 0.0}, {{-2.0, {1.0, 1.0}}}, {-8, -8}, {4, 4});
    QpSolution sol = solve(p);
    CHECK(sol.u_star[0] == Catch::Approx(1.0).margin(1e-5));
    CHECK(sol.u_star[1] == Catch::Approx(1.0).margin(1e-5));
}

TEST_CASE("box-infeasible row saturates and takes slack") {
    QpProblem p = make_problem(2, {0.0, 0.0}, {{-100.0, {1.0, 0.0}}}, {-8, -8}, {4, 4});
    QpSolution sol = solve(p);
    CHECK(sol.u_star[0] == Catch::Approx(4.0).margin(1e-9));
    CHECK(sol.u_star[1] == Catch::Approx(0.0).margin(1e-9));
    CHECK(sol.slacks[0] > 90.0);
}

TEST_CASE("explicit single-constraint control") {
    SECTION("inactive constraint returns u0") {
        auto u = explicit_single_constraint({0.5, -0.25}, 1.0, {1.0, 0.0}, {0.0, 0.0});
        CHECK(u[0] == 0.5);
        CHECK(u[1] == -0.25);
    }
    SECTION("active constraint projects") {
        auto u = explicit_single_constraint({0.0, 0.0}, -1.0, {1.0, 0.0}, {0.0, 0.0});
        CHECK(u[0] == Catch::Approx(1.0).epsilon(1e-14));
        CHECK(u[1] == 0.0);
    }
    SECTION("w can cancel the violation") {
        auto u = explicit_single_constraint({0.0, 0.0}, -1.0, {1.0, 0.0}, {1.0, 0.0});
        CHECK(u[0] == 0.0);
        CHECK(u[1] == 0.0);
    }
    SECTION("zero b with violated constraint is a contract violation") {
        CHECK_THROWS_AS(explicit_single_constraint({0.0}, -1.0, {0.0}, {0.0}),
                        std::domain_error);
    }
}

TEST_CASE("solver matches the closed form on random single-constraint problems") {
    Rng rng(314);
    int done = 0;
    while (done < 1000) {
        const int n = 1 + static_cast<int>(rng.next_below(3));
        std::vector<double> u0(n), b(n);
        double bb = 0.0;
        for (int i = 0; i < n; ++i) {
            u0[i] = rng.uniform(-5, 5);
            b[i] = rng.uniform(-3, 3);
            bb += b[i] * b[i];
        }
        if (bb < 1.0) continue;
        const double a = rng.uniform(-10, 10);
        // exact softening shift of the active solution: the 1e6 slack weight
        // moves it by |r| |b_i| / (W bb (bb + 1/W)); keep within the 1e-5 claim
        double r = a;
        for (int i = 0; i < n; ++i) r += b[i] * u0[i];
        double bmax = 0.0;
        for (int i = 0; i < n; ++i) bmax = std::max(bmax, std::abs(b[i]));
        const double w = 1e6;
        if (std::abs(r) * bmax / (w * bb * (bb + 1.0 / w)) > 5e-6) continue;
        ++done;

        QpProblem p = make_problem(n, u0, {{a, b}},
                                   std::vector<double>(n, -1e9), std::vector<double>(n, 1e9), w);
        QpSolution sol = solve(p);
        REQUIRE(sol.status == QpSolution::Status::optimal);
        auto expect = explicit_single_constraint(u0, a, pad_even(b), std::vector<double>(pad_even(b).size(), 0.0));
        for (int i = 0; i < n; ++i) {
            REQUIRE(sol.u_star[i] == Catch::Approx(expect[i]).margin(1e-5));
        }
    }
}

TEST_CASE("solver matches brute-force enumeration on random small problems") {
    Rng rng(2718);
    int done = 0;
    while (done < 1000) {
        const int n = 1 + static_cast<int>(rng.next_below(3));
        const int m = static_cast<int>(rng.next_below(4));
        std::vector<double> u0(n), lb(n), ub(n);
        for (int i = 0; i < n; ++i) {
            u0[i] = rng.uniform(-8, 8);
            lb[i] = rng.uniform(-6, -1);
            ub[i] = rng.uniform(1, 6);
        }
        std::vector<std::pair<double, std::vector<double>>> rows;
        for (int k = 0; k < m; ++k) {
            std::vector<double> b(n);
            double bb = 0.0;
            for (int i = 0; i < n; ++i) {
                b[i] = rng.uniform(-3, 3);
                bb += b[i] * b[i];
            }
            if (bb < 0.01) b[0] = 1.0;
            rows.push_back({rng.uniform(-5, 5), b});
        }
        // moderate weight keeps the brute-force pattern checks well conditioned
        QpProblem p = make_problem(n, u0, rows, lb, ub, 1e4);
        BruteResult ref = brute_force(p);
        if (ref.u.empty()) continue;
        ++done;

        QpSolution sol = solve(p);
        REQUIRE(sol.status == QpSolution::Status::optimal);
        for (int i = 0; i < n; ++i) {
            REQUIRE(sol.u_star[i] == Catch::Approx(ref.u[i]).margin(1e-6));
        }
    }
}

TEST_CASE("objective is monotone along the iteration path") {
    Rng rng(99);
    for (int trial = 0; trial < 200; ++trial) {
        const int agents = 1 + static_cast<int>(rng.next_below(3));
        const int n = 2 * agents;
        std::vector<double> u0(n), lb(n, -8.0), ub(n, 4.0);
        for (int i = 0; i < n; ++i) u0[i] = rng.uniform(-10, 10);

        QpProblem p;
        p.n = n;
        p.u0 = u0;
        p.lb = lb;
        p.ub = ub;
        p.trace_objective = true;
        const int m = 1 + static_cast<int>(rng.next_below(5));
        for (int k = 0; k < m; ++k) {
            ConstraintRow row;
            row.a = rng.uniform(-8, 3);
            const int i = static_cast<int>(rng.next_below(agents));
            int j = static_cast<int>(rng.next_below(agents));
            if (j == i) j = (j + 1) % agents;
            row.coeffs[0] = {i, rng.uniform(-3, 3), rng.uniform(-3, 3)};
            row.n_coeffs = 1;
            if (agents > 1) {
                row.coeffs[1] = {j, rng.uniform(-3, 3), rng.uniform(-3, 3)};
                row.n_coeffs = 2;
            }
            row.tag = ConstraintTag::pair(i, j);
            p.rows.push_back(row);
        }
        QpSolution sol = solve(p);
        // tolerance covers Schur-complement rounding at slack_weight 1e6
        for (std::size_t k = 1; k < sol.objective_trace.size(); ++k) {
            REQUIRE(sol.objective_trace[k] <=
                    sol.objective_trace[k - 1] * (1.0 + 1e-7) + 1e-7);
        }
    }
}

TEST_CASE("identical inputs give bit-identical outputs") {
    QpProblem p = make_problem(4, {0.1, -0.4, 2.0, 0.7},
                               {{-1.5, {0.3, -1.0, 0.2, 0.5}}, {-0.2, {1.0, 0.0, -0.3, 0.1}}},
                               {-8, -8, -8, -8}, {4, 4, 4, 4});
    QpSolution s1 = solve(p);
    QpSolution s2 = solve(p);
    REQUIRE(s1.u_star.size() == s2.u_star.size());
    REQUIRE(std::memcmp(s1.u_star.data(), s2.u_star.data(),
                        s1.u_star.size() * sizeof(double)) == 0);
    REQUIRE(std::memcmp(s1.slacks.data(), s2.slacks.data(),
                        s1.slacks.size() * sizeof(double)) == 0);
}

TEST_CASE("iteration cap reports max_iter with the best iterate") {
    QpProblem p = make_problem(2, {5.0, 5.0}, {{-2.0, {1.0, 1.0}}, {-1.0, {1.0, -1.0}}},
                               {-8, -8}, {4, 4});
    QpSolution sol = solve(p, 1e-8, 1);
    CHECK(sol.status == QpSolution::Status::max_iter);
    CHECK(sol.u_star.size() == 2);
}

TEST_CASE("warm start reproduces the cold-start optimum") {
    Rng rng(555);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 4;
        std::vector<double> u0(n);
        for (int i = 0; i < n; ++i) u0[i] = rng.uniform(-6, 6);
        std::vector<std::pair<double, std::vector<double>>> rows;
        for (int k = 0; k < 3; ++k) {
            std::vector<double> b(n);
            for (int i = 0; i < n; ++i) b[i] = rng.uniform(-2, 2);
            rows.push_back({rng.uniform(-6, 2), b});
        }
        QpProblem p = make_problem(n, u0, rows, {-8, -8, -8, -8}, {4, 4, 4, 4});
        QpSolution cold = solve(p);
        QpSolution warm = solve(p, 1e-8, 200, &cold.active_rows);
        REQUIRE(warm.status == QpSolution::Status::optimal);
        for (int i = 0; i < n; ++i) {
            REQUIRE(warm.u_star[i] == Catch::Approx(cold.u_star[i]).margin(1e-7));
        }
    }
}
