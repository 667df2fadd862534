// Copyright 2026 The offload-planner Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>

#include "offload/lp.hpp"

using namespace offload::lp;

namespace {

// Every constraint and finite bound as a row a.x (rel) b.
struct Row {
    std::vector<double> a;
    Relation rel;
    double b;
};

std::vector<Row> all_rows(const LinearProgram& p) {
    std::vector<Row> rows;
    for (const auto& c : p.constraints) rows.push_back({c.coeffs, c.rel, c.rhs});
    for (std::size_t j = 0; j < p.size(); ++j) {
        Bounds bd = p.bounds.empty() ? Bounds{} : p.bounds[j];
        std::vector<double> e(p.size(), 0.0);
        e[j] = 1.0;
        if (std::isfinite(bd.lo)) rows.push_back({e, Relation::ge, bd.lo});
        if (std::isfinite(bd.hi)) rows.push_back({e, Relation::le, bd.hi});
    }
    return rows;
}

// Gaussian elimination with partial pivoting; nullopt when singular.
std::optional<std::vector<double>> solve_square(std::vector<std::vector<double>> a, std::vector<double> b) {
    const std::size_t n = b.size();
    for (std::size_t c = 0; c < n; ++c) {
        std::size_t piv = c;
        for (std::size_t r = c + 1; r < n; ++r)
            if (std::fabs(a[r][c]) > std::fabs(a[piv][c])) piv = r;
        if (std::fabs(a[piv][c]) < 1e-10) return std::nullopt;
        std::swap(a[c], a[piv]);
        std::swap(b[c], b[piv]);
        for (std::size_t r = 0; r < n; ++r) {
            if (r == c) continue;
            double f = a[r][c] / a[c][c];
            for (std::size_t k = c; k < n; ++k) a[r][k] -= f * a[c][k];
            b[r] -= f * b[c];
        }
    }
    for (std::size_t i = 0; i < n; ++i) b[i] /= a[i][i];
    return b;
}

bool satisfies(const std::vector<Row>& rows, const std::vector<double>& x, double tol) {
    for (const auto& r : rows) {
        double v = 0;
        for (std::size_t j = 0; j < x.size(); ++j) v += r.a[j] * x[j];
        if (r.rel == Relation::le && v > r.b + tol) return false;
        if (r.rel == Relation::ge && v < r.b - tol) return false;
        if (r.rel == Relation::eq && std::fabs(v - r.b) > tol) return false;
    }
    return true;
}

// Brute-force vertex enumeration: every n-subset of rows (equalities always included),
// intersected, filtered for feasibility. Returns the best objective, or nullopt if no vertex.
std::optional<double> vertex_oracle(const LinearProgram& p) {
    const auto rows = all_rows(p);
    const std::size_t n = p.size();
    std::vector<std::size_t> eq, free_rows;
    for (std::size_t i = 0; i < rows.size(); ++i) (rows[i].rel == Relation::eq ? eq : free_rows).push_back(i);
    if (eq.size() > n) return std::nullopt;
    const std::size_t k = n - eq.size();
    std::optional<double> best;
    std::vector<bool> pick(free_rows.size(), false);
    std::fill(pick.begin(), pick.begin() + static_cast<std::ptrdiff_t>(std::min(k, pick.size())), true);
    if (k > free_rows.size()) return std::nullopt;
    do {
        std::vector<std::vector<double>> a;
        std::vector<double> b;
        for (std::size_t i : eq) a.push_back(rows[i].a), b.push_back(rows[i].b);
        for (std::size_t i = 0; i < free_rows.size(); ++i)
            if (pick[i]) a.push_back(rows[free_rows[i]].a), b.push_back(rows[free_rows[i]].b);
        auto x = solve_square(a, b);
        if (!x || !satisfies(rows, *x, 1e-7)) continue;
        double v = 0;
        for (std::size_t j = 0; j < n; ++j) v += p.objective[j] * (*x)[j];
        if (!best || v < *best) best = v;
    } while (std::prev_permutation(pick.begin(), pick.end()));
    return best;
}

// Certifies optimality: finds y with sum_i y_i a_i = c, y_i >= 0 on >= rows, y_i <= 0 on <= rows,
// free on equalities, and b.y equal to the primal value. The multipliers are found with the
// solver under test but checked here independently.
void check_dual_certificate(const LinearProgram& p, const Solution& s) {
    const auto rows = all_rows(p);
    const std::size_t n = p.size(), m = rows.size();
    LinearProgram d;
    d.objective.assign(m, 0.0);
    d.bounds.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
        d.objective[i] = -rows[i].b;  // maximize b.y
        if (rows[i].rel == Relation::ge) d.bounds[i] = {0.0, INFINITY};
        if (rows[i].rel == Relation::le) d.bounds[i] = {-INFINITY, 0.0};
        if (rows[i].rel == Relation::eq) d.bounds[i] = {-INFINITY, INFINITY};
    }
    for (std::size_t j = 0; j < n; ++j) {
        std::vector<double> col(m);
        for (std::size_t i = 0; i < m; ++i) col[i] = rows[i].a[j];
        d.add(col, Relation::eq, p.objective[j]);
    }
    auto ds = solve(d);
    REQUIRE(ds.status == Status::optimal);
    const auto& y = ds.point;
    double by = 0;
    for (std::size_t i = 0; i < m; ++i) {
        by += rows[i].b * y[i];
        if (rows[i].rel == Relation::ge) CHECK(y[i] >= -1e-9);
        if (rows[i].rel == Relation::le) CHECK(y[i] <= 1e-9);
    }
    for (std::size_t j = 0; j < n; ++j) {
        double aty = 0;
        for (std::size_t i = 0; i < m; ++i) aty += rows[i].a[j] * y[i];
        CHECK(std::fabs(aty - p.objective[j]) <= 1e-6);
    }
    CHECK(std::fabs(by - s.objective_value) <= 1e-6 * std::max(1.0, std::fabs(by)));
}

// Bounded random LP: nonnegative variables, a positive budget row, and a few mixed rows.
LinearProgram random_lp(std::mt19937_64& rng, std::size_t n, std::size_t extra_rows, bool with_eq) {
    std::uniform_real_distribution<double> u(-1.0, 1.0), pos(0.1, 1.0);
    LinearProgram p;
    p.objective.resize(n);
    for (double& c : p.objective) c = u(rng);
    std::vector<double> budget(n);
    for (double& a : budget) a = pos(rng);
    p.add(budget, Relation::le, 1.0 + pos(rng) * n);
    for (std::size_t r = 0; r < extra_rows; ++r) {
        std::vector<double> a(n);
        for (double& v : a) v = u(rng);
        p.add(a, r % 2 ? Relation::ge : Relation::le, u(rng));
    }
    if (with_eq) {
        std::vector<double> a(n);
        for (double& v : a) v = pos(rng);
        p.add(a, Relation::eq, 0.5);
    }
    p.bounds.assign(n, Bounds{});
    for (std::size_t j = 0; j < n; j += 4) p.bounds[j].hi = 0.2 + pos(rng);
    return p;
}

}  // namespace

TEST_CASE("single variable with bounds expressed as rows") {
    LinearProgram p;
    p.objective = {1.0};
    p.add({1.0}, Relation::ge, 3.0);
    p.add({1.0}, Relation::le, 10.0);
    auto s = solve(p);
    REQUIRE(s.status == Status::optimal);
    CHECK(s.point[0] == doctest::Approx(3.0));
    CHECK(s.objective_value == doctest::Approx(3.0));
}

TEST_CASE("facet optimum") {
    LinearProgram p;
    p.objective = {-1.0, -1.0};
    p.add({1.0, 1.0}, Relation::le, 1.0);
    p.bounds = {{0, 1}, {0, 1}};
    auto s = solve(p);
    REQUIRE(s.status == Status::optimal);
    CHECK(s.objective_value == doctest::Approx(-1.0));
    CHECK(s.point[0] + s.point[1] == doctest::Approx(1.0));
    CHECK(max_violation(p, s.point) <= kFeasibilityTol);
}

TEST_CASE("infeasible and unbounded are statuses") {
    LinearProgram inf;
    inf.objective = {1.0, 1.0};
    inf.add({1.0, 1.0}, Relation::le, 1.0);
    inf.add({1.0, 1.0}, Relation::ge, 2.0);
    CHECK(solve(inf).status == Status::infeasible);

    LinearProgram unb;
    unb.objective = {-1.0, 0.0};
    unb.add({1.0, -1.0}, Relation::le, 1.0);
    CHECK(solve(unb).status == Status::unbounded);

    LinearProgram bad_bounds;
    bad_bounds.objective = {1.0};
    bad_bounds.bounds = {{2.0, 1.0}};
    CHECK_THROWS_AS(solve(bad_bounds), std::invalid_argument);
    LinearProgram bad_size;
    bad_size.objective = {1.0, 2.0};
    bad_size.add({1.0}, Relation::le, 1.0);
    CHECK_THROWS_AS(solve(bad_size), std::invalid_argument);
}

TEST_CASE("Beale's cycling example terminates under Bland's rule") {
    LinearProgram p;
    p.objective = {-0.75, 20.0, -0.5, 6.0};
    p.add({0.25, -8.0, -1.0, 9.0}, Relation::le, 0.0);
    p.add({0.5, -12.0, -0.5, 3.0}, Relation::le, 0.0);
    p.add({0.0, 0.0, 1.0, 0.0}, Relation::le, 1.0);
    auto s = solve(p);
    REQUIRE(s.status == Status::optimal);
    CHECK(s.objective_value == doctest::Approx(-1.25));
    CHECK(s.point[0] == doctest::Approx(1.0));
    CHECK(s.point[2] == doctest::Approx(1.0));
}

TEST_CASE("negative, free and upper-only bounds") {
    LinearProgram p;
    p.objective = {1.0, -1.0, 2.0};
    p.bounds = {{-5.0, -1.0}, {-INFINITY, 4.0}, {-INFINITY, INFINITY}};
    p.add({0.0, 0.0, 1.0}, Relation::ge, -3.0);
    p.add({1.0, 1.0, 1.0}, Relation::eq, 0.0);
    auto s = solve(p);
    REQUIRE(s.status == Status::optimal);
    auto o = vertex_oracle(p);
    REQUIRE(o);
    CHECK(s.objective_value == doctest::Approx(*o).epsilon(1e-9));
    CHECK(max_violation(p, s.point) <= kFeasibilityTol);
    check_dual_certificate(p, s);
}

TEST_CASE("random 9-variable LPs match vertex enumeration") {
    std::mt19937_64 rng(99);
    int optimal = 0;
    for (int it = 0; it < 60; ++it) {
        auto p = random_lp(rng, 9, static_cast<std::size_t>(it % 3), it % 4 == 0);
        auto s = solve(p);
        auto o = vertex_oracle(p);
        if (!o) {
            CHECK(s.status == Status::infeasible);
            continue;
        }
        REQUIRE(s.status == Status::optimal);
        ++optimal;
        CHECK(std::fabs(s.objective_value - *o) <= 1e-6);
        CHECK(max_violation(p, s.point) <= kFeasibilityTol);
        check_dual_certificate(p, s);
    }
    CHECK(optimal >= 40);
}

TEST_CASE("random small LPs with many constraints match vertex enumeration") {
    std::mt19937_64 rng(5);
    for (int it = 0; it < 200; ++it) {
        auto p = random_lp(rng, 2 + static_cast<std::size_t>(it % 3), 4 + static_cast<std::size_t>(it % 5), it % 3 == 0);
        auto s = solve(p);
        auto o = vertex_oracle(p);
        if (!o) {
            CHECK(s.status == Status::infeasible);
            continue;
        }
        REQUIRE(s.status == Status::optimal);
        CHECK(std::fabs(s.objective_value - *o) <= 1e-6);
        check_dual_certificate(p, s);
    }
}

TEST_CASE("positive objective scaling leaves the vertex unchanged") {
    std::mt19937_64 rng(42);
    for (int it = 0; it < 40; ++it) {
        auto p = random_lp(rng, 9, 2, false);
        auto s = solve(p);
        if (s.status != Status::optimal) continue;
        for (double k : {0.001, 3.7, 1024.0}) {
            LinearProgram q = p;
            for (double& c : q.objective) c *= k;
            auto t = solve(q);
            REQUIRE(t.status == Status::optimal);
            for (std::size_t j = 0; j < 9; ++j) CHECK(std::fabs(t.point[j] - s.point[j]) <= 1e-9);
            CHECK(t.objective_value == doctest::Approx(k * s.objective_value).epsilon(1e-9));
        }
    }
}

TEST_CASE("deterministic output") {
    std::mt19937_64 rng(8);
    auto p = random_lp(rng, 9, 2, true);
    auto a = solve(p), b = solve(p);
    CHECK(a.status == b.status);
    CHECK(a.point == b.point);
    CHECK(a.pivots == b.pivots);
}

TEST_CASE("redundant equalities") {
    LinearProgram p;
    p.objective = {1.0, 2.0};
    p.add({1.0, 1.0}, Relation::eq, 1.0);
    p.add({2.0, 2.0}, Relation::eq, 2.0);
    auto s = solve(p);
    REQUIRE(s.status == Status::optimal);
    CHECK(s.point[0] == doctest::Approx(1.0));
    CHECK(s.objective_value == doctest::Approx(1.0));
}
