// Copyright 2026 The offload-planner Authors
// SPDX-License-Identifier: Apache-2.0

#include "offload/lp.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace offload::lp {

namespace {

constexpr double kPivotTol = 1e-9;

// How an original variable maps onto non-negative tableau columns.
struct VarMap {
    enum Kind { shifted, mirrored, split } kind = shifted;
    double offset = 0.0;  // lo for shifted, hi for mirrored
    int col = -1;
    int col_neg = -1;  // second column for split variables
};

class Tableau {
public:
    Tableau(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), t_((rows + 1) * (cols + 1), 0.0) {}

    double& at(std::size_t r, std::size_t c) { return t_[r * (cols_ + 1) + c]; }
    double at(std::size_t r, std::size_t c) const { return t_[r * (cols_ + 1) + c]; }
    double& rhs(std::size_t r) { return at(r, cols_); }
    // Row `rows_` holds the reduced costs; its rhs entry holds -objective.
    double& cost(std::size_t c) { return at(rows_, c); }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    void pivot(std::size_t pr, std::size_t pc) {
        const double p = at(pr, pc);
        for (std::size_t c = 0; c <= cols_; ++c) at(pr, c) /= p;
        at(pr, pc) = 1.0;
        for (std::size_t r = 0; r <= rows_; ++r) {
            if (r == pr) continue;
            const double f = at(r, pc);
            if (f == 0.0) continue;
            for (std::size_t c = 0; c <= cols_; ++c) at(r, c) -= f * at(pr, c);
            at(r, pc) = 0.0;
        }
    }

    void drop_row(std::size_t r) {
        std::vector<double> nt;
        nt.reserve(rows_ * (cols_ + 1));
        for (std::size_t i = 0; i <= rows_; ++i) {
            if (i == r) continue;
            nt.insert(nt.end(), t_.begin() + static_cast<std::ptrdiff_t>(i * (cols_ + 1)),
                      t_.begin() + static_cast<std::ptrdiff_t>((i + 1) * (cols_ + 1)));
        }
        t_ = std::move(nt);
        --rows_;
    }

private:
    std::size_t rows_, cols_;
    std::vector<double> t_;
};

enum class Outcome { optimal, unbounded };

// Bland's rule: lowest-index improving column, lowest-index basic variable among ratio ties.
Outcome run_simplex(Tableau& tab, std::vector<std::size_t>& basis, const std::vector<bool>& allowed,
                    int& pivots) {
    for (;;) {
        std::size_t enter = tab.cols();
        for (std::size_t c = 0; c < tab.cols(); ++c) {
            if (allowed[c] && tab.cost(c) < -kOptimalityTol) {
                enter = c;
                break;
            }
        }
        if (enter == tab.cols()) return Outcome::optimal;

        std::size_t leave = tab.rows();
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t r = 0; r < tab.rows(); ++r) {
            const double a = tab.at(r, enter);
            if (a <= kPivotTol) continue;
            const double ratio = tab.rhs(r) / a;
            if (leave == tab.rows() || ratio < best - 1e-12) {
                best = ratio;
                leave = r;
            } else if (ratio <= best + 1e-12 && basis[r] < basis[leave]) {
                leave = r;
            }
        }
        if (leave == tab.rows()) return Outcome::unbounded;
        tab.pivot(leave, enter);
        basis[leave] = enter;
        ++pivots;
    }
}

}  // namespace

const char* to_string(Status s) {
    switch (s) {
        case Status::optimal: return "optimal";
        case Status::infeasible: return "infeasible";
        case Status::unbounded: return "unbounded";
    }
    return "?";
}

double max_violation(const LinearProgram& prog, const std::vector<double>& x) {
    double worst = 0.0;
    for (const auto& con : prog.constraints) {
        double lhs = 0.0;
        for (std::size_t j = 0; j < x.size(); ++j) lhs += con.coeffs[j] * x[j];
        double v = 0.0;
        if (con.rel == Relation::le) v = lhs - con.rhs;
        else if (con.rel == Relation::ge) v = con.rhs - lhs;
        else v = std::fabs(lhs - con.rhs);
        worst = std::max(worst, v);
    }
    for (std::size_t j = 0; j < x.size(); ++j) {
        Bounds b = prog.bounds.empty() ? Bounds{} : prog.bounds[j];
        worst = std::max({worst, b.lo - x[j], x[j] - b.hi});
    }
    return worst;
}

Solution solve(const LinearProgram& prog) {
    const std::size_t n = prog.size();
    if (!prog.bounds.empty() && prog.bounds.size() != n) throw std::invalid_argument("lp: bounds size mismatch");
    for (const auto& con : prog.constraints) {
        if (con.coeffs.size() != n) throw std::invalid_argument("lp: constraint size mismatch");
    }

    // Map each variable onto non-negative columns.
    std::vector<VarMap> vars(n);
    std::size_t ncols = 0;
    struct Row { std::vector<double> a; Relation rel; double rhs; };
    std::vector<Row> rows;
    std::vector<std::pair<std::size_t, double>> upper_rows;  // (column, width) for shifted vars with finite hi
    for (std::size_t j = 0; j < n; ++j) {
        Bounds b = prog.bounds.empty() ? Bounds{} : prog.bounds[j];
        if (b.lo > b.hi) throw std::invalid_argument("lp: variable lower bound exceeds upper bound");
        if (std::isfinite(b.lo)) {
            vars[j] = {VarMap::shifted, b.lo, static_cast<int>(ncols++), -1};
            if (std::isfinite(b.hi)) upper_rows.emplace_back(vars[j].col, b.hi - b.lo);
        } else if (std::isfinite(b.hi)) {
            vars[j] = {VarMap::mirrored, b.hi, static_cast<int>(ncols++), -1};
        } else {
            vars[j] = {VarMap::split, 0.0, static_cast<int>(ncols), static_cast<int>(ncols + 1)};
            ncols += 2;
        }
    }
    const std::size_t nstruct = ncols;

    auto to_row = [&](const std::vector<double>& coeffs, Relation rel, double rhs) {
        Row r{std::vector<double>(nstruct, 0.0), rel, rhs};
        for (std::size_t j = 0; j < n; ++j) {
            const double a = coeffs[j];
            if (a == 0.0) continue;
            const auto& v = vars[j];
            switch (v.kind) {
                case VarMap::shifted:
                    r.a[v.col] += a;
                    r.rhs -= a * v.offset;
                    break;
                case VarMap::mirrored:
                    r.a[v.col] -= a;
                    r.rhs -= a * v.offset;
                    break;
                case VarMap::split:
                    r.a[v.col] += a;
                    r.a[v.col_neg] -= a;
                    break;
            }
        }
        return r;
    };
    for (const auto& con : prog.constraints) rows.push_back(to_row(con.coeffs, con.rel, con.rhs));
    for (const auto& [col, width] : upper_rows) {
        Row r{std::vector<double>(nstruct, 0.0), Relation::le, width};
        r.a[col] = 1.0;
        rows.push_back(std::move(r));
    }
    for (auto& r : rows) {
        if (r.rhs < 0) {
            for (double& a : r.a) a = -a;
            r.rhs = -r.rhs;
            if (r.rel == Relation::le) r.rel = Relation::ge;
            else if (r.rel == Relation::ge) r.rel = Relation::le;
        }
    }

    // Columns: structural, then one slack/surplus per inequality, then artificials.
    std::size_t nslack = 0, nart = 0;
    for (const auto& r : rows) {
        if (r.rel != Relation::eq) ++nslack;
        if (r.rel != Relation::le) ++nart;
    }
    const std::size_t total = nstruct + nslack + nart;
    const std::size_t m = rows.size();
    Tableau tab(m, total);
    std::vector<std::size_t> basis(m);
    std::vector<bool> is_art(total, false);
    std::size_t s_next = nstruct, a_next = nstruct + nslack;
    for (std::size_t i = 0; i < m; ++i) {
        const auto& r = rows[i];
        for (std::size_t c = 0; c < nstruct; ++c) tab.at(i, c) = r.a[c];
        tab.rhs(i) = r.rhs;
        if (r.rel == Relation::le) {
            tab.at(i, s_next) = 1.0;
            basis[i] = s_next++;
        } else {
            if (r.rel == Relation::ge) tab.at(i, s_next++) = -1.0;
            tab.at(i, a_next) = 1.0;
            is_art[a_next] = true;
            basis[i] = a_next++;
        }
    }

    Solution sol;
    // Phase 1: minimize the sum of artificials.
    if (nart > 0) {
        for (std::size_t c = 0; c <= total; ++c) tab.cost(c) = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            if (!is_art[basis[i]]) continue;
            for (std::size_t c = 0; c <= total; ++c) tab.cost(c) -= tab.at(i, c);
        }
        for (std::size_t c = 0; c < total; ++c) {
            if (is_art[c]) tab.cost(c) = 0.0;
        }
        std::vector<bool> allowed(total, true);
        run_simplex(tab, basis, allowed, sol.pivots);
        if (-tab.cost(total) > kFeasibilityTol) {
            sol.status = Status::infeasible;
            return sol;
        }
        // Drive remaining artificials out of the basis; drop redundant rows.
        for (std::size_t i = 0; i < tab.rows();) {
            if (!is_art[basis[i]]) {
                ++i;
                continue;
            }
            std::size_t enter = total;
            for (std::size_t c = 0; c < total; ++c) {
                if (!is_art[c] && std::fabs(tab.at(i, c)) > kPivotTol) {
                    enter = c;
                    break;
                }
            }
            if (enter == total) {
                tab.drop_row(i);
                basis.erase(basis.begin() + static_cast<std::ptrdiff_t>(i));
                continue;
            }
            tab.pivot(i, enter);
            basis[i] = enter;
            ++sol.pivots;
            ++i;
        }
    }

    // Phase 2: original objective over non-artificial columns.
    std::vector<double> cost(total + 1, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        const double c = prog.objective[j];
        const auto& v = vars[j];
        switch (v.kind) {
            case VarMap::shifted:
                cost[v.col] += c;
                break;
            case VarMap::mirrored:
                cost[v.col] -= c;
                break;
            case VarMap::split:
                cost[v.col] += c;
                cost[v.col_neg] -= c;
                break;
        }
    }
    for (std::size_t c = 0; c <= total; ++c) tab.cost(c) = cost[c];
    for (std::size_t i = 0; i < tab.rows(); ++i) {
        const double f = tab.cost(basis[i]);
        if (f == 0.0) continue;
        for (std::size_t c = 0; c <= total; ++c) tab.cost(c) -= f * tab.at(i, c);
    }
    std::vector<bool> allowed(total);
    for (std::size_t c = 0; c < total; ++c) allowed[c] = !is_art[c];
    if (run_simplex(tab, basis, allowed, sol.pivots) == Outcome::unbounded) {
        sol.status = Status::unbounded;
        return sol;
    }

    std::vector<double> y(total, 0.0);
    for (std::size_t i = 0; i < tab.rows(); ++i) y[basis[i]] = std::max(0.0, tab.rhs(i));
    sol.point.assign(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        const auto& v = vars[j];
        switch (v.kind) {
            case VarMap::shifted: sol.point[j] = v.offset + y[v.col]; break;
            case VarMap::mirrored: sol.point[j] = v.offset - y[v.col]; break;
            case VarMap::split: sol.point[j] = y[v.col] - y[v.col_neg]; break;
        }
    }
    sol.objective_value = 0.0;
    for (std::size_t j = 0; j < n; ++j) sol.objective_value += prog.objective[j] * sol.point[j];
    sol.status = Status::optimal;
    return sol;
}

}  // namespace offload::lp
