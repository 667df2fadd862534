// Copyright 2026 The offload-planner Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <string>
#include <vector>

namespace offload::lp {

enum class Relation { le, eq, ge };
enum class Status { optimal, infeasible, unbounded };

const char* to_string(Status s);

struct Constraint {
    std::vector<double> coeffs;
    Relation rel = Relation::le;
    double rhs = 0.0;
};

struct Bounds {
    double lo = 0.0;
    double hi = INFINITY;
};

// minimize objective . x  subject to constraints and per-variable bounds.
struct LinearProgram {
    std::vector<double> objective;
    std::vector<Constraint> constraints;
    std::vector<Bounds> bounds;  // empty means every variable is in [0, inf)

    std::size_t size() const { return objective.size(); }
    void add(std::vector<double> coeffs, Relation rel, double rhs) {
        constraints.push_back({std::move(coeffs), rel, rhs});
    }
};

struct Solution {
    Status status = Status::infeasible;
    std::vector<double> point;
    double objective_value = 0.0;
    int pivots = 0;
};

inline constexpr double kFeasibilityTol = 1e-7;
inline constexpr double kOptimalityTol = 1e-9;

// Two-phase dense tableau simplex with Bland's rule. Deterministic for a given input.
// Throws std::invalid_argument only for malformed programs (mismatched sizes, lo > hi).
Solution solve(const LinearProgram& prog);

// Largest violation of any constraint or bound at x (0 when feasible).
double max_violation(const LinearProgram& prog, const std::vector<double>& x);

}  // namespace offload::lp
