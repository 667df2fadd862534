// Copyright 2026 The offload-planner Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "offload/lp.hpp"
#include "offload/model.hpp"

namespace offload {

// Placement variables in LP column order.
inline constexpr std::array<const char*, 9> kPlacementVars = {"wg", "wc", "wd", "cg", "cc", "cd", "hg", "hc", "hd"};

double placement_value(const Policy& p, std::size_t var);
void set_placement_value(Policy& p, std::size_t var, double v);
// Index into kPlacementVars; throws std::invalid_argument for unknown names.
std::size_t placement_index(const std::string& name);

struct SearchConfig {
    std::vector<std::int64_t> gbs_candidates;  // empty means {4, 8, ..., 256}
    std::vector<std::int64_t> ngb_candidates;  // empty means {1, ..., 20}
    std::optional<double> latency_ceiling;     // seconds per block
    std::map<std::string, double> pins;        // fixed placement fractions, e.g. {"wg", 0}
    std::optional<QuantConfig> compression;
    // Unset: try both settings when uncompressed. Compression always disables delegation.
    std::optional<bool> cpu_delegation;
    // Round fractions to tensor/element granularity before the final feasibility check.
    bool round_placement = true;
};

std::vector<std::int64_t> default_gbs_candidates();
std::vector<std::int64_t> default_ngb_candidates();

// Result of the placement LP for one (gbs, num_gpu_batches, delegation) candidate.
struct PlacementResult {
    lp::Status status = lp::Status::infeasible;
    double lp_objective = INFINITY;  // T / bls of the relaxed optimum
    Policy relaxed;                  // LP fractions
    Policy rounded;                  // after granularity rounding
    bool rounded_feasible = false;
    double objective = INFINITY;     // T / bls of the rounded policy (cost model)
    double latency = INFINITY;       // T of the rounded policy
};

// The placement LP: variables are the nine fractions followed by the per-layer prefill and
// decode latencies. Exposed for inspection and testing.
lp::LinearProgram build_placement_lp(const ModelSpec& m, const HardwareProfile& hw, const Workload& w,
                                     std::int64_t gbs, std::int64_t ngb, bool delegation,
                                     const SearchConfig& cfg);

PlacementResult solve_placement(const ModelSpec& m, const HardwareProfile& hw, const Workload& w,
                                std::int64_t gbs, std::int64_t ngb, bool delegation, const SearchConfig& cfg);

// Rounds toward slower devices: weights whole tensors at a time, cache and activations to one element.
Policy round_placement(const Policy& p, const ModelSpec& m, const Workload& w, const std::map<std::string, double>& pins = {});

struct CandidateRow {
    std::int64_t gbs = 0, num_gpu_batches = 0;
    bool cpu_delegation = false;
    lp::Status status = lp::Status::infeasible;
    double lp_objective = INFINITY;
    bool feasible = false;          // rounded policy passes the capacity check
    double objective = INFINITY;    // rounded T / bls
    double throughput = 0;          // rounded bls * n / T
};

struct SearchResult {
    bool found = false;
    Policy best;
    double throughput = 0;
    double latency = INFINITY;
    double objective = INFINITY;
    double lp_objective = INFINITY;
    std::vector<CandidateRow> table;  // canonical order: gbs, then num_gpu_batches, then delegation
    std::string message;              // set when nothing is feasible
    std::vector<std::string> binding_capacities;
};

SearchResult search(const ModelSpec& m, const HardwareProfile& hw, const Workload& w, const SearchConfig& cfg);

struct GridResult {
    bool found = false;
    Policy best;
    double objective = INFINITY;
    std::uint64_t evaluated = 0;
};

// Exhaustive search over placement triples on a simplex grid of the given step, using the cost
// model directly. Allowed steps: 0.05, 0.1, 0.25.
GridResult grid_oracle(const ModelSpec& m, const HardwareProfile& hw, const Workload& w, std::int64_t gbs,
                       std::int64_t ngb, double resolution, bool delegation = true,
                       const std::optional<QuantConfig>& compression = std::nullopt);

// "deepspeed" or "accelerate-like". Throws std::invalid_argument for other names.
Policy baseline_policy(const std::string& name, const ModelSpec& m, const HardwareProfile& hw, const Workload& w);

}  // namespace offload
