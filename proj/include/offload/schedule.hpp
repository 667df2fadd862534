// Copyright 2026 The offload-planner Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "offload/model.hpp"

namespace offload {

// rows x (tokens * layers) grid of squares. Column index = token * layers + layer; the color
// of a square is its layer.
struct ComputeGraph {
    std::int64_t rows = 1;
    std::int64_t tokens = 1;
    std::int64_t layers = 1;
    std::int64_t prompt_len = 1;

    std::int64_t columns() const { return tokens * layers; }
    std::int64_t squares() const { return rows * tokens * layers; }
};

void check_graph(const ComputeGraph& g);

struct Square {
    std::int64_t row = 0, token = 0, layer = 0;
};

// KV buffers reserved for the full sequence at row start, or grown one token at a time.
enum class KvAllocation { preallocated, incremental };

struct TraceStep {
    Square sq;
    bool load_weights = false;  // starts a new load epoch for sq.layer
    bool load_activation = true;
    bool load_kv = false;
    bool store_activation = true;
    bool store_kv = true;
    std::int64_t diagonal = -1;  // diagonal index, diagonal traces only
};

struct ScheduleTrace {
    std::string kind;
    ComputeGraph graph;
    std::int64_t bls = 1;
    KvAllocation kv = KvAllocation::preallocated;
    std::vector<TraceStep> steps;
};

// Byte sizes of the tensors one square touches (FP16 formulas scaled by bytes_per_element / 2).
struct SquareSizes {
    double weights = 1;         // one layer
    double activation = 1;      // per row per token: 2 * h1
    double kv_token = 1;        // per row per layer per token: 4 * h1
};
SquareSizes square_sizes(const ModelSpec& m);

struct Capacities {
    std::optional<double> memory_bytes;  // offload tier: one layer of weights + activations + KV
    std::optional<double> epoch_units;   // per-load working capacity in token-KV units
};

struct Violation {
    std::string constraint;  // coverage, left-dependency, co-location, retention, capacity
    std::int64_t step = -1;
    std::string message;
};

// First violated constraint, or nullopt when the trace is valid.
std::optional<Violation> validate_trace(const ScheduleTrace& t, const Capacities& caps,
                                        const SquareSizes& sizes = {});

// Largest resident byte count over the trace (weights + in-flight rows' activations and KV).
double trace_peak_memory(const ScheduleTrace& t, const SquareSizes& sizes);

ScheduleTrace row_major(const ComputeGraph& g);
ScheduleTrace zigzag(const ComputeGraph& g, std::int64_t bls);
// Rows enter in groups of max(1, bls / tokens); each diagonal advances every active group by one token.
ScheduleTrace diagonal(const ComputeGraph& g, std::int64_t bls);

struct IoAccount {
    double weight_bytes_loaded = 0;
    double activation_bytes_moved = 0;
    double kv_bytes_moved = 0;
    std::vector<std::int64_t> weight_load_count;  // per color

    std::int64_t total_weight_loads() const;
};

IoAccount io_account(const ScheduleTrace& t, const SquareSizes& sizes);

// Closed forms for one zig-zag block of bls rows.
double zigzag_activation_bytes(const ModelSpec& m, const Workload& w, std::int64_t bls);
double zigzag_kv_bytes(const ModelSpec& m, const Workload& w, std::int64_t bls);
double zigzag_peak_bytes(const ModelSpec& m, const Workload& w, double layer_weight_bytes, std::int64_t bls);

// Block-size bounds under an offload-tier capacity. Throw std::invalid_argument when
// capacity <= layer_weight_bytes.
std::int64_t max_bls_zigzag(const ModelSpec& m, const Workload& w, double layer_weight_bytes, double capacity);
std::int64_t max_bls_diagonal(const ModelSpec& m, const Workload& w, double layer_weight_bytes, double capacity);
double bls_ratio(const ModelSpec& m, const Workload& w, double layer_weight_bytes, double capacity);

// Load-epoch accounting: a square at token t holds KV for prompt_len + t tokens.
double square_cost(const ComputeGraph& g, const Square& sq);
double total_square_cost(const ComputeGraph& g);
std::int64_t io_lower_bound(const ComputeGraph& g, double epoch_capacity);
// Largest zig-zag block whose columns fit the epoch capacity (0 if none).
std::int64_t max_bls_epoch(const ComputeGraph& g, double epoch_capacity);

struct BruteForceResult {
    bool feasible = false;
    std::int64_t loads = 0;
    std::uint64_t states = 0;
    ScheduleTrace trace;
};

// Minimum number of load epochs over all valid traces. Limited to 200 squares.
BruteForceResult brute_force_optimal(const ComputeGraph& g, double epoch_capacity);

// Sorted (descending) last-computed column indices, 1-based, of in-progress rows after `step`.
std::vector<std::int64_t> working_state(const ScheduleTrace& t, std::size_t step);

// Step ranges [first, last) of diagonals in which every group is active.
std::vector<std::pair<std::size_t, std::size_t>> steady_diagonals(const ScheduleTrace& t);
std::int64_t loads_between(const ScheduleTrace& t, std::size_t first, std::size_t last);

// Mean of (completion step - first + 1) over the rows touched in [first, last).
double cohort_mean_completion(const ScheduleTrace& t, std::size_t first, std::size_t last);

std::string trace_csv(const ScheduleTrace& t);

}  // namespace offload
