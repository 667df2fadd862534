// Copyright 2026 The offload-planner Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <string>
#include <vector>

#include "offload/model.hpp"

namespace offload {

enum class Phase { prefill, decode };

const char* to_string(Phase p);

// Per-layer channel times in seconds. layer_latency is the max of the five channels.
struct CostBreakdown {
    Phase phase = Phase::prefill;
    double ctog = 0, gtoc = 0, dtoc = 0, ctod = 0, comp = 0;
    double gpu_comp = 0, cpu_comp = 0;  // comp = gpu_comp + cpu_comp
    double layer_latency = 0;

    std::string bottleneck() const;
};

// GPU working-set candidates; the working set is their max.
struct WorkingSet {
    double qkv = 0, att1 = 0, att2 = 0, embed = 0, mlp1 = 0, mlp2 = 0;

    std::array<double, 6> values() const { return {qkv, att1, att2, embed, mlp1, mlp2}; }
    double max() const;
};

inline constexpr std::array<const char*, 6> kWorkingSetNames = {"qkv", "att1", "att2", "embed", "mlp1", "mlp2"};

struct DevicePeak {
    double home = 0;
    double staging = 0;      // weight/activation buffers for offloaded data
    WorkingSet candidates;   // GPU only
    double working = 0;      // staging + max(candidates) on GPU; the full working term on CPU
    double peak = 0;         // home + working
};

struct PeakMemoryReport {
    DevicePeak gpu_prefill, gpu_decode, cpu_prefill, cpu_decode;
    double nvme_peak = 0;

    double gpu_peak_prefill() const { return gpu_prefill.peak; }
    double gpu_peak_decode() const { return gpu_decode.peak; }
    double cpu_peak_prefill() const { return cpu_prefill.peak; }
    double cpu_peak_decode() const { return cpu_decode.peak; }
};

struct LatencyReport {
    CostBreakdown prefill, decode;
    double total = 0;       // seconds for one block
    double throughput = 0;  // bls * n / total
};

// Bandwidths after resolving optional size-dependent tables. Tables are read at one
// layer's weight size so every term stays linear in the placement fractions.
struct Bandwidths {
    double ctog, gtoc, dtoc, ctod;
};
Bandwidths effective_bandwidths(const HardwareProfile& hw, const ModelSpec& m);

// Whether decode attention over CPU/disk-resident cache runs on the CPU.
// Compression always turns delegation off.
bool delegation_active(const Policy& p);

// Multipliers from FP16 formula bytes to stored bytes for each tensor role.
struct ByteScale {
    double weights = 1, cache = 1, activations = 1;
};
ByteScale byte_scale(const Policy& p, const ModelSpec& m);

CostBreakdown prefill_layer_cost(const Policy& p, const ModelSpec& m, const HardwareProfile& hw, const Workload& w);
// Uses the averaged KV length s + n/2.
CostBreakdown decode_layer_cost(const Policy& p, const ModelSpec& m, const HardwareProfile& hw, const Workload& w);

// Same decode formulas at an explicit KV length (used by the simulator for exact per-step lengths).
CostBreakdown decode_layer_cost_at(const Policy& p, const ModelSpec& m, const HardwareProfile& hw,
                                   double kv_len);

double total_latency(const Policy& p, const ModelSpec& m, const HardwareProfile& hw, const Workload& w);
double block_throughput(const Policy& p, const ModelSpec& m, const HardwareProfile& hw, const Workload& w);
LatencyReport latency_report(const Policy& p, const ModelSpec& m, const HardwareProfile& hw, const Workload& w);

PeakMemoryReport peak_memory(const Policy& p, const ModelSpec& m, const HardwareProfile& hw, const Workload& w);

// Empty when every peak fits within capacity (peak <= capacity).
std::vector<std::string> feasible(const Policy& p, const ModelSpec& m, const HardwareProfile& hw, const Workload& w);

// Bytes moved per layer per decode step for a CPU-resident cache of kv_len tokens:
// without delegation the cache crosses the bus, with delegation only the activations do.
struct DelegationIo {
    double kv_bytes;
    double activation_bytes;
};
DelegationIo delegation_io(const ModelSpec& m, std::int64_t bls, double kv_len);

}  // namespace offload
