// Copyright 2026 The offload-planner Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "offload/quant_config.hpp"

namespace offload {

using bytes_t = std::uint64_t;

// Transformer shape. Counts are dimensionless; bytes_per_element defaults to FP16.
struct ModelSpec {
    std::int64_t l = 1;
    std::int64_t h1 = 1;
    std::int64_t h2 = 1;
    std::int64_t nh = 1;
    double bytes_per_element = 2.0;

    bool operator==(const ModelSpec&) const = default;
};

struct Workload {
    std::int64_t s = 1;  // prompt length
    std::int64_t n = 1;  // output length

    bool operator==(const Workload&) const = default;
};

// A piecewise-linear bandwidth curve: (transfer size in bytes, bytes/second) breakpoints.
struct BandwidthCurve {
    std::vector<std::pair<double, double>> points;

    double at(double size) const;
    bool operator==(const BandwidthCurve&) const = default;
};

struct BandwidthTables {
    std::optional<BandwidthCurve> ctog_bdw, gtoc_bdw, dtoc_bdw, ctod_bdw;

    bool operator==(const BandwidthTables&) const = default;
};

struct HardwareProfile {
    double ctog_bdw = 1, gtoc_bdw = 1, dtoc_bdw = 1, ctod_bdw = 1;
    double mm_flops = 1, bmm_flops = 1, cpu_flops = 1;
    double gmem = 1, cmem = 1, nmem = 1;
    // Optional size-dependent bandwidths. Absent means the constants above are used.
    std::optional<BandwidthTables> bandwidth_tables;

    bool operator==(const HardwareProfile&) const = default;
};

struct Policy {
    std::int64_t gbs = 1;
    std::int64_t num_gpu_batches = 1;
    double wg = 1, wc = 0, wd = 0;
    double cg = 1, cc = 0, cd = 0;
    double hg = 1, hc = 0, hd = 0;
    bool cpu_delegation = true;
    std::optional<QuantConfig> compression;

    std::int64_t bls() const { return gbs * num_gpu_batches; }
    bool operator==(const Policy&) const = default;
};

struct DeviceBytes {
    bytes_t gpu = 0, cpu = 0, disk = 0;
    bytes_t total() const { return gpu + cpu + disk; }
};

struct ByteReport {
    bytes_t weights_bytes = 0;
    bytes_t kv_peak_bytes = 0;
    bytes_t activations_bytes = 0;
    std::optional<DeviceBytes> weights_split, kv_split, activations_split;
};

inline constexpr double kFractionTolerance = 1e-9;

// Throws std::invalid_argument naming the first broken invariant.
void check_model(const ModelSpec& m);
void check_workload(const Workload& w);
void check_hardware(const HardwareProfile& hw);

// FP16 bytes of one transformer layer's weights: 8*h1^2 + 4*h1*h2.
std::uint64_t layer_weight_fp16_bytes(const ModelSpec& m);

bytes_t weight_bytes(const ModelSpec& m);
bytes_t kv_cache_peak_bytes(const ModelSpec& m, std::int64_t b, const Workload& w);
// Hidden-state activations of one layer over the prompt: 2*b*s*h1 at FP16.
bytes_t activation_bytes(const ModelSpec& m, std::int64_t b, const Workload& w);

double generation_throughput(double b, double n, double t);

std::vector<std::string> validate_policy(const Policy& p);

ByteReport footprint(const ModelSpec& m, std::int64_t b, const Workload& w,
                     const std::optional<Policy>& placement = std::nullopt);

// Binary-unit rendering, e.g. "324 GiB" or "1.195 TiB".
std::string human_bytes(double bytes);

}  // namespace offload
