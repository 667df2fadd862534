// Copyright 2026 The offload-planner Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "offload/quant_config.hpp"

namespace offload {

// IEEE binary16 conversion, round to nearest even.
std::uint16_t float_to_half(float f);
float half_to_float(std::uint16_t h);

// Dense row-major tensor of FP16-valued floats.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<float> data;

    std::size_t size() const;
};

struct QuantizedTensor {
    std::vector<std::size_t> shape;
    QuantConfig cfg;
    std::size_t axis = 0;               // dimension the groups run along
    std::vector<std::uint16_t> codes;   // one per element, row-major
    std::vector<float> mins, maxs;      // one per group, FP16-representable

    std::size_t group_count() const { return mins.size(); }
};

// Throws std::invalid_argument for bits outside [1,8] ∪ {16}.
void check_quant_config(const QuantConfig& cfg);

// Grouping dimension for a tensor role. Both roles group along the last dimension:
// output channels of an (in, out) weight, hidden units of a (seq, hidden) cache.
std::size_t weight_group_axis(const std::vector<std::size_t>& shape);
std::size_t kv_group_axis(const std::vector<std::size_t>& shape);

std::size_t group_count(const std::vector<std::size_t>& shape, std::size_t axis, const QuantConfig& cfg);

QuantizedTensor quantize(const Tensor& t, const QuantConfig& cfg, std::size_t axis);
Tensor dequantize(const QuantizedTensor& q);

// Flat group index of element `flat` for the given grouping.
std::size_t group_of(const std::vector<std::size_t>& shape, std::size_t axis, std::int64_t group,
                     std::size_t flat);

std::uint64_t compressed_bytes(const std::vector<std::size_t>& shape, const QuantConfig& cfg,
                               std::size_t axis);
// Stored bits per element (including group metadata) over 16.
double effective_ratio(const QuantConfig& cfg);

std::vector<std::uint8_t> serialize(const QuantizedTensor& q);
QuantizedTensor deserialize(const std::vector<std::uint8_t>& bytes);

// Row-major dense matrix used by the attention reference.
struct Matrix {
    std::size_t rows = 0, cols = 0;
    std::vector<double> a;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, 0.0) {}
    double& operator()(std::size_t i, std::size_t j) { return a[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return a[i * cols + j]; }
};

struct AttentionWeights {
    Matrix wq, wk, wv, wo;  // each h1 x h1, applied as x * W
    std::size_t heads = 1;
};

struct AttentionResult {
    std::vector<double> out;               // h1
    Matrix k_cache, v_cache;               // caches after appending the new token
    std::vector<std::vector<double>> probs;  // per head, over the cache (zero where dropped)
    std::vector<std::vector<std::size_t>> kept;  // per head, kept positions in ascending order
    std::uint64_t v_rows_loaded = 0;       // summed over heads
    std::uint64_t v_rows_dense = 0;
    std::uint64_t v_bytes_loaded = 0;      // FP16
    std::uint64_t v_bytes_dense = 0;
};

struct SparseConfig {
    double keep = 0.1;
};

// One decode step of a layer's attention block: append the token's key/value to the caches,
// attend per head with scale 1/sqrt(h1/heads), project with wo and add the residual.
AttentionResult reference_decode_attention(const std::vector<double>& t, const Matrix& k_cache,
                                           const Matrix& v_cache, const AttentionWeights& w);

// Same step, keeping only the top ceil(keep * seq) scores per head (ties to the lower index)
// and renormalizing over the kept set. Only kept V rows are read.
AttentionResult topk_sparse_attention(const std::vector<double>& t, const Matrix& k_cache,
                                      const Matrix& v_cache, const AttentionWeights& w,
                                      const SparseConfig& sparse);

}  // namespace offload
