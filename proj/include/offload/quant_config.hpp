// Copyright 2026 The offload-planner Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

namespace offload {

enum class GroupAxis { output_channel, hidden };

// Group-wise asymmetric quantization settings.
// bits == 16 is a dense FP16 passthrough; group == 0 means one group spans the whole axis.
struct QuantConfig {
    int bits = 4;
    std::int64_t group = 64;
    GroupAxis weight_axis = GroupAxis::output_channel;
    GroupAxis kv_axis = GroupAxis::hidden;

    bool operator==(const QuantConfig&) const = default;
};

}  // namespace offload
