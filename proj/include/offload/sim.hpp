// Copyright 2026 The offload-planner Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "offload/json_io.hpp"
#include "offload/model.hpp"
#include "offload/schedule.hpp"

namespace offload {

enum class EventKind { load_weight, store_activation, store_cache, load_cache, load_activation, compute, synchronize };
enum class Channel { ctog, gtoc, dtoc, ctod, gpu, cpu, none };

const char* to_string(EventKind k);
const char* to_string(Channel c);

struct SimEvent {
    std::int64_t step = 0;  // iteration index, starting at 0 with the prologue
    EventKind kind = EventKind::compute;
    std::int64_t i = 0, j = 0, k = 0;  // token, layer, batch
    Channel channel = Channel::none;
    double start = 0, end = 0;
    double amount = 0;  // bytes, or flops for compute
    int stage = 0;
};

struct PeakBytes {
    double gpu = 0, cpu = 0, disk = 0;
};

struct SimResult {
    double total_latency = 0;
    double prefill_latency = 0;
    double decode_latency = 0;
    double generation_throughput = 0;  // bls * n / total
    double decoding_throughput = 0;    // bls * (n - 1) / decode
    PeakBytes peak;
    std::vector<SimEvent> events;
};

struct SimOptions {
    bool allow_oom = false;    // record peaks past capacity instead of throwing
    bool keep_events = true;
};

// Runs Alg. 1's (token, layer, batch) loop with one synchronized iteration per GPU batch.
// Throws std::runtime_error("simulated OOM at step ...") when a device overflows.
SimResult simulate(const Policy& p, const ModelSpec& m, const HardwareProfile& hw, const Workload& w,
                   const SimOptions& opt = {});

struct PipelineResult {
    SimResult aggregate;
    std::vector<SimResult> stages;
};

// Splits the model into `devices` equal stages, each with its own channels and memory.
// Requires devices <= l and l % devices == 0. devices == 1 reproduces simulate().
PipelineResult simulate_pipeline(std::int64_t devices, const Policy& p, const ModelSpec& m, const HardwareProfile& hw,
                                 const Workload& w, const SimOptions& opt = {});

// Times a schedule trace: all tensors CPU-resident, loads on ctog, stores on gtoc, compute on
// the GPU. Each epoch's weight load is spread over the squares it serves.
SimResult replay(const ScheduleTrace& t, const ModelSpec& m, const HardwareProfile& hw);

// Summed duration of events of one kind whose step lies in [first_step, last_step).
double busy_time(const SimResult& r, EventKind kind, std::int64_t first_step, std::int64_t last_step);

std::string events_csv(const SimResult& r);
Json to_json(const SimResult& r);
Json to_json(const PipelineResult& r);

}  // namespace offload
