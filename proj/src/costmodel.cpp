// Copyright 2026 The offload-planner Authors
// SPDX-License-Identifier: Apache-2.0

#include "offload/costmodel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "offload/compress.hpp"

namespace offload {

namespace {

// Shape constants as doubles; all byte formulas below are written for FP16.
struct Dims {
    double l, h1, h2, nh, s, n, gbs, bls;
    double w;  // 8*h1^2 + 4*h1*h2
};

Dims dims(const Policy& p, const ModelSpec& m, const Workload& w) {
    Dims d{};
    d.l = static_cast<double>(m.l);
    d.h1 = static_cast<double>(m.h1);
    d.h2 = static_cast<double>(m.h2);
    d.nh = static_cast<double>(m.nh);
    d.s = static_cast<double>(w.s);
    d.n = static_cast<double>(w.n);
    d.gbs = static_cast<double>(p.gbs);
    d.bls = static_cast<double>(p.bls());
    d.w = 8 * d.h1 * d.h1 + 4 * d.h1 * d.h2;
    return d;
}

void finish(CostBreakdown& c) {
    c.layer_latency = std::max({c.ctog, c.gtoc, c.dtoc, c.ctod, c.comp});
}

std::string capacity_message(const char* what, double peak, double cap) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s %.6g B exceeds capacity %.6g B", what, peak, cap);
    return buf;
}

}  // namespace

const char* to_string(Phase p) { return p == Phase::prefill ? "prefill" : "decode"; }

std::string CostBreakdown::bottleneck() const {
    const std::pair<const char*, double> ch[] = {{"ctog", ctog}, {"gtoc", gtoc}, {"dtoc", dtoc},
                                                 {"ctod", ctod}, {"comp", comp}};
    const auto* best = &ch[0];
    for (const auto& c : ch) {
        if (c.second > best->second) best = &c;
    }
    return best->first;
}

double WorkingSet::max() const {
    auto v = values();
    return *std::max_element(v.begin(), v.end());
}

Bandwidths effective_bandwidths(const HardwareProfile& hw, const ModelSpec& m) {
    Bandwidths b{hw.ctog_bdw, hw.gtoc_bdw, hw.dtoc_bdw, hw.ctod_bdw};
    if (!hw.bandwidth_tables) return b;
    const double ref = static_cast<double>(layer_weight_fp16_bytes(m)) * m.bytes_per_element / 2.0;
    const auto& t = *hw.bandwidth_tables;
    if (t.ctog_bdw) b.ctog = t.ctog_bdw->at(ref);
    if (t.gtoc_bdw) b.gtoc = t.gtoc_bdw->at(ref);
    if (t.dtoc_bdw) b.dtoc = t.dtoc_bdw->at(ref);
    if (t.ctod_bdw) b.ctod = t.ctod_bdw->at(ref);
    return b;
}

bool delegation_active(const Policy& p) { return p.cpu_delegation && !p.compression; }

ByteScale byte_scale(const Policy& p, const ModelSpec& m) {
    const double base = m.bytes_per_element / 2.0;
    ByteScale s{base, base, base};
    if (p.compression) {
        const double r = effective_ratio(*p.compression);
        s.weights *= r;
        s.cache *= r;
    }
    return s;
}

CostBreakdown prefill_layer_cost(const Policy& p, const ModelSpec& m, const HardwareProfile& hw, const Workload& w) {
    const Dims d = dims(p, m, w);
    const ByteScale sc = byte_scale(p, m);
    const Bandwidths bw = effective_bandwidths(hw, m);
    const double act = 2 * d.s * d.h1 * d.bls * sc.activations;
    const double cache = 4 * (d.s + 1) * d.h1 * d.bls * sc.cache;
    const double weights = d.w * sc.weights;

    CostBreakdown c;
    c.phase = Phase::prefill;
    c.ctog = ((p.wc + p.wd) * weights + (p.hc + p.hd) * act) / bw.ctog;
    c.gtoc = ((p.cc + p.cd) * cache + (p.hc + p.hd) * act) / bw.gtoc;
    c.dtoc = (p.wd * weights + p.hd * act) / bw.dtoc;
    c.ctod = (p.cd * cache + p.hd * act) / bw.ctod;
    c.gpu_comp = d.bls * (8 * d.s * d.h1 * d.h1 + 4 * d.s * d.h1 * d.h2) / hw.mm_flops +
                 4 * d.bls * d.s * d.s * d.h1 / hw.bmm_flops;
    c.cpu_comp = 0;
    c.comp = c.gpu_comp + c.cpu_comp;
    finish(c);
    return c;
}

CostBreakdown decode_layer_cost_at(const Policy& p, const ModelSpec& m, const HardwareProfile& hw, double kv_len) {
    const Dims d = dims(p, m, Workload{1, 1});
    const ByteScale sc = byte_scale(p, m);
    const Bandwidths bw = effective_bandwidths(hw, m);
    const double act = 2 * d.h1 * d.bls * sc.activations;
    const double cache_read = 4 * d.bls * kv_len * d.h1 * sc.cache;
    const double cache_new = 4 * d.bls * d.h1 * sc.cache;
    const double weights = d.w * sc.weights;
    const double off_cache = p.cc + p.cd;
    const bool delegate = delegation_active(p);

    CostBreakdown c;
    c.phase = Phase::decode;
    c.ctog = ((p.wc + p.wd) * weights + (p.hc + p.hd) * act) / bw.ctog;
    c.gtoc = ((p.hc + p.hd) * act) / bw.gtoc;
    if (!delegate) {
        c.ctog += off_cache * cache_read / bw.ctog;
        c.gtoc += off_cache * cache_new / bw.gtoc;
    }
    c.dtoc = (p.cd * cache_read + p.wd * weights + p.hd * act) / bw.dtoc;
    c.ctod = (p.cd * cache_new + p.hd * act) / bw.ctod;
    const double attn_flops = 4 * d.bls * kv_len * d.h1;
    c.gpu_comp = d.bls * d.w / hw.mm_flops + (delegate ? p.cg : 1.0) * attn_flops / hw.bmm_flops;
    c.cpu_comp = delegate ? off_cache * attn_flops / hw.cpu_flops : 0.0;
    c.comp = c.gpu_comp + c.cpu_comp;
    finish(c);
    return c;
}

CostBreakdown decode_layer_cost(const Policy& p, const ModelSpec& m, const HardwareProfile& hw, const Workload& w) {
    return decode_layer_cost_at(p, m, hw, static_cast<double>(w.s) + static_cast<double>(w.n) / 2.0);
}

LatencyReport latency_report(const Policy& p, const ModelSpec& m, const HardwareProfile& hw, const Workload& w) {
    LatencyReport r;
    r.prefill = prefill_layer_cost(p, m, hw, w);
    r.decode = decode_layer_cost(p, m, hw, w);
    const double l = static_cast<double>(m.l);
    r.total = r.prefill.layer_latency * l + r.decode.layer_latency * static_cast<double>(w.n - 1) * l;
    r.throughput = r.total > 0 ? static_cast<double>(p.bls()) * static_cast<double>(w.n) / r.total : INFINITY;
    return r;
}

double total_latency(const Policy& p, const ModelSpec& m, const HardwareProfile& hw, const Workload& w) {
    return latency_report(p, m, hw, w).total;
}

double block_throughput(const Policy& p, const ModelSpec& m, const HardwareProfile& hw, const Workload& w) {
    return latency_report(p, m, hw, w).throughput;
}

PeakMemoryReport peak_memory(const Policy& p, const ModelSpec& m, const HardwareProfile&, const Workload& w) {
    const Dims d = dims(p, m, w);
    const ByteScale sc = byte_scale(p, m);
    const double kW = sc.weights, kC = sc.cache, kA = sc.activations;
    const double W = d.w;
    const double sn = d.s + d.n;
    const double cache_all = 4 * sn * d.h1 * d.bls * d.l;  // every layer, whole block
    // Decode attention runs on the GPU over the whole cache when delegation is off.
    const double att_share_g = delegation_active(p) ? p.cg : 1.0;

    PeakMemoryReport r;

    auto& gp = r.gpu_prefill;
    gp.home = p.wg * W * d.l * kW + p.hg * 2 * d.s * d.h1 * d.bls * kA + p.cg * cache_all * kC;
    gp.staging = 2 * (1 - p.wg) * W * kW + (1 - p.hg) * 2 * d.s * d.h1 * d.gbs * kA;
    gp.candidates.qkv = d.gbs * 8 * d.s * d.h1 * kA;
    gp.candidates.att1 = p.cg * d.gbs * (2 * d.s * d.h1 + 2 * d.s * d.h1 + 2 * d.nh * d.s * d.s) * kA;
    gp.candidates.att2 = p.cg * d.gbs * (2 * d.nh * d.s * d.s + 2 * d.s * d.h1 + 2 * d.s * d.h1) * kA;
    gp.candidates.embed = d.gbs * 4 * d.s * d.h1 * kA;
    gp.candidates.mlp1 = 2 * d.gbs * d.s * (d.h1 + d.h2) * kA;
    gp.candidates.mlp2 = 2 * d.gbs * d.s * (d.h2 + d.h1) * kA;
    gp.working = gp.staging + gp.candidates.max();
    gp.peak = gp.home + gp.working;

    auto& gg = r.gpu_decode;
    gg.home = p.wg * W * d.l * kW + p.hg * 2 * d.h1 * d.bls * kA + p.cg * cache_all * kC;
    gg.staging = 2 * (1 - p.wg) * W * kW + (1 - p.hg) * 2 * d.s * d.h1 * d.gbs * kA;
    gg.candidates.qkv = 8 * d.gbs * d.h1 * kA;
    gg.candidates.att1 = att_share_g * d.gbs * (2 * d.h1 + 2 * sn * d.h1 + 2 * d.nh * sn) * kA;
    gg.candidates.att2 = att_share_g * d.gbs * (2 * d.nh * sn + 2 * sn * d.h1 + 2 * d.h1) * kA;
    gg.candidates.embed = 4 * d.gbs * d.h1 * kA;
    gg.candidates.mlp1 = 2 * d.gbs * (d.h1 + d.h2) * kA;
    gg.candidates.mlp2 = 2 * d.gbs * (d.h2 + d.h1) * kA;
    gg.working = gg.staging + gg.candidates.max();
    gg.peak = gg.home + gg.working;

    auto& cp = r.cpu_prefill;
    cp.home = p.wc * W * d.l * kW + p.hc * 2 * d.s * d.h1 * d.bls * kA + p.cc * cache_all * kC;
    cp.staging = (1 - p.wg) * W * kW + (1 - p.hg) * 2 * d.s * d.h1 * d.gbs * kA;
    cp.working = cp.staging;
    cp.peak = cp.home + cp.working;

    auto& cg = r.cpu_decode;
    cg.home = p.wc * W * d.l * kW + p.hc * 2 * d.h1 * d.bls * kA + p.cc * cache_all * kC;
    cg.staging = p.wd * W * kW + 2 * p.hd * 2 * d.h1 * d.gbs * kA + 2 * p.cd * 4 * sn * d.h1 * d.gbs * kC;
    cg.working = cg.staging + (2 * d.nh * sn * d.gbs + 2 * d.h1 * d.gbs) * kA;
    cg.peak = cg.home + cg.working;

    r.nvme_peak = W * p.wd * d.l * kW + p.hd * 2 * d.s * d.h1 * d.bls * kA + p.cd * cache_all * kC;
    return r;
}

std::vector<std::string> feasible(const Policy& p, const ModelSpec& m, const HardwareProfile& hw, const Workload& w) {
    const PeakMemoryReport r = peak_memory(p, m, hw, w);
    std::vector<std::string> out;
    if (!(r.gpu_prefill.peak <= hw.gmem)) out.push_back(capacity_message("gpu prefill peak", r.gpu_prefill.peak, hw.gmem));
    if (!(r.gpu_decode.peak <= hw.gmem)) out.push_back(capacity_message("gpu decode peak", r.gpu_decode.peak, hw.gmem));
    if (!(r.cpu_prefill.peak <= hw.cmem)) out.push_back(capacity_message("cpu prefill peak", r.cpu_prefill.peak, hw.cmem));
    if (!(r.cpu_decode.peak <= hw.cmem)) out.push_back(capacity_message("cpu decode peak", r.cpu_decode.peak, hw.cmem));
    if (!(r.nvme_peak <= hw.nmem)) out.push_back(capacity_message("nvme peak", r.nvme_peak, hw.nmem));
    return out;
}

DelegationIo delegation_io(const ModelSpec& m, std::int64_t bls, double kv_len) {
    const double h1 = static_cast<double>(m.h1), b = static_cast<double>(bls);
    const double scale = m.bytes_per_element / 2.0;
    return {4 * b * kv_len * h1 * scale, 4 * b * h1 * scale};
}

}  // namespace offload
