// Copyright 2026 The offload-planner Authors
// SPDX-License-Identifier: Apache-2.0

#include "offload/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace offload {

namespace {

__extension__ typedef unsigned __int128 u128;

constexpr u128 kMaxBytes = std::numeric_limits<bytes_t>::max();

void require(bool cond, const char* what) {
    if (!cond) throw std::invalid_argument(what);
}

// Scale a count of FP16 bytes to the model's element width.
bytes_t scale_fp16(u128 fp16_bytes, double bytes_per_element) {
    u128 elems = fp16_bytes / 2;
    double whole = std::floor(bytes_per_element);
    if (whole == bytes_per_element) {
        u128 v = elems * static_cast<u128>(whole);
        if (v > kMaxBytes) throw std::overflow_error("byte count exceeds 64 bits");
        return static_cast<bytes_t>(v);
    }
    long double v = std::ceil(static_cast<long double>(elems) * bytes_per_element);
    if (v > static_cast<long double>(kMaxBytes)) throw std::overflow_error("byte count exceeds 64 bits");
    return static_cast<bytes_t>(v);
}

std::string fmt_fraction(double v) {
    std::ostringstream os;
    os.precision(12);
    os << v;
    return os.str();
}

DeviceBytes split(bytes_t total, double fg, double fc) {
    DeviceBytes d;
    auto part = [total](double f) {
        long double v = std::floor(static_cast<long double>(total) * f);
        return static_cast<bytes_t>(std::clamp<long double>(v, 0, total));
    };
    d.gpu = part(fg);
    d.cpu = std::min(part(fc), total - d.gpu);
    d.disk = total - d.gpu - d.cpu;
    return d;
}

}  // namespace

double BandwidthCurve::at(double size) const {
    if (points.empty()) throw std::invalid_argument("empty bandwidth curve");
    if (size <= points.front().first) return points.front().second;
    if (size >= points.back().first) return points.back().second;
    auto it = std::upper_bound(points.begin(), points.end(), size,
                               [](double x, const auto& p) { return x < p.first; });
    const auto& hi = *it;
    const auto& lo = *(it - 1);
    double t = (size - lo.first) / (hi.first - lo.first);
    return lo.second + t * (hi.second - lo.second);
}

void check_model(const ModelSpec& m) {
    require(m.l >= 1, "model: l must be >= 1");
    require(m.h1 >= 1, "model: h1 must be >= 1");
    require(m.h2 >= 1, "model: h2 must be >= 1");
    require(m.nh >= 1, "model: nh must be >= 1");
    require(m.h1 % m.nh == 0, "model: h1 must be divisible by nh");
    require(m.bytes_per_element > 0 && std::isfinite(m.bytes_per_element),
            "model: bytes_per_element must be positive");
}

void check_workload(const Workload& w) {
    require(w.s >= 1, "workload: s must be >= 1");
    require(w.n >= 1, "workload: n must be >= 1");
}

void check_hardware(const HardwareProfile& hw) {
    for (double v : {hw.ctog_bdw, hw.gtoc_bdw, hw.dtoc_bdw, hw.ctod_bdw, hw.mm_flops, hw.bmm_flops,
                     hw.cpu_flops, hw.gmem, hw.cmem, hw.nmem}) {
        require(v > 0, "hardware: every bandwidth, flops and capacity must be positive");
    }
    if (hw.bandwidth_tables) {
        const auto& t = *hw.bandwidth_tables;
        for (const auto* c : {&t.ctog_bdw, &t.gtoc_bdw, &t.dtoc_bdw, &t.ctod_bdw}) {
            if (!*c) continue;
            const auto& pts = (*c)->points;
            require(!pts.empty(), "hardware: bandwidth table needs at least one point");
            for (std::size_t i = 0; i < pts.size(); ++i) {
                require(pts[i].second > 0, "hardware: bandwidth table values must be positive");
                if (i > 0) require(pts[i].first > pts[i - 1].first, "hardware: bandwidth table sizes must increase");
            }
        }
    }
}

std::uint64_t layer_weight_fp16_bytes(const ModelSpec& m) {
    u128 h1 = static_cast<u128>(m.h1), h2 = static_cast<u128>(m.h2);
    u128 v = 8 * h1 * h1 + 4 * h1 * h2;
    if (v > kMaxBytes) throw std::overflow_error("layer size exceeds 64 bits");
    return static_cast<std::uint64_t>(v);
}

bytes_t weight_bytes(const ModelSpec& m) {
    check_model(m);
    u128 h1 = static_cast<u128>(m.h1), h2 = static_cast<u128>(m.h2);
    u128 fp16 = static_cast<u128>(m.l) * (8 * h1 * h1 + 4 * h1 * h2);
    return scale_fp16(fp16, m.bytes_per_element);
}

bytes_t kv_cache_peak_bytes(const ModelSpec& m, std::int64_t b, const Workload& w) {
    check_model(m);
    check_workload(w);
    require(b >= 1, "batch size must be >= 1");
    u128 fp16 = u128{4} * static_cast<u128>(b) * static_cast<u128>(m.l) * static_cast<u128>(m.h1) *
                static_cast<u128>(w.s + w.n);
    return scale_fp16(fp16, m.bytes_per_element);
}

bytes_t activation_bytes(const ModelSpec& m, std::int64_t b, const Workload& w) {
    check_model(m);
    check_workload(w);
    require(b >= 1, "batch size must be >= 1");
    u128 fp16 = u128{2} * static_cast<u128>(b) * static_cast<u128>(w.s) * static_cast<u128>(m.h1);
    return scale_fp16(fp16, m.bytes_per_element);
}

double generation_throughput(double b, double n, double t) {
    if (!(t > 0)) throw std::domain_error("throughput: elapsed time must be positive");
    return b * n / t;
}

std::vector<std::string> validate_policy(const Policy& p) {
    std::vector<std::string> out;
    if (p.gbs < 1) out.push_back("gbs " + std::to_string(p.gbs) + " < 1");
    if (p.num_gpu_batches < 1) out.push_back("num_gpu_batches " + std::to_string(p.num_gpu_batches) + " < 1");

    struct Named { const char* name; double v; };
    const Named fr[] = {{"wg", p.wg}, {"wc", p.wc}, {"wd", p.wd}, {"cg", p.cg}, {"cc", p.cc},
                        {"cd", p.cd}, {"hg", p.hg}, {"hc", p.hc}, {"hd", p.hd}};
    for (const auto& f : fr) {
        if (!(f.v >= -kFractionTolerance && f.v <= 1 + kFractionTolerance))
            out.push_back(std::string(f.name) + " = " + fmt_fraction(f.v) + " outside [0,1]");
    }
    auto sum_check = [&out](const char* what, double a, double b, double c) {
        double s = a + b + c;
        if (!(std::fabs(s - 1.0) <= kFractionTolerance))
            out.push_back(std::string(what) + " fractions sum " + fmt_fraction(s) + " ≠ 1");
    };
    sum_check("weight", p.wg, p.wc, p.wd);
    sum_check("cache", p.cg, p.cc, p.cd);
    sum_check("activation", p.hg, p.hc, p.hd);

    if (p.compression) {
        const auto& q = *p.compression;
        if (!((q.bits >= 1 && q.bits <= 8) || q.bits == 16))
            out.push_back("compression bits " + std::to_string(q.bits) + " out of range");
        if (q.group < 0) out.push_back("compression group " + std::to_string(q.group) + " < 0");
    }
    return out;
}

ByteReport footprint(const ModelSpec& m, std::int64_t b, const Workload& w,
                     const std::optional<Policy>& placement) {
    ByteReport r;
    r.weights_bytes = weight_bytes(m);
    r.kv_peak_bytes = kv_cache_peak_bytes(m, b, w);
    r.activations_bytes = activation_bytes(m, b, w);
    if (placement) {
        const auto& p = *placement;
        r.weights_split = split(r.weights_bytes, p.wg, p.wc);
        r.kv_split = split(r.kv_peak_bytes, p.cg, p.cc);
        r.activations_split = split(r.activations_bytes, p.hg, p.hc);
    }
    return r;
}

std::string human_bytes(double bytes) {
    static const char* units[] = {"B", "KiB", "MiB", "GiB", "TiB", "PiB", "EiB"};
    int u = 0;
    double v = bytes;
    while (std::fabs(v) >= 1024.0 && u < 6) {
        v /= 1024.0;
        ++u;
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    std::string s = buf;
    while (!s.empty() && s.back() == '0') s.pop_back();
    if (!s.empty() && s.back() == '.') s.pop_back();
    return s + " " + units[u];
}

}  // namespace offload
