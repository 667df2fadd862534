// Copyright 2026 The offload-planner Authors
// SPDX-License-Identifier: Apache-2.0

#include "offload/compress.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>
#include <stdexcept>

namespace offload {

namespace {

constexpr char kMagic[4] = {'O', 'F', 'Q', 'T'};
constexpr std::uint8_t kVersion = 1;

std::uint16_t half_step_down(std::uint16_t h) {
    if ((h & 0x7fff) == 0) return 0x8001;  // +-0 -> smallest negative subnormal
    return (h & 0x8000) ? static_cast<std::uint16_t>(h + 1) : static_cast<std::uint16_t>(h - 1);
}

std::uint16_t half_step_up(std::uint16_t h) {
    if ((h & 0x7fff) == 0) return 0x0001;
    return (h & 0x8000) ? static_cast<std::uint16_t>(h - 1) : static_cast<std::uint16_t>(h + 1);
}

float half_floor(float v) {
    std::uint16_t h = float_to_half(v);
    if (half_to_float(h) > v) h = half_step_down(h);
    return half_to_float(h);
}

float half_ceil(float v) {
    std::uint16_t h = float_to_half(v);
    if (half_to_float(h) < v) h = half_step_up(h);
    return half_to_float(h);
}

struct Layout {
    std::size_t outer = 1, len = 1, inner = 1, per_line = 1;
    std::size_t g = 1;
};

Layout layout(const std::vector<std::size_t>& shape, std::size_t axis, std::int64_t group) {
    if (shape.empty()) throw std::invalid_argument("tensor shape must have at least one dimension");
    if (axis >= shape.size()) throw std::invalid_argument("grouping axis out of range");
    Layout lo;
    for (std::size_t d = 0; d < axis; ++d) lo.outer *= shape[d];
    lo.len = shape[axis];
    for (std::size_t d = axis + 1; d < shape.size(); ++d) lo.inner *= shape[d];
    lo.g = group <= 0 ? std::max<std::size_t>(lo.len, 1) : static_cast<std::size_t>(group);
    lo.per_line = lo.len == 0 ? 0 : (lo.len + lo.g - 1) / lo.g;
    return lo;
}

std::size_t group_index(const Layout& lo, std::size_t flat) {
    std::size_t line = lo.len * lo.inner;
    std::size_t o = flat / line;
    std::size_t rem = flat % line;
    std::size_t i = rem / lo.inner;
    std::size_t in = rem % lo.inner;
    return (o * lo.inner + in) * lo.per_line + i / lo.g;
}

void put_u8(std::vector<std::uint8_t>& out, std::uint8_t v) { out.push_back(v); }

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Cursor {
public:
    explicit Cursor(const std::vector<std::uint8_t>& b) : b_(b) {}
    std::uint8_t u8() {
        need(1);
        return b_[pos_++];
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = static_cast<std::uint16_t>(b_[pos_] | (b_[pos_ + 1] << 8));
        pos_ += 2;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b_[pos_ + i]) << (8 * i);
        pos_ += 8;
        return v;
    }
    const std::uint8_t* take(std::size_t n) {
        need(n);
        const std::uint8_t* p = b_.data() + pos_;
        pos_ += n;
        return p;
    }
    bool done() const { return pos_ == b_.size(); }

private:
    void need(std::size_t n) const {
        if (b_.size() - pos_ < n) throw std::invalid_argument("quantized blob truncated");
    }
    const std::vector<std::uint8_t>& b_;
    std::size_t pos_ = 0;
};

void check_attention_inputs(const std::vector<double>& t, const Matrix& k, const Matrix& v,
                            const AttentionWeights& w) {
    const std::size_t h1 = t.size();
    if (h1 == 0) throw std::invalid_argument("attention: empty token");
    if (w.heads == 0 || h1 % w.heads != 0) throw std::invalid_argument("attention: h1 not divisible by heads");
    for (const Matrix* m : {&w.wq, &w.wk, &w.wv, &w.wo}) {
        if (m->rows != h1 || m->cols != h1) throw std::invalid_argument("attention: weight shape mismatch");
    }
    if ((k.rows > 0 && k.cols != h1) || (v.rows > 0 && v.cols != h1))
        throw std::invalid_argument("attention: cache width mismatch");
    if (k.rows != v.rows) throw std::invalid_argument("attention: K and V cache lengths differ");
}

std::vector<double> vec_mat(const std::vector<double>& x, const Matrix& m) {
    std::vector<double> y(m.cols, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i) {
        const double xi = x[i];
        for (std::size_t j = 0; j < m.cols; ++j) y[j] += xi * m(i, j);
    }
    return y;
}

Matrix append_row(const Matrix& m, const std::vector<double>& row) {
    Matrix out(m.rows + 1, row.size());
    std::copy(m.a.begin(), m.a.end(), out.a.begin());
    std::copy(row.begin(), row.end(), out.a.begin() + static_cast<std::ptrdiff_t>(m.rows * row.size()));
    return out;
}

// Shared decode step; keep_count(seq) decides how many positions each head retains.
template <class KeepCount>
AttentionResult attend(const std::vector<double>& t, const Matrix& k_cache, const Matrix& v_cache,
                       const AttentionWeights& w, KeepCount keep_count) {
    check_attention_inputs(t, k_cache, v_cache, w);
    const std::size_t h1 = t.size();
    const std::size_t d = h1 / w.heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));

    AttentionResult r;
    std::vector<double> q = vec_mat(t, w.wq);
    r.k_cache = append_row(k_cache, vec_mat(t, w.wk));
    r.v_cache = append_row(v_cache, vec_mat(t, w.wv));
    const std::size_t seq = r.k_cache.rows;
    const std::size_t keep = std::clamp<std::size_t>(keep_count(seq), 1, seq);

    std::vector<double> ctx(h1, 0.0);
    for (std::size_t hd = 0; hd < w.heads; ++hd) {
        const std::size_t c0 = hd * d;
        std::vector<double> score(seq);
        for (std::size_t j = 0; j < seq; ++j) {
            double acc = 0.0;
            for (std::size_t c = c0; c < c0 + d; ++c) acc += q[c] * r.k_cache(j, c);
            score[j] = acc * scale;
        }
        std::vector<std::size_t> order(seq);
        std::iota(order.begin(), order.end(), std::size_t{0});
        if (keep < seq) {
            std::stable_sort(order.begin(), order.end(),
                             [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
            order.resize(keep);
            std::sort(order.begin(), order.end());
        }
        double mx = -INFINITY;
        for (std::size_t j : order) mx = std::max(mx, score[j]);
        std::vector<double> p(seq, 0.0);
        double z = 0.0;
        for (std::size_t j : order) {
            p[j] = std::exp(score[j] - mx);
            z += p[j];
        }
        for (std::size_t j : order) {
            p[j] /= z;
            for (std::size_t c = c0; c < c0 + d; ++c) ctx[c] += p[j] * r.v_cache(j, c);
        }
        r.v_rows_loaded += order.size();
        r.v_rows_dense += seq;
        r.probs.push_back(std::move(p));
        r.kept.push_back(std::move(order));
    }
    r.v_bytes_loaded = r.v_rows_loaded * d * 2;
    r.v_bytes_dense = r.v_rows_dense * d * 2;
    r.out = vec_mat(ctx, w.wo);
    for (std::size_t c = 0; c < h1; ++c) r.out[c] += t[c];
    return r;
}

}  // namespace

std::uint16_t float_to_half(float f) {
    std::uint32_t x = std::bit_cast<std::uint32_t>(f);
    std::uint32_t sign = (x >> 16) & 0x8000u;
    std::uint32_t exp = (x >> 23) & 0xffu;
    std::uint32_t man = x & 0x7fffffu;
    if (exp == 0xff) {
        if (man) return static_cast<std::uint16_t>(sign | 0x7e00u);
        return static_cast<std::uint16_t>(sign | 0x7c00u);
    }
    int e = static_cast<int>(exp) - 127 + 15;
    if (e >= 0x1f) return static_cast<std::uint16_t>(sign | 0x7c00u);
    if (e <= 0) {
        if (e < -10) return static_cast<std::uint16_t>(sign);
        man |= 0x800000u;
        int shift = 14 - e;
        std::uint32_t half = man >> shift;
        std::uint32_t rem = man & ((1u << shift) - 1);
        std::uint32_t mid = 1u << (shift - 1);
        if (rem > mid || (rem == mid && (half & 1u))) ++half;
        return static_cast<std::uint16_t>(sign | half);
    }
    std::uint32_t half = (static_cast<std::uint32_t>(e) << 10) | (man >> 13);
    std::uint32_t rem = man & 0x1fffu;
    if (rem > 0x1000u || (rem == 0x1000u && (half & 1u))) ++half;  // may carry into the exponent
    return static_cast<std::uint16_t>(sign | half);
}

float half_to_float(std::uint16_t h) {
    std::uint32_t sign = static_cast<std::uint32_t>(h & 0x8000u) << 16;
    std::uint32_t exp = (h >> 10) & 0x1fu;
    std::uint32_t man = h & 0x3ffu;
    std::uint32_t bits;
    if (exp == 0) {
        if (man == 0) {
            bits = sign;
        } else {
            int e = -1;
            do {
                ++e;
                man <<= 1;
            } while (!(man & 0x400u));
            bits = sign | (static_cast<std::uint32_t>(127 - 15 - e) << 23) | ((man & 0x3ffu) << 13);
        }
    } else if (exp == 0x1f) {
        bits = sign | 0x7f800000u | (man << 13);
    } else {
        bits = sign | ((exp + 127 - 15) << 23) | (man << 13);
    }
    return std::bit_cast<float>(bits);
}

std::size_t Tensor::size() const {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void check_quant_config(const QuantConfig& cfg) {
    if (!((cfg.bits >= 1 && cfg.bits <= 8) || cfg.bits == 16))
        throw std::invalid_argument("bits out of range: " + std::to_string(cfg.bits));
    if (cfg.group < 0) throw std::invalid_argument("group size must be >= 0");
}

std::size_t weight_group_axis(const std::vector<std::size_t>& shape) {
    if (shape.empty()) throw std::invalid_argument("tensor shape must have at least one dimension");
    return shape.size() - 1;
}

std::size_t kv_group_axis(const std::vector<std::size_t>& shape) {
    if (shape.empty()) throw std::invalid_argument("tensor shape must have at least one dimension");
    return shape.size() - 1;
}

std::size_t group_count(const std::vector<std::size_t>& shape, std::size_t axis, const QuantConfig& cfg) {
    if (cfg.bits == 16) return 0;
    Layout lo = layout(shape, axis, cfg.group);
    return lo.outer * lo.inner * lo.per_line;
}

std::size_t group_of(const std::vector<std::size_t>& shape, std::size_t axis, std::int64_t group,
                     std::size_t flat) {
    return group_index(layout(shape, axis, group), flat);
}

QuantizedTensor quantize(const Tensor& t, const QuantConfig& cfg, std::size_t axis) {
    check_quant_config(cfg);
    if (t.data.size() != t.size()) throw std::invalid_argument("tensor data does not match its shape");
    QuantizedTensor q;
    q.shape = t.shape;
    q.cfg = cfg;
    q.axis = axis;
    Layout lo = layout(t.shape, axis, cfg.group);
    q.codes.resize(t.data.size());
    for (float v : t.data) {
        if (!std::isfinite(v)) throw std::invalid_argument("quantize: non-finite value");
    }
    if (cfg.bits == 16) {
        for (std::size_t i = 0; i < t.data.size(); ++i) q.codes[i] = float_to_half(t.data[i]);
        return q;
    }

    const std::size_t groups = lo.outer * lo.inner * lo.per_line;
    q.mins.assign(groups, INFINITY);
    q.maxs.assign(groups, -INFINITY);
    for (std::size_t i = 0; i < t.data.size(); ++i) {
        std::size_t g = group_index(lo, i);
        q.mins[g] = std::min(q.mins[g], t.data[i]);
        q.maxs[g] = std::max(q.maxs[g], t.data[i]);
    }
    for (std::size_t g = 0; g < groups; ++g) {
        q.mins[g] = half_floor(q.mins[g]);
        q.maxs[g] = half_ceil(q.maxs[g]);
    }
    const double levels = static_cast<double>((1u << cfg.bits) - 1);
    for (std::size_t i = 0; i < t.data.size(); ++i) {
        std::size_t g = group_index(lo, i);
        double lo_v = q.mins[g], hi_v = q.maxs[g];
        if (hi_v == lo_v) {
            q.codes[i] = 0;
            continue;
        }
        double c = std::round((t.data[i] - lo_v) / (hi_v - lo_v) * levels);
        q.codes[i] = static_cast<std::uint16_t>(std::clamp(c, 0.0, levels));
    }
    return q;
}

Tensor dequantize(const QuantizedTensor& q) {
    Tensor t;
    t.shape = q.shape;
    t.data.resize(q.codes.size());
    if (q.cfg.bits == 16) {
        for (std::size_t i = 0; i < q.codes.size(); ++i) t.data[i] = half_to_float(q.codes[i]);
        return t;
    }
    Layout lo = layout(q.shape, q.axis, q.cfg.group);
    const double levels = static_cast<double>((1u << q.cfg.bits) - 1);
    for (std::size_t i = 0; i < q.codes.size(); ++i) {
        std::size_t g = group_index(lo, i);
        double lo_v = q.mins[g], hi_v = q.maxs[g];
        t.data[i] = hi_v == lo_v ? q.mins[g]
                                 : static_cast<float>(std::lerp(lo_v, hi_v, q.codes[i] / levels));
    }
    return t;
}

std::uint64_t compressed_bytes(const std::vector<std::size_t>& shape, const QuantConfig& cfg,
                               std::size_t axis) {
    check_quant_config(cfg);
    std::uint64_t elems = std::accumulate(shape.begin(), shape.end(), std::uint64_t{1}, std::multiplies<>());
    if (cfg.bits == 16) return elems * 2;
    std::uint64_t code_bytes = (elems * static_cast<std::uint64_t>(cfg.bits) + 7) / 8;
    return code_bytes + static_cast<std::uint64_t>(group_count(shape, axis, cfg)) * 4;
}

double effective_ratio(const QuantConfig& cfg) {
    check_quant_config(cfg);
    if (cfg.bits == 16) return 1.0;
    double bits = cfg.bits;
    if (cfg.group > 0) bits += 32.0 / static_cast<double>(cfg.group);
    return bits / 16.0;
}

std::vector<std::uint8_t> serialize(const QuantizedTensor& q) {
    check_quant_config(q.cfg);
    if (q.shape.size() > 255) throw std::invalid_argument("too many dimensions");
    std::vector<std::uint8_t> out(kMagic, kMagic + 4);
    put_u8(out, kVersion);
    put_u8(out, static_cast<std::uint8_t>(q.cfg.bits));
    put_u8(out, static_cast<std::uint8_t>(q.axis));
    put_u8(out, static_cast<std::uint8_t>(q.shape.size()));
    put_u64(out, static_cast<std::uint64_t>(q.cfg.group));
    for (std::size_t d : q.shape) put_u64(out, d);

    const unsigned b = static_cast<unsigned>(q.cfg.bits);
    const std::size_t start = out.size();
    out.resize(start + (q.codes.size() * b + 7) / 8, 0);
    std::size_t bit = 0;
    for (std::uint16_t c : q.codes) {
        for (unsigned k = 0; k < b; ++k, ++bit) {
            if ((c >> k) & 1u) out[start + bit / 8] |= static_cast<std::uint8_t>(1u << (bit % 8));
        }
    }
    for (float v : q.mins) put_u16(out, float_to_half(v));
    for (float v : q.maxs) put_u16(out, float_to_half(v));
    return out;
}

QuantizedTensor deserialize(const std::vector<std::uint8_t>& bytes) {
    Cursor cur(bytes);
    const std::uint8_t* magic = cur.take(4);
    if (std::memcmp(magic, kMagic, 4) != 0) throw std::invalid_argument("not a quantized tensor blob");
    if (cur.u8() != kVersion) throw std::invalid_argument("unsupported quantized format version");
    QuantizedTensor q;
    q.cfg.bits = cur.u8();
    q.axis = cur.u8();
    std::size_t ndim = cur.u8();
    q.cfg.group = static_cast<std::int64_t>(cur.u64());
    check_quant_config(q.cfg);
    for (std::size_t i = 0; i < ndim; ++i) q.shape.push_back(static_cast<std::size_t>(cur.u64()));
    std::size_t elems = std::accumulate(q.shape.begin(), q.shape.end(), std::size_t{1}, std::multiplies<>());
    const unsigned b = static_cast<unsigned>(q.cfg.bits);
    const std::uint8_t* packed = cur.take((elems * b + 7) / 8);
    q.codes.resize(elems);
    std::size_t bit = 0;
    for (std::size_t i = 0; i < elems; ++i) {
        std::uint16_t c = 0;
        for (unsigned k = 0; k < b; ++k, ++bit) {
            if ((packed[bit / 8] >> (bit % 8)) & 1u) c = static_cast<std::uint16_t>(c | (1u << k));
        }
        q.codes[i] = c;
    }
    std::size_t groups = group_count(q.shape, q.axis, q.cfg);
    for (std::size_t g = 0; g < groups; ++g) q.mins.push_back(half_to_float(cur.u16()));
    for (std::size_t g = 0; g < groups; ++g) q.maxs.push_back(half_to_float(cur.u16()));
    if (!cur.done()) throw std::invalid_argument("trailing bytes after quantized tensor");
    return q;
}

AttentionResult reference_decode_attention(const std::vector<double>& t, const Matrix& k_cache,
                                           const Matrix& v_cache, const AttentionWeights& w) {
    return attend(t, k_cache, v_cache, w, [](std::size_t seq) { return seq; });
}

AttentionResult topk_sparse_attention(const std::vector<double>& t, const Matrix& k_cache,
                                      const Matrix& v_cache, const AttentionWeights& w,
                                      const SparseConfig& sparse) {
    if (!(sparse.keep > 0.0 && sparse.keep <= 1.0)) throw std::invalid_argument("keep fraction must be in (0, 1]");
    return attend(t, k_cache, v_cache, w, [&](std::size_t seq) {
        return static_cast<std::size_t>(std::ceil(sparse.keep * static_cast<double>(seq) - 1e-9));
    });
}

}  // namespace offload
