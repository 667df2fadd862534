// Copyright 2026 The offload-planner Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <random>

#include "offload/json_io.hpp"
#include "offload/model.hpp"
#include "offload/presets.hpp"

using namespace offload;

namespace {

// Independent oracle: sum the six per-layer matrices element by element.
std::uint64_t weights_by_matrix(const ModelSpec& m) {
    const std::uint64_t h1 = m.h1, h2 = m.h2;
    std::uint64_t elems = 0;
    for (int k = 0; k < 4; ++k) elems += h1 * h1;  // q, k, v, out projections
    elems += h1 * h2 + h2 * h1;                    // two MLP matrices
    return elems * 2 * static_cast<std::uint64_t>(m.l);
}

// Independent oracle: K and V of h1 halves per token, every layer, every sample.
std::uint64_t kv_by_tensor(const ModelSpec& m, std::uint64_t b, const Workload& w) {
    const std::uint64_t per_token = 2 /*K,V*/ * static_cast<std::uint64_t>(m.h1) * 2 /*bytes*/;
    return per_token * static_cast<std::uint64_t>(w.s + w.n) * static_cast<std::uint64_t>(m.l) * b;
}

Policy all_gpu() { return Policy{}; }

}  // namespace

TEST_CASE("weight_bytes matches the closed form and the per-matrix oracle") {
    ModelSpec opt175{96, 12288, 49152, 96, 2.0};
    CHECK(weight_bytes(opt175) == 347892350976ULL);
    CHECK(weight_bytes(opt175) == weights_by_matrix(opt175));
    CHECK(human_bytes(static_cast<double>(weight_bytes(opt175))) == "324 GiB");

    CHECK(weight_bytes(ModelSpec{1, 1, 1, 1, 2.0}) == 12);
    ModelSpec small{2, 4, 8, 2, 2.0};
    CHECK(weight_bytes(small) == 512);
    CHECK(weight_bytes(small) == weights_by_matrix(small));
}

TEST_CASE("kv_cache_peak_bytes") {
    ModelSpec opt175{96, 12288, 49152, 96, 2.0};
    const auto kv = kv_cache_peak_bytes(opt175, 512, Workload{512, 32});
    CHECK(kv == 1314259992576ULL);
    CHECK(kv == kv_by_tensor(opt175, 512, Workload{512, 32}));
    CHECK(human_bytes(static_cast<double>(kv)) == "1.195 TiB");
    const double ratio = static_cast<double>(kv) / static_cast<double>(weight_bytes(opt175));
    CHECK(ratio == doctest::Approx(3.7778).epsilon(1e-4));
    CHECK(std::round(ratio * 100) / 100 == doctest::Approx(3.78));

    // 4 * b * l * h1 * (s + n) with every factor 1 and s + n = 2.
    CHECK(kv_cache_peak_bytes(ModelSpec{1, 1, 1, 1, 2.0}, 1, Workload{1, 1}) == 8);
    CHECK(kv_cache_peak_bytes(opt175, 1, Workload{1, 1}) == 4ULL * 96 * 12288 * 2);
}

TEST_CASE("linearity and monotonicity properties") {
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<int> dim(1, 64);
    for (int it = 0; it < 200; ++it) {
        std::int64_t nh = dim(rng) % 8 + 1;
        ModelSpec m{dim(rng), nh * dim(rng), dim(rng), nh, 2.0};
        Workload w{dim(rng), dim(rng)};
        std::int64_t b = dim(rng);
        ModelSpec m2 = m;
        m2.l *= 2;
        CHECK(weight_bytes(m2) == 2 * weight_bytes(m));
        CHECK(kv_cache_peak_bytes(m, 2 * b, w) == 2 * kv_cache_peak_bytes(m, b, w));

        const auto base = kv_cache_peak_bytes(m, b, w);
        CHECK(kv_cache_peak_bytes(m, b + 1, w) > base);
        CHECK(kv_cache_peak_bytes(m2, b, w) > base);
        ModelSpec wider = m;
        wider.h1 += nh;
        CHECK(kv_cache_peak_bytes(wider, b, w) > base);
        CHECK(kv_cache_peak_bytes(m, b, Workload{w.s + 1, w.n}) > base);
        CHECK(kv_cache_peak_bytes(m, b, Workload{w.s, w.n + 1}) > base);
        // Only s + n matters.
        CHECK(kv_cache_peak_bytes(m, b, Workload{w.s + w.n - 1, 1}) == base);
    }
}

TEST_CASE("wide integers keep large specs exact") {
    ModelSpec big{1000000, 1000000, 1000000, 1, 2.0};
    CHECK(weight_bytes(big) == 12000000000000000000ULL);
    CHECK_THROWS_AS(kv_cache_peak_bytes(big, 1000000, Workload{1000000, 1000000}), std::overflow_error);
    ModelSpec large{1000, 1000000, 1000000, 1, 2.0};
    CHECK(weight_bytes(large) == 12000000000000000ULL);
}

TEST_CASE("bytes_per_element scales FP16 counts") {
    ModelSpec m{2, 4, 8, 2, 1.0};
    CHECK(weight_bytes(m) == 256);
    m.bytes_per_element = 0.5625;  // 4.5 bits
    CHECK(weight_bytes(m) == 144);
    m.bytes_per_element = 4.0;
    CHECK(weight_bytes(m) == 1024);
}

TEST_CASE("generation_throughput") {
    CHECK(generation_throughput(1, 1, 1) == 1.0);
    CHECK(generation_throughput(256, 32, 11872) == doctest::Approx(0.69).epsilon(0.005));
    CHECK(generation_throughput(144, 32, 4114) == doctest::Approx(1.12).epsilon(0.005));
    CHECK_THROWS_AS(generation_throughput(1, 1, 0), std::domain_error);
    CHECK_THROWS_AS(generation_throughput(1, 1, -3), std::domain_error);
}

TEST_CASE("validate_policy") {
    CHECK(validate_policy(all_gpu()).empty());

    Policy bad = all_gpu();
    bad.wg = 0.5, bad.wc = 0.6, bad.wd = 0;
    auto v = validate_policy(bad);
    REQUIRE(v.size() == 1);
    CHECK(v[0] == "weight fractions sum 1.1 ≠ 1");

    Policy paper30;
    paper30.gbs = 48, paper30.num_gpu_batches = 3;
    paper30.wg = 0.20, paper30.wc = 0.80, paper30.wd = 0;
    paper30.cg = 0, paper30.cc = 1, paper30.cd = 0;
    paper30.hg = 0, paper30.hc = 1, paper30.hd = 0;
    CHECK(validate_policy(paper30).empty());
    CHECK(paper30.bls() == 144);

    Policy zero = all_gpu();
    zero.gbs = 0;
    CHECK(validate_policy(zero).size() == 1);
}

TEST_CASE("perturbing any single fraction by +0.1 is rejected") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int it = 0; it < 100; ++it) {
        Policy p;
        double a = u(rng), b = u(rng) * (1 - a);
        p.wg = a, p.wc = b, p.wd = 1 - a - b;
        a = u(rng), b = u(rng) * (1 - a);
        p.cg = a, p.cc = b, p.cd = 1 - a - b;
        a = u(rng), b = u(rng) * (1 - a);
        p.hg = a, p.hc = b, p.hd = 1 - a - b;
        REQUIRE(validate_policy(p).empty());
        double Policy::*fields[] = {&Policy::wg, &Policy::wc, &Policy::wd, &Policy::cg, &Policy::cc,
                                    &Policy::cd, &Policy::hg, &Policy::hc, &Policy::hd};
        for (auto f : fields) {
            Policy q = p;
            q.*f += 0.1;
            CHECK_FALSE(validate_policy(q).empty());
        }
    }
}

TEST_CASE("footprint per-device split sums to the total") {
    ModelSpec m{96, 12288, 49152, 96, 2.0};
    Policy p;
    p.wg = 0.2, p.wc = 0.5, p.wd = 0.3;
    p.cg = 0.1, p.cc = 0.6, p.cd = 0.3;
    p.hg = 1.0 / 3, p.hc = 1.0 / 3, p.hd = 1.0 / 3;
    auto r = footprint(m, 64, Workload{512, 32}, p);
    REQUIRE(r.weights_split);
    CHECK(r.weights_split->total() == r.weights_bytes);
    CHECK(r.kv_split->total() == r.kv_peak_bytes);
    CHECK(r.activations_split->total() == r.activations_bytes);
    CHECK(static_cast<double>(r.weights_split->gpu) == doctest::Approx(0.2 * r.weights_bytes).epsilon(1e-9));
}

TEST_CASE("human_bytes") {
    CHECK(human_bytes(0) == "0 B");
    CHECK(human_bytes(1023) == "1023 B");
    CHECK(human_bytes(1024) == "1 KiB");
    CHECK(human_bytes(1536) == "1.5 KiB");
    CHECK(human_bytes(16.0 * (1ULL << 30)) == "16 GiB");
}

TEST_CASE("JSON round trips and rejects unknown fields") {
    ModelSpec m{48, 7168, 28672, 56, 2.0};
    CHECK(model_from_json(to_json(m)) == m);
    Workload w{512, 32};
    CHECK(workload_from_json(to_json(w)) == w);
    Policy p;
    p.gbs = 48, p.num_gpu_batches = 3, p.wg = 0.2, p.wc = 0.8, p.wd = 0;
    p.compression = QuantConfig{4, 64};
    CHECK(policy_from_json(to_json(p)) == p);

    HardwareProfile hw;
    hw.gmem = INFINITY;
    hw.bandwidth_tables = BandwidthTables{};
    hw.bandwidth_tables->dtoc_bdw = BandwidthCurve{{{1e6, 1e9}, {1e8, 2e9}}};
    Json j = to_json(hw);
    CHECK(j["gmem"] == "inf");
    CHECK(hardware_from_json(j) == hw);

    Json bad = to_json(m);
    bad["hidden"] = 3;
    CHECK_THROWS_WITH_AS(model_from_json(bad), "model: unknown field 'hidden'", InputError);
    Json annotated = to_json(m);
    annotated["$comment"] = "ignored";
    CHECK(model_from_json(annotated) == m);

    Json missing = to_json(w);
    missing.erase("n");
    CHECK_THROWS_AS(workload_from_json(missing), InputError);

    Json broken = to_json(p);
    broken["wc"] = 0.9;
    CHECK_THROWS_WITH_AS(policy_from_json(broken), "policy: weight fractions sum 1.1 ≠ 1", InputError);

    Json indivisible = to_json(m);
    indivisible["nh"] = 5;
    CHECK_THROWS_AS(model_from_json(indivisible), InputError);
}

TEST_CASE("presets") {
    auto m = load_model("opt-175b");
    CHECK(m == ModelSpec{96, 12288, 49152, 96, 2.0});
    CHECK(load_model("opt-30b") == ModelSpec{48, 7168, 28672, 56, 2.0});
    CHECK(load_model("opt-6.7b") == ModelSpec{32, 4096, 16384, 32, 2.0});
    auto hw = load_hardware("t4-gcp");
    CHECK(hw.gmem == 16.0 * (1ULL << 30));
    CHECK(hw.cmem == 208.0 * (1ULL << 30));
    CHECK(hw.nmem == 1.5 * (1ULL << 40));
    CHECK(hw.dtoc_bdw == 2e9);
    CHECK(hw.ctod_bdw == 1e9);
    auto text = preset_text(PresetKind::hardware, "t4-gcp");
    REQUIRE(text);
    CHECK(text->find("ESTIMATES") != std::string_view::npos);
    CHECK_THROWS_WITH_AS(load_model("/no/such/model.json"), "no such file or preset: /no/such/model.json", InputError);
}

TEST_CASE("bandwidth curve interpolation") {
    BandwidthCurve c{{{0, 1}, {10, 3}}};
    CHECK(c.at(-1) == 1);
    CHECK(c.at(5) == 2);
    CHECK(c.at(100) == 3);
}
