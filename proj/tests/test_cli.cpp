// Copyright 2026 The offload-planner Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "offload/cli.hpp"
#include "offload/compress.hpp"
#include "offload/json_io.hpp"

using namespace offload;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out, err;
    Json json() const { return parse_json_text(out, "stdout"); }
};

Run cli(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch_dir() {
    static const fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / ("offload-cli-test-" + std::to_string(std::random_device{}()));
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string write_text(const std::string& name, const std::string& text) {
    const fs::path p = scratch_dir() / name;
    std::ofstream(p) << text;
    return p.string();
}

std::string write_floats(const std::string& name, const std::vector<float>& v) {
    const fs::path p = scratch_dir() / name;
    std::ofstream f(p, std::ios::binary);
    f.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
    return p.string();
}

const std::string kFixtureHw = std::string(FIXTURE_DIR) + "/synthetic-hw.json";
const std::string kFixtureModel = std::string(FIXTURE_DIR) + "/synthetic-model.json";

}  // namespace

TEST_CASE("help and usage errors") {
    auto r = cli({"--help"});
    CHECK(r.code == 0);
    CHECK(r.out.find("footprint") != std::string::npos);
    r = cli({"plan", "--help"});
    CHECK(r.code == 0);
    CHECK(r.out.find("--latency-ceiling") != std::string::npos);
    CHECK(r.out.find("--oracle-check") != std::string::npos);
    CHECK(cli({}).code == kExitInput);
    CHECK(cli({"frobnicate"}).code == kExitInput);
    CHECK(cli({"footprint", "--model", "opt-175b"}).code == kExitInput);
}

TEST_CASE("footprint") {
    auto r = cli({"footprint", "--model", "opt-175b", "--batch", "512", "--s", "512", "--n", "32"});
    REQUIRE(r.code == 0);
    const Json j = r.json();
    CHECK(j["weights_bytes"].get<std::uint64_t>() == 347892350976ULL);
    CHECK(j["kv_peak_bytes"].get<std::uint64_t>() == 1314259992576ULL);
    CHECK(j["weights_display"] == "324 GiB");
    CHECK(j["kv_peak_display"] == "1.195 TiB");

    r = cli({"footprint", "--model", "opt-175b", "--batch", "1", "--s", "1", "--n", "1"});
    REQUIRE(r.code == 0);
    CHECK(r.json()["kv_peak_bytes"].get<std::uint64_t>() == 4ULL * 96 * 12288 * 2);

    r = cli({"footprint", "--model", "/definitely/missing.json", "--s", "1", "--n", "1"});
    CHECK(r.code == kExitInput);
    CHECK(r.err.find("/definitely/missing.json") != std::string::npos);

    CHECK(cli({"footprint", "--model", "opt-175b", "--s", "0", "--n", "1"}).code == kExitInput);
}

TEST_CASE("plan") {
    SUBCASE("roomy hardware gives the all-GPU corner") {
        const std::string hw = write_text("roomy.json", R"({"ctog_bdw": 16e9, "gtoc_bdw": 16e9, "dtoc_bdw": 2e9,
            "ctod_bdw": 1e9, "mm_flops": 50e12, "bmm_flops": 10e12, "cpu_flops": 1e12,
            "gmem": 1e18, "cmem": 1e18, "nmem": 1e18})");
        auto r = cli({"plan", "--model", "opt-6.7b", "--hw", hw, "--s", "256", "--n", "32"});
        REQUIRE(r.code == 0);
        const Json p = r.json()["policy"];
        CHECK(p["wg"].get<double>() == 1.0);
        CHECK(p["cg"].get<double>() == 1.0);
        CHECK(p["hg"].get<double>() == 1.0);
    }
    SUBCASE("oracle check on the fixture") {
        auto r = cli({"plan", "--model", kFixtureModel, "--hw", kFixtureHw, "--s", "256", "--n", "32", "--oracle-check",
                      "0.05"});
        REQUIRE(r.code == 0);
        const Json o = r.json()["oracle_check"];
        CHECK(o["found"].get<bool>());
        CHECK(std::abs(o["gap"].get<double>()) <= 0.03);
        CHECK(o["lp_objective"].get<double>() <= o["grid_objective"].get<double>() * (1 + 1e-9));
    }
    SUBCASE("infeasible") {
        const std::string hw = write_text("tiny.json", R"({"ctog_bdw": 1e9, "gtoc_bdw": 1e9, "dtoc_bdw": 1e9,
            "ctod_bdw": 1e9, "mm_flops": 1e12, "bmm_flops": 1e12, "cpu_flops": 1e11,
            "gmem": 1e6, "cmem": 1e6, "nmem": 1e6})");
        auto r = cli({"plan", "--model", "opt-6.7b", "--hw", hw, "--s", "64", "--n", "8"});
        CHECK(r.code == kExitInfeasible);
        CHECK(r.err.find("no feasible policy") != std::string::npos);
        CHECK_FALSE(r.json()["found"].get<bool>());
    }
    SUBCASE("flags") {
        auto r = cli({"plan", "--model", "opt-30b", "--hw", "t4-gcp", "--s", "512", "--n", "32", "--pin", "wg=0",
                      "--compress", "--table"});
        REQUIRE(r.code == 0);
        const Json j = r.json();
        CHECK(j["policy"]["wg"].get<double>() == 0.0);
        CHECK(j["policy"]["compression"]["bits"] == 4);
        CHECK_FALSE(j["policy"]["cpu_delegation"].get<bool>());
        CHECK(j["candidates"].size() > 10);
        CHECK(cli({"plan", "--model", "opt-30b", "--hw", "t4-gcp", "--s", "512", "--n", "32", "--pin", "zz=0"}).code ==
              kExitInput);
        r = cli({"plan", "--model", "opt-30b", "--hw", "t4-gcp", "--s", "512", "--n", "32", "--latency-ceiling", "1e-9"});
        CHECK(r.code == kExitInfeasible);
        CHECK(r.err.find("latency_ceiling") != std::string::npos);
    }
}

TEST_CASE("simulate") {
    const std::vector<std::string> base = {"--model", "opt-30b", "--hw", "t4-gcp", "--s", "512", "--n", "32"};
    auto with = [&](std::vector<std::string> head, std::vector<std::string> tail) {
        head.insert(head.end(), base.begin(), base.end());
        head.insert(head.end(), tail.begin(), tail.end());
        return head;
    };
    const std::string plan_path = (scratch_dir() / "plan.json").string();
    REQUIRE(cli(with({"plan"}, {"-o", plan_path})).code == 0);

    auto a = cli(with({"simulate"}, {"--policy", plan_path}));
    REQUIRE(a.code == 0);
    auto b = cli(with({"simulate"}, {"--policy", plan_path, "--pipeline", "1"}));
    CHECK(a.out == b.out);
    const Json j = a.json();
    const double sim = j["result"]["total_latency"].get<double>();
    const double analytic = j["analytic_latency"].get<double>();
    CHECK(sim >= analytic * (1 - 1e-9));
    CHECK(sim <= analytic * 1.05);

    const std::string events = (scratch_dir() / "events.csv").string();
    REQUIRE(cli(with({"simulate"}, {"--baseline", "deepspeed", "--events", events})).code == 0);
    std::ifstream ev(events);
    std::string header;
    std::getline(ev, header);
    CHECK(header == "step,kind,i,j,k,channel,start,end,bytes");

    auto cmp = cli({"simulate", "--model", "opt-175b", "--hw", "t4-gcp", "--s", "512", "--n", "32", "--compare", "planned"});
    REQUIRE(cmp.code == 0);
    CHECK(cmp.json()["throughput_ratio"].get<double>() > 10);

    const std::string bad = write_text("bad-policy.json", R"({"gbs": 4})");
    CHECK(cli(with({"simulate"}, {"--policy", bad})).code == kExitInput);
    CHECK(cli(with({"simulate"}, {"--baseline", "vllm"})).code == kExitInput);
    CHECK(cli(with({"simulate"}, {})).code == kExitInput);
    CHECK(cli(with({"simulate"}, {"--baseline", "deepspeed", "--pipeline", "5"})).code == kExitInput);

    auto pipe = cli(with({"simulate"}, {"--policy", plan_path, "--pipeline", "4", "--allow-oom"}));
    REQUIRE(pipe.code == 0);
    CHECK(pipe.json()["result"]["stages"].size() == 4);
}

TEST_CASE("schedule") {
    auto r = cli({"schedule", "--kind", "zigzag", "--rows", "4", "--n", "3", "--l", "2", "--s", "5", "--bls", "2",
                  "--account", "--model", "opt-6.7b"});
    CHECK(r.code == kExitInput);  // layer count mismatch
    r = cli({"schedule", "--kind", "zigzag", "--rows", "4", "--n", "3", "--l", "32", "--s", "5", "--bls", "2", "--account",
             "--model", "opt-6.7b"});
    REQUIRE(r.code == 0);
    Json acc = r.json()["account"];
    CHECK(acc["activation_bytes_moved"] == acc["closed_form"]["activation_bytes"]);
    CHECK(acc["kv_bytes_moved"] == acc["closed_form"]["kv_bytes"]);

    r = cli({"schedule", "--kind", "zigzag", "--rows", "2", "--n", "2", "--l", "2", "--s", "2", "--capacity", "6",
             "--brute-force"});
    REQUIRE(r.code == 0);
    CHECK(r.json()["brute_force"]["loads_per_row"].get<double>() == 2.0);
    CHECK(r.json()["brute_force"]["loads"] == 4);
    CHECK(r.json()["lower_bound"] == 4);

    const std::string d = (scratch_dir() / "diag.csv").string(), rm = (scratch_dir() / "row.csv").string();
    REQUIRE(cli({"schedule", "--kind", "diagonal", "--rows", "1", "--n", "4", "--l", "3", "--trace", d}).code == 0);
    REQUIRE(cli({"schedule", "--kind", "row", "--rows", "1", "--n", "4", "--l", "3", "--trace", rm}).code == 0);
    std::ifstream fd(d), fr(rm);
    std::stringstream sd, sr;
    sd << fd.rdbuf();
    sr << fr.rdbuf();
    CHECK(sd.str() == sr.str());
    CHECK(sd.str().rfind("step,row,token,layer,loads,stores,device\n", 0) == 0);

    CHECK(cli({"schedule", "--kind", "spiral"}).code == kExitInput);
    CHECK(cli({"schedule", "--rows", "2", "--bls", "3"}).code == kExitInput);
    CHECK(cli({"schedule", "--brute-force"}).code == kExitInput);
    CHECK(cli({"schedule", "--rows", "2", "--n", "3", "--l", "1", "--s", "3", "--capacity", "4", "--brute-force"}).code ==
          kExitInfeasible);
    r = cli({"schedule", "--kind", "zigzag", "--rows", "4", "--n", "2", "--l", "2", "--s", "2", "--capacity", "5"});
    REQUIRE(r.code == 0);
    CHECK(r.json()["valid"]["constraint"] == "capacity");
}

TEST_CASE("quantize") {
    std::mt19937 rng(3);
    std::uniform_real_distribution<float> dist(-4.0f, 4.0f);
    std::vector<float> v(64 * 256);
    for (float& x : v) x = dist(rng);
    const std::string in = write_floats("random.f32", v);
    const std::string blob = (scratch_dir() / "random.ofq").string();

    auto r = cli({"quantize", "--bits", "4", "--group", "64", "-i", in, "-o", blob, "--shape", "64,256", "--verify"});
    REQUIRE(r.code == 0);
    Json j = r.json();
    CHECK(j["effective_ratio"].get<double>() == 0.28125);
    CHECK(j["verify"]["within_bound"].get<bool>());
    CHECK(j["verify"]["max_error_over_bound"].get<double>() <= 1.0 + 1e-6);
    CHECK(j["groups"] == 64 * 4);
    CHECK(fs::file_size(blob) == j["serialized_bytes"].get<std::uint64_t>());

    // FP16-representable input round-trips exactly at 16 bits.
    std::vector<float> halves(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) halves[i] = half_to_float(float_to_half(v[i]));
    const std::string hin = write_floats("halves.f32", halves);
    r = cli({"quantize", "--bits", "16", "-i", hin, "--verify"});
    REQUIRE(r.code == 0);
    CHECK(r.json()["verify"]["max_abs_error"].get<double>() == 0.0);

    r = cli({"quantize", "--bits", "9", "-i", in});
    CHECK(r.code == kExitInput);
    CHECK(r.err.find("bits out of range") != std::string::npos);
    CHECK(cli({"quantize", "-i", in, "--shape", "3,3"}).code == kExitInput);
    CHECK(cli({"quantize", "-i", (scratch_dir() / "nope.f32").string()}).code == kExitInput);
}

TEST_CASE("plan and simulate output is byte-identical across runs") {
    const std::vector<std::string> plan = {"plan", "--model", "opt-30b", "--hw", "t4-gcp", "--s", "512", "--n", "32",
                                           "--table"};
    CHECK(cli(plan).out == cli(plan).out);
    const std::vector<std::string> sim = {"simulate", "--model", "opt-30b", "--hw", "t4-gcp", "--s", "512", "--n", "32",
                                          "--baseline", "deepspeed"};
    CHECK(cli(sim).out == cli(sim).out);
}
