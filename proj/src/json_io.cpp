// Copyright 2026 The offload-planner Authors
// SPDX-License-Identifier: Apache-2.0

#include "offload/json_io.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace offload {

namespace {

// Reads fields from one object and rejects anything left over.
class FieldReader {
public:
    FieldReader(const Json& j, std::string what) : j_(j), what_(std::move(what)) {
        if (!j_.is_object()) fail("expected a JSON object");
    }

    bool has(const char* key) const { return j_.contains(key); }

    const Json& raw(const char* key) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) fail(std::string("missing field '") + key + "'");
        return *it;
    }

    double number(const char* key) {
        const Json& v = raw(key);
        if (v.is_number()) return v.get<double>();
        if (v.is_string()) {
            const auto& s = v.get_ref<const std::string&>();
            if (s == "inf" || s == "Infinity") return std::numeric_limits<double>::infinity();
        }
        fail(std::string("field '") + key + "' must be a number");
    }

    double number_or(const char* key, double dflt) { return has(key) ? number(key) : dflt; }

    std::int64_t integer(const char* key) {
        const Json& v = raw(key);
        if (v.is_number_integer()) return v.get<std::int64_t>();
        if (v.is_number_float()) {
            double d = v.get<double>();
            if (std::floor(d) == d && std::fabs(d) < 9e15) return static_cast<std::int64_t>(d);
        }
        fail(std::string("field '") + key + "' must be an integer");
    }

    std::int64_t integer_or(const char* key, std::int64_t dflt) { return has(key) ? integer(key) : dflt; }

    bool boolean_or(const char* key, bool dflt) {
        if (!has(key)) return dflt;
        const Json& v = raw(key);
        if (!v.is_boolean()) fail(std::string("field '") + key + "' must be a boolean");
        return v.get<bool>();
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            const std::string& k = it.key();
            if (!k.empty() && k[0] == '$') continue;
            if (!seen_.count(k)) fail("unknown field '" + k + "'");
        }
    }

    [[noreturn]] void fail(const std::string& msg) const { throw InputError(what_ + ": " + msg); }

private:
    const Json& j_;
    std::string what_;
    std::set<std::string> seen_;
};

template <class F>
auto checked(const char* what, F&& f) {
    try {
        return f();
    } catch (const std::invalid_argument& e) {
        throw InputError(std::string(what) + ": " + e.what());
    }
}

GroupAxis axis_from(const std::string& s, const FieldReader& r) {
    if (s == "output_channel") return GroupAxis::output_channel;
    if (s == "hidden") return GroupAxis::hidden;
    r.fail("unknown grouping axis '" + s + "'");
}

const char* axis_name(GroupAxis a) { return a == GroupAxis::output_channel ? "output_channel" : "hidden"; }

BandwidthCurve curve_from(const Json& j) {
    if (!j.is_array()) throw InputError("bandwidth_tables: each curve must be an array of [size, bandwidth] pairs");
    BandwidthCurve c;
    for (const auto& p : j) {
        if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number())
            throw InputError("bandwidth_tables: each point must be [size, bandwidth]");
        c.points.emplace_back(p[0].get<double>(), p[1].get<double>());
    }
    return c;
}

Json curve_json(const BandwidthCurve& c) {
    Json a = Json::array();
    for (const auto& [x, y] : c.points) a.push_back(Json::array({x, y}));
    return a;
}

Json split_json(const DeviceBytes& d) {
    Json j;
    j["gpu"] = d.gpu;
    j["cpu"] = d.cpu;
    j["disk"] = d.disk;
    return j;
}

}  // namespace

Json number_json(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
}

Json to_json(const ModelSpec& m) {
    Json j;
    j["l"] = m.l;
    j["h1"] = m.h1;
    j["h2"] = m.h2;
    j["nh"] = m.nh;
    j["bytes_per_element"] = m.bytes_per_element;
    return j;
}

Json to_json(const Workload& w) {
    Json j;
    j["s"] = w.s;
    j["n"] = w.n;
    return j;
}

Json to_json(const HardwareProfile& hw) {
    Json j;
    j["ctog_bdw"] = number_json(hw.ctog_bdw);
    j["gtoc_bdw"] = number_json(hw.gtoc_bdw);
    j["dtoc_bdw"] = number_json(hw.dtoc_bdw);
    j["ctod_bdw"] = number_json(hw.ctod_bdw);
    j["mm_flops"] = number_json(hw.mm_flops);
    j["bmm_flops"] = number_json(hw.bmm_flops);
    j["cpu_flops"] = number_json(hw.cpu_flops);
    j["gmem"] = number_json(hw.gmem);
    j["cmem"] = number_json(hw.cmem);
    j["nmem"] = number_json(hw.nmem);
    if (hw.bandwidth_tables) {
        Json t = Json::object();
        const auto& bt = *hw.bandwidth_tables;
        if (bt.ctog_bdw) t["ctog_bdw"] = curve_json(*bt.ctog_bdw);
        if (bt.gtoc_bdw) t["gtoc_bdw"] = curve_json(*bt.gtoc_bdw);
        if (bt.dtoc_bdw) t["dtoc_bdw"] = curve_json(*bt.dtoc_bdw);
        if (bt.ctod_bdw) t["ctod_bdw"] = curve_json(*bt.ctod_bdw);
        j["bandwidth_tables"] = t;
    }
    return j;
}

Json to_json(const QuantConfig& q) {
    Json j;
    j["bits"] = q.bits;
    j["group"] = q.group;
    j["weight_axis"] = axis_name(q.weight_axis);
    j["kv_axis"] = axis_name(q.kv_axis);
    return j;
}

Json to_json(const Policy& p) {
    Json j;
    j["gbs"] = p.gbs;
    j["num_gpu_batches"] = p.num_gpu_batches;
    j["wg"] = p.wg;
    j["wc"] = p.wc;
    j["wd"] = p.wd;
    j["cg"] = p.cg;
    j["cc"] = p.cc;
    j["cd"] = p.cd;
    j["hg"] = p.hg;
    j["hc"] = p.hc;
    j["hd"] = p.hd;
    j["cpu_delegation"] = p.cpu_delegation;
    j["compression"] = p.compression ? to_json(*p.compression) : Json(nullptr);
    return j;
}

Json to_json(const ByteReport& r) {
    Json j;
    j["weights_bytes"] = r.weights_bytes;
    j["kv_peak_bytes"] = r.kv_peak_bytes;
    j["activations_bytes"] = r.activations_bytes;
    j["weights_display"] = human_bytes(static_cast<double>(r.weights_bytes));
    j["kv_peak_display"] = human_bytes(static_cast<double>(r.kv_peak_bytes));
    j["activations_display"] = human_bytes(static_cast<double>(r.activations_bytes));
    j["kv_to_weights_ratio"] =
        static_cast<double>(r.kv_peak_bytes) / static_cast<double>(r.weights_bytes);
    if (r.weights_split) {
        Json s;
        s["weights"] = split_json(*r.weights_split);
        s["kv_cache"] = split_json(*r.kv_split);
        s["activations"] = split_json(*r.activations_split);
        j["per_device"] = s;
    }
    return j;
}

ModelSpec model_from_json(const Json& j) {
    FieldReader r(j, "model");
    ModelSpec m;
    m.l = r.integer("l");
    m.h1 = r.integer("h1");
    m.h2 = r.integer("h2");
    m.nh = r.integer("nh");
    m.bytes_per_element = r.number_or("bytes_per_element", 2.0);
    r.finish();
    checked("model", [&] { check_model(m); return 0; });
    return m;
}

Workload workload_from_json(const Json& j) {
    FieldReader r(j, "workload");
    Workload w;
    w.s = r.integer("s");
    w.n = r.integer("n");
    r.finish();
    checked("workload", [&] { check_workload(w); return 0; });
    return w;
}

HardwareProfile hardware_from_json(const Json& j) {
    FieldReader r(j, "hardware");
    HardwareProfile hw;
    hw.ctog_bdw = r.number("ctog_bdw");
    hw.gtoc_bdw = r.number("gtoc_bdw");
    hw.dtoc_bdw = r.number("dtoc_bdw");
    hw.ctod_bdw = r.number("ctod_bdw");
    hw.mm_flops = r.number("mm_flops");
    hw.bmm_flops = r.number("bmm_flops");
    hw.cpu_flops = r.number("cpu_flops");
    hw.gmem = r.number("gmem");
    hw.cmem = r.number("cmem");
    hw.nmem = r.number("nmem");
    if (r.has("bandwidth_tables")) {
        FieldReader t(r.raw("bandwidth_tables"), "hardware.bandwidth_tables");
        BandwidthTables bt;
        if (t.has("ctog_bdw")) bt.ctog_bdw = curve_from(t.raw("ctog_bdw"));
        if (t.has("gtoc_bdw")) bt.gtoc_bdw = curve_from(t.raw("gtoc_bdw"));
        if (t.has("dtoc_bdw")) bt.dtoc_bdw = curve_from(t.raw("dtoc_bdw"));
        if (t.has("ctod_bdw")) bt.ctod_bdw = curve_from(t.raw("ctod_bdw"));
        t.finish();
        hw.bandwidth_tables = bt;
    }
    r.finish();
    checked("hardware", [&] { check_hardware(hw); return 0; });
    return hw;
}

QuantConfig quant_from_json(const Json& j) {
    FieldReader r(j, "compression");
    QuantConfig q;
    q.bits = static_cast<int>(r.integer_or("bits", 4));
    q.group = r.integer_or("group", 64);
    if (r.has("weight_axis")) {
        const Json& a = r.raw("weight_axis");
        if (!a.is_string()) r.fail("weight_axis must be a string");
        q.weight_axis = axis_from(a.get<std::string>(), r);
    }
    if (r.has("kv_axis")) {
        const Json& a = r.raw("kv_axis");
        if (!a.is_string()) r.fail("kv_axis must be a string");
        q.kv_axis = axis_from(a.get<std::string>(), r);
    }
    r.finish();
    if (!((q.bits >= 1 && q.bits <= 8) || q.bits == 16)) r.fail("bits out of range");
    if (q.group < 0) r.fail("group must be >= 0");
    return q;
}

Policy policy_from_json(const Json& j) {
    FieldReader r(j, "policy");
    Policy p;
    p.gbs = r.integer("gbs");
    p.num_gpu_batches = r.integer("num_gpu_batches");
    p.wg = r.number("wg");
    p.wc = r.number("wc");
    p.wd = r.number("wd");
    p.cg = r.number("cg");
    p.cc = r.number("cc");
    p.cd = r.number("cd");
    p.hg = r.number("hg");
    p.hc = r.number("hc");
    p.hd = r.number("hd");
    p.cpu_delegation = r.boolean_or("cpu_delegation", true);
    if (r.has("compression")) {
        const Json& c = r.raw("compression");
        if (!c.is_null()) p.compression = quant_from_json(c);
    }
    r.finish();
    auto v = validate_policy(p);
    if (!v.empty()) r.fail(v.front());
    return p;
}

Json parse_json_text(const std::string& text, const std::string& origin) {
    try {
        return Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw InputError(origin + ": invalid JSON: " + e.what());
    }
}

Json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_json_text(ss.str(), path);
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

}  // namespace offload
