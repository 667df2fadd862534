// Copyright 2026 The offload-planner Authors
// SPDX-License-Identifier: Apache-2.0

#include "offload/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>
#include <stdexcept>

#include "offload/compress.hpp"
#include "offload/costmodel.hpp"
#include "offload/json_io.hpp"
#include "offload/policy.hpp"
#include "offload/presets.hpp"
#include "offload/schedule.hpp"
#include "offload/sim.hpp"

namespace offload {

namespace {

// Failures that map to exit code 3.
class Infeasible : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Common {
    std::string model, hw;
    std::int64_t s = 0, n = 0;
};

void add_common(CLI::App* cmd, Common& c, bool need_hw) {
    cmd->add_option("--model", c.model, "Model preset name or JSON path")->required();
    auto* hw = cmd->add_option("--hw", c.hw, "Hardware preset name or JSON path");
    if (need_hw) hw->required();
    cmd->add_option("--s", c.s, "Prompt length")->required();
    cmd->add_option("--n", c.n, "Output length")->required();
}

Workload workload_of(const Common& c) {
    Workload w{c.s, c.n};
    try {
        check_workload(w);
    } catch (const std::invalid_argument& e) {
        throw InputError(e.what());
    }
    return w;
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot write file: " + path);
    f << text;
}

std::vector<std::uint8_t> read_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot open file: " + path);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

Json candidate_json(const CandidateRow& r) {
    Json j;
    j["gbs"] = r.gbs;
    j["num_gpu_batches"] = r.num_gpu_batches;
    j["cpu_delegation"] = r.cpu_delegation;
    j["lp_status"] = lp::to_string(r.status);
    j["lp_objective"] = number_json(r.lp_objective);
    j["feasible"] = r.feasible;
    j["objective"] = number_json(r.objective);
    j["throughput"] = number_json(r.throughput);
    return j;
}

// ---- footprint ----

struct FootprintArgs {
    std::string model, policy;
    std::int64_t batch = 1, s = 0, n = 0;
};

int cmd_footprint(const FootprintArgs& a, std::ostream& out) {
    const ModelSpec m = load_model(a.model);
    Workload w{a.s, a.n};
    std::optional<Policy> placement;
    if (!a.policy.empty()) placement = load_policy(a.policy);
    const ByteReport r = footprint(m, a.batch, w, placement);
    out << dump(to_json(r));
    return kExitOk;
}

// ---- plan ----

struct PlanArgs {
    Common c;
    std::optional<double> latency_ceiling;
    std::vector<std::string> pins;
    bool compress = false;
    int bits = 4;
    std::int64_t group = 64;
    std::string delegation = "auto";
    std::vector<std::int64_t> gbs, ngb;
    std::optional<double> oracle;
    bool table = false;
    std::string output;
};

SearchConfig search_config(const PlanArgs& a) {
    SearchConfig cfg;
    cfg.gbs_candidates = a.gbs;
    cfg.ngb_candidates = a.ngb;
    cfg.latency_ceiling = a.latency_ceiling;
    for (const std::string& pin : a.pins) {
        const auto eq = pin.find('=');
        if (eq == std::string::npos) throw InputError("pin must look like name=value: " + pin);
        const std::string name = pin.substr(0, eq);
        try {
            placement_index(name);
            cfg.pins[name] = std::stod(pin.substr(eq + 1));
        } catch (const std::invalid_argument&) {
            throw InputError("bad pin: " + pin);
        }
    }
    if (a.compress) {
        QuantConfig q;
        q.bits = a.bits;
        q.group = a.group;
        try {
            check_quant_config(q);
        } catch (const std::invalid_argument& e) {
            throw InputError(e.what());
        }
        cfg.compression = q;
    }
    if (a.delegation == "on") cfg.cpu_delegation = true;
    if (a.delegation == "off") cfg.cpu_delegation = false;
    return cfg;
}

int cmd_plan(const PlanArgs& a, std::ostream& out, std::ostream& err) {
    const ModelSpec m = load_model(a.c.model);
    const HardwareProfile hw = load_hardware(a.c.hw);
    const Workload w = workload_of(a.c);
    const SearchConfig cfg = search_config(a);
    if (a.oracle && !(*a.oracle == 0.05 || *a.oracle == 0.1 || *a.oracle == 0.25))
        throw InputError("oracle resolution must be 0.05, 0.1 or 0.25");

    const SearchResult r = search(m, hw, w, cfg);
    Json j;
    j["workload"] = to_json(w);
    j["found"] = r.found;
    if (!r.found) {
        j["message"] = r.message;
        j["binding_capacities"] = r.binding_capacities;
    } else {
        j["policy"] = to_json(r.best);
        j["throughput"] = number_json(r.throughput);
        j["latency"] = number_json(r.latency);
        j["objective"] = number_json(r.objective);
        j["lp_objective"] = number_json(r.lp_objective);
        const LatencyReport lr = latency_report(r.best, m, hw, w);
        j["bottleneck"] = Json{{"prefill", lr.prefill.bottleneck()}, {"decode", lr.decode.bottleneck()}};
        if (a.oracle) {
            const GridResult g = grid_oracle(m, hw, w, r.best.gbs, r.best.num_gpu_batches, *a.oracle,
                                             r.best.cpu_delegation, r.best.compression);
            Json o;
            o["resolution"] = *a.oracle;
            o["evaluated"] = g.evaluated;
            o["found"] = g.found;
            o["grid_objective"] = number_json(g.objective);
            o["lp_objective"] = number_json(r.lp_objective);
            o["gap"] = number_json(g.found ? (r.objective - g.objective) / g.objective : INFINITY);
            j["oracle_check"] = o;
        }
    }
    if (a.table) {
        Json t = Json::array();
        for (const auto& row : r.table) t.push_back(candidate_json(row));
        j["candidates"] = t;
    }
    const std::string text = dump(j);
    if (!a.output.empty()) write_file(a.output, text);
    out << text;
    if (!r.found) {
        err << r.message << "\n";
        return kExitInfeasible;
    }
    return kExitOk;
}

// ---- simulate ----

// Accepts a bare policy document or a plan result holding one under "policy".
Policy read_policy(const std::string& path) {
    const Json j = read_json_file(path);
    if (j.is_object() && j.contains("policy") && j.at("policy").is_object()) return policy_from_json(j.at("policy"));
    return policy_from_json(j);
}

struct SimArgs {
    Common c;
    std::string policy, baseline, compare, events;
    std::int64_t pipeline = 1;
    bool allow_oom = false;
};

Json run_one(const Policy& p, const ModelSpec& m, const HardwareProfile& hw, const Workload& w, const SimArgs& a,
             SimResult* keep) {
    SimOptions opt;
    opt.allow_oom = a.allow_oom;
    opt.keep_events = !a.events.empty() || keep != nullptr;
    Json j;
    j["policy"] = to_json(p);
    j["analytic_latency"] = number_json(total_latency(p, m, hw, w));
    try {
        if (a.pipeline == 1) {
            SimResult r = simulate(p, m, hw, w, opt);
            j["result"] = to_json(r);
            if (keep) *keep = std::move(r);
        } else {
            PipelineResult r = simulate_pipeline(a.pipeline, p, m, hw, w, opt);
            j["result"] = to_json(r);
            if (keep) *keep = std::move(r.aggregate);
        }
    } catch (const std::invalid_argument& e) {
        throw InputError(e.what());
    } catch (const std::runtime_error& e) {
        throw Infeasible(e.what());
    }
    return j;
}

double result_throughput(const Json& run) {
    const Json& r = run.at("result");
    const Json& agg = r.contains("aggregate") ? r.at("aggregate") : r;
    return agg.at("generation_throughput").get<double>();
}

int cmd_simulate(const SimArgs& a, std::ostream& out) {
    const ModelSpec m = load_model(a.c.model);
    const HardwareProfile hw = load_hardware(a.c.hw);
    const Workload w = workload_of(a.c);
    if (a.pipeline < 1) throw InputError("--pipeline must be >= 1");

    auto baseline = [&](const std::string& name) {
        try {
            return baseline_policy(name, m, hw, w);
        } catch (const std::invalid_argument& e) {
            throw InputError(e.what());
        }
    };

    if (!a.compare.empty()) {
        if (a.compare != "planned") throw InputError("--compare accepts only 'planned'");
        const std::string base_name = a.baseline.empty() ? "deepspeed" : a.baseline;
        ModelSpec stage = m;
        if (a.pipeline > 1 && m.l % a.pipeline == 0) stage.l = m.l / a.pipeline;
        const SearchResult planned = search(stage, hw, w, SearchConfig{});
        if (!planned.found) throw Infeasible(planned.message);
        Json j;
        j["workload"] = to_json(w);
        Json b = run_one(baseline(base_name), m, hw, w, a, nullptr);
        b["name"] = base_name;
        j["baseline"] = b;
        SimResult keep;
        j["planned"] = run_one(planned.best, m, hw, w, a, a.events.empty() ? nullptr : &keep);
        j["throughput_ratio"] = number_json(result_throughput(j["planned"]) / result_throughput(j["baseline"]));
        if (!a.events.empty()) write_file(a.events, events_csv(keep));
        out << dump(j);
        return kExitOk;
    }

    if (a.policy.empty() == a.baseline.empty()) throw InputError("give exactly one of --policy or --baseline");
    const Policy p = a.policy.empty() ? baseline(a.baseline) : read_policy(a.policy);
    SimResult keep;
    Json j;
    j["workload"] = to_json(w);
    if (!a.baseline.empty()) j["baseline"] = a.baseline;
    Json run = run_one(p, m, hw, w, a, a.events.empty() ? nullptr : &keep);
    for (auto it = run.begin(); it != run.end(); ++it) j[it.key()] = it.value();
    if (!a.events.empty()) write_file(a.events, events_csv(keep));
    out << dump(j);
    return kExitOk;
}

// ---- schedule ----

struct ScheduleArgs {
    std::string kind = "zigzag", model, trace;
    std::int64_t rows = 1, n = 1, l = 1, s = 1;
    std::optional<std::int64_t> bls;
    std::optional<double> capacity, memory;
    bool account = false, brute_force = false;
};

Json graph_json(const ComputeGraph& g) {
    return Json{{"rows", g.rows}, {"n", g.tokens}, {"l", g.layers}, {"s", g.prompt_len}};
}

int cmd_schedule(const ScheduleArgs& a, std::ostream& out) {
    const ComputeGraph g{a.rows, a.n, a.l, a.s};
    // Without --model, bytes are those of a unit model (h1 = h2 = 1).
    ModelSpec model{a.l, 1, 1, 1, 2.0};
    if (!a.model.empty()) {
        model = load_model(a.model);
        if (model.l != a.l) throw InputError("--l must match the model's layer count");
    }
    SquareSizes sz;
    ScheduleTrace t;
    try {
        check_graph(g);
        sz = square_sizes(model);
        const std::int64_t bls = a.bls.value_or(g.rows);
        if (a.kind == "row" || a.kind == "row-major")
            t = row_major(g);
        else if (a.kind == "zigzag" || a.kind == "zig-zag")
            t = zigzag(g, bls);
        else if (a.kind == "diagonal")
            t = diagonal(g, bls);
        else
            throw InputError("unknown schedule kind: " + a.kind);
    } catch (const std::invalid_argument& e) {
        throw InputError(e.what());
    }

    Capacities caps;
    caps.epoch_units = a.capacity;
    caps.memory_bytes = a.memory;
    const IoAccount io = io_account(t, sz);
    Json j;
    j["kind"] = t.kind;
    j["graph"] = graph_json(g);
    j["bls"] = t.bls;
    j["steps"] = t.steps.size();
    j["weight_loads"] = io.total_weight_loads();
    const auto v = validate_trace(t, caps, sz);
    if (v)
        j["valid"] = Json{{"constraint", v->constraint}, {"step", v->step}, {"message", v->message}};
    else
        j["valid"] = true;
    if (a.account) {
        Json acc;
        acc["model"] = to_json(model);
        acc["weight_bytes_loaded"] = number_json(io.weight_bytes_loaded);
        acc["activation_bytes_moved"] = number_json(io.activation_bytes_moved);
        acc["kv_bytes_moved"] = number_json(io.kv_bytes_moved);
        acc["weight_load_count"] = io.weight_load_count;
        if (t.kind == "zig-zag" && g.rows % t.bls == 0) {
            const Workload w{g.prompt_len, g.tokens};
            const double blocks = static_cast<double>(g.rows / t.bls);
            acc["closed_form"] = Json{{"activation_bytes", number_json(blocks * zigzag_activation_bytes(model, w, t.bls))},
                                      {"kv_bytes", number_json(blocks * zigzag_kv_bytes(model, w, t.bls))}};
        }
        j["account"] = acc;
    }
    if (a.capacity) {
        j["lower_bound"] = io_lower_bound(g, *a.capacity);
        if (a.brute_force) {
            BruteForceResult bf;
            try {
                bf = brute_force_optimal(g, *a.capacity);
            } catch (const std::invalid_argument& e) {
                throw InputError(e.what());
            }
            if (!bf.feasible) throw Infeasible("no valid trace fits the epoch capacity");
            j["brute_force"] = Json{{"loads", bf.loads},
                                    {"loads_per_row", static_cast<double>(bf.loads) / static_cast<double>(g.rows)},
                                    {"states", bf.states}};
        }
    } else if (a.brute_force) {
        throw InputError("--brute-force needs --capacity");
    }
    if (!a.trace.empty()) write_file(a.trace, trace_csv(t));
    out << dump(j);
    return kExitOk;
}

// ---- quantize ----

struct QuantArgs {
    int bits = 4;
    std::int64_t group = 64;
    std::string input, output, shape;
    bool verify = false;
};

std::vector<std::size_t> parse_shape(const std::string& text, std::size_t elements) {
    if (text.empty()) return {elements};
    std::vector<std::size_t> shape;
    std::stringstream ss(text);
    std::string part;
    std::size_t total = 1;
    while (std::getline(ss, part, ',')) {
        try {
            const long long v = std::stoll(part);
            if (v < 1) throw std::invalid_argument("");
            shape.push_back(static_cast<std::size_t>(v));
            total *= static_cast<std::size_t>(v);
        } catch (const std::exception&) {
            throw InputError("bad --shape: " + text);
        }
    }
    if (total != elements) throw InputError("--shape does not match the element count of the input");
    return shape;
}

int cmd_quantize(const QuantArgs& a, std::ostream& out) {
    QuantConfig cfg;
    cfg.bits = a.bits;
    cfg.group = a.group;
    try {
        check_quant_config(cfg);
    } catch (const std::invalid_argument& e) {
        throw InputError(e.what());
    }
    const std::vector<std::uint8_t> raw = read_bytes(a.input);
    if (raw.empty() || raw.size() % 4 != 0) throw InputError("input must hold little-endian float32 values");
    Tensor t;
    t.data.resize(raw.size() / 4);
    std::memcpy(t.data.data(), raw.data(), raw.size());
    t.shape = parse_shape(a.shape, t.data.size());

    QuantizedTensor q;
    try {
        q = quantize(t, cfg, weight_group_axis(t.shape));
    } catch (const std::invalid_argument& e) {
        throw InputError(e.what());
    }
    const std::vector<std::uint8_t> blob = serialize(q);
    if (!a.output.empty()) write_file(a.output, std::string(blob.begin(), blob.end()));

    Json j;
    j["elements"] = t.data.size();
    j["shape"] = t.shape;
    j["bits"] = cfg.bits;
    j["group"] = cfg.group;
    j["groups"] = q.group_count();
    j["fp16_bytes"] = t.data.size() * 2;
    j["compressed_bytes"] = compressed_bytes(t.shape, cfg, q.axis);
    j["serialized_bytes"] = blob.size();
    j["effective_ratio"] = effective_ratio(cfg);
    if (a.verify) {
        const Tensor back = dequantize(deserialize(blob));
        double max_err = 0, worst = 0;
        bool ok = true;
        const double levels = static_cast<double>((1u << std::min(cfg.bits, 8)) - 1);
        for (std::size_t i = 0; i < t.data.size(); ++i) {
            const double x = t.data[i], y = back.data[i];
            const double e = std::abs(x - y);
            max_err = std::max(max_err, e);
            double bound;
            if (cfg.bits == 16) {
                bound = std::abs(x - static_cast<double>(half_to_float(float_to_half(t.data[i]))));
            } else {
                const std::size_t gi = group_of(t.shape, q.axis, cfg.group, i);
                bound = (static_cast<double>(q.maxs[gi]) - q.mins[gi]) / (2 * levels);
            }
            // Float rounding of the dequantized value.
            const double slack = 1e-6 * std::max(1.0, std::abs(x));
            if (e > bound + slack) ok = false;
            if (bound > 0) worst = std::max(worst, e / bound);
        }
        Json v;
        v["max_abs_error"] = max_err;
        v["max_error_over_bound"] = worst;
        v["within_bound"] = ok;
        j["verify"] = v;
        out << dump(j);
        return ok ? kExitOk : kExitInfeasible;
    }
    out << dump(j);
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Offloading planner: memory footprints, policy search, schedules, simulation and quantization.",
                 "offload"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for every subcommand");

    FootprintArgs fa;
    auto* fp = app.add_subcommand("footprint", "Weight, KV cache and activation bytes");
    fp->add_option("--model", fa.model, "Model preset name or JSON path")->required();
    fp->add_option("--batch,-b", fa.batch, "Batch size")->capture_default_str();
    fp->add_option("--s", fa.s, "Prompt length")->required();
    fp->add_option("--n", fa.n, "Output length")->required();
    fp->add_option("--policy", fa.policy, "Policy JSON; adds a per-device split");

    PlanArgs pa;
    auto* pl = app.add_subcommand("plan", "Search for the highest-throughput offloading policy");
    add_common(pl, pa.c, true);
    pl->add_option("--latency-ceiling", pa.latency_ceiling, "Upper bound on block latency in seconds");
    pl->add_option("--pin", pa.pins, "Fix a placement fraction, e.g. --pin wg=0 (repeatable)");
    pl->add_flag("--compress", pa.compress, "Search with group-wise quantized weights and cache");
    pl->add_option("--bits", pa.bits, "Quantization bits with --compress")->capture_default_str();
    pl->add_option("--group", pa.group, "Quantization group size with --compress")->capture_default_str();
    pl->add_option("--delegation", pa.delegation, "CPU attention delegation: auto, on or off")
        ->check(CLI::IsMember({"auto", "on", "off"}))
        ->capture_default_str();
    pl->add_option("--gbs", pa.gbs, "GPU batch size candidates (comma separated)")->delimiter(',');
    pl->add_option("--ngb", pa.ngb, "GPU batch count candidates (comma separated)")->delimiter(',');
    pl->add_option("--oracle-check", pa.oracle, "Compare against an exhaustive grid at this step (0.05, 0.1, 0.25)");
    pl->add_flag("--table", pa.table, "Include every candidate in the output");
    pl->add_option("--output,-o", pa.output, "Also write the JSON result to this file");

    SimArgs sa;
    auto* sm = app.add_subcommand("simulate", "Discrete-event simulation of a policy");
    add_common(sm, sa.c, true);
    sm->add_option("--policy", sa.policy, "Policy JSON path (for example the output of plan -o)");
    sm->add_option("--baseline", sa.baseline, "Baseline policy: deepspeed or accelerate-like");
    sm->add_option("--compare", sa.compare, "'planned': simulate the searched policy against the baseline");
    sm->add_option("--pipeline", sa.pipeline, "Number of pipeline stages")->capture_default_str();
    sm->add_option("--events", sa.events, "Write the event log as CSV to this file");
    sm->add_flag("--allow-oom", sa.allow_oom, "Report peaks past capacity instead of failing");

    ScheduleArgs ca;
    auto* sc = app.add_subcommand("schedule", "Generate, validate and account a compute schedule");
    sc->add_option("--kind", ca.kind, "row, zigzag or diagonal")->capture_default_str();
    sc->add_option("--rows", ca.rows, "Rows (batches)")->capture_default_str();
    sc->add_option("--n", ca.n, "Tokens")->capture_default_str();
    sc->add_option("--l", ca.l, "Layers")->capture_default_str();
    sc->add_option("--s", ca.s, "Prompt length")->capture_default_str();
    sc->add_option("--bls", ca.bls, "Block size (default: all rows)");
    sc->add_option("--model", ca.model, "Model for byte sizes (default: unit sizes)");
    sc->add_option("--capacity", ca.capacity, "Per-load working capacity in token-KV units");
    sc->add_option("--memory", ca.memory, "Offload-tier capacity in bytes for validation");
    sc->add_flag("--account", ca.account, "Report exact I/O bytes");
    sc->add_flag("--brute-force", ca.brute_force, "Exhaustive minimum weight-load count (needs --capacity)");
    sc->add_option("--trace", ca.trace, "Write the trace as CSV to this file");

    QuantArgs qa;
    auto* qz = app.add_subcommand("quantize", "Group-wise quantization of a float32 file");
    qz->add_option("--bits", qa.bits, "Bits per code (1-8, or 16 for FP16)")->capture_default_str();
    qz->add_option("--group", qa.group, "Group size along the last dimension (0: whole dimension)")
        ->capture_default_str();
    qz->add_option("--input,-i", qa.input, "Little-endian float32 input")->required();
    qz->add_option("--output,-o", qa.output, "Quantized output file");
    qz->add_option("--shape", qa.shape, "Comma-separated shape (default: 1-D)");
    qz->add_flag("--verify", qa.verify, "Dequantize and check the per-group error bound");

    std::vector<std::string> store{"offload"};
    store.insert(store.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& s : store) argv.push_back(s.data());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kExitInput;
    }

    try {
        if (fp->parsed()) return cmd_footprint(fa, out);
        if (pl->parsed()) return cmd_plan(pa, out, err);
        if (sm->parsed()) return cmd_simulate(sa, out);
        if (sc->parsed()) return cmd_schedule(ca, out);
        if (qz->parsed()) return cmd_quantize(qa, out);
    } catch (const Infeasible& e) {
        err << "error: " << e.what() << "\n";
        return kExitInfeasible;
    } catch (const InputError& e) {
        err << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << "\n";
        return kExitInput;
    }
    return kExitInput;
}

}  // namespace offload
