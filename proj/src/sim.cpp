// Copyright 2026 The offload-planner Authors
// SPDX-License-Identifier: Apache-2.0

#include "offload/sim.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "offload/costmodel.hpp"

namespace offload {

const char* to_string(EventKind k) {
    switch (k) {
        case EventKind::load_weight: return "load_weight";
        case EventKind::store_activation: return "store_activation";
        case EventKind::store_cache: return "store_cache";
        case EventKind::load_cache: return "load_cache";
        case EventKind::load_activation: return "load_activation";
        case EventKind::compute: return "compute";
        case EventKind::synchronize: return "synchronize";
    }
    return "?";
}

const char* to_string(Channel c) {
    switch (c) {
        case Channel::ctog: return "ctog";
        case Channel::gtoc: return "gtoc";
        case Channel::dtoc: return "dtoc";
        case Channel::ctod: return "ctod";
        case Channel::gpu: return "gpu";
        case Channel::cpu: return "cpu";
        case Channel::none: return "none";
    }
    return "?";
}

namespace {

constexpr std::size_t kChannels = 6;

struct Op {
    EventKind kind;
    Channel ch;
    double amount;
    double dur;
};

// One compute iteration and the transfers it owns. Loads run ahead of the compute
// (dtoc two iterations early, ctog one), stores run behind (gtoc one late, ctod two).
struct Item {
    std::int64_t i = 0, j = 0, k = 0;
    bool prefill = false;
    std::vector<Op> early2, early1, late1, late2;
    Op gpu{EventKind::compute, Channel::gpu, 0, 0};
    Op cpu{EventKind::compute, Channel::cpu, 0, 0};
    Op handoff_in{EventKind::load_activation, Channel::ctog, 0, 0};
    Op handoff_out{EventKind::store_activation, Channel::gtoc, 0, 0};
    int sender_stage = -1;
    std::int64_t sender_item = -1;
    PeakBytes mem;
    bool check_mem = false;
};

double duration(double amount, double rate) { return amount > 0 ? amount / rate : 0.0; }

void push(std::vector<Op>& v, EventKind kind, Channel ch, double amount, double rate) {
    if (amount > 0) v.push_back(Op{kind, ch, amount, duration(amount, rate)});
}

std::string oom_message(std::int64_t step, int stage, const char* dev, double used, double cap) {
    char buf[200];
    std::snprintf(buf, sizeof buf, "simulated OOM at step %lld (stage %d, %s: %.6g B > capacity %.6g B)",
                  static_cast<long long>(step), stage, dev, used, cap);
    return buf;
}

class StageRun {
public:
    StageRun(int stage, std::vector<Item> items, const HardwareProfile& hw, const SimOptions& opt)
        : stage_(stage), items_(std::move(items)), hw_(hw), opt_(opt),
          out_end_(items_.size(), std::numeric_limits<double>::quiet_NaN()),
          has_decode_(std::any_of(items_.begin(), items_.end(), [](const Item& it) { return !it.prefill; })) {}

    bool done() const { return t_ > last(); }
    double handoff_end(std::int64_t item) const { return out_end_[static_cast<std::size_t>(item)]; }

    // Runs the next iteration. Returns false when it waits on another stage's handoff.
    bool step(const std::vector<StageRun>& all) {
        const auto m = static_cast<std::int64_t>(items_.size());
        double start = clock_;
        const Item* cur = (t_ >= 0 && t_ < m) ? &items_[static_cast<std::size_t>(t_)] : nullptr;
        if (cur && cur->sender_stage >= 0) {
            const double ready = all[static_cast<std::size_t>(cur->sender_stage)].handoff_end(cur->sender_item);
            if (std::isnan(ready)) return false;
            start = std::max(start, ready);
        }
        std::array<double, kChannels> free;
        free.fill(start);
        const std::int64_t step = t_ + 2;

        struct Pending {
            const Op* op;
            const Item* owner;
        };
        std::vector<Pending> ops;
        auto add = [&](std::int64_t idx, std::vector<Op> Item::*list) {
            if (idx < 0 || idx >= m) return;
            const Item& it = items_[static_cast<std::size_t>(idx)];
            for (const Op& op : it.*list) ops.push_back({&op, &it});
        };
        add(t_ + 1, &Item::early1);
        add(t_ + 2, &Item::early2);
        add(t_ - 1, &Item::late1);
        add(t_ - 2, &Item::late2);
        std::stable_sort(ops.begin(), ops.end(), [](const Pending& a, const Pending& b) {
            return static_cast<int>(a.op->kind) < static_cast<int>(b.op->kind);
        });
        for (const Pending& pd : ops) run(*pd.op, *pd.owner, step, free[static_cast<std::size_t>(pd.op->ch)], free);

        if (cur) {
            double ready = start;
            if (cur->handoff_in.amount > 0) ready = run(cur->handoff_in, *cur, step, start, free);
            const double g_end = run(cur->gpu, *cur, step, ready, free, true);
            const double c_end = run(cur->cpu, *cur, step, g_end, free, true);
            double out = c_end;
            if (cur->handoff_out.amount > 0) out = run(cur->handoff_out, *cur, step, c_end, free);
            out_end_[static_cast<std::size_t>(t_)] = out;

            if (cur->check_mem) {
                peak_.gpu = std::max(peak_.gpu, cur->mem.gpu);
                peak_.cpu = std::max(peak_.cpu, cur->mem.cpu);
                peak_.disk = std::max(peak_.disk, cur->mem.disk);
                if (!opt_.allow_oom) {
                    if (cur->mem.gpu > hw_.gmem) throw std::runtime_error(oom_message(step, stage_, "gpu", cur->mem.gpu, hw_.gmem));
                    if (cur->mem.cpu > hw_.cmem) throw std::runtime_error(oom_message(step, stage_, "cpu", cur->mem.cpu, hw_.cmem));
                    if (cur->mem.disk > hw_.nmem) throw std::runtime_error(oom_message(step, stage_, "disk", cur->mem.disk, hw_.nmem));
                }
            }
        }
        const double end = *std::max_element(free.begin(), free.end());
        if (opt_.keep_events)
            events_.push_back(SimEvent{step, EventKind::synchronize, cur ? cur->i : -1, cur ? cur->j : -1,
                                       cur ? cur->k : -1, Channel::none, end, end, 0, stage_});
        const bool pre = cur ? cur->prefill : (t_ < 0 || !has_decode_);
        (pre ? prefill_ : decode_) += end - clock_;
        if (cur && cur->prefill) prefill_end_ = end;
        clock_ = end;
        ++t_;
        return true;
    }

    SimResult result() const {
        SimResult r;
        r.total_latency = clock_;
        r.prefill_latency = prefill_;
        r.decode_latency = decode_;
        r.peak = peak_;
        r.events = events_;
        return r;
    }
    double prefill_end() const { return prefill_end_; }

private:
    std::int64_t last() const { return static_cast<std::int64_t>(items_.size()) + 1; }

    double run(const Op& op, const Item& owner, std::int64_t step, double dep, std::array<double, kChannels>& free,
               bool always = false) {
        if (op.amount <= 0 && !always) return dep;
        double& slot = free[static_cast<std::size_t>(op.ch)];
        const double s = std::max(slot, dep);
        const double e = s + op.dur;
        slot = e;
        if (opt_.keep_events) events_.push_back(SimEvent{step, op.kind, owner.i, owner.j, owner.k, op.ch, s, e, op.amount, stage_});
        return e;
    }

    int stage_;
    std::vector<Item> items_;
    HardwareProfile hw_;
    SimOptions opt_;
    std::vector<double> out_end_;
    bool has_decode_;
    std::int64_t t_ = -2;
    double clock_ = 0, prefill_ = 0, decode_ = 0, prefill_end_ = 0;
    PeakBytes peak_;
    std::vector<SimEvent> events_;
};

// Per-iteration transfers and compute for one stage of `layers` layers starting at `first_layer`.
std::vector<Item> policy_items(const Policy& p, const ModelSpec& stage_model, const HardwareProfile& hw,
                               const Workload& w, std::int64_t first_layer) {
    const ByteScale sc = byte_scale(p, stage_model);
    const Bandwidths bw = effective_bandwidths(hw, stage_model);
    const bool delegate = delegation_active(p);
    const double h1 = static_cast<double>(stage_model.h1), h2 = static_cast<double>(stage_model.h2);
    const double s = static_cast<double>(w.s);
    const double gbs = static_cast<double>(p.gbs), ngb = static_cast<double>(p.num_gpu_batches);
    const double wfp16 = 8 * h1 * h1 + 4 * h1 * h2;
    const double weights = wfp16 * sc.weights / ngb;  // slice loaded per GPU batch
    const double off_w = p.wc + p.wd, off_c = p.cc + p.cd, off_h = p.hc + p.hd;

    // Memory timeline: home reserved for the whole sequence, working set at the exact length.
    const PeakMemoryReport full = peak_memory(p, stage_model, hw, w);
    std::vector<PeakBytes> mem_at(static_cast<std::size_t>(w.n));
    mem_at[0] = PeakBytes{full.gpu_prefill.peak, full.cpu_prefill.peak, full.nvme_peak};
    for (std::int64_t i = 1; i < w.n; ++i) {
        const PeakMemoryReport now = peak_memory(p, stage_model, hw, Workload{w.s, i + 1});
        mem_at[static_cast<std::size_t>(i)] = PeakBytes{full.gpu_decode.home + now.gpu_decode.working,
                                                        full.cpu_decode.home + now.cpu_decode.working, full.nvme_peak};
    }

    std::vector<Item> items;
    items.reserve(static_cast<std::size_t>(w.n * stage_model.l * p.num_gpu_batches));
    for (std::int64_t i = 0; i < w.n; ++i) {
        const bool prefill = i == 0;
        const double kv_len = s + static_cast<double>(i);
        const double act = (prefill ? 2 * s * h1 * gbs : 2 * h1 * gbs) * sc.activations;
        const double cache_read = prefill ? 0 : 4 * gbs * kv_len * h1 * sc.cache;
        const double cache_new = (prefill ? 4 * (s + 1) * h1 * gbs : 4 * gbs * h1) * sc.cache;
        for (std::int64_t j = 0; j < stage_model.l; ++j)
            for (std::int64_t k = 0; k < p.num_gpu_batches; ++k) {
                Item it;
                it.i = i;
                it.j = first_layer + j;
                it.k = k;
                it.prefill = prefill;
                push(it.early2, EventKind::load_weight, Channel::dtoc, p.wd * weights, bw.dtoc);
                push(it.early2, EventKind::load_cache, Channel::dtoc, p.cd * cache_read, bw.dtoc);
                push(it.early2, EventKind::load_activation, Channel::dtoc, p.hd * act, bw.dtoc);
                push(it.early1, EventKind::load_weight, Channel::ctog, off_w * weights, bw.ctog);
                if (!delegate) push(it.early1, EventKind::load_cache, Channel::ctog, off_c * cache_read, bw.ctog);
                push(it.early1, EventKind::load_activation, Channel::ctog, off_h * act, bw.ctog);
                push(it.late1, EventKind::store_activation, Channel::gtoc, off_h * act, bw.gtoc);
                if (prefill || !delegate) push(it.late1, EventKind::store_cache, Channel::gtoc, off_c * cache_new, bw.gtoc);
                push(it.late2, EventKind::store_activation, Channel::ctod, p.hd * act, bw.ctod);
                push(it.late2, EventKind::store_cache, Channel::ctod, p.cd * cache_new, bw.ctod);

                double mm, bmm, cpu = 0;
                if (prefill) {
                    mm = gbs * (8 * s * h1 * h1 + 4 * s * h1 * h2);
                    bmm = 4 * gbs * s * s * h1;
                } else {
                    const double attn = 4 * gbs * kv_len * h1;
                    mm = gbs * wfp16;
                    bmm = (delegate ? p.cg : 1.0) * attn;
                    cpu = delegate ? off_c * attn : 0.0;
                }
                it.gpu.amount = mm + bmm;
                it.gpu.dur = duration(mm, hw.mm_flops) + duration(bmm, hw.bmm_flops);
                it.cpu.amount = cpu;
                it.cpu.dur = duration(cpu, hw.cpu_flops);
                it.mem = mem_at[static_cast<std::size_t>(i)];
                it.check_mem = true;
                items.push_back(std::move(it));
            }
    }
    return items;
}

SimResult finish_result(SimResult r, double bls, std::int64_t n) {
    const double nn = static_cast<double>(n);
    r.generation_throughput = r.total_latency > 0 ? bls * nn / r.total_latency : INFINITY;
    if (n <= 1)
        r.decoding_throughput = 0;
    else
        r.decoding_throughput = r.decode_latency > 0 ? bls * (nn - 1) / r.decode_latency : INFINITY;
    return r;
}

}  // namespace

PipelineResult simulate_pipeline(std::int64_t devices, const Policy& p, const ModelSpec& m, const HardwareProfile& hw,
                                 const Workload& w, const SimOptions& opt) {
    check_model(m);
    check_workload(w);
    check_hardware(hw);
    if (auto bad = validate_policy(p); !bad.empty()) throw std::invalid_argument(bad.front());
    if (devices < 1) throw std::invalid_argument("pipeline needs at least one device");
    if (devices > m.l) throw std::invalid_argument("more pipeline stages than layers");
    if (m.l % devices != 0) throw std::invalid_argument("layer count must be divisible by the number of stages");

    ModelSpec stage_model = m;
    stage_model.l = m.l / devices;
    const std::int64_t per = stage_model.l, ngb = p.num_gpu_batches;
    const double handoff_scale = byte_scale(p, m).activations;
    const Bandwidths bw = effective_bandwidths(hw, stage_model);

    std::vector<StageRun> stages;
    stages.reserve(static_cast<std::size_t>(devices));
    for (std::int64_t q = 0; q < devices; ++q) {
        std::vector<Item> items = policy_items(p, stage_model, hw, w, q * per);
        if (devices > 1) {
            for (std::int64_t i = 0; i < w.n; ++i)
                for (std::int64_t k = 0; k < ngb; ++k) {
                    const double bytes = 2.0 * static_cast<double>(m.h1) * static_cast<double>(p.gbs) *
                                         (i == 0 ? static_cast<double>(w.s) : 1.0) * handoff_scale;
                    // Sender: last layer of this stage. Receiver: first layer of the next stage,
                    // or of stage 0 at the next token.
                    Item& out = items[static_cast<std::size_t>((i * per + per - 1) * ngb + k)];
                    const bool wraps = q == devices - 1;
                    if (!wraps || i + 1 < w.n) {
                        const double sent = wraps ? 2.0 * static_cast<double>(m.h1) * static_cast<double>(p.gbs) * handoff_scale : bytes;
                        out.handoff_out.amount = sent;
                        out.handoff_out.dur = duration(sent, bw.gtoc);
                    }
                    if (q > 0 || i > 0) {
                        Item& in = items[static_cast<std::size_t>((i * per) * ngb + k)];
                        const double got = q > 0 ? bytes : 2.0 * static_cast<double>(m.h1) * static_cast<double>(p.gbs) * handoff_scale;
                        in.handoff_in.amount = got;
                        in.handoff_in.dur = duration(got, bw.ctog);
                        in.sender_stage = static_cast<int>(q > 0 ? q - 1 : devices - 1);
                        in.sender_item = ((q > 0 ? i : i - 1) * per + per - 1) * ngb + k;
                    }
                }
        }
        stages.emplace_back(static_cast<int>(q), std::move(items), hw, opt);
    }

    bool all_done = false;
    while (!all_done) {
        bool progressed = false;
        all_done = true;
        for (auto& st : stages) {
            while (!st.done() && st.step(stages)) progressed = true;
            all_done = all_done && st.done();
        }
        if (!all_done && !progressed) throw std::logic_error("pipeline dependency cycle");
    }

    PipelineResult out;
    const double bls = static_cast<double>(p.bls());
    double total = 0, prefill_end = 0;
    for (const auto& st : stages) {
        SimResult r = st.result();
        total = std::max(total, r.total_latency);
        prefill_end = std::max(prefill_end, st.prefill_end());
        out.aggregate.peak.gpu = std::max(out.aggregate.peak.gpu, r.peak.gpu);
        out.aggregate.peak.cpu = std::max(out.aggregate.peak.cpu, r.peak.cpu);
        out.aggregate.peak.disk = std::max(out.aggregate.peak.disk, r.peak.disk);
        if (opt.keep_events) out.aggregate.events.insert(out.aggregate.events.end(), r.events.begin(), r.events.end());
        out.stages.push_back(finish_result(std::move(r), bls, w.n));
    }
    if (devices == 1) {
        out.aggregate = out.stages.front();
        return out;
    }
    out.aggregate.total_latency = total;
    out.aggregate.prefill_latency = w.n > 1 ? prefill_end : total;
    out.aggregate.decode_latency = w.n > 1 ? total - prefill_end : 0;
    out.aggregate = finish_result(std::move(out.aggregate), bls, w.n);
    std::stable_sort(out.aggregate.events.begin(), out.aggregate.events.end(),
                     [](const SimEvent& a, const SimEvent& b) { return a.start < b.start; });
    return out;
}

SimResult simulate(const Policy& p, const ModelSpec& m, const HardwareProfile& hw, const Workload& w,
                   const SimOptions& opt) {
    return simulate_pipeline(1, p, m, hw, w, opt).aggregate;
}

SimResult replay(const ScheduleTrace& t, const ModelSpec& m, const HardwareProfile& hw) {
    check_model(m);
    check_hardware(hw);
    if (auto v = validate_trace(t, Capacities{})) throw std::invalid_argument("invalid trace: " + v->message);
    const ComputeGraph& g = t.graph;
    if (g.layers != m.l) throw std::invalid_argument("trace layer count does not match the model");
    const SquareSizes sz = square_sizes(m);
    const Bandwidths bw = effective_bandwidths(hw, m);
    const double h1 = static_cast<double>(m.h1), h2 = static_cast<double>(m.h2), s = static_cast<double>(g.prompt_len);

    // Squares served by each epoch's weight load.
    std::vector<double> share(t.steps.size(), 0);
    for (std::size_t a = 0; a < t.steps.size();) {
        std::size_t b = a + 1;
        while (b < t.steps.size() && !t.steps[b].load_weights) ++b;
        for (std::size_t x = a; x < b; ++x) share[x] = sz.weights / static_cast<double>(b - a);
        a = b;
    }

    std::vector<Item> items;
    items.reserve(t.steps.size());
    for (std::size_t x = 0; x < t.steps.size(); ++x) {
        const TraceStep& st = t.steps[x];
        const double tok = static_cast<double>(st.sq.token);
        const bool prefill = st.sq.token == 0;
        Item it;
        it.i = st.sq.token;
        it.j = st.sq.layer;
        it.k = st.sq.row;
        it.prefill = prefill;
        const double act = sz.activation * (prefill ? s : 1.0);
        push(it.early1, EventKind::load_weight, Channel::ctog, share[x], bw.ctog);
        if (st.load_kv) push(it.early1, EventKind::load_cache, Channel::ctog, sz.kv_token * (s + tok - 1), bw.ctog);
        if (st.load_activation) push(it.early1, EventKind::load_activation, Channel::ctog, act, bw.ctog);
        if (st.store_activation) push(it.late1, EventKind::store_activation, Channel::gtoc, act, bw.gtoc);
        if (st.store_kv) push(it.late1, EventKind::store_cache, Channel::gtoc, sz.kv_token * (prefill ? s : 1.0), bw.gtoc);
        const double mm = prefill ? 8 * s * h1 * h1 + 4 * s * h1 * h2 : 8 * h1 * h1 + 4 * h1 * h2;
        const double bmm = prefill ? 4 * s * s * h1 : 4 * (s + tok) * h1;
        it.gpu.amount = mm + bmm;
        it.gpu.dur = duration(mm, hw.mm_flops) + duration(bmm, hw.bmm_flops);
        items.push_back(std::move(it));
    }
    std::vector<StageRun> stages;
    stages.emplace_back(0, std::move(items), hw, SimOptions{true, true});
    while (!stages[0].done()) stages[0].step(stages);
    SimResult r = stages[0].result();
    r.peak.cpu = trace_peak_memory(t, sz);
    return finish_result(std::move(r), static_cast<double>(g.rows), g.tokens);
}

double busy_time(const SimResult& r, EventKind kind, std::int64_t first_step, std::int64_t last_step) {
    double sum = 0;
    for (const SimEvent& e : r.events)
        if (e.kind == kind && e.step >= first_step && e.step < last_step) sum += e.end - e.start;
    return sum;
}

std::string events_csv(const SimResult& r) {
    std::ostringstream os;
    os << "step,kind,i,j,k,channel,start,end,bytes\n";
    char buf[64];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    for (const SimEvent& e : r.events)
        os << e.step << ',' << to_string(e.kind) << ',' << e.i << ',' << e.j << ',' << e.k << ',' << to_string(e.channel)
           << ',' << num(e.start) << ',' << num(e.end) << ',' << num(e.amount) << '\n';
    return os.str();
}

Json to_json(const SimResult& r) {
    Json j;
    j["total_latency"] = number_json(r.total_latency);
    j["prefill_latency"] = number_json(r.prefill_latency);
    j["decode_latency"] = number_json(r.decode_latency);
    j["generation_throughput"] = number_json(r.generation_throughput);
    j["decoding_throughput"] = number_json(r.decoding_throughput);
    j["peak_bytes"] = Json{{"gpu", number_json(r.peak.gpu)}, {"cpu", number_json(r.peak.cpu)}, {"disk", number_json(r.peak.disk)}};
    return j;
}

Json to_json(const PipelineResult& r) {
    Json j;
    j["aggregate"] = to_json(r.aggregate);
    Json st = Json::array();
    for (const auto& s : r.stages) st.push_back(to_json(s));
    j["stages"] = st;
    return j;
}

}  // namespace offload
