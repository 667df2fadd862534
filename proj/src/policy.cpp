// Copyright 2026 The offload-planner Authors
// SPDX-License-Identifier: Apache-2.0

#include "offload/policy.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "offload/costmodel.hpp"

namespace offload {

namespace {

constexpr std::size_t kTpre = 9;
constexpr std::size_t kTgen = 10;
constexpr std::size_t kVars = 11;

// Share of GPU memory the baselines may plan against; the rest is left for allocator slack.
constexpr double kBaselineGpuUsable = 0.8;

// Every quantity the LP constrains, in a fixed order. Each is affine in the placement fractions
// once gbs, num_gpu_batches and delegation are fixed.
struct AffineTerms {
    std::array<double, 5> prefill{};   // ctog, gtoc, dtoc, ctod, comp
    std::array<double, 5> decode{};
    std::array<double, 6> gpu_prefill{};  // home + staging + candidate k
    std::array<double, 6> gpu_decode{};
    double cpu_prefill = 0, cpu_decode = 0, nvme = 0;

    std::vector<double> flat() const {
        std::vector<double> v;
        v.insert(v.end(), prefill.begin(), prefill.end());
        v.insert(v.end(), decode.begin(), decode.end());
        v.insert(v.end(), gpu_prefill.begin(), gpu_prefill.end());
        v.insert(v.end(), gpu_decode.begin(), gpu_decode.end());
        v.push_back(cpu_prefill);
        v.push_back(cpu_decode);
        v.push_back(nvme);
        return v;
    }
};

AffineTerms affine_terms(const Policy& p, const ModelSpec& m, const HardwareProfile& hw, const Workload& w) {
    AffineTerms t;
    const CostBreakdown pre = prefill_layer_cost(p, m, hw, w);
    const CostBreakdown dec = decode_layer_cost(p, m, hw, w);
    t.prefill = {pre.ctog, pre.gtoc, pre.dtoc, pre.ctod, pre.comp};
    t.decode = {dec.ctog, dec.gtoc, dec.dtoc, dec.ctod, dec.comp};
    const PeakMemoryReport mem = peak_memory(p, m, hw, w);
    const auto gp = mem.gpu_prefill.candidates.values();
    const auto gd = mem.gpu_decode.candidates.values();
    for (std::size_t k = 0; k < 6; ++k) {
        t.gpu_prefill[k] = mem.gpu_prefill.home + mem.gpu_prefill.staging + gp[k];
        t.gpu_decode[k] = mem.gpu_decode.home + mem.gpu_decode.staging + gd[k];
    }
    t.cpu_prefill = mem.cpu_prefill.peak;
    t.cpu_decode = mem.cpu_decode.peak;
    t.nvme = mem.nvme_peak;
    return t;
}

Policy zero_placement(std::int64_t gbs, std::int64_t ngb, bool delegation, const std::optional<QuantConfig>& q) {
    Policy p;
    p.gbs = gbs;
    p.num_gpu_batches = ngb;
    for (std::size_t i = 0; i < 9; ++i) set_placement_value(p, i, 0.0);
    p.cpu_delegation = delegation;
    p.compression = q;
    return p;
}

// Appends coeffs . x <= rhs after scaling the row to unit max coefficient.
void add_row(lp::LinearProgram& prog, std::vector<double> coeffs, double rhs) {
    double scale = 0.0;
    for (double c : coeffs) scale = std::max(scale, std::fabs(c));
    if (scale == 0.0) {
        if (rhs >= 0.0) return;
        scale = 1.0;
    }
    for (double& c : coeffs) c /= scale;
    prog.add(std::move(coeffs), lp::Relation::le, rhs / scale);
}

double objective_of(const Policy& p, const ModelSpec& m, const HardwareProfile& hw, const Workload& w,
                    double* latency = nullptr) {
    const double t = total_latency(p, m, hw, w);
    if (latency) *latency = t;
    return t / static_cast<double>(p.bls());
}

// Whole-tensor prefix assignment of the per-layer weight list to GPU, then CPU, then disk.
void round_weights(Policy& p, const ModelSpec& m) {
    const double h1 = static_cast<double>(m.h1), h2 = static_cast<double>(m.h2);
    const std::array<double, 6> sizes = {h1 * h1, h1 * h1, h1 * h1, h1 * h1, h1 * h2, h1 * h2};
    const double per_layer = 4 * h1 * h1 + 2 * h1 * h2;
    const double total = per_layer * static_cast<double>(m.l);
    const double budget_g = p.wg * total * (1 + 1e-12);
    const double budget_c = p.wc * total * (1 + 1e-12);
    double on_g = 0, on_c = 0;
    int stage = 0;  // 0: filling GPU, 1: filling CPU, 2: disk
    for (std::int64_t layer = 0; layer < m.l && stage < 2; ++layer) {
        for (double sz : sizes) {
            if (stage == 0) {
                if (on_g + sz <= budget_g) {
                    on_g += sz;
                    continue;
                }
                stage = 1;
            }
            if (stage == 1) {
                if (on_c + sz <= budget_c) {
                    on_c += sz;
                    continue;
                }
                stage = 2;
                break;
            }
        }
    }
    p.wg = on_g / total;
    p.wc = on_c / total;
    p.wd = std::max(0.0, 1.0 - p.wg - p.wc);
}

void round_elements(double& fg, double& fc, double& fd, double count) {
    fg = std::floor(fg * count * (1 + 1e-12)) / count;
    fc = std::floor(fc * count * (1 + 1e-12)) / count;
    fd = std::max(0.0, 1.0 - fg - fc);
}

bool any_pinned(const std::map<std::string, double>& pins, std::size_t first) {
    for (std::size_t i = first; i < first + 3; ++i) {
        if (pins.count(kPlacementVars[i])) return true;
    }
    return false;
}

}  // namespace

double placement_value(const Policy& p, std::size_t var) {
    switch (var) {
        case 0: return p.wg;
        case 1: return p.wc;
        case 2: return p.wd;
        case 3: return p.cg;
        case 4: return p.cc;
        case 5: return p.cd;
        case 6: return p.hg;
        case 7: return p.hc;
        case 8: return p.hd;
    }
    throw std::out_of_range("placement variable index");
}

void set_placement_value(Policy& p, std::size_t var, double v) {
    switch (var) {
        case 0: p.wg = v; return;
        case 1: p.wc = v; return;
        case 2: p.wd = v; return;
        case 3: p.cg = v; return;
        case 4: p.cc = v; return;
        case 5: p.cd = v; return;
        case 6: p.hg = v; return;
        case 7: p.hc = v; return;
        case 8: p.hd = v; return;
    }
    throw std::out_of_range("placement variable index");
}

std::size_t placement_index(const std::string& name) {
    for (std::size_t i = 0; i < kPlacementVars.size(); ++i) {
        if (name == kPlacementVars[i]) return i;
    }
    throw std::invalid_argument("unknown placement variable '" + name + "'");
}

std::vector<std::int64_t> default_gbs_candidates() {
    std::vector<std::int64_t> v;
    for (std::int64_t g = 4; g <= 256; g += 4) v.push_back(g);
    return v;
}

std::vector<std::int64_t> default_ngb_candidates() {
    std::vector<std::int64_t> v;
    for (std::int64_t k = 1; k <= 20; ++k) v.push_back(k);
    return v;
}

lp::LinearProgram build_placement_lp(const ModelSpec& m, const HardwareProfile& hw, const Workload& w,
                                     std::int64_t gbs, std::int64_t ngb, bool delegation,
                                     const SearchConfig& cfg) {
    const Policy base_p = zero_placement(gbs, ngb, delegation, cfg.compression);
    const std::vector<double> base = affine_terms(base_p, m, hw, w).flat();
    std::vector<std::vector<double>> slope(9);
    for (std::size_t i = 0; i < 9; ++i) {
        Policy p = base_p;
        set_placement_value(p, i, 1.0);
        slope[i] = affine_terms(p, m, hw, w).flat();
        for (std::size_t k = 0; k < base.size(); ++k) slope[i][k] -= base[k];
    }
    auto row_of = [&](std::size_t k) {
        std::vector<double> r(kVars, 0.0);
        for (std::size_t i = 0; i < 9; ++i) r[i] = slope[i][k];
        return r;
    };

    lp::LinearProgram prog;
    const double l = static_cast<double>(m.l);
    const double bls = static_cast<double>(gbs * ngb);
    prog.objective.assign(kVars, 0.0);
    prog.objective[kTpre] = l / bls;
    prog.objective[kTgen] = static_cast<double>(w.n - 1) * l / bls;

    prog.bounds.assign(kVars, lp::Bounds{0.0, 1.0});
    prog.bounds[kTpre] = prog.bounds[kTgen] = lp::Bounds{0.0, INFINITY};
    for (const auto& [name, value] : cfg.pins) {
        const std::size_t i = placement_index(name);
        prog.bounds[i] = lp::Bounds{value, value};
    }

    // Channel rows: term(p) <= T.
    for (std::size_t k = 0; k < 10; ++k) {
        auto r = row_of(k);
        r[k < 5 ? kTpre : kTgen] = -1.0;
        add_row(prog, std::move(r), -base[k]);
    }
    // Capacity rows.
    for (std::size_t k = 10; k < base.size(); ++k) {
        double cap = k < 22 ? hw.gmem : (k < 24 ? hw.cmem : hw.nmem);
        if (std::isinf(cap)) continue;
        add_row(prog, row_of(k), cap - base[k]);
    }
    for (std::size_t g = 0; g < 3; ++g) {
        std::vector<double> r(kVars, 0.0);
        r[3 * g] = r[3 * g + 1] = r[3 * g + 2] = 1.0;
        prog.add(std::move(r), lp::Relation::eq, 1.0);
    }
    if (cfg.latency_ceiling) {
        std::vector<double> r(kVars, 0.0);
        r[kTpre] = l;
        r[kTgen] = static_cast<double>(w.n - 1) * l;
        add_row(prog, std::move(r), *cfg.latency_ceiling);
    }
    return prog;
}

Policy round_placement(const Policy& in, const ModelSpec& m, const Workload& w, const std::map<std::string, double>& pins) {
    Policy p = in;
    if (!any_pinned(pins, 0)) round_weights(p, m);
    const double bls = static_cast<double>(p.bls());
    const double cache_elems = 2.0 * static_cast<double>(w.s + w.n) * static_cast<double>(m.h1) * bls * static_cast<double>(m.l);
    const double act_elems = static_cast<double>(w.s) * static_cast<double>(m.h1) * bls;
    if (!any_pinned(pins, 3)) round_elements(p.cg, p.cc, p.cd, cache_elems);
    if (!any_pinned(pins, 6)) round_elements(p.hg, p.hc, p.hd, act_elems);
    return p;
}

PlacementResult solve_placement(const ModelSpec& m, const HardwareProfile& hw, const Workload& w,
                                std::int64_t gbs, std::int64_t ngb, bool delegation, const SearchConfig& cfg) {
    PlacementResult r;
    lp::LinearProgram prog = build_placement_lp(m, hw, w, gbs, ngb, delegation, cfg);
    lp::Solution sol = lp::solve(prog);
    r.status = sol.status;
    if (sol.status != lp::Status::optimal) return r;
    r.lp_objective = sol.objective_value;

    // Among optimal placements prefer data on faster devices: bound the objective and
    // minimize a device-preference weight.
    lp::LinearProgram tie = prog;
    tie.add(prog.objective, lp::Relation::le, sol.objective_value + std::max(1e-12, std::fabs(sol.objective_value) * 1e-9));
    tie.objective.assign(kVars, 0.0);
    for (std::size_t g = 0; g < 3; ++g) {
        tie.objective[3 * g + 1] = 1.0;
        tie.objective[3 * g + 2] = 2.0;
    }
    lp::Solution tie_sol = lp::solve(tie);
    const std::vector<double>& x = tie_sol.status == lp::Status::optimal ? tie_sol.point : sol.point;

    r.relaxed = zero_placement(gbs, ngb, delegation, cfg.compression);
    for (std::size_t i = 0; i < 9; ++i) set_placement_value(r.relaxed, i, std::clamp(x[i], 0.0, 1.0));
    r.rounded = cfg.round_placement ? round_placement(r.relaxed, m, w, cfg.pins) : r.relaxed;
    r.rounded_feasible = feasible(r.rounded, m, hw, w).empty();
    r.objective = objective_of(r.rounded, m, hw, w, &r.latency);
    if (cfg.latency_ceiling && r.latency > *cfg.latency_ceiling * (1 + 1e-9)) r.rounded_feasible = false;
    return r;
}

namespace {

SearchResult run_search(const ModelSpec& m, const HardwareProfile& hw, const Workload& w, const SearchConfig& cfg) {
    const auto gbs_list = cfg.gbs_candidates.empty() ? default_gbs_candidates() : cfg.gbs_candidates;
    const auto ngb_list = cfg.ngb_candidates.empty() ? default_ngb_candidates() : cfg.ngb_candidates;
    std::vector<bool> delegation_opts;
    if (cfg.compression) delegation_opts = {false};
    else if (cfg.cpu_delegation) delegation_opts = {*cfg.cpu_delegation};
    else delegation_opts = {false, true};

    SearchResult res;
    for (std::int64_t gbs : gbs_list) {
        for (std::int64_t ngb : ngb_list) {
            for (bool del : delegation_opts) {
                PlacementResult pr = solve_placement(m, hw, w, gbs, ngb, del, cfg);
                CandidateRow row;
                row.gbs = gbs;
                row.num_gpu_batches = ngb;
                row.cpu_delegation = del;
                row.status = pr.status;
                row.lp_objective = pr.lp_objective;
                row.feasible = pr.status == lp::Status::optimal && pr.rounded_feasible;
                if (pr.status == lp::Status::optimal) {
                    row.objective = pr.objective;
                    row.throughput = pr.objective > 0 ? static_cast<double>(w.n) / pr.objective : INFINITY;
                }
                if (row.feasible && (!res.found || row.objective < res.objective)) {
                    res.found = true;
                    res.best = pr.rounded;
                    res.objective = pr.objective;
                    res.lp_objective = pr.lp_objective;
                    res.latency = pr.latency;
                    res.throughput = row.throughput;
                }
                res.table.push_back(row);
            }
        }
    }
    return res;
}

}  // namespace

SearchResult search(const ModelSpec& m, const HardwareProfile& hw, const Workload& w, const SearchConfig& cfg) {
    check_model(m);
    check_workload(w);
    for (const auto& [name, value] : cfg.pins) {
        placement_index(name);
        if (!(value >= 0.0 && value <= 1.0)) throw std::invalid_argument("pin " + name + " must be in [0,1]");
    }
    if ((!cfg.gbs_candidates.empty() || !cfg.ngb_candidates.empty()) &&
        (std::any_of(cfg.gbs_candidates.begin(), cfg.gbs_candidates.end(), [](auto v) { return v < 1; }) ||
         std::any_of(cfg.ngb_candidates.begin(), cfg.ngb_candidates.end(), [](auto v) { return v < 1; })))
        throw std::invalid_argument("batch candidates must be >= 1");

    SearchResult res = run_search(m, hw, w, cfg);
    if (res.found) return res;

    res.message = "no feasible policy";
    // Name each capacity whose removal alone makes some candidate feasible.
    struct Cap { const char* name; double HardwareProfile::*field; };
    const Cap caps[] = {{"gmem", &HardwareProfile::gmem}, {"cmem", &HardwareProfile::cmem}, {"nmem", &HardwareProfile::nmem}};
    for (const auto& c : caps) {
        HardwareProfile relaxed = hw;
        relaxed.*(c.field) = INFINITY;
        if (run_search(m, relaxed, w, cfg).found) res.binding_capacities.push_back(c.name);
    }
    if (cfg.latency_ceiling) {
        SearchConfig no_ceiling = cfg;
        no_ceiling.latency_ceiling.reset();
        if (run_search(m, hw, w, no_ceiling).found) res.binding_capacities.push_back("latency_ceiling");
    }
    if (res.binding_capacities.empty()) res.binding_capacities.push_back("combined capacities");
    res.message += " (binding: ";
    for (std::size_t i = 0; i < res.binding_capacities.size(); ++i) {
        if (i) res.message += ", ";
        res.message += res.binding_capacities[i];
    }
    res.message += ")";
    return res;
}

GridResult grid_oracle(const ModelSpec& m, const HardwareProfile& hw, const Workload& w, std::int64_t gbs,
                       std::int64_t ngb, double resolution, bool delegation,
                       const std::optional<QuantConfig>& compression) {
    int steps = 0;
    if (std::fabs(resolution - 0.05) < 1e-12) steps = 20;
    else if (std::fabs(resolution - 0.1) < 1e-12) steps = 10;
    else if (std::fabs(resolution - 0.25) < 1e-12) steps = 4;
    else throw std::invalid_argument("grid resolution must be 0.05, 0.1 or 0.25");

    // GPU-heavy triples first so exact ties resolve toward faster devices.
    std::vector<std::array<double, 3>> triples;
    for (int i = steps; i >= 0; --i) {
        for (int j = steps - i; j >= 0; --j) {
            triples.push_back({static_cast<double>(i) / steps, static_cast<double>(j) / steps,
                               static_cast<double>(steps - i - j) / steps});
        }
    }

    GridResult res;
    Policy p = zero_placement(gbs, ngb, delegation, compression);
    for (const auto& wt : triples) {
        p.wg = wt[0], p.wc = wt[1], p.wd = wt[2];
        for (const auto& ct : triples) {
            p.cg = ct[0], p.cc = ct[1], p.cd = ct[2];
            for (const auto& ht : triples) {
                p.hg = ht[0], p.hc = ht[1], p.hd = ht[2];
                ++res.evaluated;
                if (!feasible(p, m, hw, w).empty()) continue;
                const double obj = objective_of(p, m, hw, w);
                if (!res.found || obj < res.objective) {
                    res.found = true;
                    res.objective = obj;
                    res.best = p;
                }
            }
        }
    }
    return res;
}

Policy baseline_policy(const std::string& name, const ModelSpec& m, const HardwareProfile& hw, const Workload& w) {
    if (name != "deepspeed" && name != "accelerate-like")
        throw std::invalid_argument("unknown baseline '" + name + "' (expected deepspeed or accelerate-like)");

    HardwareProfile planning = hw;
    planning.gmem = hw.gmem * kBaselineGpuUsable;
    auto fits = [&](const Policy& p) { return feasible(p, m, planning, w).empty(); };

    Policy p;
    p.num_gpu_batches = 1;
    p.gbs = 1;
    p.cg = 1, p.cc = 0, p.cd = 0;
    p.hg = 1, p.hc = 0, p.hd = 0;
    p.cpu_delegation = false;

    double wg = 0.0;
    if (name == "accelerate-like") {
        for (int pct = 100; pct >= 0; --pct) {
            Policy t = p;
            t.wg = pct / 100.0;
            t.wc = 1.0 - t.wg;
            t.wd = 0.0;
            const PeakMemoryReport mem = peak_memory(t, m, planning, w);
            if (mem.gpu_prefill.peak <= planning.gmem && mem.gpu_decode.peak <= planning.gmem) {
                wg = t.wg;
                break;
            }
        }
    }
    // Remaining weights live on the CPU when they fit there, else on disk.
    p.wg = wg;
    p.wc = 1.0 - wg;
    p.wd = 0.0;
    if (!fits(p)) {
        p.wc = 0.0;
        p.wd = 1.0 - wg;
    }
    for (std::int64_t gbs = 4096; gbs >= 1; gbs /= 2) {
        Policy t = p;
        t.gbs = gbs;
        if (fits(t)) {
            p.gbs = gbs;
            break;
        }
    }
    return p;
}

}  // namespace offload
