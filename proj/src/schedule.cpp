// Copyright 2026 The offload-planner Authors
// SPDX-License-Identifier: Apache-2.0

#include "offload/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace offload {

namespace {

std::int64_t column_of(const ComputeGraph& g, const Square& sq) { return sq.token * g.layers + sq.layer; }

TraceStep make_step(const Square& sq, bool load_weights) {
    TraceStep st;
    st.sq = sq;
    st.load_weights = load_weights;
    st.load_kv = sq.token > 0;
    return st;
}

Square square_at(const ComputeGraph& g, std::int64_t row, std::int64_t column) {
    return Square{row, column / g.layers, column % g.layers};
}

void check_bls(const ComputeGraph& g, std::int64_t bls) {
    if (bls < 1) throw std::invalid_argument("bls must be >= 1");
    if (bls > g.rows) throw std::invalid_argument("bls exceeds the number of rows");
}

// Resident bytes of one in-flight row whose last computed square is `done`.
double row_kv_bytes(const ScheduleTrace& t, const SquareSizes& sz, const std::vector<std::int64_t>& kv_len) {
    if (t.kv == KvAllocation::preallocated)
        return sz.kv_token * static_cast<double>(t.graph.layers) *
               static_cast<double>(t.graph.prompt_len + t.graph.tokens);
    double tokens = 0;
    for (std::int64_t len : kv_len) tokens += static_cast<double>(len);
    return sz.kv_token * tokens;
}

std::string fmt(const char* f, long long a, long long b = 0, long long c = 0) {
    char buf[160];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

}  // namespace

void check_graph(const ComputeGraph& g) {
    if (g.rows < 1) throw std::invalid_argument("graph rows must be >= 1");
    if (g.tokens < 1) throw std::invalid_argument("graph tokens must be >= 1");
    if (g.layers < 1) throw std::invalid_argument("graph layers must be >= 1");
    if (g.prompt_len < 1) throw std::invalid_argument("graph prompt_len must be >= 1");
}

SquareSizes square_sizes(const ModelSpec& m) {
    check_model(m);
    const double scale = m.bytes_per_element / 2.0;
    const double h1 = static_cast<double>(m.h1);
    return SquareSizes{static_cast<double>(layer_weight_fp16_bytes(m)) * scale, 2.0 * h1 * scale, 4.0 * h1 * scale};
}

ScheduleTrace row_major(const ComputeGraph& g) {
    check_graph(g);
    ScheduleTrace t;
    t.kind = "row-major";
    t.graph = g;
    t.bls = 1;
    t.steps.reserve(static_cast<std::size_t>(g.squares()));
    for (std::int64_t r = 0; r < g.rows; ++r)
        for (std::int64_t c = 0; c < g.columns(); ++c) t.steps.push_back(make_step(square_at(g, r, c), true));
    return t;
}

ScheduleTrace zigzag(const ComputeGraph& g, std::int64_t bls) {
    check_graph(g);
    check_bls(g, bls);
    ScheduleTrace t;
    t.kind = "zig-zag";
    t.graph = g;
    t.bls = bls;
    t.steps.reserve(static_cast<std::size_t>(g.squares()));
    for (std::int64_t first = 0; first < g.rows; first += bls) {
        const std::int64_t last = std::min(g.rows, first + bls);
        for (std::int64_t c = 0; c < g.columns(); ++c)
            for (std::int64_t r = first; r < last; ++r)
                t.steps.push_back(make_step(square_at(g, r, c), r == first));
    }
    return t;
}

ScheduleTrace diagonal(const ComputeGraph& g, std::int64_t bls) {
    check_graph(g);
    check_bls(g, bls);
    const std::int64_t group = std::max<std::int64_t>(1, bls / g.tokens);
    const std::int64_t groups = (g.rows + group - 1) / group;
    ScheduleTrace t;
    t.kind = "diagonal";
    t.graph = g;
    t.bls = group * g.tokens;
    t.kv = KvAllocation::incremental;
    t.steps.reserve(static_cast<std::size_t>(g.squares()));
    for (std::int64_t d = 0; d < groups + g.tokens - 1; ++d) {
        const std::int64_t k_hi = std::min(d, groups - 1);
        const std::int64_t k_lo = std::max<std::int64_t>(0, d - g.tokens + 1);
        for (std::int64_t j = 0; j < g.layers; ++j) {
            bool first = true;
            for (std::int64_t k = k_lo; k <= k_hi; ++k) {  // oldest group first
                const std::int64_t token = d - k;
                const std::int64_t r_end = std::min(g.rows, (k + 1) * group);
                for (std::int64_t r = k * group; r < r_end; ++r) {
                    TraceStep st = make_step(Square{r, token, j}, first);
                    st.diagonal = d;
                    t.steps.push_back(st);
                    first = false;
                }
            }
        }
    }
    return t;
}

std::optional<Violation> validate_trace(const ScheduleTrace& t, const Capacities& caps, const SquareSizes& sz) {
    const ComputeGraph& g = t.graph;
    check_graph(g);
    const std::int64_t cols = g.columns();
    std::vector<std::int64_t> done(static_cast<std::size_t>(g.rows), 0);  // squares computed per row
    std::vector<std::vector<char>> act_stored(static_cast<std::size_t>(g.rows), std::vector<char>(cols, 0));
    std::vector<std::vector<char>> kv_stored(static_cast<std::size_t>(g.rows), std::vector<char>(cols, 0));
    std::vector<std::vector<std::int64_t>> kv_len(static_cast<std::size_t>(g.rows),
                                                  std::vector<std::int64_t>(static_cast<std::size_t>(g.layers), 0));
    std::int64_t resident = -1;
    double epoch_cost = 0;
    std::vector<char> epoch_rows(static_cast<std::size_t>(g.rows), 0);
    std::vector<std::int64_t> epoch_members;

    for (std::size_t i = 0; i < t.steps.size(); ++i) {
        const TraceStep& st = t.steps[i];
        const Square& sq = st.sq;
        const auto step = static_cast<std::int64_t>(i);
        if (sq.row < 0 || sq.row >= g.rows || sq.token < 0 || sq.token >= g.tokens || sq.layer < 0 ||
            sq.layer >= g.layers)
            return Violation{"coverage", step, "square outside the graph"};
        const auto r = static_cast<std::size_t>(sq.row);
        const std::int64_t c = column_of(g, sq);
        if (c < done[r]) return Violation{"coverage", step, fmt("square (%lld, %lld) computed twice", sq.row, c)};
        if (c > done[r])
            return Violation{"left-dependency", step,
                             fmt("square (%lld, %lld) computed before column %lld", sq.row, c, done[r])};

        if (st.load_weights) {
            resident = sq.layer;
            epoch_cost = 0;
            for (std::int64_t m : epoch_members) epoch_rows[static_cast<std::size_t>(m)] = 0;
            epoch_members.clear();
        }
        if (resident != sq.layer)
            return Violation{"co-location", step, fmt("weights of layer %lld not resident", sq.layer)};
        if (!st.load_activation) return Violation{"co-location", step, "input activation not loaded"};
        if (sq.token > 0 && !st.load_kv) return Violation{"co-location", step, "KV cache not loaded"};
        if (c > 0 && !act_stored[r][static_cast<std::size_t>(c - 1)])
            return Violation{"retention", step, fmt("activation of (%lld, %lld) was never stored", sq.row, c - 1)};
        if (sq.token > 0 && !kv_stored[r][static_cast<std::size_t>(c - g.layers)])
            return Violation{"retention", step,
                             fmt("KV of (%lld, %lld) was never stored", sq.row, c - g.layers)};

        if (caps.epoch_units) {
            if (epoch_rows[r]) return Violation{"capacity", step, fmt("row %lld appears twice in one epoch", sq.row)};
            epoch_rows[r] = 1;
            epoch_members.push_back(sq.row);
            epoch_cost += square_cost(g, sq);
            if (epoch_cost > *caps.epoch_units + 1e-9)
                return Violation{"capacity", step, "load epoch exceeds the working capacity"};
        }

        act_stored[r][static_cast<std::size_t>(c)] = st.store_activation;
        kv_stored[r][static_cast<std::size_t>(c)] = st.store_kv;
        kv_len[r][static_cast<std::size_t>(sq.layer)] = g.prompt_len + sq.token;
        ++done[r];

        if (caps.memory_bytes) {
            double mem = sz.weights;
            for (std::size_t q = 0; q < done.size(); ++q) {
                // A row is in flight from its first square through its last one (inclusive).
                const bool active = done[q] > 0 && (done[q] < cols || q == r);
                if (active) mem += sz.activation + row_kv_bytes(t, sz, kv_len[q]);
            }
            if (mem > *caps.memory_bytes * (1 + 1e-12))
                return Violation{"capacity", step, "resident bytes exceed the offload-tier capacity"};
        }
    }
    for (std::int64_t r = 0; r < g.rows; ++r)
        if (done[static_cast<std::size_t>(r)] != cols)
            return Violation{"coverage", -1, fmt("row %lld left incomplete", r)};
    return std::nullopt;
}

double trace_peak_memory(const ScheduleTrace& t, const SquareSizes& sz) {
    const ComputeGraph& g = t.graph;
    const std::int64_t cols = g.columns();
    std::vector<std::int64_t> done(static_cast<std::size_t>(g.rows), 0);
    std::vector<std::vector<std::int64_t>> kv_len(static_cast<std::size_t>(g.rows),
                                                  std::vector<std::int64_t>(static_cast<std::size_t>(g.layers), 0));
    std::vector<std::size_t> active;
    double peak = 0;
    for (const TraceStep& st : t.steps) {
        const auto r = static_cast<std::size_t>(st.sq.row);
        if (done[r] == 0) active.push_back(r);
        kv_len[r][static_cast<std::size_t>(st.sq.layer)] = g.prompt_len + st.sq.token;
        ++done[r];
        double mem = sz.weights;
        for (std::size_t q : active) mem += sz.activation + row_kv_bytes(t, sz, kv_len[q]);
        peak = std::max(peak, mem);
        if (done[r] == cols) active.erase(std::find(active.begin(), active.end(), r));
    }
    return peak;
}

std::int64_t IoAccount::total_weight_loads() const {
    return std::accumulate(weight_load_count.begin(), weight_load_count.end(), std::int64_t{0});
}

IoAccount io_account(const ScheduleTrace& t, const SquareSizes& sz) {
    const ComputeGraph& g = t.graph;
    IoAccount io;
    io.weight_load_count.assign(static_cast<std::size_t>(g.layers), 0);
    const auto s = static_cast<double>(g.prompt_len);
    for (const TraceStep& st : t.steps) {
        const auto tok = static_cast<double>(st.sq.token);
        if (st.load_weights) {
            ++io.weight_load_count[static_cast<std::size_t>(st.sq.layer)];
            io.weight_bytes_loaded += sz.weights;
        }
        const double act = sz.activation * (st.sq.token == 0 ? s : 1.0);
        if (st.load_activation) io.activation_bytes_moved += act;
        if (st.store_activation) io.activation_bytes_moved += act;
        if (st.load_kv) io.kv_bytes_moved += sz.kv_token * (s + tok - 1);
        if (st.store_kv) io.kv_bytes_moved += sz.kv_token * (st.sq.token == 0 ? s : 1.0);
    }
    return io;
}

double zigzag_activation_bytes(const ModelSpec& m, const Workload& w, std::int64_t bls) {
    const SquareSizes sz = square_sizes(m);
    const double b = static_cast<double>(bls), l = static_cast<double>(m.l);
    return 2.0 * (sz.activation * static_cast<double>(w.s) * b * l +
                  sz.activation * b * l * static_cast<double>(w.n - 1));
}

double zigzag_kv_bytes(const ModelSpec& m, const Workload& w, std::int64_t bls) {
    const SquareSizes sz = square_sizes(m);
    const double s = static_cast<double>(w.s), n = static_cast<double>(w.n);
    return sz.kv_token * static_cast<double>(bls) * static_cast<double>(m.l) * (s * n + n * (n - 1) / 2.0);
}

double zigzag_peak_bytes(const ModelSpec& m, const Workload& w, double layer_weight_bytes, std::int64_t bls) {
    const SquareSizes sz = square_sizes(m);
    const double b = static_cast<double>(bls);
    return layer_weight_bytes + sz.activation * b +
           sz.kv_token * b * static_cast<double>(m.l) * static_cast<double>(w.s + w.n);
}

namespace {
double free_capacity(const ModelSpec& m, const Workload& w, double layer_weight_bytes, double capacity) {
    check_model(m);
    check_workload(w);
    if (!(capacity > layer_weight_bytes)) throw std::invalid_argument("weights alone exceed capacity");
    return capacity - layer_weight_bytes;
}
}  // namespace

std::int64_t max_bls_zigzag(const ModelSpec& m, const Workload& w, double layer_weight_bytes, double capacity) {
    const double room = free_capacity(m, w, layer_weight_bytes, capacity);
    const SquareSizes sz = square_sizes(m);
    const double per_row = sz.activation + sz.kv_token * static_cast<double>(m.l) * static_cast<double>(w.s + w.n);
    return static_cast<std::int64_t>(std::floor(room / per_row));
}

std::int64_t max_bls_diagonal(const ModelSpec& m, const Workload& w, double layer_weight_bytes, double capacity) {
    const double room = free_capacity(m, w, layer_weight_bytes, capacity);
    const SquareSizes sz = square_sizes(m);
    const double n = static_cast<double>(w.n), s = static_cast<double>(w.s), l = static_cast<double>(m.l);
    // Average in-flight row: activations plus half-grown KV across the n staggered groups.
    const double denom = sz.activation * n + sz.activation * l * (2 * s + n) * (n - 1);
    return static_cast<std::int64_t>(std::floor(n * room / denom));
}

double bls_ratio(const ModelSpec& m, const Workload& w, double layer_weight_bytes, double capacity) {
    const std::int64_t zz = max_bls_zigzag(m, w, layer_weight_bytes, capacity);
    if (zz < 1) throw std::invalid_argument("capacity admits no zig-zag block");
    return static_cast<double>(max_bls_diagonal(m, w, layer_weight_bytes, capacity)) / static_cast<double>(zz);
}

double square_cost(const ComputeGraph& g, const Square& sq) { return static_cast<double>(g.prompt_len + sq.token); }

double total_square_cost(const ComputeGraph& g) {
    const double s = static_cast<double>(g.prompt_len), n = static_cast<double>(g.tokens);
    return static_cast<double>(g.rows) * static_cast<double>(g.layers) * (s * n + n * (n - 1) / 2.0);
}

std::int64_t io_lower_bound(const ComputeGraph& g, double epoch_capacity) {
    check_graph(g);
    if (!(epoch_capacity > 0)) throw std::invalid_argument("epoch capacity must be positive");
    return static_cast<std::int64_t>(std::ceil(total_square_cost(g) / epoch_capacity - 1e-12));
}

std::int64_t max_bls_epoch(const ComputeGraph& g, double epoch_capacity) {
    check_graph(g);
    const double widest = static_cast<double>(g.prompt_len + g.tokens - 1);
    return std::min<std::int64_t>(g.rows, static_cast<std::int64_t>(std::floor(epoch_capacity / widest + 1e-12)));
}

BruteForceResult brute_force_optimal(const ComputeGraph& g, double epoch_capacity) {
    check_graph(g);
    if (g.squares() > 200) throw std::invalid_argument("brute force is limited to 200 squares");
    BruteForceResult res;
    res.trace.kind = "optimal";
    res.trace.graph = g;
    if (max_bls_epoch(g, epoch_capacity) < 1) return res;

    using State = std::vector<std::int64_t>;  // per-row progress, sorted descending
    struct Node {
        State parent;
        std::int64_t color = 0;
        std::vector<std::int64_t> advanced;  // progress values advanced, one entry per row
        std::int64_t depth = 0;
    };
    const std::int64_t cols = g.columns();
    const State start(static_cast<std::size_t>(g.rows), 0);
    const State goal(static_cast<std::size_t>(g.rows), cols);
    std::map<State, Node> seen;
    seen.emplace(start, Node{{}, -1, {}, 0});
    std::deque<State> queue{start};
    constexpr std::uint64_t kStateCap = 4'000'000;

    while (!queue.empty() && !seen.count(goal)) {
        const State cur = queue.front();
        queue.pop_front();
        const std::int64_t depth = seen.at(cur).depth;
        std::vector<std::pair<State, Node>> next;
        for (std::int64_t color = 0; color < g.layers; ++color) {
            // Distinct progress values whose next square has this color, with multiplicities.
            std::vector<std::pair<std::int64_t, std::int64_t>> groups;
            for (std::int64_t p : cur)
                if (p < cols && p % g.layers == color) {
                    if (!groups.empty() && groups.back().first == p)
                        ++groups.back().second;
                    else
                        groups.emplace_back(p, 1);
                }
            if (groups.empty()) continue;
            std::vector<std::int64_t> pick(groups.size(), 0);
            while (true) {
                std::size_t i = 0;
                while (i < pick.size() && pick[i] == groups[i].second) pick[i++] = 0;
                if (i == pick.size()) break;
                ++pick[i];
                double cost = 0;
                std::vector<std::int64_t> adv;
                for (std::size_t q = 0; q < groups.size(); ++q)
                    for (std::int64_t c = 0; c < pick[q]; ++c) {
                        cost += static_cast<double>(g.prompt_len + groups[q].first / g.layers);
                        adv.push_back(groups[q].first);
                    }
                if (cost > epoch_capacity + 1e-9) continue;
                State ns = cur;
                for (std::size_t q = 0; q < groups.size(); ++q) {
                    std::int64_t left = pick[q];
                    for (auto& v : ns)
                        if (left > 0 && v == groups[q].first) {
                            ++v;
                            --left;
                        }
                }
                std::sort(ns.begin(), ns.end(), std::greater<>());
                next.emplace_back(std::move(ns), Node{cur, color, std::move(adv), depth + 1});
            }
        }
        std::sort(next.begin(), next.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
        for (auto& [ns, node] : next) {
            if (seen.count(ns)) continue;
            seen.emplace(ns, node);
            queue.push_back(ns);
            if (seen.size() > kStateCap) throw std::runtime_error("brute force state space too large");
        }
    }
    res.states = seen.size();
    auto it = seen.find(goal);
    if (it == seen.end()) return res;
    res.feasible = true;
    res.loads = it->second.depth;

    std::vector<const Node*> path;
    for (State s = goal; s != start;) {
        const Node& nd = seen.at(s);
        path.push_back(&nd);
        s = nd.parent;
    }
    std::reverse(path.begin(), path.end());
    std::vector<std::int64_t> progress(static_cast<std::size_t>(g.rows), 0);
    for (const Node* nd : path) {
        std::vector<std::int64_t> rows;
        std::vector<char> taken(progress.size(), 0);
        for (std::int64_t v : nd->advanced)
            for (std::size_t r = 0; r < progress.size(); ++r)
                if (!taken[r] && progress[r] == v) {
                    taken[r] = 1;
                    rows.push_back(static_cast<std::int64_t>(r));
                    break;
                }
        std::sort(rows.begin(), rows.end());
        bool first = true;
        for (std::int64_t r : rows) {
            const auto ru = static_cast<std::size_t>(r);
            res.trace.steps.push_back(make_step(square_at(g, r, progress[ru]), first));
            first = false;
            ++progress[ru];
        }
    }
    return res;
}

std::vector<std::int64_t> working_state(const ScheduleTrace& t, std::size_t step) {
    const std::int64_t cols = t.graph.columns();
    std::vector<std::int64_t> done(static_cast<std::size_t>(t.graph.rows), 0);
    for (std::size_t i = 0; i <= step && i < t.steps.size(); ++i) ++done[static_cast<std::size_t>(t.steps[i].sq.row)];
    std::vector<std::int64_t> state;
    for (std::int64_t d : done)
        if (d > 0 && d < cols) state.push_back(d);
    std::sort(state.begin(), state.end(), std::greater<>());
    return state;
}

std::vector<std::pair<std::size_t, std::size_t>> steady_diagonals(const ScheduleTrace& t) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    if (t.kind != "diagonal" || t.steps.empty()) return out;
    const std::int64_t group = t.bls / t.graph.tokens;
    const std::int64_t groups = (t.graph.rows + group - 1) / group;
    const bool even = t.graph.rows % group == 0;
    std::size_t i = 0;
    while (i < t.steps.size()) {
        const std::int64_t d = t.steps[i].diagonal;
        std::size_t j = i;
        while (j < t.steps.size() && t.steps[j].diagonal == d) ++j;
        // Every group active, and the last group full if it is in this diagonal.
        if (d >= t.graph.tokens - 1 && d <= groups - 1 && (even || d < groups - 1)) out.emplace_back(i, j);
        i = j;
    }
    return out;
}

std::int64_t loads_between(const ScheduleTrace& t, std::size_t first, std::size_t last) {
    std::int64_t n = 0;
    for (std::size_t i = first; i < last && i < t.steps.size(); ++i) n += t.steps[i].load_weights ? 1 : 0;
    return n;
}

double cohort_mean_completion(const ScheduleTrace& t, std::size_t first, std::size_t last) {
    const std::int64_t cols = t.graph.columns();
    std::vector<std::int64_t> done(static_cast<std::size_t>(t.graph.rows), 0);
    std::vector<std::int64_t> finish(static_cast<std::size_t>(t.graph.rows), -1);
    std::vector<char> cohort(static_cast<std::size_t>(t.graph.rows), 0);
    for (std::size_t i = 0; i < t.steps.size(); ++i) {
        const auto r = static_cast<std::size_t>(t.steps[i].sq.row);
        if (i >= first && i < last) cohort[r] = 1;
        if (++done[r] == cols) finish[r] = static_cast<std::int64_t>(i);
    }
    double sum = 0;
    std::int64_t count = 0;
    for (std::size_t r = 0; r < cohort.size(); ++r)
        if (cohort[r]) {
            if (finish[r] < 0) throw std::invalid_argument("trace leaves a cohort row incomplete");
            sum += static_cast<double>(finish[r] - static_cast<std::int64_t>(first) + 1);
            ++count;
        }
    if (count == 0) throw std::invalid_argument("empty cohort window");
    return sum / static_cast<double>(count);
}

std::string trace_csv(const ScheduleTrace& t) {
    std::ostringstream os;
    os << "step,row,token,layer,loads,stores,device\n";
    for (std::size_t i = 0; i < t.steps.size(); ++i) {
        const TraceStep& st = t.steps[i];
        std::string loads, stores;
        auto add = [](std::string& s, const char* what) {
            if (!s.empty()) s += ';';
            s += what;
        };
        if (st.load_weights) add(loads, "weights");
        if (st.load_activation) add(loads, "activation");
        if (st.load_kv) add(loads, "kv");
        if (st.store_activation) add(stores, "activation");
        if (st.store_kv) add(stores, "kv");
        os << i << ',' << st.sq.row << ',' << st.sq.token << ',' << st.sq.layer << ',' << loads << ',' << stores
           << ",gpu\n";
    }
    return os.str();
}

}  // namespace offload
