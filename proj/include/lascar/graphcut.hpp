#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "lascar/mesh.hpp"

namespace lascar {

/// Binary labeling problem on the surface graph. t_costs[i] = (cost if scar,
/// cost if normal); n-link weights are Potts penalties paid when neighboring
/// labels differ, scaled by lambda. All weights non-negative, so the energy
/// is submodular and the minimum cut is the exact optimum.
struct SurfaceGraph {
    struct NEdge {
        int i = 0, j = 0;
        double w = 0.0;
    };
    int n = 0;
    std::vector<std::array<double, 2>> t_costs;  // [cost_if_scar, cost_if_normal]
    std::vector<NEdge> edges;
    double lambda = 0.0;

    void validate() const {
        if (static_cast<int>(t_costs.size()) != n)
            throw std::invalid_argument("t_costs size must equal node count");
        if (lambda < 0) throw std::invalid_argument("lambda must be >= 0");
        for (const auto& t : t_costs)
            if (!(t[0] >= 0) || !(t[1] >= 0) || !std::isfinite(t[0]) || !std::isfinite(t[1]))
                throw std::invalid_argument("t-link costs must be finite and >= 0");
        for (const auto& e : edges) {
            if (e.i == e.j) throw std::invalid_argument("self-loop in surface graph");
            if (e.i < 0 || e.j < 0 || e.i >= n || e.j >= n)
                throw std::invalid_argument("edge endpoint out of range");
            if (!(e.w >= 0) || !std::isfinite(e.w))
                throw std::invalid_argument("n-link weights must be finite and >= 0");
        }
    }
};

/// t_costs(i) = (1 - p_scar, 1 - p_normal); n_weight = predicted similarity.
inline SurfaceGraph build_graph(const SurfaceMesh& mesh,
                                const std::vector<std::array<double, 2>>& node_probs,
                                const std::vector<double>& edge_sims, double lambda) {
    if (node_probs.size() != mesh.vertices.size())
        throw std::invalid_argument("node probability count must match vertices");
    if (edge_sims.size() != mesh.edges.size())
        throw std::invalid_argument("edge similarity count must match edges");
    SurfaceGraph g;
    g.n = static_cast<int>(mesh.vertices.size());
    g.lambda = lambda;
    g.t_costs.resize(g.n);
    for (int i = 0; i < g.n; ++i) {
        const auto& p = node_probs[i];
        if (std::isnan(p[0]) || std::isnan(p[1]))
            throw std::invalid_argument("NaN node probability");
        g.t_costs[i] = {1.0 - p[0], 1.0 - p[1]};
    }
    g.edges.reserve(mesh.edges.size());
    for (size_t e = 0; e < mesh.edges.size(); ++e) {
        if (std::isnan(edge_sims[e])) throw std::invalid_argument("NaN edge similarity");
        g.edges.push_back({mesh.edges[e].a, mesh.edges[e].b, edge_sims[e]});
    }
    g.validate();
    return g;
}

/// E(l) = sum_i t_cost_i(l_i) + lambda * sum_(i,j) w_ij * [l_i != l_j]
inline double graph_energy(const SurfaceGraph& g, const std::vector<uint8_t>& labels) {
    if (static_cast<int>(labels.size()) != g.n)
        throw std::invalid_argument("label count must equal node count");
    double e = 0.0;
    for (int i = 0; i < g.n; ++i) e += labels[i] ? g.t_costs[i][0] : g.t_costs[i][1];
    for (const auto& ed : g.edges)
        if (labels[ed.i] != labels[ed.j]) e += g.lambda * ed.w;
    return e;
}

namespace detail {

// Dinic max-flow on double capacities; residuals below kFlowEps count as
// saturated, which bounds the duality gap well below any energy difference
// that occurs with generic weights.
class MaxFlow {
public:
    static constexpr double kFlowEps = 1e-12;

    explicit MaxFlow(int n_nodes) : head_(n_nodes, -1) {}

    void add_edge(int u, int v, double cap_uv, double cap_vu) {
        edges_.push_back({v, head_[u], cap_uv});
        head_[u] = static_cast<int>(edges_.size()) - 1;
        edges_.push_back({u, head_[v], cap_vu});
        head_[v] = static_cast<int>(edges_.size()) - 1;
    }

    double solve(int s, int t) {
        double flow = 0.0;
        const int n = static_cast<int>(head_.size());
        std::vector<int> level(n), iter(n);
        for (;;) {
            // BFS levels over the residual graph.
            std::fill(level.begin(), level.end(), -1);
            std::deque<int> q{s};
            level[s] = 0;
            while (!q.empty()) {
                const int u = q.front();
                q.pop_front();
                for (int e = head_[u]; e >= 0; e = edges_[e].next)
                    if (edges_[e].cap > kFlowEps && level[edges_[e].to] < 0) {
                        level[edges_[e].to] = level[u] + 1;
                        q.push_back(edges_[e].to);
                    }
            }
            if (level[t] < 0) break;
            for (int u = 0; u < n; ++u) iter[u] = head_[u];
            for (;;) {
                const double pushed = dfs(s, t, std::numeric_limits<double>::infinity(),
                                          level, iter);
                if (pushed <= kFlowEps) break;
                flow += pushed;
            }
        }
        return flow;
    }

    // After solve: true iff v can still reach t through the residual graph.
    std::vector<uint8_t> reaches_sink(int t) const {
        const int n = static_cast<int>(head_.size());
        std::vector<uint8_t> r(n, 0);
        r[t] = 1;
        std::deque<int> q{t};
        while (!q.empty()) {
            const int v = q.front();
            q.pop_front();
            // u reaches v if the residual of u->v is positive; that residual
            // lives on the edge paired with v's reverse entry.
            for (int e = head_[v]; e >= 0; e = edges_[e].next) {
                const int u = edges_[e].to;
                if (!r[u] && edges_[e ^ 1].cap > kFlowEps) {
                    r[u] = 1;
                    q.push_back(u);
                }
            }
        }
        return r;
    }

private:
    struct Edge {
        int to, next;
        double cap;  // residual capacity
    };

    double dfs(int u, int t, double limit, std::vector<int>& level,
               std::vector<int>& iter) {
        if (u == t) return limit;
        for (int& e = iter[u]; e >= 0; e = edges_[e].next) {
            Edge& ed = edges_[e];
            if (ed.cap > kFlowEps && level[ed.to] == level[u] + 1) {
                const double d = dfs(ed.to, t, std::min(limit, ed.cap), level, iter);
                if (d > kFlowEps) {
                    ed.cap -= d;
                    edges_[e ^ 1].cap += d;
                    return d;
                }
            }
        }
        level[u] = -1;
        return 0.0;
    }

    std::vector<Edge> edges_;
    std::vector<int> head_;
};

}  // namespace detail

struct MinCutResult {
    VertexLabels labels;
    double flow = 0.0;
};

/// Exact minimizer of the graph energy. Source is the scar terminal, sink the
/// normal terminal; terminal capacities carry the opposite-label costs and
/// n-links carry lambda * w in both directions. Nodes that cannot reach the
/// sink in the residual graph take the scar label, which resolves zero-cost
/// ties toward scar.
inline MinCutResult min_cut_with_flow(const SurfaceGraph& g) {
    g.validate();
    const int s = g.n, t = g.n + 1;
    detail::MaxFlow mf(g.n + 2);
    for (int i = 0; i < g.n; ++i) {
        // cut s->i when i is labeled normal: pay cost_if_normal
        mf.add_edge(s, i, g.t_costs[i][1], 0.0);
        // cut i->t when i is labeled scar: pay cost_if_scar
        mf.add_edge(i, t, g.t_costs[i][0], 0.0);
    }
    for (const auto& e : g.edges)
        if (g.lambda * e.w > 0.0)
            mf.add_edge(e.i, e.j, g.lambda * e.w, g.lambda * e.w);

    MinCutResult out;
    out.flow = mf.solve(s, t);
    const auto sink_side = mf.reaches_sink(t);
    out.labels.source = LabelSource::Predicted;
    out.labels.labels.resize(g.n);
    for (int i = 0; i < g.n; ++i) out.labels.labels[i] = sink_side[i] ? 0 : 1;
    return out;
}

inline VertexLabels min_cut(const SurfaceGraph& g) { return min_cut_with_flow(g).labels; }

/// Exhaustive 2^n oracle, n <= 20. Ties resolved to the lexicographically
/// smallest label vector (node 0 most significant).
inline VertexLabels brute_force_min_energy(const SurfaceGraph& g) {
    g.validate();
    if (g.n > 20) throw std::invalid_argument("brute force limited to 20 nodes");
    std::vector<uint8_t> best, cur(g.n);
    double best_e = std::numeric_limits<double>::infinity();
    for (uint64_t mask = 0; mask < (uint64_t(1) << g.n); ++mask) {
        for (int i = 0; i < g.n; ++i) cur[i] = (mask >> i) & 1u;
        const double e = graph_energy(g, cur);
        if (e < best_e ||
            (e == best_e && std::lexicographical_compare(cur.begin(), cur.end(),
                                                         best.begin(), best.end()))) {
            best_e = e;
            best = cur;
        }
    }
    VertexLabels out;
    out.source = LabelSource::Predicted;
    out.labels = std::move(best);
    return out;
}

// ---------------------------------------------------------------------------
// Text dump: `surfacegraph 1` header, one record per node / edge. Lets the
// oracle (or another process) consume the exact instance.
// ---------------------------------------------------------------------------
inline void write_graph(const SurfaceGraph& g, const std::filesystem::path& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write graph: " + path.string());
    auto num = [](double v) {
        char buf[32];
        auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
        return std::string(buf, end);
    };
    f << "surfacegraph 1\n";
    f << "nodes " << g.n << " edges " << g.edges.size() << " lambda " << num(g.lambda)
      << "\n";
    for (int i = 0; i < g.n; ++i)
        f << "node " << i << " " << num(g.t_costs[i][0]) << " " << num(g.t_costs[i][1])
          << "\n";
    for (const auto& e : g.edges)
        f << "edge " << e.i << " " << e.j << " " << num(e.w) << "\n";
}

inline SurfaceGraph read_graph(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open graph: " + path.string());
    std::string tag;
    int version = 0;
    f >> tag >> version;
    if (tag != "surfacegraph" || version != 1)
        throw std::runtime_error("bad graph dump header");
    SurfaceGraph g;
    size_t n_edges = 0;
    f >> tag >> g.n >> tag >> n_edges >> tag >> g.lambda;
    g.t_costs.resize(g.n);
    for (int k = 0; k < g.n; ++k) {
        int i = 0;
        f >> tag >> i;
        if (tag != "node" || i < 0 || i >= g.n)
            throw std::runtime_error("bad node record in graph dump");
        f >> g.t_costs[i][0] >> g.t_costs[i][1];
    }
    g.edges.resize(n_edges);
    for (auto& e : g.edges) {
        f >> tag >> e.i >> e.j >> e.w;
        if (tag != "edge") throw std::runtime_error("bad edge record in graph dump");
    }
    if (!f) throw std::runtime_error("truncated graph dump");
    g.validate();
    return g;
}

}  // namespace lascar
