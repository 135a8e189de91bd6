#pragma once

// Shared fixtures for the unit tests: hand-built graphs, random matrices and
// brute-force oracles that do not go through the library code under test.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>
#include <stdexcept>
#include <utility>
#include <vector>

#include "vlnav/envsim.hpp"
#include "vlnav/tensor.hpp"

namespace vlnav::testing {

inline Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Matrix m(r, c);
    for (double& v : m.data()) {
        v = rng.uniform(lo, hi);
    }
    return m;
}

struct HandObject {
    NodeId node;
    std::string category;
};

/// Graph from explicit positions and edges. Each node gets `views` evenly
/// spaced views; neighbors take the nearest free view.
inline EnvironmentGraph make_graph(const std::vector<Vec3>& positions, const std::vector<std::pair<NodeId, NodeId>>& edges,
                                   const std::vector<HandObject>& objects = {}, std::size_t views = 8,
                                   std::string id = "hand") {
    std::vector<NodeRecord> nodes(positions.size());
    std::vector<std::vector<NodeId>> adj(positions.size());
    for (auto [a, b] : edges) {
        adj[static_cast<std::size_t>(a)].push_back(b);
        adj[static_cast<std::size_t>(b)].push_back(a);
    }
    const double w = 2.0 * std::numbers::pi / static_cast<double>(views);
    for (std::size_t i = 0; i < positions.size(); ++i) {
        NodeRecord& nr = nodes[i];
        nr.id = static_cast<NodeId>(i);
        nr.position = positions[i];
        nr.room = "kitchen";
        for (std::size_t v = 0; v < views; ++v) {
            nr.viewpoints.push_back({w * static_cast<double>(v), 0.0, std::vector<double>(kRawDim, 0.0), -1});
        }
        for (NodeId nb : adj[i]) {
            const double h = heading_to(positions[i], positions[static_cast<std::size_t>(nb)]);
            std::size_t s = static_cast<std::size_t>(std::floor(h / w + 0.5)) % views;
            for (std::size_t k = 0; k < views && nr.viewpoints[s].neighbor >= 0; ++k) {
                s = (s + 1) % views;
            }
            if (nr.viewpoints[s].neighbor >= 0) {
                throw std::invalid_argument("make_graph: more neighbors than views");
            }
            nr.viewpoints[s].neighbor = nb;
        }
    }
    for (const auto& o : objects) {
        std::vector<double> raw(kRawDim, 0.0);
        nodes[static_cast<std::size_t>(o.node)].objects.push_back({o.category, raw, 0});
    }
    std::set<std::pair<NodeId, NodeId>> es;
    for (auto [a, b] : edges) {
        es.emplace(std::min(a, b), std::max(a, b));
    }
    EnvironmentGraph env(std::move(id), 0, std::move(nodes), std::move(es));
    env.validate();
    return env;
}

/// Random connected graph: a random spanning tree plus extra random edges.
inline EnvironmentGraph random_small_graph(Rng& rng, int k, double extra_edge_prob = 0.3) {
    std::vector<Vec3> pos;
    for (int i = 0; i < k; ++i) {
        pos.push_back({rng.uniform(0.0, 8.0), rng.uniform(0.0, 8.0), 0.0});
    }
    std::vector<std::pair<NodeId, NodeId>> edges;
    for (int i = 1; i < k; ++i) {
        edges.emplace_back(static_cast<NodeId>(rng.below(static_cast<std::size_t>(i))), i);
    }
    for (int a = 0; a < k; ++a) {
        for (int b = a + 1; b < k; ++b) {
            const bool present = std::any_of(edges.begin(), edges.end(), [&](auto e) {
                return (e.first == a && e.second == b) || (e.first == b && e.second == a);
            });
            if (!present && rng.uniform() < extra_edge_prob) {
                edges.emplace_back(a, b);
            }
        }
    }
    return make_graph(pos, edges, {}, static_cast<std::size_t>(k));
}

/// Shortest length over every simple path, by exhaustive depth-first enumeration.
inline double brute_force_shortest(const EnvironmentGraph& env, NodeId a, NodeId b) {
    double best = std::numeric_limits<double>::infinity();
    std::vector<bool> on_path(env.size(), false);
    auto dfs = [&](auto&& self, NodeId u, double len) -> void {
        if (u == b) {
            best = std::min(best, len);
            return;
        }
        on_path[static_cast<std::size_t>(u)] = true;
        for (NodeId v : env.neighbors(u)) {
            if (!on_path[static_cast<std::size_t>(v)]) {
                self(self, v, len + distance(env.node(u).position, env.node(v).position));
            }
        }
        on_path[static_cast<std::size_t>(u)] = false;
    };
    dfs(dfs, a, 0.0);
    return best;
}

/// Breadth-first reachability from node 0.
inline std::size_t reachable_from_zero(const EnvironmentGraph& env) {
    std::vector<bool> seen(env.size(), false);
    std::vector<NodeId> frontier{0};
    seen[0] = true;
    std::size_t count = 1;
    while (!frontier.empty()) {
        std::vector<NodeId> next;
        for (NodeId u : frontier) {
            for (const auto& [a, b] : env.edges()) {
                const NodeId v = a == u ? b : (b == u ? a : -1);
                if (v >= 0 && !seen[static_cast<std::size_t>(v)]) {
                    seen[static_cast<std::size_t>(v)] = true;
                    ++count;
                    next.push_back(v);
                }
            }
        }
        frontier = std::move(next);
    }
    return count;
}

}  // namespace vlnav::testing
