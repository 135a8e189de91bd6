#include "vlnav/topo_map.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <queue>
#include <stdexcept>
#include <string>

namespace vlnav {

const char* state_name(NodeState s) {
    switch (s) {
        case NodeState::current:
            return "current";
        case NodeState::visited:
            return "visited";
        case NodeState::navigable:
            return "navigable";
    }
    return "?";
}

void TopoMap::update(const Observation& obs, const Matrix& pooled, const std::vector<Matrix>& facing, int step) {
    if (!facing.empty() && facing.size() != obs.neighbors.size()) {
        throw std::invalid_argument("TopoMap::update: one facing row per neighbor expected");
    }
    if (current_ && *current_ != obs.node) {
        entries_.at(*current_).state = NodeState::visited;
    }
    Entry& here = entries_[obs.node];
    here.state = NodeState::current;
    here.feature = pooled;
    here.position = obs.position;
    here.step = step;
    current_ = obs.node;

    for (std::size_t i = 0; i < obs.neighbors.size(); ++i) {
        const NeighborPose& nb = obs.neighbors[i];
        auto [it, inserted] = entries_.try_emplace(nb.id);
        Entry& e = it->second;
        if (inserted) {
            e.state = NodeState::navigable;
            // Position of the neighbor from the observer's pose.
            const double horizontal = nb.distance * std::cos(nb.pitch);
            e.position = {obs.position.x + horizontal * std::sin(nb.heading),
                          obs.position.y + horizontal * std::cos(nb.heading),
                          obs.position.z + nb.distance * std::sin(nb.pitch)};
        }
        if (e.state == NodeState::navigable) {
            if (!facing.empty()) {
                e.feature = facing[i];
            }
            e.step = step;
        }
    }
}

NodeId TopoMap::current() const {
    if (!current_) {
        throw std::logic_error("TopoMap: no current node");
    }
    return *current_;
}

std::vector<NodeId> TopoMap::candidates() const {
    std::vector<NodeId> out;
    for (const auto& [id, e] : entries_) {
        if (e.state != NodeState::current) {
            out.push_back(id);
        }
    }
    return out;
}

std::vector<NodeId> TopoMap::nodes_in(NodeState s) const {
    std::vector<NodeId> out;
    for (const auto& [id, e] : entries_) {
        if (e.state == s) {
            out.push_back(id);
        }
    }
    return out;
}

std::vector<NodeId> TopoMap::route_to(const EnvironmentGraph& env, NodeId target) const {
    const NodeId start = current();
    if (!contains(target)) {
        throw std::invalid_argument("route_to: node " + std::to_string(target) + " is not on the map");
    }
    if (target == start) {
        return {};
    }
    // Dijkstra restricted to visited nodes plus the target.
    auto allowed = [&](NodeId n) {
        if (n == target) {
            return true;
        }
        auto it = entries_.find(n);
        return it != entries_.end() && it->second.state != NodeState::navigable;
    };
    const double inf = std::numeric_limits<double>::infinity();
    std::map<NodeId, double> dist;
    std::map<NodeId, NodeId> prev;
    using Item = std::pair<double, NodeId>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    dist[start] = 0.0;
    pq.emplace(0.0, start);
    while (!pq.empty()) {
        auto [d, u] = pq.top();
        pq.pop();
        if (d > dist[u] || u == target) {
            continue;
        }
        for (NodeId v : env.neighbors(u)) {
            if (!allowed(v)) {
                continue;
            }
            const double nd = d + env.edge_length(u, v);
            auto it = dist.find(v);
            if (it == dist.end() || nd < it->second || (nd == it->second && u < prev[v])) {
                dist[v] = nd;
                prev[v] = u;
                pq.emplace(nd, v);
            }
        }
    }
    if (dist.count(target) == 0 || dist[target] == inf) {
        throw std::invalid_argument("route_to: node " + std::to_string(target) + " is unreachable");
    }
    std::vector<NodeId> walk;
    for (NodeId n = target; n != start; n = prev.at(n)) {
        walk.push_back(n);
    }
    return {walk.rbegin(), walk.rend()};
}

void TopoMap::validate(const EnvironmentGraph& env) const {
    std::size_t n_current = 0;
    for (const auto& [id, e] : entries_) {
        if (!env.valid_node(id)) {
            throw std::logic_error("TopoMap: unknown node " + std::to_string(id));
        }
        if (e.state == NodeState::current) {
            ++n_current;
        }
        if (e.state == NodeState::navigable) {
            bool seen_from_visited = false;
            for (NodeId nb : env.neighbors(id)) {
                auto it = entries_.find(nb);
                if (it != entries_.end() && it->second.state != NodeState::navigable) {
                    seen_from_visited = true;
                }
            }
            if (!seen_from_visited) {
                throw std::logic_error("TopoMap: navigable node " + std::to_string(id) +
                                       " has no visited neighbor");
            }
        } else {
            for (NodeId nb : env.neighbors(id)) {
                if (!contains(nb)) {
                    throw std::logic_error("TopoMap: neighbor " + std::to_string(nb) + " of visited node " +
                                           std::to_string(id) + " missing");
                }
            }
        }
    }
    if (n_current != 1) {
        throw std::logic_error("TopoMap: expected exactly one current node, found " + std::to_string(n_current));
    }
}

}  // namespace vlnav
