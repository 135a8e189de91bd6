#pragma once

#include <map>
#include <optional>
#include <vector>

#include "vlnav/envsim.hpp"
#include "vlnav/tensor.hpp"

namespace vlnav {

enum class NodeState { current, visited, navigable };

const char* state_name(NodeState s);

/// Episode-local graph of the nodes the agent has seen.
class TopoMap {
public:
    struct Entry {
        NodeState state = NodeState::navigable;
        /// 1 x d. Visited nodes hold the pooled feature from their last visit;
        /// navigable nodes hold the view row that last faced them.
        Matrix feature;
        Vec3 position;
        /// Step of the last visit, or of the last sighting for navigable nodes.
        int step = 0;
    };

    /// Marks obs.node current (demoting the previous current node to visited),
    /// stores its pooled feature, and adds unseen neighbors as navigable.
    /// `facing` holds one 1 x d row per obs.neighbors entry (may be empty).
    void update(const Observation& obs, const Matrix& pooled, const std::vector<Matrix>& facing, int step);

    bool empty() const { return entries_.empty(); }
    std::size_t size() const { return entries_.size(); }
    bool contains(NodeId id) const { return entries_.count(id) != 0; }
    const Entry& entry(NodeId id) const { return entries_.at(id); }
    const std::map<NodeId, Entry>& entries() const { return entries_; }

    /// Throws std::logic_error when the map is empty.
    NodeId current() const;
    /// Every node but the current one, ascending.
    std::vector<NodeId> candidates() const;
    std::vector<NodeId> nodes_in(NodeState s) const;

    /// Walk from the current node to `target` through visited nodes only,
    /// excluding the current node itself. Throws std::invalid_argument when
    /// the target is not on the map or unreachable.
    std::vector<NodeId> route_to(const EnvironmentGraph& env, NodeId target) const;

    /// Checks the map invariants against the environment; throws std::logic_error.
    void validate(const EnvironmentGraph& env) const;

private:
    std::map<NodeId, Entry> entries_;
    std::optional<NodeId> current_;
};

}  // namespace vlnav
