#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace vlnav {

using NodeId = int;

/// Raw scene code width: one channel per object category, then position
/// features.
inline constexpr std::size_t kRawDim = 16;
inline constexpr std::size_t kCategoryChannels = 12;
inline constexpr double kDescriptorNoise = 0.05;
/// Range over which a landmark still registers in a view descriptor.
inline constexpr double kSightRange = 25.0;
inline constexpr double kMinEdgeLength = 1.5;
inline constexpr double kMaxEdgeLength = 4.0;
inline constexpr int kDefaultMaxSteps = 15;

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    friend bool operator==(const Vec3&, const Vec3&) = default;
};

double distance(const Vec3& a, const Vec3& b);
/// Heading of b seen from a: 0 is north (+y), pi/2 is east (+x), in [0, 2pi).
double heading_to(const Vec3& a, const Vec3& b);

struct ViewDescriptor {
    double heading = 0.0;
    double pitch = 0.0;
    std::vector<double> raw_descriptor;
    /// Neighbor seen through this viewpoint, or -1.
    NodeId neighbor = -1;
};

struct ObjectAnnotation {
    std::string category;
    std::vector<double> raw_descriptor;
    std::size_t viewpoint_index = 0;
};

struct NodeRecord {
    NodeId id = 0;
    Vec3 position;
    std::string room;
    std::vector<ViewDescriptor> viewpoints;
    std::vector<ObjectAnnotation> objects;

    bool has_category(const std::string& c) const;
};

class EnvironmentGraph {
public:
    EnvironmentGraph() = default;
    EnvironmentGraph(std::string env_id, std::uint64_t seed, std::vector<NodeRecord> nodes,
                     std::set<std::pair<NodeId, NodeId>> edges);

    const std::string& env_id() const { return env_id_; }
    std::uint64_t seed() const { return seed_; }
    double meters_per_unit() const { return 1.0; }

    std::size_t size() const { return nodes_.size(); }
    const std::vector<NodeRecord>& nodes() const { return nodes_; }
    const NodeRecord& node(NodeId id) const;
    bool valid_node(NodeId id) const { return id >= 0 && static_cast<std::size_t>(id) < nodes_.size(); }

    /// Unordered pairs stored as (min, max).
    const std::set<std::pair<NodeId, NodeId>>& edges() const { return edges_; }
    const std::vector<NodeId>& neighbors(NodeId id) const;
    bool has_edge(NodeId a, NodeId b) const;
    double edge_length(NodeId a, NodeId b) const;

    /// Checks every structural invariant; throws std::logic_error on violation.
    void validate() const;

private:
    std::string env_id_;
    std::uint64_t seed_ = 0;
    std::vector<NodeRecord> nodes_;
    std::set<std::pair<NodeId, NodeId>> edges_;
    std::vector<std::vector<NodeId>> adjacency_;
};

/// Deterministic in all arguments. Throws std::invalid_argument when
/// num_nodes < 2 or when num_views cannot host a connected graph.
EnvironmentGraph generate_environment(std::uint64_t seed, int num_nodes, int num_views, double object_density);

struct PathResult {
    std::vector<NodeId> path;
    double length = 0.0;
};

/// Dijkstra over Euclidean edge lengths; throws std::out_of_range on unknown ids.
PathResult shortest_path(const EnvironmentGraph& env, NodeId a, NodeId b);
/// Geodesic distance from `source` to every node (infinity if unreachable).
std::vector<double> geodesic_distances(const EnvironmentGraph& env, NodeId source);
double path_length(const EnvironmentGraph& env, const std::vector<NodeId>& walk);

enum class EpisodeMode { path_oriented, goal_oriented };

struct Episode {
    std::string episode_id;
    std::string env_id;
    NodeId start_node = 0;
    NodeId goal_node = 0;
    std::optional<std::string> target_category;
    std::string instruction_text;
    std::vector<NodeId> gt_path;
    int max_steps = kDefaultMaxSteps;
    // Template slots the instruction was rendered from.
    std::vector<std::string> instruction_objects;
    std::vector<std::string> instruction_actions;

    friend bool operator==(const Episode&, const Episode&) = default;
};

/// Picks endpoints 4 to 7 edges apart when the graph allows it, otherwise
/// the longest shortest path available.
Episode make_episode(const EnvironmentGraph& env, std::uint64_t seed, EpisodeMode mode);

struct NeighborPose {
    NodeId id = 0;
    std::size_t view_index = 0;
    double heading = 0.0;
    double pitch = 0.0;
    double distance = 0.0;
};

struct Observation {
    NodeId node = 0;
    Vec3 position;
    std::vector<ViewDescriptor> viewpoints;
    std::vector<ObjectAnnotation> objects;
    std::vector<NeighborPose> neighbors;
};

Observation observe(const EnvironmentGraph& env, NodeId node);

// Serialization. Field names mirror the struct fields.
nlohmann::json to_json(const EnvironmentGraph& env);
EnvironmentGraph environment_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Episode& e);
Episode episode_from_json(const nlohmann::json& j);
std::string mode_name(EpisodeMode m);

/// Environments keyed by env_id.
using EnvironmentSet = std::map<std::string, EnvironmentGraph>;
/// Throws std::out_of_range naming the missing id.
const EnvironmentGraph& environment_for(const EnvironmentSet& envs, const Episode& episode);

struct DatasetSpec {
    /// Environment i uses seed env_seed + i.
    std::uint64_t env_seed = 1;
    int num_envs = 1;
    int num_nodes = 20;
    int num_views = 6;
    double object_density = 0.5;
    int episodes_per_env = 10;
    /// Episode j of every environment uses seed episode_seed + j.
    std::uint64_t episode_seed = 0;
    EpisodeMode mode = EpisodeMode::goal_oriented;
    int max_steps = kDefaultMaxSteps;
};

struct Dataset {
    EnvironmentSet envs;
    std::vector<Episode> episodes;  // environment-major order
};

Dataset generate_dataset(const DatasetSpec& spec);

nlohmann::json to_json(const DatasetSpec& s);
DatasetSpec dataset_spec_from_json(const nlohmann::json& j, DatasetSpec base = {});
EpisodeMode parse_mode(const std::string& s);

}  // namespace vlnav
