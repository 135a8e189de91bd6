#include <stdexcept>

#include "vlnav/envsim.hpp"

namespace vlnav {

using nlohmann::json;

json to_json(const EnvironmentGraph& env) {
    json nodes = json::array();
    for (const auto& nr : env.nodes()) {
        json views = json::array();
        for (const auto& v : nr.viewpoints) {
            views.push_back({{"heading", v.heading},
                             {"pitch", v.pitch},
                             {"raw_descriptor", v.raw_descriptor},
                             {"neighbor", v.neighbor}});
        }
        json objects = json::array();
        for (const auto& o : nr.objects) {
            objects.push_back({{"category", o.category},
                               {"raw_descriptor", o.raw_descriptor},
                               {"viewpoint_index", o.viewpoint_index}});
        }
        nodes.push_back({{"id", nr.id},
                         {"position", {nr.position.x, nr.position.y, nr.position.z}},
                         {"room", nr.room},
                         {"viewpoints", std::move(views)},
                         {"objects", std::move(objects)}});
    }
    json edges = json::array();
    for (const auto& [a, b] : env.edges()) {
        edges.push_back({a, b});
    }
    return {{"meta", {{"seed", env.seed()}, {"env_id", env.env_id()}, {"meters_per_unit", env.meters_per_unit()}}},
            {"nodes", std::move(nodes)},
            {"edges", std::move(edges)}};
}

EnvironmentGraph environment_from_json(const json& j) {
    std::vector<NodeRecord> nodes;
    for (const auto& jn : j.at("nodes")) {
        NodeRecord nr;
        nr.id = jn.at("id").get<NodeId>();
        const auto p = jn.at("position").get<std::vector<double>>();
        if (p.size() != 3) {
            throw std::invalid_argument("node position must have 3 components");
        }
        nr.position = {p[0], p[1], p[2]};
        nr.room = jn.value("room", std::string{});
        for (const auto& jv : jn.at("viewpoints")) {
            nr.viewpoints.push_back(ViewDescriptor{jv.at("heading").get<double>(), jv.at("pitch").get<double>(),
                                                   jv.at("raw_descriptor").get<std::vector<double>>(),
                                                   jv.value("neighbor", -1)});
        }
        for (const auto& jo : jn.at("objects")) {
            nr.objects.push_back(ObjectAnnotation{jo.at("category").get<std::string>(),
                                                  jo.at("raw_descriptor").get<std::vector<double>>(),
                                                  jo.at("viewpoint_index").get<std::size_t>()});
        }
        nodes.push_back(std::move(nr));
    }
    std::set<std::pair<NodeId, NodeId>> edges;
    for (const auto& je : j.at("edges")) {
        edges.emplace(je.at(0).get<NodeId>(), je.at(1).get<NodeId>());
    }
    const json& meta = j.at("meta");
    const auto seed = meta.at("seed").get<std::uint64_t>();
    std::string id = meta.value("env_id", "env-" + std::to_string(seed));
    EnvironmentGraph env(std::move(id), seed, std::move(nodes), std::move(edges));
    env.validate();
    return env;
}

json to_json(const Episode& e) {
    json j = {{"episode_id", e.episode_id},
              {"env_id", e.env_id},
              {"start_node", e.start_node},
              {"goal_node", e.goal_node},
              {"target_category", e.target_category ? json(*e.target_category) : json(nullptr)},
              {"instruction_text", e.instruction_text},
              {"gt_path", e.gt_path},
              {"max_steps", e.max_steps},
              {"instruction_objects", e.instruction_objects},
              {"instruction_actions", e.instruction_actions}};
    return j;
}

Episode episode_from_json(const json& j) {
    Episode e;
    e.episode_id = j.value("episode_id", std::string{});
    e.env_id = j.at("env_id").get<std::string>();
    e.start_node = j.at("start_node").get<NodeId>();
    e.goal_node = j.at("goal_node").get<NodeId>();
    if (j.contains("target_category") && !j.at("target_category").is_null()) {
        e.target_category = j.at("target_category").get<std::string>();
    }
    e.instruction_text = j.at("instruction_text").get<std::string>();
    e.gt_path = j.at("gt_path").get<std::vector<NodeId>>();
    e.max_steps = j.value("max_steps", kDefaultMaxSteps);
    e.instruction_objects = j.value("instruction_objects", std::vector<std::string>{});
    e.instruction_actions = j.value("instruction_actions", std::vector<std::string>{});
    if (e.max_steps < 0) {
        throw std::invalid_argument("max_steps must be non-negative");
    }
    return e;
}

const EnvironmentGraph& environment_for(const EnvironmentSet& envs, const Episode& episode) {
    auto it = envs.find(episode.env_id);
    if (it == envs.end()) {
        throw std::out_of_range("episode " + episode.episode_id + " refers to unknown environment " + episode.env_id);
    }
    return it->second;
}

Dataset generate_dataset(const DatasetSpec& spec) {
    if (spec.num_envs < 0 || spec.episodes_per_env < 0 || spec.max_steps < 0) {
        throw std::invalid_argument("dataset counts must be non-negative");
    }
    Dataset ds;
    for (int i = 0; i < spec.num_envs; ++i) {
        EnvironmentGraph env = generate_environment(spec.env_seed + static_cast<std::uint64_t>(i), spec.num_nodes,
                                                    spec.num_views, spec.object_density);
        for (int j = 0; j < spec.episodes_per_env; ++j) {
            Episode ep = make_episode(env, spec.episode_seed + static_cast<std::uint64_t>(j), spec.mode);
            ep.max_steps = spec.max_steps;
            ds.episodes.push_back(std::move(ep));
        }
        const std::string id = env.env_id();
        if (!ds.envs.emplace(id, std::move(env)).second) {
            throw std::invalid_argument("duplicate environment id " + id);
        }
    }
    return ds;
}

json to_json(const DatasetSpec& s) {
    return {{"env_seed", s.env_seed},
            {"num_envs", s.num_envs},
            {"num_nodes", s.num_nodes},
            {"num_views", s.num_views},
            {"object_density", s.object_density},
            {"episodes_per_env", s.episodes_per_env},
            {"episode_seed", s.episode_seed},
            {"mode", mode_name(s.mode)},
            {"max_steps", s.max_steps}};
}

DatasetSpec dataset_spec_from_json(const json& j, DatasetSpec s) {
    s.env_seed = j.value("env_seed", s.env_seed);
    s.num_envs = j.value("num_envs", s.num_envs);
    s.num_nodes = j.value("num_nodes", s.num_nodes);
    s.num_views = j.value("num_views", s.num_views);
    s.object_density = j.value("object_density", s.object_density);
    s.episodes_per_env = j.value("episodes_per_env", s.episodes_per_env);
    s.episode_seed = j.value("episode_seed", s.episode_seed);
    if (j.contains("mode")) {
        s.mode = parse_mode(j.at("mode").get<std::string>());
    }
    s.max_steps = j.value("max_steps", s.max_steps);
    return s;
}

}  // namespace vlnav
