#include "vlnav/metrics.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace vlnav {

using nlohmann::json;

double navigation_error(const TrajectoryLog& log, const Episode& episode, const EnvironmentGraph& env) {
    if (log.nodes.empty()) {
        throw std::invalid_argument("trajectory " + log.episode_id + " has no nodes");
    }
    return distance(env.node(log.nodes.back()).position, env.node(episode.goal_node).position) *
           env.meters_per_unit();
}

bool success(const TrajectoryLog& log, const Episode& episode, const EnvironmentGraph& env, double threshold) {
    return navigation_error(log, episode, env) <= threshold;
}

bool oracle_success(const TrajectoryLog& log, const Episode& episode, const EnvironmentGraph& env,
                    double threshold) {
    const Vec3& goal = env.node(episode.goal_node).position;
    return std::any_of(log.nodes.begin(), log.nodes.end(), [&](NodeId n) {
        return distance(env.node(n).position, goal) * env.meters_per_unit() <= threshold;
    });
}

double spl_weight(const TrajectoryLog& log, const Episode& episode, const EnvironmentGraph& env) {
    if (!success(log, episode, env)) {
        return 0.0;
    }
    const double l = shortest_path(env, episode.start_node, episode.goal_node).length;
    const double p = path_length(env, log.nodes);
    const double denom = std::max(p, l);
    return denom == 0.0 ? 1.0 : l / denom;
}

EpisodeMetrics episode_metrics(const TrajectoryLog& log, const Episode& episode, const EnvironmentGraph& env) {
    if (log.episode_id != episode.episode_id) {
        throw std::invalid_argument("trajectory " + log.episode_id + " does not match episode " + episode.episode_id);
    }
    if (log.nodes.empty() || log.nodes.front() != episode.start_node) {
        throw std::invalid_argument("trajectory " + log.episode_id + " does not start at the episode start");
    }
    EpisodeMetrics m;
    m.episode_id = episode.episode_id;
    m.ne = navigation_error(log, episode, env);
    m.success = success(log, episode, env);
    m.oracle_success = oracle_success(log, episode, env);
    m.spl = spl_weight(log, episode, env);
    m.path_length = path_length(env, log.nodes);
    m.shortest_length = shortest_path(env, episode.start_node, episode.goal_node).length;
    if (episode.target_category) {
        const bool grounded = m.success && log.grounded_category == episode.target_category;
        m.rgs = grounded;
        m.rgspl = grounded ? m.spl : 0.0;
    }
    return m;
}

namespace {

void check_aligned(std::span<const TrajectoryLog> logs, std::span<const Episode> episodes) {
    if (logs.empty()) {
        throw std::invalid_argument("metrics: no trajectories");
    }
    if (logs.size() != episodes.size()) {
        throw std::invalid_argument("metrics: " + std::to_string(logs.size()) + " trajectories for " +
                                    std::to_string(episodes.size()) + " episodes");
    }
}

}  // namespace

double spl(std::span<const TrajectoryLog> logs, std::span<const Episode> episodes, const EnvironmentSet& envs) {
    check_aligned(logs, episodes);
    double total = 0.0;
    for (std::size_t i = 0; i < logs.size(); ++i) {
        total += spl_weight(logs[i], episodes[i], environment_for(envs, episodes[i]));
    }
    return total / static_cast<double>(logs.size());
}

std::optional<std::pair<double, double>> rgs_rgspl(std::span<const TrajectoryLog> logs,
                                                   std::span<const Episode> episodes, const EnvironmentSet& envs) {
    const MetricsReport r = report(logs, episodes, envs);
    if (!r.rgs) {
        return std::nullopt;
    }
    return std::make_pair(*r.rgs, *r.rgspl);
}

MetricsReport report(std::span<const TrajectoryLog> logs, std::span<const Episode> episodes,
                     const EnvironmentSet& envs) {
    check_aligned(logs, episodes);
    MetricsReport r;
    r.episodes = logs.size();
    std::size_t goal_count = 0;
    double rgs = 0.0;
    double rgspl = 0.0;
    for (std::size_t i = 0; i < logs.size(); ++i) {
        EpisodeMetrics m = episode_metrics(logs[i], episodes[i], environment_for(envs, episodes[i]));
        r.ne += m.ne;
        r.sr += m.success ? 1.0 : 0.0;
        r.osr += m.oracle_success ? 1.0 : 0.0;
        r.spl += m.spl;
        if (m.rgs) {
            ++goal_count;
            rgs += *m.rgs ? 1.0 : 0.0;
            rgspl += *m.rgspl;
        }
        r.per_episode.push_back(std::move(m));
    }
    const double n = static_cast<double>(r.episodes);
    r.ne /= n;
    r.sr /= n;
    r.osr /= n;
    r.spl /= n;
    if (goal_count > 0) {
        r.rgs = rgs / static_cast<double>(goal_count);
        r.rgspl = rgspl / static_cast<double>(goal_count);
    }
    return r;
}

json to_json(const MetricsReport& r, bool include_episodes) {
    auto opt = [](const auto& v) { return v ? json(*v) : json(nullptr); };
    json j = {{"episodes", r.episodes}, {"NE", r.ne},         {"OSR", r.osr},        {"SR", r.sr},
              {"SPL", r.spl},           {"RGS", opt(r.rgs)}, {"RGSPL", opt(r.rgspl)}};
    if (include_episodes) {
        json eps = json::array();
        for (const auto& m : r.per_episode) {
            eps.push_back({{"episode_id", m.episode_id},
                           {"NE", m.ne},
                           {"success", m.success},
                           {"oracle_success", m.oracle_success},
                           {"SPL", m.spl},
                           {"path_length", m.path_length},
                           {"shortest_length", m.shortest_length},
                           {"RGS", opt(m.rgs)},
                           {"RGSPL", opt(m.rgspl)}});
        }
        j["per_episode"] = std::move(eps);
    }
    return j;
}

std::string per_episode_csv(const MetricsReport& r) {
    std::ostringstream os;
    os.precision(17);
    os << "episode_id,ne,success,oracle_success,spl,path_length,shortest_length,rgs,rgspl\n";
    for (const auto& m : r.per_episode) {
        os << m.episode_id << ',' << m.ne << ',' << int(m.success) << ',' << int(m.oracle_success) << ',' << m.spl
           << ',' << m.path_length << ',' << m.shortest_length << ',';
        if (m.rgs) {
            os << int(*m.rgs) << ',' << *m.rgspl;
        } else {
            os << ',';
        }
        os << '\n';
    }
    return os.str();
}

}  // namespace vlnav
