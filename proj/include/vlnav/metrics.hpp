#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vlnav/envsim.hpp"
#include "vlnav/policy.hpp"

namespace vlnav {

inline constexpr double kSuccessThreshold = 3.0;

/// Euclidean distance from the final logged node to the goal, in meters.
double navigation_error(const TrajectoryLog& log, const Episode& episode, const EnvironmentGraph& env);
/// Inclusive: NE <= threshold.
bool success(const TrajectoryLog& log, const Episode& episode, const EnvironmentGraph& env,
             double threshold = kSuccessThreshold);
/// Any visited node within the threshold of the goal.
bool oracle_success(const TrajectoryLog& log, const Episode& episode, const EnvironmentGraph& env,
                    double threshold = kSuccessThreshold);
/// S * l / max(p, l); p counts the full logged walk, l the shortest start-goal path.
double spl_weight(const TrajectoryLog& log, const Episode& episode, const EnvironmentGraph& env);

struct EpisodeMetrics {
    std::string episode_id;
    double ne = 0.0;
    bool success = false;
    bool oracle_success = false;
    double spl = 0.0;
    double path_length = 0.0;
    double shortest_length = 0.0;
    std::optional<bool> rgs;  // absent for path-oriented episodes
    std::optional<double> rgspl;
};

EpisodeMetrics episode_metrics(const TrajectoryLog& log, const Episode& episode, const EnvironmentGraph& env);

struct MetricsReport {
    double ne = 0.0;
    double osr = 0.0;
    double sr = 0.0;
    double spl = 0.0;
    /// Absent when no episode is goal-oriented; averaged over goal-oriented episodes.
    std::optional<double> rgs;
    std::optional<double> rgspl;
    std::size_t episodes = 0;
    std::vector<EpisodeMetrics> per_episode;
};

/// Mean SPL over aligned logs and episodes.
double spl(std::span<const TrajectoryLog> logs, std::span<const Episode> episodes, const EnvironmentSet& envs);
/// (RGS, RGSPL) over goal-oriented episodes; absent when there are none.
std::optional<std::pair<double, double>> rgs_rgspl(std::span<const TrajectoryLog> logs,
                                                   std::span<const Episode> episodes, const EnvironmentSet& envs);

/// Logs are matched to episodes by position; episode ids must agree.
/// Throws std::invalid_argument on empty or misaligned input.
MetricsReport report(std::span<const TrajectoryLog> logs, std::span<const Episode> episodes,
                     const EnvironmentSet& envs);

nlohmann::json to_json(const MetricsReport& r, bool include_episodes = true);
/// Per-episode CSV with a header row.
std::string per_episode_csv(const MetricsReport& r);

}  // namespace vlnav
