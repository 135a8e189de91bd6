#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vlnav/encoders.hpp"
#include "vlnav/envsim.hpp"
#include "vlnav/gradcheck.hpp"
#include "vlnav/ope.hpp"
#include "vlnav/textparse.hpp"
#include "vlnav/topo_map.hpp"

namespace vlnav {

/// Action key of the STOP decision in every score space.
inline constexpr NodeId kStop = -1;

struct ModelConfig {
    std::size_t d = 32;
    std::size_t heads = 2;
    std::size_t text_layers = 2;
    std::size_t panorama_layers = 2;
    std::size_t cross_layers = 4;
    std::size_t ffn_hidden = 64;
    std::size_t max_len = 64;
    bool use_topa = true;
    bool use_iopa = true;
    GateMode gate_mode = GateMode::gated;

    /// Throws std::invalid_argument on inconsistent sizes.
    void validate() const;
    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

nlohmann::json to_json(const ModelConfig& c);
/// Missing keys keep their defaults.
ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base = {});

struct NavigatorModel {
    ModelConfig config;
    Lexicon lexicon;

    EmbeddingTable embedding;
    TextEncoder text_encoder;
    FeatureProjection projection;
    PanoramaEncoder panorama;

    PoseEmbedding object_pose;
    PoseEmbedding fine_pose;
    PoseEmbedding coarse_pose;
    CrossModalEncoder object_encoder;
    CrossModalEncoder fine_encoder;
    CrossModalEncoder coarse_encoder;

    OpeBlock topa;
    OpeBlock iopa;

    FeedForward fine_head;    // d -> hidden -> 1
    FeedForward coarse_head;  // d -> hidden -> 1
    FeedForward ground_head;  // d -> hidden -> 1
    Param stop_token;         // 1 x d coarse STOP row
    Param backtrack;          // 1 x 1 lifted score of non-adjacent candidates
    Linear fusion;            // d -> 1

    static NavigatorModel init(const ModelConfig& config, std::uint64_t seed, Lexicon lexicon = Lexicon::builtin());

    template <class Fn>
    void visit(Fn&& fn) {
        embedding.visit("embedding", fn);
        text_encoder.visit("text", fn);
        projection.visit("projection", fn);
        panorama.visit("panorama", fn);
        object_pose.visit("object_pose", fn);
        fine_pose.visit("fine_pose", fn);
        coarse_pose.visit("coarse_pose", fn);
        object_encoder.visit("object_encoder", fn);
        fine_encoder.visit("fine_encoder", fn);
        coarse_encoder.visit("coarse_encoder", fn);
        topa.visit("topa", fn);
        iopa.visit("iopa", fn);
        fine_head.visit("fine_head", fn);
        coarse_head.visit("coarse_head", fn);
        ground_head.visit("ground_head", fn);
        fn(std::string("stop_token"), stop_token);
        fn(std::string("backtrack"), backtrack);
        fusion.visit("fusion", fn);
    }

    std::vector<NamedParam> named_params();
    std::size_t parameter_count();

    /// Checkpoint document; `extra_meta` is merged into the meta object.
    nlohmann::json to_checkpoint(const nlohmann::json& extra_meta = nlohmann::json::object());
    /// Rebuilds the architecture from meta.model (and meta.lexicon when
    /// present) and loads every parameter.
    static NavigatorModel from_checkpoint(const nlohmann::json& doc);
};

// ---------------------------------------------------------------------------
// Scoring primitives.

/// Local scores over [STOP; neighbors...] ((1 + k) x 1). Each neighbor takes
/// the score of its assigned view row; STOP scores the mean-pooled view rows.
Var fine_scores(Var view_rows, std::span<const NeighborPose> neighbors, const FeedForward& head);

/// Scores every row of the coarse node matrix after cross-modal encoding.
Var coarse_scores(Var node_rows, Var text, const CrossModalEncoder& enc, const FeedForward& head);

/// Lifts local scores into the global key space. Neighbors and STOP keep
/// their local scores; every other key takes the BACKTRACK scalar.
Var lift_local_to_global(Var local, std::span<const NodeId> local_keys, std::span<const NodeId> global_keys,
                         Var backtrack);

struct FusedScores {
    Var fused;
    Var lambda;  // 1 x 1 in (0, 1)
};

/// lambda = sigmoid(pooled . w + b); fused = lambda * global + (1 - lambda) * lifted.
FusedScores fuse_scores(Var global, Var lifted, Var pooled, const Linear& fusion);
/// Plain-number form with a given lambda. Throws std::invalid_argument on a length mismatch.
std::vector<double> fuse_scores(std::span<const double> global, std::span<const double> lifted, double lambda);

/// Highest score wins; ties go to the smallest node id and STOP loses ties.
/// Throws std::invalid_argument on empty or mismatched input.
NodeId select_action(std::span<const NodeId> keys, std::span<const double> scores);

/// Index of the highest-scoring object row (first on ties), absent without objects.
std::optional<std::size_t> ground_object(const Matrix& object_scores);

// ---------------------------------------------------------------------------
// Episode rollout.

struct ActionScores {
    std::vector<NodeId> keys;  // kStop first, then candidates ascending
    std::vector<double> global;
    std::vector<double> lifted;
    std::vector<double> fused;
    std::vector<NodeId> local_keys;  // kStop first, then neighbors in adjacency order
    std::vector<double> local;
    double lambda = 0.5;

    friend bool operator==(const ActionScores&, const ActionScores&) = default;
};

struct StepOutput {
    ActionScores scores;
    Var fused;                                  // K x 1, aligned with scores.keys
    Var grounding;                              // m x 1 object scores, or invalid without objects
    std::vector<std::string> object_categories;  // aligned with grounding rows
};

struct SessionOptions {
    bool training = false;
    double dropout = 0.0;
    std::uint64_t dropout_seed = 0;
};

/// One episode's perception and decision state. Owns the topological map;
/// the model is read-only.
class EpisodeSession {
public:
    EpisodeSession(const NavigatorModel& model, const EnvironmentGraph& env, const Episode& episode, Tape& tape,
                   SessionOptions options = {});

    /// Observes the current node, updates the map, and scores every action.
    StepOutput step();
    /// Moves to `target` (adjacent or via visited nodes) and returns the nodes
    /// entered, ending with `target`.
    std::vector<NodeId> move_to(NodeId target);

    NodeId current() const { return current_; }
    int steps_taken() const { return step_; }
    const TopoMap& map() const { return map_; }
    const ParsedInstruction& parsed() const { return parsed_; }
    /// Contextual instruction features before TOPA.
    Var contextual_text() const { return contextual_; }
    /// Instruction features used by the cross-modal encoders.
    Var instruction_features() const { return instruction_; }

private:
    const NavigatorModel& model_;
    const EnvironmentGraph& env_;
    const Episode& episode_;
    Tape& tape_;
    SessionOptions options_;
    Rng dropout_rng_;
    TopoMap map_;
    std::map<NodeId, Var> node_features_;  // live counterparts of the map features
    NodeId current_;
    int step_ = 0;
    ParsedInstruction parsed_;
    Var object_phrases_;
    Var contextual_;
    Var instruction_;
};

enum class StopReason { stop_action, step_limit };
std::string stop_reason_name(StopReason r);

struct StepRecord {
    NodeId node = 0;
    NodeId action = kStop;
    ActionScores scores;

    friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

struct TrajectoryLog {
    std::string episode_id;
    std::string env_id;
    std::vector<NodeId> nodes;
    std::vector<StepRecord> steps;
    std::optional<std::string> grounded_category;
    StopReason stop_reason = StopReason::step_limit;

    friend bool operator==(const TrajectoryLog&, const TrajectoryLog&) = default;
};

nlohmann::json to_json(const TrajectoryLog& log);
TrajectoryLog trajectory_from_json(const nlohmann::json& j);

/// Greedy rollout until STOP or episode.max_steps decisions. Grounding runs at
/// termination for goal-oriented episodes.
TrajectoryLog run_episode(const NavigatorModel& model, const EnvironmentGraph& env, const Episode& episode);

}  // namespace vlnav
