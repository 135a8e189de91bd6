#include <gtest/gtest.h>

#include <algorithm>

#include "test_support.hpp"
#include "vlnav/gradcheck.hpp"
#include "vlnav/checkpoint.hpp"
#include "vlnav/policy.hpp"

using namespace vlnav;
using vlnav::testing::make_graph;
using vlnav::testing::random_matrix;

namespace {

ModelConfig tiny_config() {
    ModelConfig c;
    c.d = 8;
    c.heads = 2;
    c.text_layers = 1;
    c.panorama_layers = 1;
    c.cross_layers = 1;
    c.ffn_hidden = 16;
    return c;
}

/// Head whose output is relu(x[0]).
FeedForward first_channel_head(std::size_t d, std::size_t hidden) {
    FeedForward f{Linear::zeros(d, hidden), Linear::zeros(hidden, 1)};
    f.first.weight.value(0, 0) = 1.0;
    f.second.weight.value(0, 0) = 1.0;
    return f;
}

FeedForward zero_head(std::size_t d, std::size_t hidden) { return {Linear::zeros(d, hidden), Linear::zeros(hidden, 1)}; }

Episode goal_episode(const EnvironmentGraph& env, std::uint64_t seed) {
    return make_episode(env, seed, EpisodeMode::goal_oriented);
}

/// Independent argmax: highest score, smallest node id among ties, STOP only
/// when it strictly beats every node.
NodeId scan_oracle(const std::vector<NodeId>& keys, const std::vector<double>& scores) {
    double best = -1e300;
    for (double s : scores) {
        best = std::max(best, s);
    }
    NodeId pick = kStop;
    bool found_node = false;
    for (std::size_t i = 0; i < keys.size(); ++i) {
        if (scores[i] == best && keys[i] != kStop && (!found_node || keys[i] < pick)) {
            pick = keys[i];
            found_node = true;
        }
    }
    // No node reaches the maximum, so STOP holds it alone.
    return found_node ? pick : kStop;
}

}  // namespace

// ---------------------------------------------------------------------------
// Topological map.

TEST(TopoMap, TracksStatesAlongALine) {
    const auto env = make_graph({{0, 0, 0}, {0, 2, 0}, {0, 4, 0}, {0, 6, 0}}, {{0, 1}, {1, 2}, {2, 3}});
    TopoMap map;
    EXPECT_THROW(map.current(), std::logic_error);
    const Matrix pooled(1, 4, 1.0);
    map.update(observe(env, 0), pooled, {}, 0);
    EXPECT_EQ(map.current(), 0);
    EXPECT_EQ(map.nodes_in(NodeState::navigable), (std::vector<NodeId>{1}));
    map.validate(env);

    map.update(observe(env, 1), pooled, {Matrix(1, 4, 2.0), Matrix(1, 4, 3.0)}, 1);
    EXPECT_EQ(map.current(), 1);
    EXPECT_EQ(map.entry(0).state, NodeState::visited);
    EXPECT_EQ(map.entry(2).state, NodeState::navigable);
    EXPECT_EQ(map.candidates(), (std::vector<NodeId>{0, 2}));
    EXPECT_FALSE(map.contains(3));
    EXPECT_NEAR(map.entry(2).position.y, 4.0, 1e-9);
    EXPECT_EQ(map.route_to(env, 0), (std::vector<NodeId>{0}));
    map.validate(env);

    map.update(observe(env, 2), pooled, {}, 2);
    EXPECT_EQ(map.route_to(env, 0), (std::vector<NodeId>{1, 0}));
    EXPECT_EQ(map.route_to(env, 3), (std::vector<NodeId>{3}));
    EXPECT_THROW(map.route_to(env, 7), std::invalid_argument);
    EXPECT_STREQ(state_name(NodeState::current), "current");
}

TEST(TopoMap, RouteUsesOnlyVisitedNodes) {
    // Square 0-1-2-3-0; the agent walks 0 -> 1 -> 2, so node 3 stays navigable.
    const auto env = make_graph({{0, 0, 0}, {2, 0, 0}, {2, 2, 0}, {0, 2, 0}}, {{0, 1}, {1, 2}, {2, 3}, {3, 0}});
    TopoMap map;
    const Matrix pooled(1, 2);
    map.update(observe(env, 0), pooled, {}, 0);
    map.update(observe(env, 1), pooled, {}, 1);
    map.update(observe(env, 2), pooled, {}, 2);
    EXPECT_EQ(map.entry(3).state, NodeState::navigable);
    EXPECT_EQ(map.route_to(env, 0), (std::vector<NodeId>{1, 0}));
    map.validate(env);
}

// ---------------------------------------------------------------------------
// Scoring primitives.

TEST(FineScores, StopUsesMeanRowAndNeighborsTheirView) {
    Tape t;
    Var views = t.constant(Matrix::from_rows({{1, 0}, {2, 0}, {3, 0}}));
    const FeedForward head = first_channel_head(2, 3);
    const NeighborPose nbs[] = {{5, 2, 0, 0, 1}, {9, 0, 0, 0, 1}};
    const Matrix s = fine_scores(views, nbs, head).value();
    EXPECT_EQ(s, Matrix::from_rows({{2}, {3}, {1}}));
    EXPECT_EQ(fine_scores(views, {}, head).value(), Matrix::from_rows({{2}}));
    const NeighborPose bad[] = {{1, 7, 0, 0, 1}};
    EXPECT_THROW(fine_scores(views, bad, head), ShapeError);
}

TEST(CoarseScores, ZeroHeadTiesEveryRow) {
    Rng rng(1);
    CrossModalEncoder enc;
    enc.layers.push_back(CrossModalLayer::init(8, 2, 16, rng));
    Tape t;
    const Matrix s =
        coarse_scores(t.constant(random_matrix(5, 8, rng)), t.constant(random_matrix(3, 8, rng)), enc, zero_head(8, 4))
            .value();
    ASSERT_EQ(s.rows(), 5u);
    for (std::size_t i = 0; i < 5; ++i) {
        EXPECT_EQ(s(i, 0), 0.0);
    }
}

TEST(Lift, NeighborsKeepLocalScoresOthersTakeBacktrack) {
    Tape t;
    Var local = t.constant(Matrix::from_rows({{1}, {2}, {3}}));
    const NodeId local_keys[] = {kStop, 5, 2};
    const NodeId global_keys[] = {kStop, 1, 2, 5, 7};
    Var bt = t.constant(Matrix::from_rows({{-0.5}}));
    EXPECT_EQ(lift_local_to_global(local, local_keys, global_keys, bt).value(),
              Matrix::from_rows({{1}, {-0.5}, {3}, {2}, {-0.5}}));
    const NodeId short_keys[] = {kStop};
    EXPECT_THROW(lift_local_to_global(local, short_keys, global_keys, bt), ShapeError);
}

TEST(Lift, GradientFlowsToBacktrackOncePerLiftedKey) {
    Param bt{Matrix::from_rows({{0.3}})};
    Tape t;
    Var local = t.constant(Matrix::from_rows({{1}, {2}}));
    const NodeId local_keys[] = {kStop, 4};
    const NodeId global_keys[] = {kStop, 1, 4, 6};
    Var lifted = lift_local_to_global(local, local_keys, global_keys, t.param(bt));
    const Gradients g = t.backward(weighted_sum(lifted, Matrix(4, 1, 1.0)));
    EXPECT_DOUBLE_EQ(g.get(bt)(0, 0), 2.0);
}

TEST(Fuse, ConvexCombination) {
    const double g[] = {1, 2};
    const double l[] = {3, 4};
    EXPECT_EQ(fuse_scores(g, l, 0.25), (std::vector<double>{2.5, 3.5}));
    const double l_short[] = {3};
    EXPECT_THROW(fuse_scores(g, l_short, 0.5), std::invalid_argument);

    Tape t;
    const Linear zero = Linear::zeros(2, 1);
    const FusedScores f = fuse_scores(t.constant(Matrix::from_rows({{1}, {2}})), t.constant(Matrix::from_rows({{3}, {4}})),
                                      t.constant(Matrix(1, 2, 7.0)), zero);
    EXPECT_DOUBLE_EQ(f.lambda.value()(0, 0), 0.5);
    EXPECT_EQ(f.fused.value(), Matrix::from_rows({{2}, {3}}));
}

TEST(SelectAction, TieRules) {
    const NodeId keys[] = {kStop, 3, 1, 8};
    const double tie_all[] = {1, 1, 1, 1};
    EXPECT_EQ(select_action(keys, tie_all), 1);
    const double stop_wins[] = {2, 1, 1, 1};
    EXPECT_EQ(select_action(keys, stop_wins), kStop);
    const double node_wins[] = {0, 5, 1, 5};
    EXPECT_EQ(select_action(keys, node_wins), 3);
    const NodeId only_stop[] = {kStop};
    const double one[] = {0};
    EXPECT_EQ(select_action(only_stop, one), kStop);
    EXPECT_THROW(select_action(std::span<const NodeId>{}, std::span<const double>{}), std::invalid_argument);
    EXPECT_THROW(select_action(keys, one), std::invalid_argument);
}

TEST(SelectAction, MatchesScanOracleOnRandomTies) {
    Rng rng(2);
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<NodeId> keys{kStop};
        std::vector<double> scores{static_cast<double>(rng.below(4))};
        const std::size_t k = rng.below(6);
        std::vector<NodeId> ids{0, 1, 2, 3, 4, 5, 6, 7};
        rng.shuffle(ids);
        for (std::size_t i = 0; i < k; ++i) {
            keys.push_back(ids[i]);
            scores.push_back(static_cast<double>(rng.below(4)));
        }
        EXPECT_EQ(select_action(keys, scores), scan_oracle(keys, scores));
    }
}

TEST(GroundObject, FirstMaximumWins) {
    EXPECT_FALSE(ground_object(Matrix(0, 1)).has_value());
    EXPECT_EQ(ground_object(Matrix::from_rows({{0.1}, {0.9}, {0.9}})), 1u);
    EXPECT_EQ(ground_object(Matrix::from_rows({{-2}})), 0u);
}

// ---------------------------------------------------------------------------
// Sessions and rollouts.

TEST(Session, ScoreKeysFollowTheMap) {
    const auto env = generate_environment(4, 15, 6, 0.5);
    const Episode ep = goal_episode(env, 0);
    const auto model = NavigatorModel::init(tiny_config(), 3);
    Tape t(false);
    EpisodeSession s(model, env, ep, t);
    for (int step = 0; step < 4; ++step) {
        const StepOutput out = s.step();
        s.map().validate(env);
        const ActionScores& sc = out.scores;
        ASSERT_EQ(sc.keys.front(), kStop);
        EXPECT_EQ(std::vector<NodeId>(sc.keys.begin() + 1, sc.keys.end()), s.map().candidates());
        ASSERT_EQ(sc.local_keys.front(), kStop);
        EXPECT_EQ(std::vector<NodeId>(sc.local_keys.begin() + 1, sc.local_keys.end()), env.neighbors(s.current()));
        EXPECT_GT(sc.lambda, 0.0);
        EXPECT_LT(sc.lambda, 1.0);
        EXPECT_EQ(sc.fused, fuse_scores(sc.global, sc.lifted, sc.lambda));
        for (std::size_t i = 0; i < sc.keys.size(); ++i) {
            const auto it = std::find(sc.local_keys.begin(), sc.local_keys.end(), sc.keys[i]);
            const double expect = it == sc.local_keys.end() ? model.backtrack.value(0, 0)
                                                            : sc.local[static_cast<std::size_t>(it - sc.local_keys.begin())];
            EXPECT_EQ(sc.lifted[i], expect);
        }
        EXPECT_EQ(out.object_categories.size(), env.node(s.current()).objects.size());
        // Move to the largest candidate to exercise backtracking routes.
        const NodeId target = sc.keys.back();
        const NodeId before = s.current();
        const auto walk = s.move_to(target);
        ASSERT_FALSE(walk.empty());
        EXPECT_EQ(walk.back(), target);
        EXPECT_TRUE(env.has_edge(before, walk.front()));
        for (std::size_t i = 1; i < walk.size(); ++i) {
            EXPECT_TRUE(env.has_edge(walk[i - 1], walk[i]));
        }
    }
    EXPECT_EQ(s.steps_taken(), 4);
    EXPECT_THROW(s.move_to(kStop), std::invalid_argument);
}

TEST(Session, LambdaFollowsTheFusionLayer) {
    const auto env = generate_environment(5, 12, 6, 0.5);
    auto model = NavigatorModel::init(tiny_config(), 1);
    Rng rng(9);
    model.fusion = Linear::init(8, 1, rng);
    Tape t(false);
    EpisodeSession s(model, env, goal_episode(env, 1), t);
    const double lambda = s.step().scores.lambda;
    EXPECT_GT(lambda, 0.0);
    EXPECT_LT(lambda, 1.0);
    EXPECT_NE(lambda, 0.5);
}

TEST(Session, WithoutTopaInstructionIsTheContextualText) {
    const auto env = generate_environment(6, 12, 6, 0.5);
    ModelConfig c = tiny_config();
    c.use_topa = false;
    const auto model = NavigatorModel::init(c, 1);
    Tape t(false);
    EpisodeSession s(model, env, goal_episode(env, 0), t);
    EXPECT_EQ(s.instruction_features().id(), s.contextual_text().id());

    const auto with_topa = NavigatorModel::init(tiny_config(), 1);
    EpisodeSession s2(with_topa, env, goal_episode(env, 0), t);
    EXPECT_NE(s2.instruction_features().id(), s2.contextual_text().id());
    EXPECT_FALSE(s2.parsed().object_phrases.empty());
}

TEST(RunEpisode, ZeroStepBudgetStaysAtStart) {
    const auto env = generate_environment(7, 12, 6, 0.5);
    Episode ep = goal_episode(env, 0);
    ep.max_steps = 0;
    const auto log = run_episode(NavigatorModel::init(tiny_config(), 1), env, ep);
    EXPECT_EQ(log.nodes, (std::vector<NodeId>{ep.start_node}));
    EXPECT_TRUE(log.steps.empty());
    EXPECT_EQ(log.stop_reason, StopReason::step_limit);
    EXPECT_EQ(log.grounded_category.has_value(), !env.node(ep.start_node).objects.empty());
}

TEST(RunEpisode, DominantStopTokenStopsImmediately) {
    const auto env = generate_environment(8, 12, 6, 0.5);
    const Episode ep = goal_episode(env, 0);
    ModelConfig c = tiny_config();
    c.cross_layers = 0;
    auto model = NavigatorModel::init(c, 2);
    model.coarse_head = first_channel_head(8, 16);
    model.fine_head = zero_head(8, 16);
    model.coarse_pose = PoseEmbedding{Linear::zeros(kPoseCodeDim, 8), Linear::zeros(kPoseCodeDim, 8)};
    model.stop_token.value(0, 0) = 1e6;
    const auto log = run_episode(model, env, ep);
    EXPECT_EQ(log.nodes, (std::vector<NodeId>{ep.start_node}));
    ASSERT_EQ(log.steps.size(), 1u);
    EXPECT_EQ(log.steps[0].action, kStop);
    EXPECT_EQ(log.stop_reason, StopReason::stop_action);
}

TEST(RunEpisode, AllTiedScoresPickTheSmallestCandidate) {
    const auto env = generate_environment(9, 12, 6, 0.5);
    Episode ep = goal_episode(env, 0);
    ep.max_steps = 5;
    auto model = NavigatorModel::init(tiny_config(), 2);
    model.coarse_head = zero_head(8, 16);
    model.fine_head = zero_head(8, 16);
    const auto log = run_episode(model, env, ep);
    ASSERT_EQ(log.steps.size(), 5u);
    for (const auto& st : log.steps) {
        const auto& keys = st.scores.keys;
        EXPECT_EQ(st.action, *std::min_element(keys.begin() + 1, keys.end()));
    }
    EXPECT_EQ(log.stop_reason, StopReason::step_limit);
}

TEST(RunEpisode, WalksAreValidAndDeterministic) {
    const auto model = NavigatorModel::init(tiny_config(), 5);
    for (std::uint64_t s = 0; s < 6; ++s) {
        const auto env = generate_environment(20 + s, 15, 6, 0.5);
        const Episode ep = goal_episode(env, s);
        const auto log = run_episode(model, env, ep);
        EXPECT_EQ(log, run_episode(model, env, ep));
        EXPECT_EQ(log.nodes.front(), ep.start_node);
        EXPECT_LE(log.steps.size(), static_cast<std::size_t>(ep.max_steps));
        for (std::size_t i = 1; i < log.nodes.size(); ++i) {
            EXPECT_TRUE(env.has_edge(log.nodes[i - 1], log.nodes[i]));
        }
        if (log.grounded_category) {
            EXPECT_TRUE(env.node(log.nodes.back()).has_category(*log.grounded_category));
        }
        EXPECT_EQ(trajectory_from_json(nlohmann::json::parse(to_json(log).dump())), log);
    }
}

TEST(Checkpoint, RoundTripReproducesRollouts) {
    auto model = NavigatorModel::init(tiny_config(), 11);
    const auto doc = nlohmann::json::parse(model.to_checkpoint({{"note", "x"}}).dump());
    EXPECT_EQ(doc.at("meta").at("note"), "x");
    const auto back = NavigatorModel::from_checkpoint(doc);
    EXPECT_EQ(back.config, model.config);
    const auto env = generate_environment(31, 15, 6, 0.5);
    const Episode ep = goal_episode(env, 2);
    EXPECT_EQ(run_episode(back, env, ep), run_episode(model, env, ep));
    EXPECT_THROW(NavigatorModel::from_checkpoint(nlohmann::json::object()), CheckpointError);
}

TEST(ModelConfig, ValidationAndJson) {
    ModelConfig c = tiny_config();
    c.gate_mode = GateMode::attention_only;
    EXPECT_EQ(model_config_from_json(to_json(c)), c);
    c.heads = 3;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    EXPECT_THROW(model_config_from_json({{"gate_mode", "weird"}}), std::invalid_argument);
    EXPECT_THROW(NavigatorModel::init(c, 0), std::invalid_argument);
}

TEST(Session, GradientCheckThroughTwoSteps) {
    const auto env = generate_environment(12, 10, 6, 1.0);
    const Episode ep = goal_episode(env, 0);
    auto model = NavigatorModel::init(tiny_config(), 4);
    Rng rng(13);
    model.fusion = Linear::init(8, 1, rng);
    model.backtrack.value(0, 0) = 0.2;
    // Fixed second move: the first neighbor of the start.
    const NodeId next = env.neighbors(ep.start_node).front();
    const auto loss = [&](Tape& t) {
        EpisodeSession s(model, env, ep, t);
        StepOutput a = s.step();
        s.move_to(next);
        StepOutput b = s.step();
        Var total = add(cross_entropy(a.fused, 1), cross_entropy(b.fused, 0));
        if (b.grounding.valid()) {
            total = add(total, cross_entropy(b.grounding, 0));
        }
        return total;
    };
    GradCheckOptions o;
    o.max_coords_per_param = 2;
    const auto r = finite_diff_check(loss, model.named_params(), o);
    EXPECT_LT(r.max_relative_error, 1e-4) << r.worst;
    EXPECT_GT(r.checked, 100u);
}
