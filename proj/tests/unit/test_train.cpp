#include <gtest/gtest.h>

#include <algorithm>

#include <cmath>

#include "test_support.hpp"
#include "vlnav/train.hpp"

using namespace vlnav;
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

TrainConfig tiny_train(int epochs) {
    TrainConfig c;
    c.model = tiny_config();
    c.epochs = epochs;
    c.dropout = 0.0;
    c.learning_rate = 5e-3;
    c.batch_size = 2;
    c.self_test = false;
    return c;
}

Dataset small_dataset(int envs, int episodes) {
    DatasetSpec s;
    s.num_envs = envs;
    s.num_nodes = 10;
    s.episodes_per_env = episodes;
    s.env_seed = 70;
    return generate_dataset(s);
}

}  // namespace

TEST(SapLoss, UniformScoresGiveLogK) {
    Tape t;
    const NodeId keys[] = {kStop, 2, 4, 9};
    Var fused = t.constant(Matrix(4, 1, 0.3));
    EXPECT_NEAR(sap_loss(fused, keys, 4).value()(0, 0), std::log(4.0), 1e-12);
    EXPECT_THROW(sap_loss(fused, keys, 3), std::invalid_argument);
}

TEST(SapLoss, MatchesLogSoftmaxOracle) {
    Rng rng(1);
    const NodeId keys[] = {kStop, 1, 5};
    const Matrix z = random_matrix(3, 1, rng, -4, 4);
    Tape t;
    const double denom = std::exp(z(0, 0)) + std::exp(z(1, 0)) + std::exp(z(2, 0));
    EXPECT_NEAR(sap_loss(t.constant(z), keys, kStop).value()(0, 0), std::log(denom) - z(0, 0), 1e-12);
    EXPECT_NEAR(sap_loss(t.constant(z), keys, 5).value()(0, 0), std::log(denom) - z(2, 0), 1e-12);
}

TEST(OgLoss, OracleAndMissingObjects) {
    Tape t;
    const Matrix z = Matrix::from_rows({{1.0}, {2.0}});
    EXPECT_NEAR(og_loss(t.constant(z), 0).value()(0, 0), std::log(std::exp(1.0) + std::exp(2.0)) - 1.0, 1e-12);
    EXPECT_THROW(og_loss(Var{}, 0), std::invalid_argument);
    EXPECT_THROW(og_loss(t.constant(Matrix(0, 1)), 0), std::invalid_argument);
}

TEST(TeacherForcing, LossIsMeanStepLossPlusWeightedGrounding) {
    // A goal holding a single object has zero grounding loss; pick one with several.
    const Dataset d = small_dataset(3, 4);
    const auto all = make_samples(d.envs, d.episodes);
    const auto it = std::find_if(all.begin(), all.end(), [](const TrainingSample& s) {
        return s.env->node(s.episode->goal_node).objects.size() > 1;
    });
    ASSERT_NE(it, all.end());
    const std::vector<TrainingSample> samples{*it};
    const auto model = NavigatorModel::init(tiny_config(), 3);
    Tape t;
    const EpisodeLoss l = teacher_forced_loss(model, samples[0], t, {}, 2.0);
    EXPECT_EQ(l.steps, it->episode->gt_path.size());
    EXPECT_NEAR(l.total.value()(0, 0), l.sap + 2.0 * l.og, 1e-12);
    EXPECT_GT(l.og, 0.0);
    Tape t2;
    const EpisodeLoss no_og = teacher_forced_loss(model, samples[0], t2, {}, 0.0);
    EXPECT_NEAR(no_og.total.value()(0, 0), l.sap, 1e-12);
    EXPECT_EQ(no_og.og, 0.0);
}

TEST(TeacherForcing, EmptyGroundTruthPathThrows) {
    Dataset d = small_dataset(1, 1);
    d.episodes[0].gt_path.clear();
    const auto samples = make_samples(d.envs, d.episodes);
    Tape t;
    EXPECT_THROW(teacher_forced_loss(NavigatorModel::init(tiny_config(), 1), samples[0], t, {}, 1.0),
                 std::invalid_argument);
}

TEST(AdamW, FirstStepMatchesOracle) {
    Param p{Matrix::from_rows({{1.0, -2.0}})};
    const NamedParam ps[] = {{"p", &p}};
    Gradients g;
    g.accumulate(&p, Matrix::from_rows({{0.5, -0.1}}));
    AdamW opt(0.9, 0.999, 0.1, 1e-8);
    opt.step(ps, g, 0.01);
    // After one bias-corrected step mhat = g and vhat = g^2.
    EXPECT_NEAR(p.value(0, 0), 1.0 - 0.01 * (0.5 / (0.5 + 1e-8) + 0.1 * 1.0), 1e-12);
    EXPECT_NEAR(p.value(0, 1), -2.0 - 0.01 * (-0.1 / (0.1 + 1e-8) + 0.1 * -2.0), 1e-12);
    EXPECT_EQ(opt.steps(), 1);
}

TEST(AdamW, SecondStepMatchesOracle) {
    Param p{Matrix::from_rows({{0.0}})};
    const NamedParam ps[] = {{"p", &p}};
    AdamW opt(0.9, 0.999, 0.0, 1e-8);
    Gradients g1;
    g1.accumulate(&p, Matrix::from_rows({{1.0}}));
    opt.step(ps, g1, 0.1);
    Gradients g2;
    g2.accumulate(&p, Matrix::from_rows({{-1.0}}));
    opt.step(ps, g2, 0.1);
    const double p1 = -0.1 * 1.0 / (1.0 + 1e-8);
    const double m = 0.9 * 0.1 + 0.1 * -1.0;
    const double v = 0.999 * 0.001 + 0.001 * 1.0;
    const double mhat = m / (1 - 0.81);
    const double vhat = v / (1 - 0.999 * 0.999);
    EXPECT_NEAR(p.value(0, 0), p1 - 0.1 * mhat / (std::sqrt(vhat) + 1e-8), 1e-12);
}

TEST(TrainLoop, ZeroEpochsLeaveParametersUnchangedAndLearningRateMustBePositive) {
    const Dataset d = small_dataset(1, 2);
    const auto samples = make_samples(d.envs, d.episodes);
    auto model = NavigatorModel::init(tiny_config(), 5);
    const auto before = model.to_checkpoint();
    TrainConfig c = tiny_train(0);
    train_loop(model, samples, c);
    EXPECT_EQ(model.to_checkpoint(), before);
    c.learning_rate = 0.0;
    EXPECT_THROW(train_loop(model, samples, c), std::invalid_argument);
    c.learning_rate = -1e-3;
    EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(TrainLoop, SameSeedGivesIdenticalCurves) {
    const Dataset d = small_dataset(2, 2);
    const auto samples = make_samples(d.envs, d.episodes);
    TrainConfig c = tiny_train(2);
    c.dropout = 0.5;
    auto a = NavigatorModel::init(tiny_config(), 1);
    auto b = NavigatorModel::init(tiny_config(), 1);
    const auto ra = train_loop(a, samples, c);
    const auto rb = train_loop(b, samples, c);
    ASSERT_EQ(ra.curve.size(), 2u);
    for (std::size_t i = 0; i < 2; ++i) {
        EXPECT_EQ(ra.curve[i].loss, rb.curve[i].loss);
        EXPECT_EQ(ra.curve[i].accuracy, rb.curve[i].accuracy);
    }
    EXPECT_EQ(a.to_checkpoint(), b.to_checkpoint());
}

TEST(TrainLoop, OverfitsASingleEpisode) {
    const Dataset d = small_dataset(1, 1);
    const auto samples = make_samples(d.envs, d.episodes);
    auto model = NavigatorModel::init(tiny_config(), 2);
    TrainConfig c = tiny_train(60);
    c.batch_size = 1;
    c.learning_rate = 1e-2;
    const auto r = train_loop(model, samples, c);
    EXPECT_LT(r.curve.back().loss, r.curve.front().loss);
    EXPECT_EQ(teacher_forced_accuracy(model, samples), 1.0);
    const auto log = run_episode(model, *samples[0].env, *samples[0].episode);
    EXPECT_EQ(log.nodes, samples[0].episode->gt_path);
    EXPECT_EQ(log.grounded_category, samples[0].episode->target_category);
}

TEST(TrainLoop, SelfTestPassesAndRejectsEmptyData) {
    const Dataset d = small_dataset(1, 1);
    const auto samples = make_samples(d.envs, d.episodes);
    auto model = NavigatorModel::init(tiny_config(), 6);
    TrainConfig c = tiny_train(0);
    c.self_test = true;
    const auto r = train_loop(model, samples, c);
    ASSERT_TRUE(r.self_test.has_value());
    EXPECT_LT(r.self_test->max_resolved_relative_error, 1e-4);
    EXPECT_LE(r.self_test->max_unresolved_gap, 1.0);
    EXPECT_GT(r.self_test->checked, 0u);
    EXPECT_THROW(train_loop(model, {}, c), std::invalid_argument);
}

TEST(TrainConfig, ValidationAndJson) {
    TrainConfig c;
    EXPECT_NO_THROW(c.validate());
    c.dropout = 1.0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = {};
    c.batch_size = 0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = {};
    c.learning_rate = -1;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = {};
    c.epochs = 3;
    c.model.d = 16;
    const TrainConfig back = train_config_from_json(to_json(c));
    EXPECT_EQ(back.epochs, 3);
    EXPECT_EQ(back.model.d, 16u);
    EXPECT_EQ(train_config_from_json(nlohmann::json::object()).dropout, TrainConfig{}.dropout);
}

TEST(MakeSamples, PairsEpisodesWithTheirEnvironment) {
    const Dataset d = small_dataset(2, 2);
    const auto samples = make_samples(d.envs, d.episodes);
    ASSERT_EQ(samples.size(), 4u);
    for (const auto& s : samples) {
        EXPECT_EQ(s.env->env_id(), s.episode->env_id);
    }
}
