#include <gtest/gtest.h>

#include "vlnav/ablation.hpp"

using namespace vlnav;

namespace {

AblationConfig tiny_ablation() {
    AblationConfig c;
    c.train.model.d = 8;
    c.train.model.heads = 2;
    c.train.model.text_layers = 1;
    c.train.model.panorama_layers = 1;
    c.train.model.cross_layers = 1;
    c.train.model.ffn_hidden = 16;
    c.train.epochs = 1;
    c.train.self_test = false;
    c.train_data.num_nodes = 8;
    c.train_data.episodes_per_env = 2;
    c.eval_data = c.train_data;
    c.eval_data.env_seed = 900;
    c.seeds = {0, 1, 2};
    c.cells = {"baseline", "full", "full_no_ope"};
    return c;
}

}  // namespace

TEST(Ablation, CellsCoverModuleCombinationsThenGateRemoval) {
    const auto cells = ablation_cells();
    ASSERT_EQ(cells.size(), 7u);
    EXPECT_EQ(cells[0].name, "baseline");
    EXPECT_EQ(cells[0].flags, (AblationFlags{true, true, false}));
    EXPECT_EQ(cells[3].name, "full");
    EXPECT_EQ(cells[3].flags, (AblationFlags{false, false, false}));
    for (std::size_t i = 4; i < 7; ++i) {
        EXPECT_TRUE(cells[i].flags.no_ope);
        EXPECT_FALSE(cells[i].flags.no_topa && cells[i].flags.no_iopa);
    }
}

TEST(Ablation, FlagsComposeOntoTheModelConfig) {
    ModelConfig base;
    base.d = 16;
    const ModelConfig c = apply_flags(base, {true, false, true});
    EXPECT_FALSE(c.use_topa);
    EXPECT_TRUE(c.use_iopa);
    EXPECT_EQ(c.gate_mode, GateMode::attention_only);
    EXPECT_EQ(c.d, 16u);
    const ModelConfig full = apply_flags(c, {});
    EXPECT_TRUE(full.use_topa);
    EXPECT_TRUE(full.use_iopa);
    EXPECT_EQ(full.gate_mode, GateMode::gated);
}

TEST(Ablation, Median) {
    EXPECT_EQ(median({3.0}), 3.0);
    EXPECT_EQ(median({5.0, 1.0, 3.0}), 3.0);
    EXPECT_EQ(median({4.0, 1.0, 3.0, 2.0}), 2.5);
    EXPECT_THROW(median({}), std::invalid_argument);
}

TEST(Ablation, TinyRunProducesACompleteDeterministicReport) {
    const AblationConfig cfg = tiny_ablation();
    std::size_t calls = 0;
    const AblationReport r = run_ablation(cfg, [&](const std::string&, std::uint64_t, const MetricsReport&) { ++calls; });
    EXPECT_EQ(calls, 9u);
    ASSERT_EQ(r.cells.size(), 3u);
    for (const auto& c : r.cells) {
        ASSERT_EQ(c.per_seed.size(), 3u);
        std::vector<double> sr;
        for (const auto& m : c.per_seed) {
            sr.push_back(m.sr);
            EXPECT_EQ(m.episodes, 2u);
        }
        EXPECT_EQ(c.median_sr, median(sr));
    }
    const auto j = to_json(r);
    EXPECT_EQ(j.at("cells").size(), 3u);
    EXPECT_TRUE(j.at("orderings").contains("full_ge_baseline"));
    EXPECT_TRUE(j.at("orderings").contains("full_ge_full_no_ope"));
    EXPECT_FALSE(j.at("orderings").contains("full_ge_topa"));
    EXPECT_TRUE(j.at("metadata").contains("no_ope"));
    EXPECT_EQ(to_json(run_ablation(cfg)).dump(), j.dump());
    EXPECT_THROW(r.cell("nope"), std::out_of_range);
}

TEST(Ablation, RejectsUnknownCellsAndEmptySeeds) {
    AblationConfig cfg = tiny_ablation();
    cfg.cells = {"sideways"};
    EXPECT_THROW(run_ablation(cfg), std::invalid_argument);
    cfg = tiny_ablation();
    cfg.seeds.clear();
    EXPECT_THROW(run_ablation(cfg), std::invalid_argument);
}

TEST(Ablation, ConfigJsonRoundTrip) {
    const AblationConfig cfg = tiny_ablation();
    const AblationConfig back = ablation_config_from_json(to_json(cfg));
    EXPECT_EQ(back.seeds, cfg.seeds);
    EXPECT_EQ(back.cells, cfg.cells);
    EXPECT_EQ(back.train.model, cfg.train.model);
    EXPECT_EQ(back.eval_data.env_seed, 900u);
}
