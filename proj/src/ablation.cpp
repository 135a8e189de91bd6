#include "vlnav/ablation.hpp"

#include <algorithm>
#include <stdexcept>

namespace vlnav {

using nlohmann::json;

ModelConfig apply_flags(ModelConfig c, const AblationFlags& f) {
    c.use_topa = !f.no_topa;
    c.use_iopa = !f.no_iopa;
    c.gate_mode = f.no_ope ? GateMode::attention_only : GateMode::gated;
    return c;
}

std::vector<AblationCell> ablation_cells() {
    return {{"baseline", {true, true, false}},       {"topa", {false, true, false}},
            {"iopa", {true, false, false}},          {"full", {false, false, false}},
            {"topa_no_ope", {false, true, true}},    {"iopa_no_ope", {true, false, true}},
            {"full_no_ope", {false, false, true}}};
}

json to_json(const AblationConfig& c) {
    return {{"train", to_json(c.train)},
            {"train_data", to_json(c.train_data)},
            {"eval_data", to_json(c.eval_data)},
            {"seeds", c.seeds},
            {"cells", c.cells}};
}

AblationConfig ablation_config_from_json(const json& j, AblationConfig c) {
    if (j.contains("train")) {
        c.train = train_config_from_json(j.at("train"), c.train);
    }
    if (j.contains("train_data")) {
        c.train_data = dataset_spec_from_json(j.at("train_data"), c.train_data);
    }
    if (j.contains("eval_data")) {
        c.eval_data = dataset_spec_from_json(j.at("eval_data"), c.eval_data);
    }
    c.seeds = j.value("seeds", c.seeds);
    c.cells = j.value("cells", c.cells);
    return c;
}

const CellResult& AblationReport::cell(const std::string& name) const {
    for (const auto& c : cells) {
        if (c.cell.name == name) {
            return c;
        }
    }
    throw std::out_of_range("no ablation cell named " + name);
}

double median(std::vector<double> values) {
    if (values.empty()) {
        throw std::invalid_argument("median of an empty set");
    }
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

AblationReport run_ablation(const AblationConfig& config,
                            const std::function<void(const std::string&, std::uint64_t, const MetricsReport&)>& progress) {
    if (config.seeds.empty()) {
        throw std::invalid_argument("ablation needs at least one seed");
    }
    std::vector<AblationCell> cells;
    for (const auto& c : ablation_cells()) {
        if (config.cells.empty() || std::find(config.cells.begin(), config.cells.end(), c.name) != config.cells.end()) {
            cells.push_back(c);
        }
    }
    for (const auto& name : config.cells) {
        if (std::none_of(cells.begin(), cells.end(), [&](const AblationCell& c) { return c.name == name; })) {
            throw std::invalid_argument("unknown ablation cell " + name);
        }
    }

    const Dataset train_set = generate_dataset(config.train_data);
    const Dataset eval_set = generate_dataset(config.eval_data);
    const auto samples = make_samples(train_set.envs, train_set.episodes);

    AblationReport out;
    for (const auto& cell : cells) {
        CellResult result;
        result.cell = cell;
        std::vector<double> sr, spl_values, rgs;
        for (std::uint64_t seed : config.seeds) {
            TrainConfig tc = config.train;
            tc.seed = seed;
            tc.model = apply_flags(tc.model, cell.flags);
            NavigatorModel model = NavigatorModel::init(tc.model, seed);
            train_loop(model, samples, tc);
            std::vector<TrajectoryLog> logs;
            for (const auto& ep : eval_set.episodes) {
                logs.push_back(run_episode(model, environment_for(eval_set.envs, ep), ep));
            }
            MetricsReport r = report(logs, eval_set.episodes, eval_set.envs);
            sr.push_back(r.sr);
            spl_values.push_back(r.spl);
            rgs.push_back(r.rgs.value_or(0.0));
            if (progress) {
                progress(cell.name, seed, r);
            }
            result.per_seed.push_back(std::move(r));
        }
        result.median_sr = median(sr);
        result.median_spl = median(spl_values);
        result.median_rgs = median(rgs);
        out.cells.push_back(std::move(result));
    }
    return out;
}

json to_json(const AblationReport& r) {
    json cells = json::array();
    for (const auto& c : r.cells) {
        json seeds = json::array();
        for (const auto& m : c.per_seed) {
            seeds.push_back(to_json(m, false));
        }
        cells.push_back({{"name", c.cell.name},
                         {"flags",
                          {{"no_topa", c.cell.flags.no_topa},
                           {"no_iopa", c.cell.flags.no_iopa},
                           {"no_ope", c.cell.flags.no_ope}}},
                         {"per_seed", std::move(seeds)},
                         {"median", {{"SR", c.median_sr}, {"SPL", c.median_spl}, {"RGS", c.median_rgs}}}});
    }
    json orderings = json::object();
    auto has = [&](const std::string& n) {
        return std::any_of(r.cells.begin(), r.cells.end(), [&](const CellResult& c) { return c.cell.name == n; });
    };
    if (has("full")) {
        const double full = r.cell("full").median_sr;
        for (const char* other : {"baseline", "topa", "iopa", "full_no_ope"}) {
            if (has(other)) {
                orderings[std::string("full_ge_") + other] = full >= r.cell(other).median_sr;
            }
        }
    }
    return {{"cells", std::move(cells)},
            {"orderings", std::move(orderings)},
            {"metadata",
             {{"no_ope",
               "gate removed, attention kept: the enhancement block outputs the attended stream directly"},
              {"no_topa", "instruction features are the contextual text features"},
              {"no_iopa", "visual features are the fine cross-modal features"},
              {"statistic", "median over seeds of the held-out split"}}}};
}

}  // namespace vlnav
