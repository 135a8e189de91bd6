#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vlnav/metrics.hpp"
#include "vlnav/train.hpp"

namespace vlnav {

/// Bypass flags; all three set reduces the model to the unenhanced baseline.
struct AblationFlags {
    bool no_topa = false;
    bool no_iopa = false;
    bool no_ope = false;

    friend bool operator==(const AblationFlags&, const AblationFlags&) = default;
};

/// Applies the flags on top of a model configuration.
ModelConfig apply_flags(ModelConfig c, const AblationFlags& f);

struct AblationCell {
    std::string name;
    AblationFlags flags;
};

/// The four enhancement-module combinations, then gate removal for every
/// combination that still has an enhancement block.
std::vector<AblationCell> ablation_cells();

struct AblationConfig {
    TrainConfig train;
    DatasetSpec train_data;
    DatasetSpec eval_data;
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
    /// Cell names to run; empty runs every cell.
    std::vector<std::string> cells;
};

nlohmann::json to_json(const AblationConfig& c);
AblationConfig ablation_config_from_json(const nlohmann::json& j, AblationConfig base = {});

struct CellResult {
    AblationCell cell;
    std::vector<MetricsReport> per_seed;
    double median_sr = 0.0;
    double median_spl = 0.0;
    double median_rgs = 0.0;
};

struct AblationReport {
    std::vector<CellResult> cells;
    const CellResult& cell(const std::string& name) const;
};

double median(std::vector<double> values);

/// Trains and evaluates every requested cell for every seed, sequentially.
AblationReport run_ablation(const AblationConfig& config,
                            const std::function<void(const std::string& cell, std::uint64_t seed,
                                                     const MetricsReport& r)>& progress = {});

/// Per-cell reports and medians, the ordering checks, and a note on how the
/// gate-removal cells are built.
nlohmann::json to_json(const AblationReport& r);

}  // namespace vlnav
