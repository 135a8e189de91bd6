#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include <nlohmann/json.hpp>

#include "vlnav/policy.hpp"

namespace vlnav {

struct TrainConfig {
    ModelConfig model;
    double learning_rate = 1e-3;
    int epochs = 10;
    double dropout = 0.7;
    std::uint64_t seed = 0;
    double og_weight = 1.0;
    std::size_t batch_size = 8;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double weight_decay = 0.01;
    double adam_eps = 1e-8;
    /// Global gradient-norm clip; 0 disables clipping.
    double clip_norm = 0.0;
    bool self_test = true;
    std::size_t self_test_coords = 1;
    double self_test_tolerance = 1e-4;

    /// Throws std::invalid_argument when a field is out of range.
    void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
/// Missing keys keep their values from `base`; "model" overlays the model config.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

class TrainingDiverged : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct TrainingSample {
    const EnvironmentGraph* env;
    const Episode* episode;
};

/// Pairs each episode with its environment.
std::vector<TrainingSample> make_samples(const EnvironmentSet& envs, std::span<const Episode> episodes);

/// -log softmax(fused)[gt]. Throws std::invalid_argument when gt is not a key.
Var sap_loss(Var fused, std::span<const NodeId> keys, NodeId gt);
/// Cross-entropy over object rows. Throws std::invalid_argument without objects.
Var og_loss(Var object_scores, std::size_t gt_index);

struct EpisodeLoss {
    Var total;  // mean SAP over steps + og_weight * OG
    double sap = 0.0;
    double og = 0.0;
    std::size_t steps = 0;
    std::size_t correct = 0;
};

/// Rolls along gt_path forcing the ground-truth action at every step.
EpisodeLoss teacher_forced_loss(const NavigatorModel& model, const TrainingSample& sample, Tape& tape,
                                SessionOptions options, double og_weight);

/// Fraction of teacher-forced steps whose selected action matches the ground truth.
double teacher_forced_accuracy(const NavigatorModel& model, std::span<const TrainingSample> samples);

/// Adaptive moments with decoupled weight decay.
class AdamW {
public:
    AdamW(double beta1, double beta2, double weight_decay, double eps);
    void step(std::span<const NamedParam> params, const Gradients& grads, double lr);
    long steps() const { return t_; }

private:
    double beta1_, beta2_, weight_decay_, eps_;
    long t_ = 0;
    std::vector<Matrix> m_, v_;
};

struct EpochStats {
    int epoch = 0;
    double loss = 0.0;
    double sap = 0.0;
    double og = 0.0;
    double accuracy = 0.0;  // teacher-forced, with dropout active
};

nlohmann::json to_json(const EpochStats& s);

struct TrainResult {
    std::vector<EpochStats> curve;
    std::optional<GradCheckResult> self_test;
};

/// Gradient check of the training loss on one sample (dropout off).
GradCheckResult training_self_test(NavigatorModel& model, const TrainingSample& sample, const TrainConfig& config);

/// Trains in place. Deterministic in config.seed. Throws TrainingDiverged on a
/// non-finite loss and std::runtime_error when the self-test fails.
TrainResult train_loop(NavigatorModel& model, std::span<const TrainingSample> data, const TrainConfig& config,
                       const std::function<void(const EpochStats&)>& on_epoch = {});

}  // namespace vlnav
