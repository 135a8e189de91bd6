#include "vlnav/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace vlnav {

using nlohmann::json;

void TrainConfig::validate() const {
    model.validate();
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        throw std::invalid_argument("learning_rate must be finite and positive");
    }
    if (epochs < 0) {
        throw std::invalid_argument("epochs must be non-negative");
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) {
        throw std::invalid_argument("dropout must be in [0, 1)");
    }
    if (batch_size == 0) {
        throw std::invalid_argument("batch_size must be positive");
    }
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        throw std::invalid_argument("AdamW betas must be in [0, 1)");
    }
    if (weight_decay < 0.0 || adam_eps <= 0.0 || clip_norm < 0.0 || og_weight < 0.0) {
        throw std::invalid_argument("weight_decay, clip_norm and og_weight must be non-negative, adam_eps positive");
    }
}

json to_json(const TrainConfig& c) {
    return {{"model", to_json(c.model)},
            {"learning_rate", c.learning_rate},
            {"epochs", c.epochs},
            {"dropout", c.dropout},
            {"seed", c.seed},
            {"og_weight", c.og_weight},
            {"batch_size", c.batch_size},
            {"beta1", c.beta1},
            {"beta2", c.beta2},
            {"weight_decay", c.weight_decay},
            {"adam_eps", c.adam_eps},
            {"clip_norm", c.clip_norm},
            {"self_test", c.self_test},
            {"self_test_coords", c.self_test_coords},
            {"self_test_tolerance", c.self_test_tolerance}};
}

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
    if (j.contains("model")) {
        c.model = model_config_from_json(j.at("model"), c.model);
    }
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.epochs = j.value("epochs", c.epochs);
    c.dropout = j.value("dropout", c.dropout);
    c.seed = j.value("seed", c.seed);
    c.og_weight = j.value("og_weight", c.og_weight);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.adam_eps = j.value("adam_eps", c.adam_eps);
    c.clip_norm = j.value("clip_norm", c.clip_norm);
    c.self_test = j.value("self_test", c.self_test);
    c.self_test_coords = j.value("self_test_coords", c.self_test_coords);
    c.self_test_tolerance = j.value("self_test_tolerance", c.self_test_tolerance);
    c.validate();
    return c;
}

std::vector<TrainingSample> make_samples(const EnvironmentSet& envs, std::span<const Episode> episodes) {
    std::vector<TrainingSample> out;
    out.reserve(episodes.size());
    for (const auto& e : episodes) {
        out.push_back({&environment_for(envs, e), &e});
    }
    return out;
}

Var sap_loss(Var fused, std::span<const NodeId> keys, NodeId gt) {
    auto it = std::find(keys.begin(), keys.end(), gt);
    if (it == keys.end()) {
        throw std::invalid_argument("sap_loss: ground-truth action " + std::to_string(gt) + " is not a score key");
    }
    if (fused.rows() != keys.size()) {
        throw ShapeError("sap_loss: scores and keys differ in length");
    }
    return cross_entropy(fused, static_cast<std::size_t>(it - keys.begin()));
}

Var og_loss(Var object_scores, std::size_t gt_index) {
    if (!object_scores.valid() || object_scores.rows() == 0) {
        throw std::invalid_argument("og_loss: no objects at the node");
    }
    return cross_entropy(object_scores, gt_index);
}

EpisodeLoss teacher_forced_loss(const NavigatorModel& model, const TrainingSample& sample, Tape& tape,
                                SessionOptions options, double og_weight) {
    const Episode& ep = *sample.episode;
    if (ep.gt_path.empty()) {
        throw std::invalid_argument("episode " + ep.episode_id + " has an empty gt_path");
    }
    EpisodeSession session(model, *sample.env, ep, tape, options);
    EpisodeLoss result;
    std::vector<Var> step_losses;
    Var og;
    for (std::size_t t = 0; t < ep.gt_path.size(); ++t) {
        const bool last = t + 1 == ep.gt_path.size();
        const NodeId target = last ? kStop : ep.gt_path[t + 1];
        StepOutput out = session.step();
        step_losses.push_back(sap_loss(out.fused, out.scores.keys, target));
        if (select_action(out.scores.keys, out.scores.fused) == target) {
            ++result.correct;
        }
        if (last && ep.target_category && og_weight > 0.0) {
            auto it = std::find(out.object_categories.begin(), out.object_categories.end(), *ep.target_category);
            if (it == out.object_categories.end()) {
                throw std::invalid_argument("episode " + ep.episode_id + ": goal holds no " + *ep.target_category);
            }
            og = og_loss(out.grounding, static_cast<std::size_t>(it - out.object_categories.begin()));
        }
        if (!last) {
            session.move_to(target);
        }
    }
    result.steps = step_losses.size();
    const Var stacked = concat_rows(step_losses);
    Var total = weighted_sum(stacked, Matrix(stacked.rows(), 1, 1.0 / static_cast<double>(stacked.rows())));
    result.sap = total.value()(0, 0);
    if (og.valid()) {
        result.og = og.value()(0, 0);
        total = add(total, scale(og, og_weight));
    }
    result.total = total;
    return result;
}

double teacher_forced_accuracy(const NavigatorModel& model, std::span<const TrainingSample> samples) {
    std::size_t steps = 0;
    std::size_t correct = 0;
    for (const auto& s : samples) {
        Tape tape(false);
        const EpisodeLoss l = teacher_forced_loss(model, s, tape, {}, 0.0);
        steps += l.steps;
        correct += l.correct;
    }
    return steps == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(steps);
}

AdamW::AdamW(double beta1, double beta2, double weight_decay, double eps)
    : beta1_(beta1), beta2_(beta2), weight_decay_(weight_decay), eps_(eps) {}

void AdamW::step(std::span<const NamedParam> params, const Gradients& grads, double lr) {
    if (m_.empty()) {
        for (const auto& p : params) {
            m_.emplace_back(p.param->value.rows(), p.param->value.cols());
            v_.emplace_back(p.param->value.rows(), p.param->value.cols());
        }
    }
    if (m_.size() != params.size()) {
        throw std::logic_error("AdamW: parameter list changed between steps");
    }
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Matrix& w = params[i].param->value;
        const Matrix g = grads.get(*params[i].param);
        Matrix& m = m_[i];
        Matrix& v = v_[i];
        for (std::size_t k = 0; k < w.size(); ++k) {
            m[k] = beta1_ * m[k] + (1.0 - beta1_) * g[k];
            v[k] = beta2_ * v[k] + (1.0 - beta2_) * g[k] * g[k];
            const double mhat = m[k] / c1;
            const double vhat = v[k] / c2;
            w[k] -= lr * (mhat / (std::sqrt(vhat) + eps_) + weight_decay_ * w[k]);
        }
    }
}

json to_json(const EpochStats& s) {
    return {{"epoch", s.epoch}, {"loss", s.loss}, {"sap", s.sap}, {"og", s.og}, {"accuracy", s.accuracy}};
}

GradCheckResult training_self_test(NavigatorModel& model, const TrainingSample& sample, const TrainConfig& config) {
    const auto params = model.named_params();
    GradCheckOptions opts;
    opts.max_coords_per_param = config.self_test_coords;
    opts.sample_seed = config.seed;
    opts.tolerance = config.self_test_tolerance;
    const LossFn loss = [&](Tape& tape) { return teacher_forced_loss(model, sample, tape, {}, config.og_weight).total; };
    return finite_diff_check(loss, params, opts);
}

namespace {

double global_norm(std::span<const NamedParam> params, const Gradients& grads) {
    double sq = 0.0;
    for (const auto& p : params) {
        for (double g : grads.get(*p.param).data()) {
            sq += g * g;
        }
    }
    return std::sqrt(sq);
}

}  // namespace

TrainResult train_loop(NavigatorModel& model, std::span<const TrainingSample> data, const TrainConfig& config,
                       const std::function<void(const EpochStats&)>& on_epoch) {
    config.validate();
    if (data.empty()) {
        throw std::invalid_argument("train_loop: empty dataset");
    }
    TrainResult result;
    const auto params = model.named_params();
    if (config.self_test) {
        result.self_test = training_self_test(model, data.front(), config);
        const GradCheckResult& st = *result.self_test;
        if (!(st.max_resolved_relative_error < config.self_test_tolerance) || st.max_unresolved_gap > 1.0) {
            std::ostringstream msg;
            msg << "gradient self-test failed: max resolved relative error " << st.max_resolved_relative_error
                << ", unresolved gap " << st.max_unresolved_gap << " (strict worst at " << st.worst << ")";
            throw std::runtime_error(msg.str());
        }
    }

    AdamW opt(config.beta1, config.beta2, config.weight_decay, config.adam_eps);
    std::vector<std::size_t> order(data.size());
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng shuffle_rng(mix_seed(config.seed, static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(order);

        EpochStats stats;
        stats.epoch = epoch;
        std::size_t steps = 0;
        std::size_t correct = 0;
        for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
            const std::size_t e = std::min(order.size(), b + config.batch_size);
            Gradients batch;
            for (std::size_t i = b; i < e; ++i) {
                const std::size_t idx = order[i];
                Tape tape;
                SessionOptions opts;
                opts.training = true;
                opts.dropout = config.dropout;
                opts.dropout_seed = mix_seed(mix_seed(config.seed, 0x5eed), mix_seed(epoch, idx));
                const EpisodeLoss l = teacher_forced_loss(model, data[idx], tape, opts, config.og_weight);
                const double value = l.total.value()(0, 0);
                if (!std::isfinite(value)) {
                    std::ostringstream msg;
                    msg << "non-finite loss in epoch " << epoch << " on episode " << data[idx].episode->episode_id;
                    throw TrainingDiverged(msg.str());
                }
                batch.merge(tape.backward(l.total));
                stats.loss += value;
                stats.sap += l.sap;
                stats.og += l.og;
                steps += l.steps;
                correct += l.correct;
            }
            batch.scale(1.0 / static_cast<double>(e - b));
            if (config.clip_norm > 0.0) {
                const double norm = global_norm(params, batch);
                if (norm > config.clip_norm) {
                    batch.scale(config.clip_norm / norm);
                }
            }
            opt.step(params, batch, config.learning_rate);
        }
        const double n = static_cast<double>(data.size());
        stats.loss /= n;
        stats.sap /= n;
        stats.og /= n;
        stats.accuracy = steps == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(steps);
        result.curve.push_back(stats);
        if (on_epoch) {
            on_epoch(stats);
        }
    }
    return result;
}

}  // namespace vlnav
