#include "vlnav/policy.hpp"

#include <algorithm>
#include <stdexcept>

#include "vlnav/checkpoint.hpp"

namespace vlnav {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration and parameters.

void ModelConfig::validate() const {
    if (d == 0 || heads == 0 || d % heads != 0) {
        throw std::invalid_argument("model: d must be a positive multiple of heads");
    }
    if (ffn_hidden == 0 || max_len == 0) {
        throw std::invalid_argument("model: ffn_hidden and max_len must be positive");
    }
}

namespace {

const char* gate_mode_name(GateMode m) { return m == GateMode::gated ? "gated" : "attention_only"; }

GateMode parse_gate_mode(const std::string& s) {
    if (s == "gated") {
        return GateMode::gated;
    }
    if (s == "attention_only") {
        return GateMode::attention_only;
    }
    throw std::invalid_argument("unknown gate mode: " + s);
}

}  // namespace

json to_json(const ModelConfig& c) {
    return {{"d", c.d},
            {"heads", c.heads},
            {"text_layers", c.text_layers},
            {"panorama_layers", c.panorama_layers},
            {"cross_layers", c.cross_layers},
            {"ffn_hidden", c.ffn_hidden},
            {"max_len", c.max_len},
            {"use_topa", c.use_topa},
            {"use_iopa", c.use_iopa},
            {"gate_mode", gate_mode_name(c.gate_mode)}};
}

ModelConfig model_config_from_json(const json& j, ModelConfig c) {
    c.d = j.value("d", c.d);
    c.heads = j.value("heads", c.heads);
    c.text_layers = j.value("text_layers", c.text_layers);
    c.panorama_layers = j.value("panorama_layers", c.panorama_layers);
    c.cross_layers = j.value("cross_layers", c.cross_layers);
    c.ffn_hidden = j.value("ffn_hidden", c.ffn_hidden);
    c.max_len = j.value("max_len", c.max_len);
    c.use_topa = j.value("use_topa", c.use_topa);
    c.use_iopa = j.value("use_iopa", c.use_iopa);
    if (j.contains("gate_mode")) {
        c.gate_mode = parse_gate_mode(j.at("gate_mode").get<std::string>());
    }
    c.validate();
    return c;
}

NavigatorModel NavigatorModel::init(const ModelConfig& config, std::uint64_t seed, Lexicon lexicon) {
    config.validate();
    lexicon.validate();
    const std::size_t d = config.d;
    const std::size_t h = config.heads;
    const std::size_t hidden = config.ffn_hidden;
    Rng rng(seed);

    NavigatorModel m;
    m.config = config;
    m.lexicon = std::move(lexicon);
    m.embedding = EmbeddingTable::init(m.lexicon.all_words(), d, config.max_len, rng);
    for (std::size_t i = 0; i < config.text_layers; ++i) {
        m.text_encoder.layers.push_back(TransformerLayer::init(d, h, hidden, rng));
    }
    m.projection = {Linear::init(kRawDim, d, rng), Linear::init(kRawDim, d, rng)};
    for (std::size_t i = 0; i < config.panorama_layers; ++i) {
        m.panorama.layers.push_back(MultiHeadAttention::init(d, h, rng));
    }
    m.object_pose = PoseEmbedding::init(d, rng);
    m.fine_pose = PoseEmbedding::init(d, rng);
    m.coarse_pose = PoseEmbedding::init(d, rng);
    for (std::size_t i = 0; i < config.cross_layers; ++i) {
        m.object_encoder.layers.push_back(CrossModalLayer::init(d, h, hidden, rng));
        m.fine_encoder.layers.push_back(CrossModalLayer::init(d, h, hidden, rng));
        m.coarse_encoder.layers.push_back(CrossModalLayer::init(d, h, hidden, rng));
    }
    m.topa = OpeBlock::init(d, h, rng);
    m.iopa = OpeBlock::init(d, h, rng);
    m.fine_head = FeedForward::init(d, hidden, 1, rng);
    m.coarse_head = FeedForward::init(d, hidden, 1, rng);
    m.ground_head = FeedForward::init(d, hidden, 1, rng);
    m.stop_token.value = Matrix(1, d);
    for (double& v : m.stop_token.value.data()) {
        v = rng.uniform(-1.0, 1.0);
    }
    m.backtrack.value = Matrix(1, 1);
    m.fusion = Linear::zeros(d, 1);
    return m;
}

std::vector<NamedParam> NavigatorModel::named_params() {
    std::vector<NamedParam> out;
    visit([&](const std::string& name, Param& p) { out.push_back({name, &p}); });
    return out;
}

std::size_t NavigatorModel::parameter_count() {
    std::size_t n = 0;
    visit([&](const std::string&, Param& p) { n += p.value.size(); });
    return n;
}

json NavigatorModel::to_checkpoint(const json& extra_meta) {
    json meta = extra_meta.is_object() ? extra_meta : json::object();
    meta["model"] = to_json(config);
    meta["lexicon"] = lexicon.to_json();
    const auto params = named_params();
    return checkpoint_to_json(meta, params);
}

NavigatorModel NavigatorModel::from_checkpoint(const json& doc) {
    if (!doc.is_object() || !doc.contains("meta") || !doc.at("meta").contains("model")) {
        throw CheckpointError("checkpoint has no meta.model section");
    }
    const json& meta = doc.at("meta");
    const ModelConfig config = model_config_from_json(meta.at("model"));
    Lexicon lex = meta.contains("lexicon") ? Lexicon::from_json(meta.at("lexicon")) : Lexicon::builtin();
    NavigatorModel m = init(config, 0, std::move(lex));
    const auto params = m.named_params();
    load_params(doc, params);
    return m;
}

// ---------------------------------------------------------------------------
// Scoring primitives.

Var fine_scores(Var view_rows, std::span<const NeighborPose> neighbors, const FeedForward& head) {
    if (view_rows.rows() == 0) {
        throw ShapeError("fine_scores: no view rows");
    }
    Var stop = ffn(mean_rows(view_rows), head);
    if (neighbors.empty()) {
        return stop;
    }
    Var per_view = ffn(view_rows, head);
    std::vector<std::size_t> idx;
    for (const auto& nb : neighbors) {
        if (nb.view_index >= view_rows.rows()) {
            throw ShapeError("fine_scores: neighbor view index out of range");
        }
        idx.push_back(nb.view_index);
    }
    const Var parts[] = {stop, gather_rows(per_view, std::move(idx))};
    return concat_rows(parts);
}

Var coarse_scores(Var node_rows, Var text, const CrossModalEncoder& enc, const FeedForward& head) {
    if (node_rows.rows() == 0) {
        throw ShapeError("coarse_scores: no node rows");
    }
    return ffn(cross_modal_encode(node_rows, text, enc).first, head);
}

Var lift_local_to_global(Var local, std::span<const NodeId> local_keys, std::span<const NodeId> global_keys,
                         Var backtrack) {
    if (local.rows() != local_keys.size() || local.cols() != 1) {
        throw ShapeError("lift_local_to_global: local scores must be a column aligned with its keys");
    }
    if (backtrack.rows() != 1 || backtrack.cols() != 1) {
        throw ShapeError("lift_local_to_global: BACKTRACK must be 1x1");
    }
    std::vector<std::size_t> idx;
    idx.reserve(global_keys.size());
    for (NodeId k : global_keys) {
        auto it = std::find(local_keys.begin(), local_keys.end(), k);
        idx.push_back(it == local_keys.end() ? local_keys.size()
                                             : static_cast<std::size_t>(it - local_keys.begin()));
    }
    const Var parts[] = {local, backtrack};
    return gather_rows(concat_rows(parts), std::move(idx));
}

FusedScores fuse_scores(Var global, Var lifted, Var pooled, const Linear& fusion) {
    if (global.rows() != lifted.rows() || global.cols() != 1 || lifted.cols() != 1) {
        throw std::invalid_argument("fuse_scores: score key sets differ");
    }
    Var lambda = sigmoid(linear(pooled, fusion));
    Var fused = add(scale_by(global, lambda), scale_by(lifted, one_minus(lambda)));
    return {fused, lambda};
}

std::vector<double> fuse_scores(std::span<const double> global, std::span<const double> lifted, double lambda) {
    if (global.size() != lifted.size()) {
        throw std::invalid_argument("fuse_scores: score key sets differ");
    }
    std::vector<double> out(global.size());
    for (std::size_t i = 0; i < global.size(); ++i) {
        out[i] = lambda * global[i] + (1.0 - lambda) * lifted[i];
    }
    return out;
}

NodeId select_action(std::span<const NodeId> keys, std::span<const double> scores) {
    if (keys.empty() || keys.size() != scores.size()) {
        throw std::invalid_argument("select_action: empty or mismatched scores");
    }
    std::optional<std::size_t> best_node;
    std::optional<std::size_t> stop;
    for (std::size_t i = 0; i < keys.size(); ++i) {
        if (keys[i] == kStop) {
            stop = i;
            continue;
        }
        if (!best_node || scores[i] > scores[*best_node] ||
            (scores[i] == scores[*best_node] && keys[i] < keys[*best_node])) {
            best_node = i;
        }
    }
    if (stop && (!best_node || scores[*stop] > scores[*best_node])) {
        return kStop;
    }
    return keys[*best_node];
}

std::optional<std::size_t> ground_object(const Matrix& object_scores) {
    if (object_scores.rows() == 0) {
        return std::nullopt;
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < object_scores.rows(); ++i) {
        if (object_scores(i, 0) > object_scores(best, 0)) {
            best = i;
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// Episode session.

namespace {

PoseCode relative_pose(const Vec3& from, const Vec3& to, double steps) {
    return {heading_to(from, to), 0.0, distance(from, to), steps};
}

std::vector<double> column_values(Var v) {
    const Matrix& m = v.value();
    std::vector<double> out(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        out[i] = m(i, 0);
    }
    return out;
}

}  // namespace

EpisodeSession::EpisodeSession(const NavigatorModel& model, const EnvironmentGraph& env, const Episode& episode,
                               Tape& tape, SessionOptions options)
    : model_(model),
      env_(env),
      episode_(episode),
      tape_(tape),
      options_(options),
      dropout_rng_(options.dropout_seed),
      current_(episode.start_node) {
    if (!env.valid_node(episode.start_node)) {
        throw std::invalid_argument("episode start node is not in the environment");
    }
    const auto tokens = tokenize(episode.instruction_text);
    parsed_ = parse_oap(tokens, model.lexicon);
    ParsedInstruction lemmas = parsed_;
    for (auto& t : lemmas.tokens) {
        t = lemmatize(t, model.lexicon);
    }
    const TextEmbeddings e = embed_tokens(lemmas, model.embedding, tape);
    object_phrases_ = e.objects;
    contextual_ = encode_text(e.full, model.text_encoder);
    instruction_ = model.config.use_topa
                       ? topa(contextual_, e.objects, e.actions, model.topa, model.config.gate_mode)
                       : contextual_;
}

StepOutput EpisodeSession::step() {
    const ModelConfig& cfg = model_.config;
    const Observation obs = observe(env_, current_);
    const Vec3 start_pos = env_.node(episode_.start_node).position;
    const double t = static_cast<double>(step_);

    VisualFeatures vf = extract_features(obs, model_.projection, tape_);
    if (options_.training) {
        vf.views = dropout(vf.views, options_.dropout, dropout_rng_, true);
        vf.objects = dropout(vf.objects, options_.dropout, dropout_rng_, true);
    }
    auto [views, objects] = encode_panorama(vf.views, vf.objects, model_.panorama);
    const std::size_t n = views.rows();
    const std::size_t m = objects.rows();

    const PoseCode here = relative_pose(start_pos, obs.position, t);
    std::vector<RowPose> poses;
    poses.reserve(n + m);
    for (const auto& v : obs.viewpoints) {
        const double reach = v.neighbor >= 0 ? env_.edge_length(obs.node, v.neighbor) : 0.0;
        poses.push_back({here, {v.heading, v.pitch, reach, 0.0}});
    }
    for (const auto& o : obs.objects) {
        const auto& v = obs.viewpoints.at(o.viewpoint_index);
        poses.push_back({here, {v.heading, v.pitch, 0.0, 0.0}});
    }
    const std::span<const RowPose> object_poses(poses.data() + n, m);

    // Object-level, fine-scale, and image-side enhancement.
    Var integrated_objects = objects;
    if (m > 0) {
        integrated_objects =
            cross_modal_encode(add_pose_embeddings(objects, object_poses, model_.object_pose), object_phrases_,
                               model_.object_encoder)
                .first;
    }
    Var fine_in = views;
    if (m > 0) {
        const Var parts[] = {views, objects};
        fine_in = concat_rows(parts);
    }
    fine_in = add_pose_embeddings(fine_in, poses, model_.fine_pose);
    Var fine = cross_modal_encode(fine_in, instruction_, model_.fine_encoder).first;
    Var enhanced = cfg.use_iopa ? iopa(fine, integrated_objects, model_.iopa, cfg.gate_mode) : fine;
    Var view_rows = slice_rows(enhanced, 0, n);

    StepOutput out;
    Var local = fine_scores(view_rows, obs.neighbors, model_.fine_head);
    Var pooled = mean_rows(view_rows);

    std::vector<Var> facing;
    std::vector<Matrix> facing_values;
    for (const auto& nb : obs.neighbors) {
        facing.push_back(slice_rows(view_rows, nb.view_index, nb.view_index + 1));
        facing_values.push_back(facing.back().value());
    }
    map_.update(obs, pooled.value(), facing_values, step_);

    // Node features stay on the tape so gradients reach earlier steps.
    node_features_[current_] = pooled;
    for (std::size_t i = 0; i < obs.neighbors.size(); ++i) {
        if (map_.entry(obs.neighbors[i].id).state == NodeState::navigable) {
            node_features_[obs.neighbors[i].id] = facing[i];
        }
    }

    // Coarse scale over [STOP; every map node].
    std::vector<Var> rows{tape_.param(model_.stop_token)};
    std::vector<RowPose> coarse_poses{RowPose{}};
    std::vector<NodeId> row_keys{kStop};
    for (const auto& [id, entry] : map_.entries()) {
        rows.push_back(node_features_.at(id));
        coarse_poses.push_back({relative_pose(start_pos, entry.position, entry.step),
                                relative_pose(obs.position, entry.position, t - entry.step)});
        row_keys.push_back(id);
    }
    Var node_rows = add_pose_embeddings(concat_rows(rows), coarse_poses, model_.coarse_pose);
    Var all_scores = coarse_scores(node_rows, instruction_, model_.coarse_encoder, model_.coarse_head);

    ActionScores& s = out.scores;
    s.keys.push_back(kStop);
    std::vector<std::size_t> global_idx{0};
    for (std::size_t i = 1; i < row_keys.size(); ++i) {
        if (row_keys[i] != current_) {
            s.keys.push_back(row_keys[i]);
            global_idx.push_back(i);
        }
    }
    Var global = gather_rows(all_scores, std::move(global_idx));

    s.local_keys.push_back(kStop);
    for (const auto& nb : obs.neighbors) {
        s.local_keys.push_back(nb.id);
    }
    Var lifted = lift_local_to_global(local, s.local_keys, s.keys, tape_.param(model_.backtrack));
    const FusedScores fused = fuse_scores(global, lifted, pooled, model_.fusion);

    s.global = column_values(global);
    s.local = column_values(local);
    s.lifted = column_values(lifted);
    s.fused = column_values(fused.fused);
    s.lambda = fused.lambda.value()(0, 0);
    out.fused = fused.fused;

    if (m > 0) {
        out.grounding = ffn(slice_rows(enhanced, n, n + m), model_.ground_head);
        for (const auto& o : obs.objects) {
            out.object_categories.push_back(o.category);
        }
    }
    ++step_;
    return out;
}

std::vector<NodeId> EpisodeSession::move_to(NodeId target) {
    if (target == kStop || !env_.valid_node(target)) {
        throw std::invalid_argument("move_to: invalid target " + std::to_string(target));
    }
    std::vector<NodeId> walk;
    if (env_.has_edge(current_, target)) {
        walk.push_back(target);
    } else {
        walk = map_.route_to(env_, target);
    }
    current_ = target;
    return walk;
}

// ---------------------------------------------------------------------------
// Trajectories.

std::string stop_reason_name(StopReason r) { return r == StopReason::stop_action ? "stop-action" : "step-limit"; }

namespace {

StopReason parse_stop_reason(const std::string& s) {
    if (s == "stop-action") {
        return StopReason::stop_action;
    }
    if (s == "step-limit") {
        return StopReason::step_limit;
    }
    throw std::invalid_argument("unknown stop reason: " + s);
}

json scores_to_json(const ActionScores& s) {
    return {{"keys", s.keys},     {"global", s.global},         {"lifted", s.lifted}, {"fused", s.fused},
            {"local", s.local},   {"local_keys", s.local_keys}, {"lambda", s.lambda}};
}

ActionScores scores_from_json(const json& j) {
    ActionScores s;
    s.keys = j.at("keys").get<std::vector<NodeId>>();
    s.global = j.at("global").get<std::vector<double>>();
    s.lifted = j.at("lifted").get<std::vector<double>>();
    s.fused = j.at("fused").get<std::vector<double>>();
    s.local_keys = j.at("local_keys").get<std::vector<NodeId>>();
    s.local = j.at("local").get<std::vector<double>>();
    s.lambda = j.at("lambda").get<double>();
    return s;
}

}  // namespace

json to_json(const TrajectoryLog& log) {
    json steps = json::array();
    for (const auto& st : log.steps) {
        steps.push_back({{"node", st.node}, {"action", st.action}, {"scores", scores_to_json(st.scores)}});
    }
    return {{"episode_id", log.episode_id},
            {"env_id", log.env_id},
            {"nodes", log.nodes},
            {"steps", std::move(steps)},
            {"grounded_category", log.grounded_category ? json(*log.grounded_category) : json(nullptr)},
            {"stop_reason", stop_reason_name(log.stop_reason)}};
}

TrajectoryLog trajectory_from_json(const json& j) {
    TrajectoryLog log;
    log.episode_id = j.at("episode_id").get<std::string>();
    log.env_id = j.value("env_id", std::string{});
    log.nodes = j.at("nodes").get<std::vector<NodeId>>();
    if (log.nodes.empty()) {
        throw std::invalid_argument("trajectory " + log.episode_id + " has no nodes");
    }
    for (const auto& js : j.value("steps", json::array())) {
        log.steps.push_back({js.at("node").get<NodeId>(), js.at("action").get<NodeId>(),
                             scores_from_json(js.at("scores"))});
    }
    if (j.contains("grounded_category") && !j.at("grounded_category").is_null()) {
        log.grounded_category = j.at("grounded_category").get<std::string>();
    }
    log.stop_reason = parse_stop_reason(j.at("stop_reason").get<std::string>());
    return log;
}

TrajectoryLog run_episode(const NavigatorModel& model, const EnvironmentGraph& env, const Episode& episode) {
    Tape tape(false);
    EpisodeSession session(model, env, episode, tape);
    TrajectoryLog log;
    log.episode_id = episode.episode_id;
    log.env_id = episode.env_id;
    log.nodes.push_back(episode.start_node);

    std::optional<StepOutput> last;
    for (int t = 0; t < episode.max_steps; ++t) {
        StepOutput out = session.step();
        const NodeId action = select_action(out.scores.keys, out.scores.fused);
        log.steps.push_back({session.current(), action, out.scores});
        if (action == kStop) {
            log.stop_reason = StopReason::stop_action;
            last = std::move(out);
            break;
        }
        const auto walk = session.move_to(action);
        log.nodes.insert(log.nodes.end(), walk.begin(), walk.end());
    }
    if (episode.target_category) {
        if (!last) {
            // Step limit: perceive the final node once more to ground.
            last = session.step();
        }
        if (last->grounding.valid()) {
            if (auto idx = ground_object(last->grounding.value())) {
                log.grounded_category = last->object_categories.at(*idx);
            }
        }
    }
    return log;
}

}  // namespace vlnav
