// Command-line front end: gen, parse, train, eval, ablate.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "vlnav/ablation.hpp"
#include "vlnav/checkpoint.hpp"
#include "vlnav/metrics.hpp"
#include "vlnav/policy.hpp"
#include "vlnav/textparse.hpp"
#include "vlnav/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace vlnav;

namespace {

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

json load_config(const std::string& path) {
    if (path.empty()) {
        return json::object();
    }
    json j = read_json_file(path);
    if (!j.is_object()) {
        throw UsageError("config file must hold a JSON object: " + path);
    }
    return j;
}

/// Environments from a file or a directory of *.json files, plus episodes.
Dataset load_dataset(const fs::path& envs_path, const fs::path& episodes_path) {
    Dataset ds;
    std::vector<fs::path> files;
    if (fs::is_directory(envs_path)) {
        for (const auto& entry : fs::directory_iterator(envs_path)) {
            if (entry.path().extension() == ".json") {
                files.push_back(entry.path());
            }
        }
        std::sort(files.begin(), files.end());
    } else {
        files.push_back(envs_path);
    }
    if (files.empty()) {
        throw UsageError("no environment files under " + envs_path.string());
    }
    for (const auto& f : files) {
        EnvironmentGraph env = environment_from_json(read_json_file(f));
        const std::string id = env.env_id();
        if (!ds.envs.emplace(id, std::move(env)).second) {
            throw UsageError("duplicate environment id " + id);
        }
    }
    for (const auto& j : read_jsonl_file(episodes_path)) {
        ds.episodes.push_back(episode_from_json(j));
        environment_for(ds.envs, ds.episodes.back());
    }
    return ds;
}

struct DataPaths {
    std::string data_dir;
    std::string envs;
    std::string episodes;

    void add_to(CLI::App* cmd) {
        cmd->add_option("--data", data_dir, "Directory written by `gen` (envs/ and episodes.jsonl)");
        cmd->add_option("--envs", envs, "Environment JSON file or directory");
        cmd->add_option("--episodes", episodes, "Episode JSONL file");
    }

    Dataset load(const json& cfg) const {
        fs::path e = !envs.empty() ? fs::path(envs) : fs::path(cfg.value("envs", std::string{}));
        fs::path p = !episodes.empty() ? fs::path(episodes) : fs::path(cfg.value("episodes", std::string{}));
        const std::string dir = !data_dir.empty() ? data_dir : cfg.value("data", std::string{});
        if (!dir.empty()) {
            if (e.empty()) {
                e = fs::path(dir) / "envs";
            }
            if (p.empty()) {
                p = fs::path(dir) / "episodes.jsonl";
            }
        }
        if (e.empty() || p.empty()) {
            throw UsageError("environments and episodes required: pass --data or --envs and --episodes");
        }
        return load_dataset(e, p);
    }
};

template <class T>
void override_if(const CLI::Option* opt, T& field, const T& value) {
    if (opt->count() > 0) {
        field = value;
    }
}

// ---------------------------------------------------------------------------

struct GenArgs {
    std::string config;
    std::string out;
    DatasetSpec spec;
    std::string mode;
    CLI::Option* opts[8]{};
};

int cmd_gen(const GenArgs& a) {
    const json cfg = load_config(a.config);
    DatasetSpec spec = dataset_spec_from_json(cfg.value("dataset", json::object()));
    override_if(a.opts[0], spec.env_seed, a.spec.env_seed);
    override_if(a.opts[1], spec.num_envs, a.spec.num_envs);
    override_if(a.opts[2], spec.num_nodes, a.spec.num_nodes);
    override_if(a.opts[3], spec.num_views, a.spec.num_views);
    override_if(a.opts[4], spec.object_density, a.spec.object_density);
    override_if(a.opts[5], spec.episodes_per_env, a.spec.episodes_per_env);
    override_if(a.opts[6], spec.episode_seed, a.spec.episode_seed);
    override_if(a.opts[7], spec.max_steps, a.spec.max_steps);
    if (!a.mode.empty()) {
        spec.mode = parse_mode(a.mode);
    }
    const std::string out = !a.out.empty() ? a.out : cfg.value("out", std::string{});
    if (out.empty()) {
        throw UsageError("gen: --out is required");
    }

    const Dataset ds = generate_dataset(spec);
    const fs::path root(out);
    fs::create_directories(root / "envs");
    std::size_t nodes = 0;
    std::size_t edges = 0;
    for (const auto& [id, env] : ds.envs) {
        env.validate();
        write_json_file(root / "envs" / (id + ".json"), to_json(env));
        nodes += env.size();
        edges += env.edges().size();
    }
    std::vector<json> eps;
    double hops = 0.0;
    for (const auto& e : ds.episodes) {
        eps.push_back(to_json(e));
        hops += static_cast<double>(e.gt_path.size()) - 1.0;
    }
    write_jsonl_file(root / "episodes.jsonl", eps);
    write_json_file(root / "dataset.json", to_json(spec));
    const json summary = {{"environments", ds.envs.size()},
                          {"episodes", ds.episodes.size()},
                          {"nodes", nodes},
                          {"edges", edges},
                          {"mean_path_edges", ds.episodes.empty() ? 0.0 : hops / double(ds.episodes.size())},
                          {"out", root.string()}};
    std::cout << summary.dump() << '\n';
    return 0;
}

// ---------------------------------------------------------------------------

struct ParseArgs {
    std::string config;
    std::vector<std::string> text;
    std::string input;
    std::string lexicon;
};

int cmd_parse(const ParseArgs& a) {
    const json cfg = load_config(a.config);
    const std::string lex_path = !a.lexicon.empty() ? a.lexicon : cfg.value("lexicon", std::string{});
    const Lexicon lex = lex_path.empty() ? Lexicon::builtin() : Lexicon::from_json(read_json_file(lex_path));
    lex.validate();
    std::vector<std::string> lines = a.text;
    if (!a.input.empty()) {
        std::ifstream in(a.input);
        if (!in) {
            throw UsageError("cannot read " + a.input);
        }
        std::string line;
        while (std::getline(in, line)) {
            lines.push_back(line);
        }
    }
    if (lines.empty()) {
        throw UsageError("parse: pass --text or --input");
    }
    for (const auto& l : lines) {
        json j = to_json(parse_oap(tokenize(l), lex));
        j["text"] = l;
        std::cout << j.dump() << '\n';
    }
    return 0;
}

// ---------------------------------------------------------------------------

struct TrainFlags {
    TrainConfig values;
    bool no_topa = false;
    bool no_iopa = false;
    bool no_ope = false;
    bool no_self_test = false;
    std::vector<std::pair<std::string, CLI::Option*>> opts;

    void add_to(CLI::App* cmd) {
        auto add = [&](const std::string& flag, auto& field, const std::string& help) {
            opts.emplace_back(flag, cmd->add_option("--" + flag, field, help));
        };
        add("lr", values.learning_rate, "Learning rate");
        add("epochs", values.epochs, "Training epochs");
        add("dropout", values.dropout, "Dropout rate on projected visual features");
        add("seed", values.seed, "Seed for initialization, shuffling and dropout");
        add("og-weight", values.og_weight, "Weight of the object-grounding loss");
        add("batch-size", values.batch_size, "Episodes per optimizer step");
        add("weight-decay", values.weight_decay, "Decoupled weight decay");
        add("clip-norm", values.clip_norm, "Global gradient-norm clip (0 disables)");
        add("d", values.model.d, "Model dimension");
        add("heads", values.model.heads, "Attention heads");
        add("text-layers", values.model.text_layers, "Text encoder layers");
        add("panorama-layers", values.model.panorama_layers, "Panorama encoder layers");
        add("cross-layers", values.model.cross_layers, "Cross-modal layers per encoder");
        add("ffn-hidden", values.model.ffn_hidden, "Feedforward hidden width");
        cmd->add_flag("--no-topa", no_topa, "Bypass the text-side enhancement block");
        cmd->add_flag("--no-iopa", no_iopa, "Bypass the image-side enhancement block");
        cmd->add_flag("--no-ope", no_ope, "Drop the gate; enhancement outputs the attended stream");
        cmd->add_flag("--no-self-test", no_self_test, "Skip the startup gradient check");
    }

    TrainConfig resolve(const json& cfg) const {
        TrainConfig c = train_config_from_json(cfg.value("train", json::object()));
        for (const auto& [flag, opt] : opts) {
            if (opt->count() == 0) {
                continue;
            }
            if (flag == "lr") c.learning_rate = values.learning_rate;
            else if (flag == "epochs") c.epochs = values.epochs;
            else if (flag == "dropout") c.dropout = values.dropout;
            else if (flag == "seed") c.seed = values.seed;
            else if (flag == "og-weight") c.og_weight = values.og_weight;
            else if (flag == "batch-size") c.batch_size = values.batch_size;
            else if (flag == "weight-decay") c.weight_decay = values.weight_decay;
            else if (flag == "clip-norm") c.clip_norm = values.clip_norm;
            else if (flag == "d") c.model.d = values.model.d;
            else if (flag == "heads") c.model.heads = values.model.heads;
            else if (flag == "text-layers") c.model.text_layers = values.model.text_layers;
            else if (flag == "panorama-layers") c.model.panorama_layers = values.model.panorama_layers;
            else if (flag == "cross-layers") c.model.cross_layers = values.model.cross_layers;
            else if (flag == "ffn-hidden") c.model.ffn_hidden = values.model.ffn_hidden;
        }
        AblationFlags f;
        const json ab = cfg.value("ablation", json::object());
        f.no_topa = no_topa || ab.value("no_topa", false);
        f.no_iopa = no_iopa || ab.value("no_iopa", false);
        f.no_ope = no_ope || ab.value("no_ope", false);
        if (f.no_topa || f.no_iopa || f.no_ope) {
            c.model = apply_flags(c.model, f);
        }
        if (no_self_test) {
            c.self_test = false;
        }
        c.validate();
        return c;
    }
};

struct TrainArgs {
    std::string config;
    DataPaths data;
    TrainFlags flags;
    std::string out;
    std::string loss_log;
};

int cmd_train(const TrainArgs& a) {
    const json cfg = load_config(a.config);
    const TrainConfig tc = a.flags.resolve(cfg);
    const std::string out = !a.out.empty() ? a.out : cfg.value("checkpoint", std::string{});
    if (out.empty()) {
        throw UsageError("train: --out is required");
    }
    const Dataset ds = a.data.load(cfg);
    if (ds.episodes.empty()) {
        throw UsageError("train: the episode file is empty");
    }
    const auto samples = make_samples(ds.envs, ds.episodes);
    NavigatorModel model = NavigatorModel::init(tc.model, tc.seed);

    const std::string loss_path = !a.loss_log.empty() ? a.loss_log : fs::path(out).replace_extension(".loss.jsonl").string();
    std::vector<json> curve;
    const TrainResult result = train_loop(model, samples, tc, [&](const EpochStats& s) {
        curve.push_back(to_json(s));
        std::cerr << curve.back().dump() << '\n';
    });
    write_jsonl_file(loss_path, curve);
    json meta = {{"train", to_json(tc)}, {"episodes", ds.episodes.size()}};
    if (result.self_test) {
        meta["self_test"] = {{"max_relative_error", result.self_test->max_relative_error},
                             {"max_resolved_relative_error", result.self_test->max_resolved_relative_error},
                             {"unresolved", result.self_test->unresolved},
                             {"checked", result.self_test->checked},
                             {"skipped", result.self_test->skipped}};
    }
    write_json_file(out, model.to_checkpoint(meta));
    json summary = {{"checkpoint", out}, {"loss_log", loss_path}, {"parameters", model.parameter_count()}};
    if (!result.curve.empty()) {
        summary["final"] = to_json(result.curve.back());
    }
    std::cout << summary.dump() << '\n';
    return 0;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
    std::string config;
    DataPaths data;
    std::string checkpoint;
    std::string trajectories;
    std::string trajectories_out;
    std::string out;
    std::string csv;
};

int cmd_eval(const EvalArgs& a) {
    const json cfg = load_config(a.config);
    const Dataset ds = a.data.load(cfg);
    const std::string traj_in = !a.trajectories.empty() ? a.trajectories : cfg.value("trajectories", std::string{});
    const std::string ckpt = !a.checkpoint.empty() ? a.checkpoint : cfg.value("checkpoint", std::string{});

    std::vector<TrajectoryLog> logs;
    if (!traj_in.empty()) {
        for (const auto& j : read_jsonl_file(traj_in)) {
            logs.push_back(trajectory_from_json(j));
        }
    } else if (!ckpt.empty()) {
        const NavigatorModel model = NavigatorModel::from_checkpoint(read_json_file(ckpt));
        for (const auto& ep : ds.episodes) {
            logs.push_back(run_episode(model, environment_for(ds.envs, ep), ep));
        }
        if (!a.trajectories_out.empty()) {
            std::vector<json> docs;
            for (const auto& l : logs) {
                docs.push_back(to_json(l));
            }
            write_jsonl_file(a.trajectories_out, docs);
        }
    } else {
        throw UsageError("eval: pass --trajectories or --checkpoint");
    }

    // Align trajectories with episodes by id.
    std::vector<Episode> episodes;
    for (const auto& l : logs) {
        auto it = std::find_if(ds.episodes.begin(), ds.episodes.end(),
                               [&](const Episode& e) { return e.episode_id == l.episode_id; });
        if (it == ds.episodes.end()) {
            throw UsageError("trajectory for unknown episode " + l.episode_id);
        }
        episodes.push_back(*it);
    }
    const MetricsReport r = report(logs, episodes, ds.envs);
    const json doc = to_json(r);
    if (!a.out.empty()) {
        write_json_file(a.out, doc);
    }
    if (!a.csv.empty()) {
        std::ofstream os(a.csv);
        if (!os) {
            throw UsageError("cannot write " + a.csv);
        }
        os << per_episode_csv(r);
    }
    std::cout << to_json(r, false).dump() << '\n';
    return 0;
}

// ---------------------------------------------------------------------------

struct AblateArgs {
    std::string config;
    std::string out;
    std::vector<std::uint64_t> seeds;
    std::vector<std::string> cells;
    int epochs = 0;
    CLI::Option* epochs_opt = nullptr;
};

int cmd_ablate(const AblateArgs& a) {
    const json cfg = load_config(a.config);
    AblationConfig ac = ablation_config_from_json(cfg);
    if (!a.seeds.empty()) {
        ac.seeds = a.seeds;
    }
    if (!a.cells.empty()) {
        ac.cells = a.cells;
    }
    if (a.epochs_opt->count() > 0) {
        ac.train.epochs = a.epochs;
    }
    const AblationReport r = run_ablation(ac, [](const std::string& cell, std::uint64_t seed, const MetricsReport& m) {
        std::cerr << json{{"cell", cell}, {"seed", seed}, {"SR", m.sr}, {"SPL", m.spl}}.dump() << '\n';
    });
    json doc = to_json(r);
    doc["config"] = to_json(ac);
    if (!a.out.empty()) {
        write_json_file(a.out, doc);
    }
    std::cout << doc.dump() << '\n';
    return 0;
}

int emit_error(const std::string& type, const std::string& message, int code) {
    std::cerr << json{{"error", {{"type", type}, {"message", message}}}}.dump() << '\n';
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Object-enhanced vision-and-language navigation on synthetic graphs"};
    app.require_subcommand(1);

    GenArgs gen;
    auto* g = app.add_subcommand("gen", "Generate environments and episodes");
    g->add_option("--config", gen.config, "JSON config file");
    g->add_option("--out", gen.out, "Output directory");
    gen.opts[0] = g->add_option("--seed", gen.spec.env_seed, "First environment seed");
    gen.opts[1] = g->add_option("--num-envs", gen.spec.num_envs, "Number of environments");
    gen.opts[2] = g->add_option("--nodes", gen.spec.num_nodes, "Nodes per environment");
    gen.opts[3] = g->add_option("--views", gen.spec.num_views, "Views per panorama");
    gen.opts[4] = g->add_option("--density", gen.spec.object_density, "Mean objects per node");
    gen.opts[5] = g->add_option("--episodes", gen.spec.episodes_per_env, "Episodes per environment");
    gen.opts[6] = g->add_option("--episode-seed", gen.spec.episode_seed, "First episode seed");
    gen.opts[7] = g->add_option("--max-steps", gen.spec.max_steps, "Decision budget per episode");
    g->add_option("--mode", gen.mode, "goal or path");

    ParseArgs parse;
    auto* p = app.add_subcommand("parse", "Extract object and action phrases");
    p->add_option("--config", parse.config, "JSON config file");
    p->add_option("--text", parse.text, "Instruction text (repeatable)");
    p->add_option("--input", parse.input, "File with one instruction per line");
    p->add_option("--lexicon", parse.lexicon, "Lexicon JSON file");

    TrainArgs train;
    auto* t = app.add_subcommand("train", "Train a navigator by teacher forcing");
    t->add_option("--config", train.config, "JSON config file");
    train.data.add_to(t);
    train.flags.add_to(t);
    t->add_option("--out", train.out, "Checkpoint path");
    t->add_option("--loss-log", train.loss_log, "Loss curve JSONL path");

    EvalArgs eval;
    auto* e = app.add_subcommand("eval", "Score trajectories or roll out a checkpoint");
    e->add_option("--config", eval.config, "JSON config file");
    eval.data.add_to(e);
    e->add_option("--checkpoint", eval.checkpoint, "Checkpoint to roll out");
    e->add_option("--trajectories", eval.trajectories, "Trajectory JSONL to score");
    e->add_option("--trajectories-out", eval.trajectories_out, "Where to write rollout trajectories");
    e->add_option("--out", eval.out, "Metrics report JSON path");
    e->add_option("--csv", eval.csv, "Per-episode CSV path");

    AblateArgs ablate;
    auto* a = app.add_subcommand("ablate", "Train and evaluate the enhancement-module grid");
    a->add_option("--config", ablate.config, "JSON config file");
    a->add_option("--out", ablate.out, "Report JSON path");
    a->add_option("--seeds", ablate.seeds, "Training seeds");
    a->add_option("--cells", ablate.cells, "Cells to run (default: all)");
    ablate.epochs_opt = a->add_option("--epochs", ablate.epochs, "Override training epochs");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& ex) {
        return app.exit(ex);
    } catch (const CLI::ParseError& ex) {
        return emit_error("usage", ex.what(), 2);
    }

    try {
        if (g->parsed()) return cmd_gen(gen);
        if (p->parsed()) return cmd_parse(parse);
        if (t->parsed()) return cmd_train(train);
        if (e->parsed()) return cmd_eval(eval);
        if (a->parsed()) return cmd_ablate(ablate);
    } catch (const UsageError& ex) {
        return emit_error("usage", ex.what(), 2);
    } catch (const TrainingDiverged& ex) {
        return emit_error("diverged", ex.what(), 3);
    } catch (const nlohmann::json::exception& ex) {
        return emit_error("invalid_json", ex.what(), 1);
    } catch (const std::exception& ex) {
        return emit_error("failure", ex.what(), 1);
    }
    return emit_error("usage", "no subcommand", 2);
}
