#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vlnav/envsim.hpp"
#include "vlnav/layers.hpp"
#include "vlnav/textparse.hpp"

namespace vlnav {

/// Word table plus learned positional rows. Row 0 is the unknown-word row.
struct EmbeddingTable {
    std::map<std::string, std::size_t> vocab;
    Param table;       // V x d
    Param positional;  // L_max x d

    static constexpr const char* kUnknown = "<unk>";

    static EmbeddingTable init(const std::vector<std::string>& words, std::size_t d, std::size_t max_len, Rng& rng);

    std::size_t index_of(const std::string& word) const;
    std::size_t max_len() const { return positional.value.rows(); }
    std::size_t dim() const { return table.value.cols(); }

    template <class Fn>
    void visit(const std::string& prefix, Fn&& fn) {
        fn(prefix + ".table", table);
        fn(prefix + ".positional", positional);
    }
};

struct TextEmbeddings {
    Var full;     // E_I: one row per token
    Var objects;  // E_o: one row per object phrase
    Var actions;  // E_a: one row per action phrase
};

/// Row i is table[word_i] + positional[i] for each of the three sequences.
/// A multi-word phrase uses the mean of its word rows. Throws ShapeError when
/// a sequence exceeds the positional table.
TextEmbeddings embed_tokens(const ParsedInstruction& parsed, const EmbeddingTable& table, Tape& tape);

/// Self-attention + residual, then feedforward + residual.
struct TransformerLayer {
    MultiHeadAttention attn;
    FeedForward ff;

    static TransformerLayer init(std::size_t d, std::size_t heads, std::size_t hidden, Rng& rng);

    template <class Fn>
    void visit(const std::string& prefix, Fn&& fn) {
        attn.visit(prefix + ".attn", fn);
        ff.visit(prefix + ".ff", fn);
    }
};

struct TextEncoder {
    std::vector<TransformerLayer> layers;

    template <class Fn>
    void visit(const std::string& prefix, Fn&& fn) {
        for (std::size_t i = 0; i < layers.size(); ++i) {
            layers[i].visit(prefix + ".layer" + std::to_string(i), fn);
        }
    }
};

/// Contextual instruction features; shape preserved.
Var encode_text(Var embedded, const TextEncoder& enc);

/// Maps raw scene codes into the model dimension.
struct FeatureProjection {
    Linear view;    // kRawDim -> d
    Linear object;  // kRawDim -> d

    template <class Fn>
    void visit(const std::string& prefix, Fn&& fn) {
        view.visit(prefix + ".view", fn);
        object.visit(prefix + ".object", fn);
    }
};

struct VisualFeatures {
    Var views;    // n x d
    Var objects;  // m x d (m may be 0)
};

VisualFeatures extract_features(const Observation& obs, const FeatureProjection& proj, Tape& tape);

struct PanoramaEncoder {
    std::vector<MultiHeadAttention> layers;

    template <class Fn>
    void visit(const std::string& prefix, Fn&& fn) {
        for (std::size_t i = 0; i < layers.size(); ++i) {
            layers[i].visit(prefix + ".layer" + std::to_string(i), fn);
        }
    }
};

/// Joint self-attention (+ residual) over [views; objects], split back at the
/// original row boundary.
std::pair<Var, Var> encode_panorama(Var views, Var objects, const PanoramaEncoder& enc);

/// Polar pose of a row relative to some origin.
struct PoseCode {
    double heading = 0.0;
    double pitch = 0.0;
    double distance = 0.0;
    double steps = 0.0;

    /// sin/cos of heading and pitch, scaled distance, scaled step count.
    std::array<double, 6> features() const;
};
inline constexpr std::size_t kPoseCodeDim = 6;

struct RowPose {
    PoseCode start_relative;     // where the row sits relative to the episode start
    PoseCode neighbor_relative;  // where the row sits relative to the current node
};

struct PoseEmbedding {
    Linear start_relative;     // kPoseCodeDim -> d
    Linear neighbor_relative;  // kPoseCodeDim -> d

    static PoseEmbedding init(std::size_t d, Rng& rng);

    template <class Fn>
    void visit(const std::string& prefix, Fn&& fn) {
        start_relative.visit(prefix + ".start", fn);
        neighbor_relative.visit(prefix + ".neighbor", fn);
    }
};

/// X + start_embed(pose) + neighbor_embed(pose), row by row.
Var add_pose_embeddings(Var x, std::span<const RowPose> poses, const PoseEmbedding& p);

struct CrossModalLayer {
    MultiHeadAttention vis_from_txt;
    MultiHeadAttention txt_from_vis;
    FeedForward vis_ff;
    FeedForward txt_ff;

    static CrossModalLayer init(std::size_t d, std::size_t heads, std::size_t hidden, Rng& rng);

    template <class Fn>
    void visit(const std::string& prefix, Fn&& fn) {
        vis_from_txt.visit(prefix + ".vis_from_txt", fn);
        txt_from_vis.visit(prefix + ".txt_from_vis", fn);
        vis_ff.visit(prefix + ".vis_ff", fn);
        txt_ff.visit(prefix + ".txt_ff", fn);
    }
};

struct CrossModalEncoder {
    std::vector<CrossModalLayer> layers;

    template <class Fn>
    void visit(const std::string& prefix, Fn&& fn) {
        for (std::size_t i = 0; i < layers.size(); ++i) {
            layers[i].visit(prefix + ".layer" + std::to_string(i), fn);
        }
    }
};

/// Per layer both streams cross-attend to the other stream's previous state,
/// then each gets its own feedforward; residuals around every sub-block.
/// An empty stream short-circuits to the unchanged inputs.
std::pair<Var, Var> cross_modal_encode(Var vis, Var txt, const CrossModalEncoder& enc);

}  // namespace vlnav
