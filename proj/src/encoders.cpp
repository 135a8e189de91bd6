#include "vlnav/encoders.hpp"

#include <cmath>
#include <sstream>

namespace vlnav {

EmbeddingTable EmbeddingTable::init(const std::vector<std::string>& words, std::size_t d, std::size_t max_len,
                                    Rng& rng) {
    EmbeddingTable t;
    t.vocab.emplace(kUnknown, 0);
    for (const auto& w : words) {
        t.vocab.emplace(w, t.vocab.size());
    }
    t.table.value = Matrix(t.vocab.size(), d);
    for (double& v : t.table.value.data()) {
        v = rng.uniform(-1.0, 1.0);
    }
    t.positional.value = Matrix(max_len, d);
    for (double& v : t.positional.value.data()) {
        v = rng.uniform(-0.1, 0.1);
    }
    return t;
}

std::size_t EmbeddingTable::index_of(const std::string& word) const {
    auto it = vocab.find(word);
    return it == vocab.end() ? 0 : it->second;
}

namespace {

Var embed_sequence(const std::vector<std::string>& items, const EmbeddingTable& table, Tape& tape) {
    const std::size_t d = table.dim();
    if (items.size() > table.max_len()) {
        throw ShapeError("sequence of length " + std::to_string(items.size()) + " exceeds the positional table (" +
                         std::to_string(table.max_len()) + ")");
    }
    if (items.empty()) {
        return tape.constant(Matrix(0, d));
    }
    // Each row selects (and averages) the words of one item.
    Matrix select(items.size(), table.vocab.size());
    for (std::size_t i = 0; i < items.size(); ++i) {
        std::istringstream is(items[i]);
        std::vector<std::size_t> idx;
        std::string w;
        while (is >> w) {
            idx.push_back(table.index_of(w));
        }
        if (idx.empty()) {
            idx.push_back(0);
        }
        for (std::size_t k : idx) {
            select(i, k) += 1.0 / static_cast<double>(idx.size());
        }
    }
    Var words = matmul(tape.constant(std::move(select)), tape.param(table.table));
    return add(words, slice_rows(tape.param(table.positional), 0, items.size()));
}

}  // namespace

TextEmbeddings embed_tokens(const ParsedInstruction& parsed, const EmbeddingTable& table, Tape& tape) {
    return {embed_sequence(parsed.tokens, table, tape), embed_sequence(parsed.object_phrases, table, tape),
            embed_sequence(parsed.action_phrases, table, tape)};
}

TransformerLayer TransformerLayer::init(std::size_t d, std::size_t heads, std::size_t hidden, Rng& rng) {
    TransformerLayer l;
    l.attn = MultiHeadAttention::init(d, heads, rng);
    l.ff = FeedForward::init(d, hidden, d, rng);
    return l;
}

Var encode_text(Var embedded, const TextEncoder& enc) {
    if (embedded.rows() == 0) {
        throw ShapeError("encode_text: empty instruction");
    }
    Var x = embedded;
    for (const auto& layer : enc.layers) {
        x = add(x, attention(x, x, layer.attn));
        x = add(x, ffn(x, layer.ff));
    }
    return x;
}

VisualFeatures extract_features(const Observation& obs, const FeatureProjection& proj, Tape& tape) {
    auto rows_of = [](auto const& items) {
        Matrix m(items.size(), kRawDim);
        for (std::size_t i = 0; i < items.size(); ++i) {
            const auto& raw = items[i].raw_descriptor;
            if (raw.size() != kRawDim) {
                throw ShapeError("raw descriptor of width " + std::to_string(raw.size()));
            }
            std::copy(raw.begin(), raw.end(), m.row(i).begin());
        }
        return m;
    };
    Var views = linear(tape.constant(rows_of(obs.viewpoints)), proj.view);
    Var objects = linear(tape.constant(rows_of(obs.objects)), proj.object);
    return {views, objects};
}

std::pair<Var, Var> encode_panorama(Var views, Var objects, const PanoramaEncoder& enc) {
    if (objects.rows() > 0 && objects.cols() != views.cols()) {
        throw ShapeError("encode_panorama: feature dims differ");
    }
    const std::size_t n = views.rows();
    const std::size_t m = objects.rows();
    Var x = views;
    if (m > 0) {
        const Var parts[] = {views, objects};
        x = concat_rows(parts);
    }
    for (const auto& layer : enc.layers) {
        x = add(x, attention(x, x, layer));
    }
    if (m == 0) {
        return {x, objects};
    }
    return {slice_rows(x, 0, n), slice_rows(x, n, n + m)};
}

std::array<double, 6> PoseCode::features() const {
    return {std::sin(heading), std::cos(heading), std::sin(pitch), std::cos(pitch), distance / 10.0, steps / 10.0};
}

PoseEmbedding PoseEmbedding::init(std::size_t d, Rng& rng) {
    return {Linear::init(kPoseCodeDim, d, rng), Linear::init(kPoseCodeDim, d, rng)};
}

Var add_pose_embeddings(Var x, std::span<const RowPose> poses, const PoseEmbedding& p) {
    if (poses.size() != x.rows()) {
        throw ShapeError("add_pose_embeddings: " + std::to_string(poses.size()) + " poses for " +
                         std::to_string(x.rows()) + " rows");
    }
    if (x.rows() == 0) {
        return x;
    }
    Matrix start(poses.size(), kPoseCodeDim);
    Matrix neighbor(poses.size(), kPoseCodeDim);
    for (std::size_t i = 0; i < poses.size(); ++i) {
        const auto s = poses[i].start_relative.features();
        const auto nb = poses[i].neighbor_relative.features();
        std::copy(s.begin(), s.end(), start.row(i).begin());
        std::copy(nb.begin(), nb.end(), neighbor.row(i).begin());
    }
    Tape& t = x.tape();
    Var out = add(x, linear(t.constant(std::move(start)), p.start_relative));
    return add(out, linear(t.constant(std::move(neighbor)), p.neighbor_relative));
}

CrossModalLayer CrossModalLayer::init(std::size_t d, std::size_t heads, std::size_t hidden, Rng& rng) {
    CrossModalLayer l;
    l.vis_from_txt = MultiHeadAttention::init(d, heads, rng);
    l.txt_from_vis = MultiHeadAttention::init(d, heads, rng);
    l.vis_ff = FeedForward::init(d, hidden, d, rng);
    l.txt_ff = FeedForward::init(d, hidden, d, rng);
    return l;
}

std::pair<Var, Var> cross_modal_encode(Var vis, Var txt, const CrossModalEncoder& enc) {
    if (vis.rows() == 0 || txt.rows() == 0) {
        return {vis, txt};
    }
    if (vis.cols() != txt.cols()) {
        throw ShapeError("cross_modal_encode: stream widths differ");
    }
    for (const auto& layer : enc.layers) {
        Var v = add(vis, attention(vis, txt, layer.vis_from_txt));
        Var t = add(txt, attention(txt, vis, layer.txt_from_vis));
        vis = add(v, ffn(v, layer.vis_ff));
        txt = add(t, ffn(t, layer.txt_ff));
    }
    return {vis, txt};
}

}  // namespace vlnav
