#include "vlnav/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace vlnav {

namespace {

Matrix uniform_matrix(std::size_t r, std::size_t c, double bound, Rng& rng) {
    Matrix m(r, c);
    for (double& v : m.data()) {
        v = rng.uniform(-bound, bound);
    }
    return m;
}

}  // namespace

Linear Linear::init(std::size_t in, std::size_t out, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    Linear l;
    l.weight.value = uniform_matrix(in, out, bound, rng);
    l.bias.value = uniform_matrix(1, out, bound, rng);
    return l;
}

Linear Linear::zeros(std::size_t in, std::size_t out) {
    Linear l;
    l.weight.value = Matrix(in, out);
    l.bias.value = Matrix(1, out);
    return l;
}

Var linear(Var x, const Linear& p) {
    if (x.cols() != p.in_dim()) {
        throw ShapeError("linear: input " + shape_str(x.value()) + " vs weight " + shape_str(p.weight.value));
    }
    Tape& t = x.tape();
    return add_row(matmul(x, t.param(p.weight)), t.param(p.bias));
}

MultiHeadAttention MultiHeadAttention::init(std::size_t d, std::size_t heads, Rng& rng) {
    if (heads == 0 || d % heads != 0) {
        throw std::invalid_argument("model dim must be divisible by the head count");
    }
    const std::size_t dh = d / heads;
    MultiHeadAttention m;
    for (std::size_t h = 0; h < heads; ++h) {
        m.query.push_back(Linear::init(d, dh, rng));
        m.key.push_back(Param{uniform_matrix(d, dh, 1.0 / std::sqrt(static_cast<double>(d)), rng)});
        m.value.push_back(Linear::init(d, dh, rng));
    }
    m.output = Linear::init(d, d, rng);
    return m;
}

Var attention(Var q_in, Var kv_in, const MultiHeadAttention& p, std::span<const bool> key_mask) {
    const std::size_t d = p.model_dim();
    if (p.heads() == 0 || d % p.heads() != 0) {
        throw std::invalid_argument("attention: model dim not divisible by heads");
    }
    if (q_in.cols() != d || kv_in.cols() != d) {
        throw ShapeError("attention: inputs " + shape_str(q_in.value()) + ", " + shape_str(kv_in.value()) +
                         " for model dim " + std::to_string(d));
    }
    if (kv_in.rows() == 0) {
        throw ShapeError("attention: no keys");
    }
    const double inv_scale = 1.0 / std::sqrt(static_cast<double>(d / p.heads()));
    std::vector<Var> heads;
    heads.reserve(p.heads());
    // One key: every softmax weight is exactly 1 and the query drops out.
    const bool single_key = kv_in.rows() == 1 && (key_mask.empty() || key_mask[0]);
    for (std::size_t h = 0; h < p.heads(); ++h) {
        if (single_key) {
            Var v = linear(kv_in, p.value[h]);
            heads.push_back(matmul(q_in.tape().constant(Matrix(q_in.rows(), 1, 1.0)), v));
            continue;
        }
        Var q = linear(q_in, p.query[h]);
        Var k = matmul(kv_in, q_in.tape().param(p.key[h]));
        Var v = linear(kv_in, p.value[h]);
        Var weights = softmax_rows(scale(matmul_bt(q, k), inv_scale), key_mask);
        heads.push_back(matmul(weights, v));
    }
    Var joined = heads.size() == 1 ? heads.front() : concat_cols(heads);
    return linear(joined, p.output);
}

FeedForward FeedForward::init(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng) {
    return FeedForward{Linear::init(in, hidden, rng), Linear::init(hidden, out, rng)};
}

Var ffn(Var x, const Linear& p1, const Linear& p2) {
    if (p1.out_dim() != p2.in_dim()) {
        throw ShapeError("ffn: hidden dims do not chain");
    }
    return linear(relu(linear(x, p1)), p2);
}

GateParams GateParams::init(std::size_t d, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(d));
    GateParams g;
    g.w_g.value = uniform_matrix(d, d, bound, rng);
    g.w_c.value = uniform_matrix(d, d, bound, rng);
    g.bias.value = uniform_matrix(1, d, bound, rng);
    return g;
}

GateParams GateParams::zeros(std::size_t d) {
    GateParams g;
    g.w_g.value = Matrix(d, d);
    g.w_c.value = Matrix(d, d);
    g.bias.value = Matrix(1, d);
    return g;
}

GateOutput sigmoid_gate(Var a, Var b, const GateParams& p) {
    if (!a.value().same_shape(b.value())) {
        throw ShapeError("sigmoid_gate: " + shape_str(a.value()) + " vs " + shape_str(b.value()));
    }
    if (a.cols() != p.w_g.value.rows()) {
        throw ShapeError("sigmoid_gate: feature dim does not match gate weights");
    }
    Tape& t = a.tape();
    Var logits = add_row(add(matmul(a, t.param(p.w_g)), matmul(b, t.param(p.w_c))), t.param(p.bias));
    Var omega = sigmoid(logits);
    Var out = add(mul(omega, a), mul(one_minus(omega), b));
    return {out, omega};
}

Var dropout(Var x, double rate, Rng& rng, bool training) {
    if (!(rate >= 0.0 && rate < 1.0)) {
        throw std::invalid_argument("dropout rate must lie in [0, 1)");
    }
    if (!training || rate == 0.0) {
        return x;
    }
    const double keep_scale = 1.0 / (1.0 - rate);
    Matrix mask(x.rows(), x.cols());
    for (double& m : mask.data()) {
        m = rng.uniform() < rate ? 0.0 : keep_scale;
    }
    return mul_const(x, mask);
}

}  // namespace vlnav
