#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "vlnav/autograd.hpp"

namespace vlnav {

/// y = xW + b with W stored (in x out) and b as a 1 x out row.
struct Linear {
    Param weight;
    Param bias;

    /// Uniform(-1/sqrt(in), 1/sqrt(in)) for both weight and bias.
    static Linear init(std::size_t in, std::size_t out, Rng& rng);
    static Linear zeros(std::size_t in, std::size_t out);

    std::size_t in_dim() const { return weight.value.rows(); }
    std::size_t out_dim() const { return weight.value.cols(); }

    template <class Fn>
    void visit(const std::string& prefix, Fn&& fn) {
        fn(prefix + ".weight", weight);
        fn(prefix + ".bias", bias);
    }
};

Var linear(Var x, const Linear& p);

struct MultiHeadAttention {
    std::vector<Linear> query;  // one (d x d/h) projection per head
    std::vector<Param> key;     // bias-free: a key bias only shifts each logit row
    std::vector<Linear> value;
    Linear output;              // (d x d)

    static MultiHeadAttention init(std::size_t d, std::size_t heads, Rng& rng);

    std::size_t heads() const { return query.size(); }
    std::size_t model_dim() const { return output.out_dim(); }

    template <class Fn>
    void visit(const std::string& prefix, Fn&& fn) {
        for (std::size_t h = 0; h < heads(); ++h) {
            const std::string p = prefix + ".head" + std::to_string(h);
            query[h].visit(p + ".q", fn);
            fn(p + ".k.weight", key[h]);
            value[h].visit(p + ".v", fn);
        }
        output.visit(prefix + ".out", fn);
    }
};

/// Scaled dot-product attention of every query row over the key/value rows,
/// per head, concatenated and output-projected. Self-attention passes the same
/// Var twice. Masked keys (`key_mask[j] == false`) get a -inf logit.
Var attention(Var q_in, Var kv_in, const MultiHeadAttention& p, std::span<const bool> key_mask = {});

struct FeedForward {
    Linear first;
    Linear second;

    static FeedForward init(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng);

    template <class Fn>
    void visit(const std::string& prefix, Fn&& fn) {
        first.visit(prefix + ".fc1", fn);
        second.visit(prefix + ".fc2", fn);
    }
};

/// linear -> ReLU -> linear
Var ffn(Var x, const Linear& p1, const Linear& p2);
inline Var ffn(Var x, const FeedForward& p) { return ffn(x, p.first, p.second); }

/// Elementwise sigmoid gate: omega = sigmoid(a W_g + b W_c + bias).
struct GateParams {
    Param w_g;   // d x d, applied to the enhanced stream
    Param w_c;   // d x d, applied to the context stream
    Param bias;  // 1 x d, one bias per channel

    static GateParams init(std::size_t d, Rng& rng);
    static GateParams zeros(std::size_t d);

    template <class Fn>
    void visit(const std::string& prefix, Fn&& fn) {
        fn(prefix + ".w_g", w_g);
        fn(prefix + ".w_c", w_c);
        fn(prefix + ".bias", bias);
    }
};

struct GateOutput {
    Var out;    // omega .* a + (1 - omega) .* b
    Var omega;
};

GateOutput sigmoid_gate(Var a, Var b, const GateParams& p);

/// Inverted dropout. Identity when `training` is false or `rate == 0`.
Var dropout(Var x, double rate, Rng& rng, bool training);

}  // namespace vlnav
