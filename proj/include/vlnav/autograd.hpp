#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "vlnav/tensor.hpp"

namespace vlnav {

/// A trainable tensor. Gradients live outside the parameter so that a model
/// can be shared read-only between concurrent rollouts.
struct Param {
    Matrix value;
};

/// Per-parameter gradient matrices keyed by parameter identity.
class Gradients {
public:
    void accumulate(const Param* p, const Matrix& g);
    /// Zero matrix of the right shape when the parameter received no gradient.
    Matrix get(const Param& p) const;
    bool contains(const Param& p) const { return grads_.count(&p) != 0; }
    void merge(const Gradients& other);
    void scale(double s);
    std::size_t size() const { return grads_.size(); }

private:
    std::unordered_map<const Param*, Matrix> grads_;
};

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
public:
    Var() = default;
    Var(Tape* tape, int id) : tape_(tape), id_(id) {}

    const Matrix& value() const;
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }
    Tape& tape() const { return *tape_; }
    int id() const { return id_; }
    bool valid() const { return tape_ != nullptr; }

private:
    Tape* tape_ = nullptr;
    int id_ = -1;
};

/// Records a computation for reverse-mode differentiation. A tape created with
/// `record == false` only evaluates values.
class Tape {
public:
    using Backward = std::function<void(Tape&, int)>;

    explicit Tape(bool record = true) : record_(record) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Matrix m);
    /// Each parameter maps to a single leaf per tape.
    Var param(const Param& p);

    /// Backpropagates from a 1x1 loss and returns parameter gradients.
    Gradients backward(Var loss);

    bool recording() const { return record_; }

    // Used by the finite-difference checker to detect ReLU kinks.
    void track_kinks(bool on) { track_kinks_ = on; }
    const std::vector<std::uint8_t>& kink_signature() const { return kinks_; }
    void record_kinks(const Matrix& pre);

    // Op plumbing.
    Var push(Matrix value, bool needs_grad, Backward fn);
    const Matrix& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    bool needs_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }
    /// Lazily zero-initialised gradient buffer for a node.
    Matrix& grad(int id);
    const Matrix& grad_of(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }

    std::size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        Matrix value;
        Matrix grad;
        bool needs_grad = false;
        Backward backward;
        const Param* param = nullptr;
    };

    bool record_;
    bool track_kinks_ = false;
    std::deque<Node> nodes_;  // deque: Var::value() references stay valid as the tape grows
    std::unordered_map<const Param*, int> param_ids_;
    std::vector<std::uint8_t> kinks_;
};

// Differentiable ops. Inputs must live on the same tape.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
/// s is 1x1; returns s * a.
Var scale_by(Var a, Var s);
/// 1 - a
Var one_minus(Var a);
/// Adds a 1xC row to every row of x.
Var add_row(Var x, Var row);
Var matmul(Var a, Var b);
/// a * b^T
Var matmul_bt(Var a, Var b);
Var relu(Var a);
Var sigmoid(Var a);
/// Row-wise softmax. `key_mask[j] == false` gives column j a -inf logit.
Var softmax_rows(Var a, std::span<const bool> key_mask = {});
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var slice_rows(Var a, std::size_t begin, std::size_t end);
/// 1xC mean over rows.
Var mean_rows(Var a);
/// Row gather with repetition allowed; backward scatter-adds.
Var gather_rows(Var a, std::vector<std::size_t> index);
/// Elementwise product with a constant matrix.
Var mul_const(Var a, const Matrix& c);
/// sum(a .* w) as 1x1.
Var weighted_sum(Var a, const Matrix& w);
/// -log softmax(logits)[target] over a Kx1 column.
Var cross_entropy(Var logits, std::size_t target);

}  // namespace vlnav
