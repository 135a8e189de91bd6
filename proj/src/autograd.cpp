#include "vlnav/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace vlnav {

void Gradients::accumulate(const Param* p, const Matrix& g) {
    auto it = grads_.find(p);
    if (it == grads_.end()) {
        grads_.emplace(p, g);
    } else {
        it->second += g;
    }
}

Matrix Gradients::get(const Param& p) const {
    auto it = grads_.find(&p);
    if (it == grads_.end()) {
        return Matrix(p.value.rows(), p.value.cols());
    }
    return it->second;
}

void Gradients::merge(const Gradients& other) {
    for (const auto& [p, g] : other.grads_) {
        accumulate(p, g);
    }
}

void Gradients::scale(double s) {
    for (auto& [p, g] : grads_) {
        g *= s;
    }
}

const Matrix& Var::value() const { return tape_->value(id_); }

Var Tape::constant(Matrix m) { return push(std::move(m), false, nullptr); }

Var Tape::param(const Param& p) {
    auto it = param_ids_.find(&p);
    if (it != param_ids_.end()) {
        return Var(this, it->second);
    }
    Var v = push(p.value, record_, nullptr);
    nodes_[static_cast<std::size_t>(v.id())].param = &p;
    param_ids_.emplace(&p, v.id());
    return v;
}

Var Tape::push(Matrix value, bool needs_grad, Backward fn) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = record_ && needs_grad;
    if (n.needs_grad) {
        n.backward = std::move(fn);
    }
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<int>(nodes_.size() - 1));
}

Matrix& Tape::grad(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.size() != n.value.size() || !n.grad.same_shape(n.value)) {
        n.grad = Matrix(n.value.rows(), n.value.cols());
    }
    return n.grad;
}

void Tape::record_kinks(const Matrix& pre) {
    if (!track_kinks_) {
        return;
    }
    for (double v : pre.data()) {
        kinks_.push_back(v > 0.0 ? 1 : 0);
    }
}

Gradients Tape::backward(Var loss) {
    if (!record_) {
        throw std::logic_error("backward on a non-recording tape");
    }
    if (loss.rows() != 1 || loss.cols() != 1) {
        throw ShapeError("backward expects a 1x1 loss, got " + shape_str(loss.value()));
    }
    for (auto& n : nodes_) {
        n.grad = Matrix();
    }
    Gradients out;
    if (!needs_grad(loss.id())) {
        return out;
    }
    grad(loss.id())(0, 0) = 1.0;
    for (int i = loss.id(); i >= 0; --i) {
        Node& n = nodes_[static_cast<std::size_t>(i)];
        if (!n.needs_grad || n.grad.empty()) {
            continue;
        }
        if (n.param != nullptr) {
            out.accumulate(n.param, n.grad);
        } else if (n.backward) {
            n.backward(*this, i);
        }
    }
    return out;
}

namespace {

void check_same_tape(Var a, Var b) {
    if (&a.tape() != &b.tape()) {
        throw std::logic_error("vars from different tapes");
    }
}

void check_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(op) + ": " + shape_str(a) + " vs " + shape_str(b));
    }
}

bool any_grad(std::initializer_list<Var> vs) {
    for (Var v : vs) {
        if (v.tape().needs_grad(v.id())) {
            return true;
        }
    }
    return false;
}

void accumulate(Tape& t, int id, const Matrix& g) {
    if (!t.needs_grad(id)) {
        return;
    }
    t.grad(id) += g;
}

}  // namespace

Var add(Var a, Var b) {
    check_same_tape(a, b);
    check_same_shape(a.value(), b.value(), "add");
    Matrix out = a.value();
    out += b.value();
    const int ia = a.id();
    const int ib = b.id();
    return a.tape().push(std::move(out), any_grad({a, b}), [ia, ib](Tape& t, int self) {
        accumulate(t, ia, t.grad_of(self));
        accumulate(t, ib, t.grad_of(self));
    });
}

Var sub(Var a, Var b) {
    check_same_tape(a, b);
    check_same_shape(a.value(), b.value(), "sub");
    Matrix out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] -= b.value()[i];
    }
    const int ia = a.id();
    const int ib = b.id();
    return a.tape().push(std::move(out), any_grad({a, b}), [ia, ib](Tape& t, int self) {
        accumulate(t, ia, t.grad_of(self));
        if (t.needs_grad(ib)) {
            Matrix g = t.grad_of(self);
            g *= -1.0;
            t.grad(ib) += g;
        }
    });
}

Var mul(Var a, Var b) {
    check_same_tape(a, b);
    check_same_shape(a.value(), b.value(), "mul");
    Matrix out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] *= b.value()[i];
    }
    const int ia = a.id();
    const int ib = b.id();
    return a.tape().push(std::move(out), any_grad({a, b}), [ia, ib](Tape& t, int self) {
        const Matrix& g = t.grad_of(self);
        if (t.needs_grad(ia)) {
            Matrix& ga = t.grad(ia);
            const Matrix& vb = t.value(ib);
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga[i] += g[i] * vb[i];
            }
        }
        if (t.needs_grad(ib)) {
            Matrix& gb = t.grad(ib);
            const Matrix& va = t.value(ia);
            for (std::size_t i = 0; i < g.size(); ++i) {
                gb[i] += g[i] * va[i];
            }
        }
    });
}

Var scale(Var a, double s) {
    Matrix out = a.value();
    out *= s;
    const int ia = a.id();
    return a.tape().push(std::move(out), any_grad({a}), [ia, s](Tape& t, int self) {
        if (!t.needs_grad(ia)) {
            return;
        }
        Matrix& ga = t.grad(ia);
        const Matrix& g = t.grad_of(self);
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i] += s * g[i];
        }
    });
}

Var scale_by(Var a, Var s) {
    check_same_tape(a, s);
    if (s.rows() != 1 || s.cols() != 1) {
        throw ShapeError("scale_by expects a 1x1 scale");
    }
    const double sv = s.value()(0, 0);
    Matrix out = a.value();
    out *= sv;
    const int ia = a.id();
    const int is = s.id();
    return a.tape().push(std::move(out), any_grad({a, s}), [ia, is](Tape& t, int self) {
        const Matrix& g = t.grad_of(self);
        const double sv = t.value(is)(0, 0);
        if (t.needs_grad(ia)) {
            Matrix& ga = t.grad(ia);
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga[i] += sv * g[i];
            }
        }
        if (t.needs_grad(is)) {
            const Matrix& va = t.value(ia);
            double acc = 0.0;
            for (std::size_t i = 0; i < g.size(); ++i) {
                acc += g[i] * va[i];
            }
            t.grad(is)(0, 0) += acc;
        }
    });
}

Var one_minus(Var a) {
    Matrix out = a.value();
    for (double& v : out.data()) {
        v = 1.0 - v;
    }
    const int ia = a.id();
    return a.tape().push(std::move(out), any_grad({a}), [ia](Tape& t, int self) {
        if (!t.needs_grad(ia)) {
            return;
        }
        Matrix& ga = t.grad(ia);
        const Matrix& g = t.grad_of(self);
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i] -= g[i];
        }
    });
}

Var add_row(Var x, Var row) {
    check_same_tape(x, row);
    if (row.rows() != 1 || row.cols() != x.cols()) {
        throw ShapeError("add_row: " + shape_str(x.value()) + " + " + shape_str(row.value()));
    }
    Matrix out = x.value();
    const Matrix& r = row.value();
    for (std::size_t i = 0; i < out.rows(); ++i) {
        for (std::size_t j = 0; j < out.cols(); ++j) {
            out(i, j) += r(0, j);
        }
    }
    const int ix = x.id();
    const int ir = row.id();
    return x.tape().push(std::move(out), any_grad({x, row}), [ix, ir](Tape& t, int self) {
        const Matrix& g = t.grad_of(self);
        accumulate(t, ix, g);
        if (t.needs_grad(ir)) {
            Matrix& gr = t.grad(ir);
            for (std::size_t i = 0; i < g.rows(); ++i) {
                for (std::size_t j = 0; j < g.cols(); ++j) {
                    gr(0, j) += g(i, j);
                }
            }
        }
    });
}

Var matmul(Var a, Var b) {
    check_same_tape(a, b);
    Matrix out = matmul(a.value(), b.value());
    const int ia = a.id();
    const int ib = b.id();
    return a.tape().push(std::move(out), any_grad({a, b}), [ia, ib](Tape& t, int self) {
        const Matrix& g = t.grad_of(self);
        if (t.needs_grad(ia)) {
            t.grad(ia) += matmul_bt(g, t.value(ib));
        }
        if (t.needs_grad(ib)) {
            t.grad(ib) += matmul_at(t.value(ia), g);
        }
    });
}

Var matmul_bt(Var a, Var b) {
    check_same_tape(a, b);
    Matrix out = matmul_bt(a.value(), b.value());
    const int ia = a.id();
    const int ib = b.id();
    return a.tape().push(std::move(out), any_grad({a, b}), [ia, ib](Tape& t, int self) {
        const Matrix& g = t.grad_of(self);
        if (t.needs_grad(ia)) {
            t.grad(ia) += matmul(g, t.value(ib));
        }
        if (t.needs_grad(ib)) {
            t.grad(ib) += matmul_at(g, t.value(ia));
        }
    });
}

Var relu(Var a) {
    a.tape().record_kinks(a.value());
    Matrix out = a.value();
    for (double& v : out.data()) {
        v = v > 0.0 ? v : 0.0;
    }
    const int ia = a.id();
    return a.tape().push(std::move(out), any_grad({a}), [ia](Tape& t, int self) {
        if (!t.needs_grad(ia)) {
            return;
        }
        const Matrix& g = t.grad_of(self);
        const Matrix& x = t.value(ia);
        Matrix& ga = t.grad(ia);
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (x[i] > 0.0) {
                ga[i] += g[i];
            }
        }
    });
}

Var sigmoid(Var a) {
    Matrix out = a.value();
    for (double& v : out.data()) {
        v = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    }
    const int ia = a.id();
    return a.tape().push(std::move(out), any_grad({a}), [ia](Tape& t, int self) {
        if (!t.needs_grad(ia)) {
            return;
        }
        const Matrix& g = t.grad_of(self);
        const Matrix& y = t.value(self);
        Matrix& ga = t.grad(ia);
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i] * y[i] * (1.0 - y[i]);
        }
    });
}

Var softmax_rows(Var a, std::span<const bool> key_mask) {
    const Matrix& x = a.value();
    if (!key_mask.empty() && key_mask.size() != x.cols()) {
        throw ShapeError("softmax_rows: mask length does not match columns");
    }
    if (!key_mask.empty() && std::none_of(key_mask.begin(), key_mask.end(), [](bool b) { return b; })) {
        throw std::invalid_argument("softmax_rows: every key is masked");
    }
    Matrix out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < x.cols(); ++j) {
            if (key_mask.empty() || key_mask[j]) {
                mx = std::max(mx, x(i, j));
            }
        }
        double sum = 0.0;
        for (std::size_t j = 0; j < x.cols(); ++j) {
            const double e = (key_mask.empty() || key_mask[j]) ? std::exp(x(i, j) - mx) : 0.0;
            out(i, j) = e;
            sum += e;
        }
        for (std::size_t j = 0; j < x.cols(); ++j) {
            out(i, j) /= sum;
        }
    }
    const int ia = a.id();
    return a.tape().push(std::move(out), any_grad({a}), [ia](Tape& t, int self) {
        if (!t.needs_grad(ia)) {
            return;
        }
        const Matrix& g = t.grad_of(self);
        const Matrix& y = t.value(self);
        Matrix& ga = t.grad(ia);
        for (std::size_t i = 0; i < y.rows(); ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < y.cols(); ++j) {
                dot += g(i, j) * y(i, j);
            }
            for (std::size_t j = 0; j < y.cols(); ++j) {
                ga(i, j) += y(i, j) * (g(i, j) - dot);
            }
        }
    });
}

Var concat_rows(std::span<const Var> parts) {
    if (parts.empty()) {
        throw std::invalid_argument("concat_rows of nothing");
    }
    std::vector<Matrix> values;
    values.reserve(parts.size());
    std::vector<int> ids;
    std::vector<std::size_t> offsets;
    std::size_t offset = 0;
    bool grad = false;
    for (Var p : parts) {
        check_same_tape(parts.front(), p);
        values.push_back(p.value());
        ids.push_back(p.id());
        offsets.push_back(offset);
        offset += p.rows();
        grad = grad || p.tape().needs_grad(p.id());
    }
    Matrix out = vstack(values);
    return parts.front().tape().push(std::move(out), grad, [ids, offsets](Tape& t, int self) {
        const Matrix& g = t.grad_of(self);
        for (std::size_t k = 0; k < ids.size(); ++k) {
            if (!t.needs_grad(ids[k])) {
                continue;
            }
            Matrix& gk = t.grad(ids[k]);
            const std::size_t start = offsets[k] * g.cols();
            for (std::size_t i = 0; i < gk.size(); ++i) {
                gk[i] += g[start + i];
            }
        }
    });
}

Var concat_cols(std::span<const Var> parts) {
    if (parts.empty()) {
        throw std::invalid_argument("concat_cols of nothing");
    }
    const std::size_t rows = parts.front().rows();
    std::size_t cols = 0;
    bool grad = false;
    std::vector<int> ids;
    std::vector<std::size_t> offsets;
    for (Var p : parts) {
        check_same_tape(parts.front(), p);
        if (p.rows() != rows) {
            throw ShapeError("concat_cols row mismatch");
        }
        ids.push_back(p.id());
        offsets.push_back(cols);
        cols += p.cols();
        grad = grad || p.tape().needs_grad(p.id());
    }
    Matrix out(rows, cols);
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const Matrix& v = parts[k].value();
        for (std::size_t i = 0; i < rows; ++i) {
            for (std::size_t j = 0; j < v.cols(); ++j) {
                out(i, offsets[k] + j) = v(i, j);
            }
        }
    }
    return parts.front().tape().push(std::move(out), grad, [ids, offsets](Tape& t, int self) {
        const Matrix& g = t.grad_of(self);
        for (std::size_t k = 0; k < ids.size(); ++k) {
            if (!t.needs_grad(ids[k])) {
                continue;
            }
            Matrix& gk = t.grad(ids[k]);
            for (std::size_t i = 0; i < gk.rows(); ++i) {
                for (std::size_t j = 0; j < gk.cols(); ++j) {
                    gk(i, j) += g(i, offsets[k] + j);
                }
            }
        }
    });
}

Var slice_rows(Var a, std::size_t begin, std::size_t end) {
    Matrix out = slice_rows(a.value(), begin, end);
    const int ia = a.id();
    return a.tape().push(std::move(out), any_grad({a}), [ia, begin](Tape& t, int self) {
        if (!t.needs_grad(ia)) {
            return;
        }
        const Matrix& g = t.grad_of(self);
        Matrix& ga = t.grad(ia);
        const std::size_t start = begin * ga.cols();
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga[start + i] += g[i];
        }
    });
}

Var mean_rows(Var a) {
    const Matrix& x = a.value();
    if (x.rows() == 0) {
        throw ShapeError("mean_rows of an empty matrix");
    }
    Matrix out(1, x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        for (std::size_t j = 0; j < x.cols(); ++j) {
            out(0, j) += x(i, j);
        }
    }
    const double inv = 1.0 / static_cast<double>(x.rows());
    out *= inv;
    const int ia = a.id();
    return a.tape().push(std::move(out), any_grad({a}), [ia, inv](Tape& t, int self) {
        if (!t.needs_grad(ia)) {
            return;
        }
        const Matrix& g = t.grad_of(self);
        Matrix& ga = t.grad(ia);
        for (std::size_t i = 0; i < ga.rows(); ++i) {
            for (std::size_t j = 0; j < ga.cols(); ++j) {
                ga(i, j) += g(0, j) * inv;
            }
        }
    });
}

Var gather_rows(Var a, std::vector<std::size_t> index) {
    const Matrix& x = a.value();
    Matrix out(index.size(), x.cols());
    for (std::size_t i = 0; i < index.size(); ++i) {
        if (index[i] >= x.rows()) {
            throw ShapeError("gather_rows index out of range");
        }
        for (std::size_t j = 0; j < x.cols(); ++j) {
            out(i, j) = x(index[i], j);
        }
    }
    const int ia = a.id();
    return a.tape().push(std::move(out), any_grad({a}), [ia, index = std::move(index)](Tape& t, int self) {
        if (!t.needs_grad(ia)) {
            return;
        }
        const Matrix& g = t.grad_of(self);
        Matrix& ga = t.grad(ia);
        for (std::size_t i = 0; i < index.size(); ++i) {
            for (std::size_t j = 0; j < g.cols(); ++j) {
                ga(index[i], j) += g(i, j);
            }
        }
    });
}

Var mul_const(Var a, const Matrix& c) {
    check_same_shape(a.value(), c, "mul_const");
    Matrix out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] *= c[i];
    }
    const int ia = a.id();
    return a.tape().push(std::move(out), any_grad({a}), [ia, c](Tape& t, int self) {
        if (!t.needs_grad(ia)) {
            return;
        }
        const Matrix& g = t.grad_of(self);
        Matrix& ga = t.grad(ia);
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i] * c[i];
        }
    });
}

Var weighted_sum(Var a, const Matrix& w) {
    check_same_shape(a.value(), w, "weighted_sum");
    double s = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        s += a.value()[i] * w[i];
    }
    const int ia = a.id();
    return a.tape().push(Matrix(1, 1, s), any_grad({a}), [ia, w](Tape& t, int self) {
        if (!t.needs_grad(ia)) {
            return;
        }
        const double g = t.grad_of(self)(0, 0);
        Matrix& ga = t.grad(ia);
        for (std::size_t i = 0; i < w.size(); ++i) {
            ga[i] += g * w[i];
        }
    });
}

Var cross_entropy(Var logits, std::size_t target) {
    const Matrix& x = logits.value();
    if (x.cols() != 1 || x.rows() == 0) {
        throw ShapeError("cross_entropy expects a non-empty Kx1 column");
    }
    if (target >= x.rows()) {
        throw std::out_of_range("cross_entropy target outside the score set");
    }
    double mx = x[0];
    for (double v : x.data()) {
        mx = std::max(mx, v);
    }
    double sum = 0.0;
    for (double v : x.data()) {
        sum += std::exp(v - mx);
    }
    const double lse = mx + std::log(sum);
    const double loss = lse - x[target];
    const int il = logits.id();
    return logits.tape().push(Matrix(1, 1, loss), any_grad({logits}), [il, target, lse](Tape& t, int self) {
        if (!t.needs_grad(il)) {
            return;
        }
        const double g = t.grad_of(self)(0, 0);
        const Matrix& x = t.value(il);
        Matrix& gl = t.grad(il);
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double p = std::exp(x[i] - lse);
            gl[i] += g * (p - (i == target ? 1.0 : 0.0));
        }
    });
}

}  // namespace vlnav
