#include "vlnav/tensor.hpp"

#include <cmath>
#include <sstream>

namespace vlnav {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw ShapeError("matrix data length does not match shape");
    }
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    Matrix m(r, c);
    std::size_t i = 0;
    for (const auto& row : rows) {
        if (row.size() != c) {
            throw ShapeError("ragged matrix literal");
        }
        for (double v : row) {
            m.data_[i++] = v;
        }
    }
    return m;
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        m(i, i) = 1.0;
    }
    return m;
}

Matrix& Matrix::operator+=(const Matrix& other) {
    if (!same_shape(other)) {
        throw ShapeError("+= shape mismatch: " + shape_str(*this) + " vs " + shape_str(other));
    }
    for (std::size_t i = 0; i < data_.size(); ++i) {
        data_[i] += other.data_[i];
    }
    return *this;
}

Matrix& Matrix::operator*=(double s) {
    for (double& v : data_) {
        v *= s;
    }
    return *this;
}

bool Matrix::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) {
            return false;
        }
    }
    return true;
}

std::string shape_str(const Matrix& m) {
    std::ostringstream os;
    os << m.rows() << "x" << m.cols();
    return os.str();
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul " + shape_str(a) + " * " + shape_str(b));
    }
    Matrix out(a.rows(), b.cols());
    const std::size_t n = b.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double* orow = out.row(i).data();
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) {
                continue;
            }
            const double* brow = b.row(k).data();
            for (std::size_t j = 0; j < n; ++j) {
                orow[j] += aik * brow[j];
            }
        }
    }
    return out;
}

Matrix matmul_bt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) {
        throw ShapeError("matmul_bt " + shape_str(a) + " * " + shape_str(b) + "^T");
    }
    Matrix out(a.rows(), b.rows());
    const std::size_t d = a.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double* arow = a.row(i).data();
        for (std::size_t j = 0; j < b.rows(); ++j) {
            const double* brow = b.row(j).data();
            double s = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                s += arow[k] * brow[k];
            }
            out(i, j) = s;
        }
    }
    return out;
}

Matrix matmul_at(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) {
        throw ShapeError("matmul_at " + shape_str(a) + "^T * " + shape_str(b));
    }
    Matrix out(a.cols(), b.cols());
    const std::size_t n = b.cols();
    for (std::size_t r = 0; r < a.rows(); ++r) {
        const double* brow = b.row(r).data();
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double ari = a(r, i);
            if (ari == 0.0) {
                continue;
            }
            double* orow = out.row(i).data();
            for (std::size_t j = 0; j < n; ++j) {
                orow[j] += ari * brow[j];
            }
        }
    }
    return out;
}

Matrix transpose(const Matrix& a) {
    Matrix out(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) {
            out(j, i) = a(i, j);
        }
    }
    return out;
}

Matrix vstack(std::span<const Matrix> parts) {
    std::size_t rows = 0;
    std::size_t cols = 0;
    bool have_cols = false;
    for (const auto& p : parts) {
        if (p.rows() == 0) {
            continue;
        }
        if (have_cols && p.cols() != cols) {
            throw ShapeError("vstack column mismatch");
        }
        cols = p.cols();
        have_cols = true;
        rows += p.rows();
    }
    if (!have_cols && !parts.empty()) {
        cols = parts.front().cols();
    }
    Matrix out(rows, cols);
    std::size_t offset = 0;
    for (const auto& p : parts) {
        std::copy(p.data().begin(), p.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(offset));
        offset += p.size();
    }
    return out;
}

Matrix slice_rows(const Matrix& m, std::size_t begin, std::size_t end) {
    if (begin > end || end > m.rows()) {
        throw ShapeError("slice_rows out of range");
    }
    Matrix out(end - begin, m.cols());
    std::copy(m.data().begin() + static_cast<std::ptrdiff_t>(begin * m.cols()),
              m.data().begin() + static_cast<std::ptrdiff_t>(end * m.cols()), out.data().begin());
    return out;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) {
        throw ShapeError("max_abs_diff shape mismatch");
    }
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(a[i] - b[i]));
    }
    return m;
}

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t x = a ^ (b * 0xD1B54A32D192ED03ULL);
    return splitmix64(x);
}

Rng::Rng(std::uint64_t seed) : seed_(seed) {
    std::uint64_t x = seed;
    for (auto& s : s_) {
        s = splitmix64(x);
    }
}

std::uint64_t Rng::next_u64() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::size_t Rng::below(std::size_t n) {
    if (n == 0) {
        throw std::invalid_argument("Rng::below(0)");
    }
    return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
}

double Rng::normal() {
    // Box-Muller; discards the second variate to stay stateless.
    double u1 = uniform();
    while (u1 <= 0.0) {
        u1 = uniform();
    }
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

Rng Rng::fork(std::uint64_t tag) const { return Rng(mix_seed(seed_, tag + 1)); }

}  // namespace vlnav
