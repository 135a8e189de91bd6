#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace vlnav {

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Dense row-major double matrix. Rows are tokens, views, objects or map
/// nodes; columns are feature channels.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
    static Matrix identity(std::size_t n);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    Matrix& operator+=(const Matrix& other);
    Matrix& operator*=(double s);

    bool same_shape(const Matrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }
    bool all_finite() const;

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

std::string shape_str(const Matrix& m);

Matrix matmul(const Matrix& a, const Matrix& b);
/// a * b^T
Matrix matmul_bt(const Matrix& a, const Matrix& b);
/// a^T * b
Matrix matmul_at(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
Matrix vstack(std::span<const Matrix> parts);
Matrix slice_rows(const Matrix& m, std::size_t begin, std::size_t end);
double max_abs_diff(const Matrix& a, const Matrix& b);

/// SplitMix64-seeded xoshiro256** stream. Deterministic across platforms,
/// unlike the std distributions.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0);

    std::uint64_t next_u64();
    /// Uniform in [0, 1).
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Uniform integer in [0, n).
    std::size_t below(std::size_t n);
    double normal();
    /// Independent child stream; does not disturb sibling streams derived with
    /// other tags.
    Rng fork(std::uint64_t tag) const;

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[below(i)]);
        }
    }

private:
    std::uint64_t s_[4];
    std::uint64_t seed_;
};

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace vlnav
