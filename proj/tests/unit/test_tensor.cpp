#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "test_support.hpp"
#include "vlnav/tensor.hpp"

using namespace vlnav;
using vlnav::testing::random_matrix;

namespace {

Matrix naive_matmul(const Matrix& a, const Matrix& b) {
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) {
                s += a(i, k) * b(k, j);
            }
            c(i, j) = s;
        }
    }
    return c;
}

}  // namespace

TEST(Matrix, ConstructionAndAccess) {
    Matrix m = Matrix::from_rows({{1, 2, 3}, {4, 5, 6}});
    EXPECT_EQ(m.rows(), 2u);
    EXPECT_EQ(m.cols(), 3u);
    EXPECT_EQ(m(1, 2), 6.0);
    EXPECT_EQ(m.row(1)[0], 4.0);
    EXPECT_THROW(Matrix::from_rows({{1, 2}, {3}}), ShapeError);
    EXPECT_THROW(Matrix(2, 2, std::vector<double>{1, 2, 3}), ShapeError);
}

TEST(Matrix, MatmulMatchesTripleLoop) {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t r = 1 + rng.below(5), k = 1 + rng.below(5), c = 1 + rng.below(5);
        const Matrix a = random_matrix(r, k, rng);
        const Matrix b = random_matrix(k, c, rng);
        EXPECT_LT(max_abs_diff(matmul(a, b), naive_matmul(a, b)), 1e-12);
        const Matrix bt = random_matrix(c, k, rng);
        EXPECT_LT(max_abs_diff(matmul_bt(a, bt), naive_matmul(a, transpose(bt))), 1e-12);
        const Matrix at = random_matrix(k, r, rng);
        EXPECT_LT(max_abs_diff(matmul_at(at, b), naive_matmul(transpose(at), b)), 1e-12);
    }
}

TEST(Matrix, MatmulRejectsMismatchedShapes) {
    EXPECT_THROW(matmul(Matrix(2, 3), Matrix(2, 3)), ShapeError);
    Matrix a(2, 2);
    EXPECT_THROW(a += Matrix(3, 2), ShapeError);
}

TEST(Matrix, StackAndSlice) {
    const Matrix a = Matrix::from_rows({{1, 2}});
    const Matrix b = Matrix::from_rows({{3, 4}, {5, 6}});
    const Matrix parts[] = {a, Matrix(0, 2), b};
    const Matrix s = vstack(parts);
    EXPECT_EQ(s, Matrix::from_rows({{1, 2}, {3, 4}, {5, 6}}));
    EXPECT_EQ(slice_rows(s, 1, 3), b);
    EXPECT_THROW(slice_rows(s, 2, 4), ShapeError);
}

TEST(Matrix, IdentityAndFinite) {
    Matrix i = Matrix::identity(3);
    EXPECT_EQ(i(1, 1), 1.0);
    EXPECT_EQ(i(0, 1), 0.0);
    EXPECT_TRUE(i.all_finite());
    i(2, 0) = std::nan("");
    EXPECT_FALSE(i.all_finite());
}

TEST(Rng, DeterministicPerSeed) {
    Rng a(42), b(42), c(43);
    bool differs = false;
    for (int i = 0; i < 100; ++i) {
        const auto x = a.next_u64();
        EXPECT_EQ(x, b.next_u64());
        differs |= x != c.next_u64();
    }
    EXPECT_TRUE(differs);
}

TEST(Rng, RangesAndMoments) {
    Rng rng(5);
    double sum = 0.0;
    double sq = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        ASSERT_LT(rng.below(7), 7u);
        const double z = rng.normal();
        sum += z;
        sq += z * z;
    }
    EXPECT_NEAR(sum / n, 0.0, 0.05);
    EXPECT_NEAR(sq / n, 1.0, 0.05);
}

TEST(Rng, ForkIsIndependentOfParentState) {
    Rng a(9);
    Rng f1 = a.fork(3);
    a.next_u64();
    Rng f2 = a.fork(3);
    EXPECT_EQ(f1.next_u64(), f2.next_u64());
    EXPECT_NE(Rng(9).fork(3).next_u64(), Rng(9).fork(4).next_u64());
}

TEST(Rng, ShuffleIsAPermutation) {
    Rng rng(1);
    std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7};
    rng.shuffle(v);
    EXPECT_EQ(std::set<int>(v.begin(), v.end()).size(), 8u);
}

TEST(MixSeed, SpreadsNearbyInputs) {
    std::set<std::uint64_t> seen;
    for (std::uint64_t a = 0; a < 10; ++a) {
        for (std::uint64_t b = 0; b < 10; ++b) {
            seen.insert(mix_seed(a, b));
        }
    }
    EXPECT_EQ(seen.size(), 100u);
}
