// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <s24/matrix.hpp>
#include <s24/rng.hpp>

using namespace s24;

TEST_CASE("gemm: identity and hand arithmetic") {
  const DenseMatrix a{{1, 2}, {3, 4}};
  CHECK(bitwise_equal(gemm(DenseMatrix::identity(2), a), a));

  const DenseMatrix c = gemm(DenseMatrix{{1, 2}}, DenseMatrix{{3}, {4}});
  REQUIRE(c.rows() == 1);
  REQUIRE(c.cols() == 1);
  CHECK(c(0, 0) == 11.0f);
}

TEST_CASE("gemm: working precision tracks the 64-bit oracle") {
  Rng rng(11);
  // Nonnegative operands keep every entry away from cancellation so an
  // elementwise relative bound is meaningful.
  const auto a = random_uniform<double>(16, 16, rng, 0.0, 1.0);
  const auto b = random_uniform<double>(16, 16, rng, 0.0, 1.0);
  const OracleMatrix oracle = gemm(a, b);
  const DenseMatrix working = gemm(cast<float>(a), cast<float>(b));
  double worst = 0.0;
  for (std::size_t i = 0; i < oracle.size(); ++i)
    worst = std::max(worst, std::fabs(working.data()[i] - oracle.data()[i]) /
                                std::fabs(oracle.data()[i]));
  CHECK(worst <= 1e-5);
}

TEST_CASE("gemm: shape mismatch throws DimensionError") {
  CHECK_THROWS_AS(gemm(DenseMatrix(2, 3), DenseMatrix(2, 3)), DimensionError);
  CHECK_THROWS_AS(gemm_at(DenseMatrix(2, 3), DenseMatrix(3, 3)), DimensionError);
}

TEST_CASE("gemm_at: examples and transpose oracle") {
  const DenseMatrix b{{5, 6}, {7, 8}};
  CHECK(bitwise_equal(gemm_at(DenseMatrix::identity(2), b), b));
  CHECK(gemm_at(DenseMatrix{{1}, {2}}, DenseMatrix{{3}, {4}})(0, 0) == 11.0f);

  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto x = random_uniform<float>(8, 8, rng);
    const auto y = random_uniform<float>(8, 8, rng);
    CHECK(bitwise_equal(gemm_at(x, y), gemm(transpose(x), y)));
  }
  const auto tall = random_uniform<float>(12, 5, rng);
  const auto wide = random_uniform<float>(12, 7, rng);
  CHECK(bitwise_equal(gemm_at(tall, wide), gemm(transpose(tall), wide)));
}

TEST_CASE("gemm: left identity is bitwise exact for arbitrary shapes") {
  Rng rng(5);
  for (std::size_t rows : {1u, 3u, 8u})
    for (std::size_t cols : {1u, 4u, 9u}) {
      const auto a = random_normal<float>(rows, cols, rng, 3.0);
      CHECK(bitwise_equal(gemm(DenseMatrix::identity(rows), a), a));
    }
}

TEST_CASE("gemm: MAC counter") {
  mac_counter() = {};
  gemm(DenseMatrix(4, 8), DenseMatrix(8, 2));
  CHECK(mac_counter().dense == 64);
}

TEST_CASE("Matrix: constructors reject bad data") {
  CHECK_THROWS_AS(DenseMatrix::from(2, 2, {1, 2, 3}), DimensionError);
  CHECK_THROWS_AS(DenseMatrix::from(1, 1, {NAN}), DataError);
  CHECK_THROWS_AS(DenseMatrix::from(1, 1, {INFINITY}), DataError);
  CHECK_THROWS_AS((DenseMatrix{{1, 2}, {3}}), DimensionError);
  CHECK(DenseMatrix::from(0, 0, {}).empty());
}

TEST_CASE("bitwise_equal distinguishes signed zeros") {
  CHECK_FALSE(bitwise_equal(DenseMatrix{{0.0f}}, DenseMatrix{{-0.0f}}));
}
