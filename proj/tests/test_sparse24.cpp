// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <s24/matrix_io.hpp>
#include <s24/rng.hpp>
#include <s24/sparse24.hpp>

#include <algorithm>

using namespace s24;

namespace {

// Random matrix whose every token-wise and/or feature-wise group has at most
// two nonzeros: each entry is nonzero only on a checkerboard of 2x2 blocks.
DenseMatrix random_compliant(std::size_t rows, std::size_t cols, Rng &rng, bool token_wise) {
  DenseMatrix a(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    if (token_wise) {
      for (std::size_t g = 0; g < cols / 4; ++g) {
        // two distinct random positions per group, some left zero
        const unsigned p0 = static_cast<unsigned>(rng.below(4));
        unsigned p1 = static_cast<unsigned>(rng.below(3));
        if (p1 >= p0)
          ++p1;
        if (rng.bernoulli(0.9))
          a(r, 4 * g + p0) = static_cast<float>(rng.normal());
        if (rng.bernoulli(0.9))
          a(r, 4 * g + p1) = static_cast<float>(rng.normal());
      }
    }
  }
  return a;
}

// Independent recount of a group rule on a dense matrix.
bool group_compliant(const DenseMatrix &a, bool token_wise) {
  if (token_wise) {
    for (std::size_t r = 0; r < a.rows(); ++r)
      for (std::size_t g = 0; g < a.cols() / 4; ++g) {
        int nz = 0;
        for (int p = 0; p < 4; ++p)
          nz += a(r, 4 * g + p) != 0.0f;
        if (nz > 2)
          return false;
      }
  } else {
    for (std::size_t c = 0; c < a.cols(); ++c)
      for (std::size_t g = 0; g < a.rows() / 4; ++g) {
        int nz = 0;
        for (int p = 0; p < 4; ++p)
          nz += a(4 * g + p, c) != 0.0f;
        if (nz > 2)
          return false;
      }
  }
  return true;
}

} // namespace

TEST_CASE("sparsify_token_wise: examples") {
  SUBCASE("top-2 on one group") {
    const auto r = sparsify_token_wise(DenseMatrix{{1, -2, 0, 0.5f}});
    CHECK(r.sparse.positions(0) == std::pair<unsigned, unsigned>{0, 1});
    CHECK(r.sparse.values()[0] == 1.0f);
    CHECK(r.sparse.values()[1] == -2.0f);
    CHECK(r.stats.dropped == 1);
    CHECK(r.stats.nonzeros_before == 3);
    CHECK(r.stats.nonzeros_after == 2);
    CHECK(bitwise_equal(decompress(r.sparse), DenseMatrix{{1, -2, 0, 0}}));
  }
  SUBCASE("already compliant") {
    const DenseMatrix a{{0, 0, 5, 0}};
    const auto r = sparsify_token_wise(a);
    CHECK(bitwise_equal(decompress(r.sparse), a));
    CHECK(r.stats.dropped == 0);
    // Padding uses the lowest zero position.
    CHECK(r.sparse.positions(0) == std::pair<unsigned, unsigned>{0, 2});
  }
  SUBCASE("ties keep the lower index") {
    const auto r = sparsify_token_wise(DenseMatrix{{3, -3, 3, 3}});
    CHECK(r.sparse.positions(0) == std::pair<unsigned, unsigned>{0, 1});
    const auto z = sparsify_token_wise(DenseMatrix{{0, 0, 0, 0}});
    CHECK(z.sparse.positions(0) == std::pair<unsigned, unsigned>{0, 1});
  }
  SUBCASE("shape error") {
    CHECK_THROWS_AS(sparsify_token_wise(DenseMatrix(2, 6)), ShapeError);
  }
}

TEST_CASE("sparsify_token_wise: drop fraction matches the analytic oracle") {
  const double p = 0.1;
  // Per group of 4 iid Bernoulli(p) entries: 3 nonzeros drop 1, 4 drop 2.
  const double expected_drop = 4 * p * p * p * (1 - p) * 1 + p * p * p * p * 2;
  const double expected = expected_drop / (4 * p);
  CHECK(expected == doctest::Approx(0.0095));

  Rng rng(77);
  const auto a = random_sparse<float>(1024, 4096, p, rng);
  const auto r = sparsify_token_wise(a);
  CHECK(std::fabs(r.stats.dropped_fraction_of_nonzeros - expected) <= 0.0015);
  CHECK(r.stats.sparsity_before == doctest::Approx(0.9).epsilon(0.01));
}

TEST_CASE("sparsify_feature_wise: examples and transpose duality") {
  const DenseMatrix col{{3}, {0}, {0}, {-1}};
  CHECK(bitwise_equal(decompress(sparsify_feature_wise(col).sparse), col));

  const auto r = sparsify_feature_wise(DenseMatrix{{1}, {2}, {3}, {4}});
  CHECK(bitwise_equal(decompress(r.sparse), DenseMatrix{{0}, {0}, {3}, {4}}));
  CHECK(r.stats.dropped == 2);

  CHECK_THROWS_AS(sparsify_feature_wise(DenseMatrix(6, 4)), ShapeError);

  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const auto a = random_sparse<float>(8, 12, rng.uniform(0.1, 0.9), rng);
    const auto fw = sparsify_feature_wise(a);
    const auto tw = sparsify_token_wise(transpose(a));
    CHECK(bitwise_equal(decompress(fw.sparse), transpose(decompress(tw.sparse))));
    // Column-major group order makes the storage identical too.
    CHECK(std::equal(fw.sparse.values().begin(), fw.sparse.values().end(),
                     tw.sparse.values().begin()));
    CHECK(std::equal(fw.sparse.meta().begin(), fw.sparse.meta().end(),
                     tw.sparse.meta().begin()));
  }
}

TEST_CASE("sparsify: approximation and mask properties") {
  Rng rng(10);
  for (int trial = 0; trial < 100; ++trial) {
    const bool token = trial % 2 == 0;
    const auto a = random_sparse<float>(8, 8, rng.uniform(0.2, 1.0), rng);
    const auto r = token ? sparsify_token_wise(a) : sparsify_feature_wise(a);
    const DenseMatrix d = decompress(r.sparse);
    CHECK(group_compliant(d, token));
    CHECK(r.mask.count() == a.size() / 2);
    for (std::size_t g = 0; g < r.sparse.group_count(); ++g) {
      auto [p0, p1] = r.sparse.positions(g);
      const float kept_min = std::min(std::fabs(r.sparse.values()[2 * g]),
                                      std::fabs(r.sparse.values()[2 * g + 1]));
      for (unsigned p = 0; p < 4; ++p) {
        auto [row, col] = r.sparse.coordinate(g, p);
        if (p == p0 || p == p1) {
          CHECK(r.mask(row, col));
          CHECK(d(row, col) == a(row, col));
        } else {
          CHECK_FALSE(r.mask(row, col));
          CHECK(d(row, col) == 0.0f);
          CHECK(std::fabs(a(row, col)) <= kept_min);
        }
      }
    }
    CHECK(r.stats.dropped == r.stats.nonzeros_before - r.stats.nonzeros_after);
  }
}

TEST_CASE("sparsify_feature_wise_masked") {
  Rng rng(12);
  const auto a = random_sparse<float>(8, 8, 0.7, rng);
  SUBCASE("all-ones mask is a no-op") {
    const auto m = sparsify_feature_wise_masked(a, Mask(8, 8, true));
    const auto u = sparsify_feature_wise(a);
    CHECK(m.sparse == u.sparse);
    CHECK(m.stats.dropped == u.stats.dropped);
  }
  SUBCASE("all-zero mask empties the output without counting drops") {
    const auto m = sparsify_feature_wise_masked(a, Mask(8, 8, false));
    const DenseMatrix d = decompress(m.sparse);
    for (float v : d.data())
      CHECK(v == 0.0f);
    CHECK(m.stats.dropped == 0);
    CHECK(m.stats.nonzeros_before == 0);
  }
  SUBCASE("support stays inside the mask") {
    for (int trial = 0; trial < 200; ++trial) {
      const auto x = random_sparse<float>(8, 12, rng.uniform(0.1, 1.0), rng);
      const auto fwd = sparsify_token_wise(random_normal<float>(8, 12, rng)).mask;
      const DenseMatrix d = decompress(sparsify_feature_wise_masked(x, fwd).sparse);
      for (std::size_t r = 0; r < 8; ++r)
        for (std::size_t c = 0; c < 12; ++c)
          if (d(r, c) != 0.0f)
            REQUIRE(fwd(r, c));
    }
  }
  SUBCASE("shape mismatch") {
    CHECK_THROWS_AS(sparsify_feature_wise_masked(a, Mask(8, 4)), DimensionError);
  }
}

TEST_CASE("decompress and canonical round trip") {
  const Sparse24Matrix<float> s(1, 4, Orientation::token_wise, {7, 9}, {0b1101});
  CHECK(s.positions(0) == std::pair<unsigned, unsigned>{1, 3});
  CHECK(bitwise_equal(decompress(s), DenseMatrix{{0, 7, 0, 9}}));

  const Sparse24Matrix<float> zero(4, 8, Orientation::token_wise, std::vector<float>(16, 0.0f),
                                   std::vector<std::uint8_t>(4, 0x44));
  const DenseMatrix zd = decompress(zero);
  for (float v : zd.data())
    CHECK(v == 0.0f);

  Rng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    const auto a = random_compliant(8, 16, rng, true);
    const auto r = sparsify_token_wise(a);
    CHECK(bitwise_equal(decompress(r.sparse), a));
    CHECK(sparsify_token_wise(decompress(r.sparse)).sparse == r.sparse);
  }

  CHECK_THROWS_AS(Sparse24Matrix<float>(1, 4, Orientation::token_wise, {1, 2}, {0b0101}), DataError);
  CHECK_THROWS_AS(Sparse24Matrix<float>(1, 4, Orientation::token_wise, {1}, {0b0100}),
                  DimensionError);
}

TEST_CASE("compress_with_mask") {
  Rng rng(14);
  const auto a = random_normal<float>(8, 8, rng);
  const auto r = sparsify_token_wise(a);
  CHECK(compress_with_mask(a, r.mask, Orientation::token_wise) == r.sparse);
  CHECK_THROWS_AS(compress_with_mask(a, Mask(8, 8, true), Orientation::token_wise), DataError);
}

TEST_CASE("sp_gemm") {
  SUBCASE("identity") {
    const auto s = sparsify_token_wise(DenseMatrix{{1, 2, 0, 0}}).sparse;
    CHECK(bitwise_equal(sp_gemm(s, DenseMatrix::identity(4)), DenseMatrix{{1, 2, 0, 0}}));
  }
  SUBCASE("bitwise equal to the decompress-then-gemm oracle") {
    Rng rng(15);
    for (int trial = 0; trial < 100; ++trial) {
      const auto a = random_compliant(8, 8, rng, true);
      const auto b = random_normal<float>(8, 8, rng);
      const auto s = sparsify_token_wise(a).sparse;
      CHECK(bitwise_equal(sp_gemm(s, b), gemm(decompress(s), b)));
      CHECK(bitwise_equal(sp_gemm(s, b), gemm(a, b)));
    }
    // Also with drops: still equals the product of the decompressed operand.
    const auto a = random_normal<float>(12, 16, rng);
    const auto b = random_normal<float>(16, 5, rng);
    const auto s = sparsify_token_wise(a).sparse;
    CHECK(bitwise_equal(sp_gemm(s, b), gemm(decompress(s), b)));
  }
  SUBCASE("MAC accounting") {
    mac_counter() = {};
    sp_gemm(sparsify_token_wise(DenseMatrix(4, 8)).sparse, DenseMatrix(8, 2));
    CHECK(mac_counter().sparse == 32);
    CHECK(mac_counter().sparse_nonzero == 0);
    mac_counter() = {};
    gemm(DenseMatrix(4, 8), DenseMatrix(8, 2));
    CHECK(mac_counter().dense == 64);
  }
  SUBCASE("errors") {
    const auto fw = sparsify_feature_wise(DenseMatrix(4, 4)).sparse;
    CHECK_THROWS_AS(sp_gemm(fw, DenseMatrix(4, 4)), OrientationError);
    const auto tw = sparsify_token_wise(DenseMatrix(4, 4)).sparse;
    CHECK_THROWS_AS(sp_gemm(tw, DenseMatrix(8, 4)), DimensionError);
  }
}

TEST_CASE("sp_gemm_t") {
  Rng rng(16);
  SUBCASE("identity gives the transpose") {
    const auto a = transpose(random_compliant(8, 8, rng, true)); // feature-wise compliant
    const auto s = sparsify_feature_wise(a).sparse;
    CHECK(bitwise_equal(sp_gemm_t(s, DenseMatrix::identity(8)), transpose(decompress(s))));
  }
  SUBCASE("bitwise equal to the gemm_at oracle") {
    for (int trial = 0; trial < 100; ++trial) {
      const auto a = random_sparse<float>(8, 8, 0.5, rng);
      const auto b = random_normal<float>(8, 6, rng);
      const auto s = sparsify_feature_wise(a).sparse;
      CHECK(bitwise_equal(sp_gemm_t(s, b), gemm_at(decompress(s), b)));
    }
  }
  SUBCASE("zero operand") {
    mac_counter() = {};
    const auto s = sparsify_feature_wise(DenseMatrix(8, 4)).sparse;
    const auto c = sp_gemm_t(s, random_normal<float>(8, 3, rng));
    for (float v : c.data())
      CHECK(v == 0.0f);
    CHECK(mac_counter().sparse == 8 * 4 * 3 / 2);
    CHECK(mac_counter().sparse_nonzero == 0);
  }
  SUBCASE("errors") {
    const auto tw = sparsify_token_wise(DenseMatrix(4, 4)).sparse;
    CHECK_THROWS_AS(sp_gemm_t(tw, DenseMatrix(4, 4)), OrientationError);
    const auto fw = sparsify_feature_wise(DenseMatrix(4, 4)).sparse;
    CHECK_THROWS_AS(sp_gemm_t(fw, DenseMatrix(8, 4)), DimensionError);
  }
}

TEST_CASE("sparse file: round trip, layout and errors") {
  Rng rng(17);
  for (auto o : {Orientation::token_wise, Orientation::feature_wise}) {
    const auto a = random_normal<float>(12, 8, rng);
    const auto s = o == Orientation::token_wise ? sparsify_token_wise(a).sparse
                                                : sparsify_feature_wise(a).sparse;
    const auto bytes = encode_sparse(s);
    const std::size_t groups = s.group_count();
    CHECK(bytes.size() == 4 + 4 + 1 + 4 + 4 + 8 * groups + (groups + 1) / 2);
    CHECK(decode_sparse(bytes) == s);
  }
  // Odd group count: 1x4 token-wise has one group, meta in the low nibble.
  const Sparse24Matrix<float> one(1, 4, Orientation::token_wise, {7, 9}, {0b1101});
  const auto bytes = encode_sparse(one);
  CHECK(bytes.back() == 0b1101);
  CHECK(bytes[8] == 0);

  auto bad = bytes;
  bad.back() = 0b0111; // positions (3, 1)
  CHECK_THROWS_AS(decode_sparse(bad), FormatError);
  auto bad_orient = bytes;
  bad_orient[8] = 3;
  CHECK_THROWS_AS(decode_sparse(bad_orient), FormatError);
  auto short_bytes = bytes;
  short_bytes.pop_back();
  CHECK_THROWS_AS(decode_sparse(short_bytes), FormatError);
  CHECK_THROWS_AS(decode_sparse(encode_matrix(DenseMatrix(1, 4))), FormatError);
}
