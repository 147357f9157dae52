// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <s24/ffn.hpp>
#include <s24/grad_check.hpp>
#include <s24/rng.hpp>

using namespace s24;

namespace {

template <class T> FfnParams<T> random_params(std::size_t d, std::size_t h, Rng &rng, bool swiglu = false) {
  FfnParams<T> p;
  p.w1 = random_normal<T>(d, h, rng, 1.0 / std::sqrt(static_cast<double>(d)));
  p.w2 = random_normal<T>(h, d, rng, 1.0 / std::sqrt(static_cast<double>(h)));
  if (swiglu)
    p.w3 = random_normal<T>(d, h, rng, 1.0 / std::sqrt(static_cast<double>(d)));
  return p;
}

// Plain dense Squared-ReLU FFN written without any of the library's staging.
struct PlainFfn {
  DenseMatrix y3, dw1, dw2, dx;
};

PlainFfn plain_ffn(const DenseMatrix &x, const FfnParams<float> &p, const DenseMatrix &g3) {
  const std::size_t n = x.rows(), d = p.w1.rows(), h = p.w1.cols();
  DenseMatrix y1(n, h), y2(n, h), g1(n, h);
  PlainFfn out{DenseMatrix(n, d), DenseMatrix(d, h), DenseMatrix(h, d), DenseMatrix(n, d)};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t t = 0; t < d; ++t)
      for (std::size_t j = 0; j < h; ++j)
        y1(i, j) += x(i, t) * p.w1(t, j);
  for (std::size_t i = 0; i < n * h; ++i) {
    const float r = std::max(y1.data()[i], 0.0f);
    y2.data()[i] = r * r;
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t t = 0; t < h; ++t)
      for (std::size_t j = 0; j < d; ++j)
        out.y3(i, j) += y2(i, t) * p.w2(t, j);
  // g2 = g3 W2^T, then through the activation.
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < h; ++j) {
      float g2 = 0.0f;
      for (std::size_t t = 0; t < d; ++t)
        g2 += g3(i, t) * p.w2(j, t);
      g1(i, j) = (y1(i, j) > 0.0f ? 2.0f * y1(i, j) : 0.0f) * g2;
    }
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < d; ++j)
        out.dw2(i, j) += y2(t, i) * g3(t, j);
  // dW1 accumulates x^T g1 over tokens; stored as [d, h].
  DenseMatrix dw1t(h, d);
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < d; ++j)
        dw1t(i, j) += g1(t, i) * x(t, j);
  out.dw1 = transpose(dw1t);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t t = 0; t < h; ++t)
      for (std::size_t j = 0; j < d; ++j)
        out.dx(i, j) += g1(i, t) * p.w1(j, t);
  return out;
}

// Inputs for which relu(x W1)^2 has at most two nonzeros per group of four:
// W1 column 4g+k equals +e_k or -e_k depending on the group, x rows have
// exactly one positive entry among the first two and one among the last two.
std::pair<DenseMatrix, FfnParams<float>> compliant_instance(std::size_t n, std::size_t h, Rng &rng) {
  const std::size_t d = 4;
  FfnParams<float> p;
  p.w1 = DenseMatrix(d, h);
  for (std::size_t c = 0; c < h; ++c)
    p.w1(c % 4, c) = static_cast<float>(rng.uniform(0.5, 1.5));
  p.w2 = random_normal<float>(h, d, rng);
  DenseMatrix x(n, d);
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t a = rng.below(2), b = 2 + rng.below(2);
    for (std::size_t k = 0; k < d; ++k)
      x(r, k) = -static_cast<float>(rng.uniform(0.1, 1.0));
    x(r, a) = static_cast<float>(rng.uniform(0.1, 1.0));
    x(r, b) = static_cast<float>(rng.uniform(0.1, 1.0));
  }
  return {x, p};
}

} // namespace

TEST_CASE("activations: examples") {
  const DenseMatrix y{{2, -3, 0, 3, -1}};
  CHECK(bitwise_equal(act_squared_relu(y), DenseMatrix{{4, 0, 0, 9, 0}}));
  CHECK(bitwise_equal(act_squared_relu_grad(y), DenseMatrix{{4, 0, 0, 6, 0}}));

  const double eps = 1e-6;
  const auto f = [](double v) { return act_squared_relu(OracleMatrix{{v}})(0, 0); };
  CHECK((f(0.7 + eps) - f(0.7 - eps)) / (2 * eps) == doctest::Approx(1.4).epsilon(1e-4));
  CHECK(act_squared_relu_grad(OracleMatrix{{0.7}})(0, 0) == doctest::Approx(1.4));

  CHECK(swish(0.0, 1.0) == 0.0);
  CHECK(swish(1.0, 1.0) == doctest::Approx(0.7311).epsilon(1e-4));
  CHECK(swish(2.0, 1e4) == doctest::Approx(2.0));

  FfnParams<double> p;
  p.w1 = OracleMatrix{{1.0}};
  p.w2 = OracleMatrix{{1.0}};
  CHECK_THROWS_AS(act_swiglu(OracleMatrix{{1.0}}, p), ConfigError);
  p.w3 = OracleMatrix{{3.0}};
  CHECK(act_swiglu(OracleMatrix{{1.0}}, p)(0, 0) == doctest::Approx(3.0 * 0.7310586));
}

TEST_CASE("FfnConfig validation") {
  FfnConfig c = FfnConfig::recipe();
  c.activation = Activation::swiglu;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = FfnConfig::recipe();
  c.split_ratio = 1.2;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(parse_backward_mode(to_string(BackwardMode::split_masked)) == BackwardMode::split_masked);
  CHECK_THROWS_AS(parse_forward_mode("sparse"), ConfigError);

  Rng rng(1);
  auto p = random_params<float>(8, 18, rng);
  CHECK_THROWS_AS(ffn_forward(random_normal<float>(4, 8, rng), p, FfnConfig{}), ShapeError);
  p = random_params<float>(8, 16, rng);
  CHECK_THROWS_AS(ffn_forward(random_normal<float>(6, 8, rng), p, FfnConfig::recipe()), ShapeError);
  CHECK_THROWS_AS(ffn_forward(random_normal<float>(4, 7, rng), p, FfnConfig{}), DimensionError);
}

TEST_CASE("ffn_forward: W1 = 0 gives y3 = 0") {
  Rng rng(2);
  auto p = random_params<float>(8, 16, rng);
  p.w1 = DenseMatrix(8, 16);
  for (const auto &cfg : {FfnConfig::dense_baseline(), FfnConfig::recipe()}) {
    const auto [y3, cache] = ffn_forward(random_normal<float>(8, 8, rng), p, cfg);
    for (float v : y3.data())
      CHECK(v == 0.0f);
  }
}

TEST_CASE("dense config equals a plain dense implementation bitwise") {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const auto p = random_params<float>(8, 16, rng);
    const auto x = random_normal<float>(12, 8, rng);
    const auto g3 = random_normal<float>(12, 8, rng);
    const FfnConfig cfg = FfnConfig::dense_baseline();
    const auto [y3, cache] = ffn_forward(x, p, cfg);
    const auto g = ffn_backward(g3, cache, p, cfg);
    const PlainFfn ref = plain_ffn(x, p, g3);
    CHECK(bitwise_equal(y3, ref.y3));
    CHECK(bitwise_equal(g.dw1, ref.dw1));
    CHECK(bitwise_equal(g.dw2, ref.dw2));
    CHECK(bitwise_equal(g.dx, ref.dx));
  }
}

TEST_CASE("exactness inheritance: no drops means every sparse mode equals dense") {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    auto [x, p] = compliant_instance(16, 16, rng);
    const auto g3 = random_normal<float>(16, 4, rng);
    const FfnConfig dense = FfnConfig::dense_baseline();
    const auto [y3d, cd] = ffn_forward(x, p, dense);
    const auto gd = ffn_backward(g3, cd, p, dense);

    FfnConfig fwd_only = dense;
    fwd_only.forward_mode = ForwardMode::sparse24;
    const auto [y3s, cs] = ffn_forward(x, p, fwd_only);
    CHECK(cs.stats.dropped == 0);
    CHECK(bitwise_equal(y3s, y3d));

    // Backward modes: columns of y2 and g1 are token-compliant only by chance,
    // so compare with the split ratio at 0 (nothing feature-wise dropped).
    FfnConfig masked = fwd_only;
    masked.backward_mode = BackwardMode::split_masked;
    masked.split_ratio = 0.0;
    const auto [y3m, cm] = ffn_forward(x, p, masked);
    const auto gm = ffn_backward(g3, cm, p, masked);
    CHECK(bitwise_equal(y3m, y3d));
    CHECK(bitwise_equal(gm.dw1, gd.dw1));
    CHECK(bitwise_equal(gm.dw2, gd.dw2));
    CHECK(bitwise_equal(gm.dx, gd.dx));
  }
}

TEST_CASE("sparse forward matches a decompress-then-dense oracle") {
  Rng rng(5);
  const auto p = random_params<float>(8, 16, rng);
  const auto x = random_normal<float>(8, 8, rng);
  FfnConfig cfg;
  cfg.forward_mode = ForwardMode::sparse24;
  const auto [y3, cache] = ffn_forward(x, p, cfg);
  const auto top2 = sparsify_token_wise(act_squared_relu(gemm(x, p.w1)));
  CHECK(bitwise_equal(y3, gemm(decompress(top2.sparse), p.w2)));
  CHECK(*cache.fwd_mask == top2.mask);
  CHECK(cache.stats.dropped == top2.stats.dropped);
}

TEST_CASE("permutation invariance in dense mode") {
  Rng rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const auto p = random_params<float>(8, 16, rng);
    const auto x = random_normal<float>(16, 8, rng);
    const auto g3 = random_normal<float>(16, 8, rng);
    FfnConfig off = FfnConfig::dense_baseline(), on = off;
    on.permute_tokens = true;
    on.permute_seed = 100 + trial;
    const auto [ya, ca] = ffn_forward(x, p, off);
    const auto [yb, cb] = ffn_forward(x, p, on);
    CHECK(bitwise_equal(ya, yb));
    const auto ga = ffn_backward(g3, ca, p, off);
    const auto gb = ffn_backward(g3, cb, p, on);
    CHECK(bitwise_equal(ga.dx, gb.dx));
    // Weight gradients reduce over tokens, whose order the permutation changes.
    CHECK(relative_frobenius_error(ga.dw1, gb.dw1) <= 1e-6);
    CHECK(relative_frobenius_error(ga.dw2, gb.dw2) <= 1e-6);
  }
}

TEST_CASE("ffn_backward: g3 = 0 gives zero gradients") {
  Rng rng(7);
  const auto p = random_params<float>(8, 16, rng);
  const auto x = random_normal<float>(8, 8, rng);
  for (const auto &cfg : {FfnConfig::dense_baseline(), FfnConfig::recipe()}) {
    const auto [y3, cache] = ffn_forward(x, p, cfg);
    const auto g = ffn_backward(DenseMatrix(8, 8), cache, p, cfg);
    for (const auto *m : {&g.dw1, &g.dw2, &g.dx})
      for (float v : m->data())
        CHECK(v == 0.0f);
  }
}

TEST_CASE("support inclusion of g1 and y2_hat") {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = random_params<float>(8, 32, rng);
    const auto x = random_normal<float>(16, 8, rng);
    const FfnConfig cfg = FfnConfig::recipe();
    const auto [y3, cache] = ffn_forward(x, p, cfg);
    const DenseMatrix y2 = decompress(*cache.y2_hat);
    for (std::size_t r = 0; r < y2.rows(); ++r)
      for (std::size_t c = 0; c < y2.cols(); ++c)
        if (y2(r, c) != 0.0f)
          REQUIRE((*cache.fwd_mask)(r, c));
    BackwardStats bs;
    ffn_backward(random_normal<float>(16, 8, rng), cache, p, cfg, nullptr, &bs);
    CHECK(bs.g1_outside_mask == 0);
    CHECK(bs.g1_nonzeros > 0);
  }
  // With the mask off, g1 escapes the forward mask.
  FfnConfig loose = FfnConfig::recipe();
  loose.mask_grad_with_fwd = false;
  const auto p = random_params<float>(8, 32, rng);
  const auto [y3, cache] = ffn_forward(random_normal<float>(16, 8, rng), p, loose);
  BackwardStats bs;
  ffn_backward(random_normal<float>(16, 8, rng), cache, p, loose, nullptr, &bs);
  CHECK(bs.g1_outside_mask > 0);
}

TEST_CASE("GEMM census") {
  Rng rng(9);
  const auto p = random_params<float>(8, 32, rng);
  const auto x = random_normal<float>(16, 8, rng);
  const auto g3 = random_normal<float>(16, 8, rng);

  SUBCASE("full recipe: 6 GEMMs, 4 sparse") {
    const FfnConfig cfg = FfnConfig::recipe();
    GemmCensus census;
    ForwardOptions<float> opt;
    opt.census = &census;
    const auto [y3, cache] = ffn_forward(x, p, cfg, opt);
    ffn_backward(g3, cache, p, cfg, &census);
    CHECK(census.count() == 6);
    CHECK(census.sparse_count() == 4);
    CHECK(census.records[0].kind == GemmKind::dense);
    CHECK(census.records[2].kind == GemmKind::dense);
    CHECK(census.dense_equivalent_macs == 6ull * 16 * 8 * 32);
    CHECK(census.macs() < census.dense_equivalent_macs);
  }
  SUBCASE("dense: 6 GEMMs, 0 sparse") {
    const FfnConfig cfg = FfnConfig::dense_baseline();
    GemmCensus census;
    ForwardOptions<float> opt;
    opt.census = &census;
    const auto [y3, cache] = ffn_forward(x, p, cfg, opt);
    ffn_backward(g3, cache, p, cfg, &census);
    CHECK(census.count() == 6);
    CHECK(census.sparse_count() == 0);
    CHECK(census.macs() == census.dense_equivalent_macs);
  }
}

TEST_CASE("ffn_backward rejects a mismatched cache") {
  Rng rng(10);
  const auto p = random_params<float>(8, 16, rng);
  const auto [y3, cache] = ffn_forward(random_normal<float>(8, 8, rng), p, FfnConfig::recipe());
  CHECK_THROWS_AS(ffn_backward(y3, cache, p, FfnConfig::dense_baseline()), StateError);
  const auto other = random_params<float>(8, 20, rng);
  CHECK_THROWS_AS(ffn_backward(y3, cache, other, FfnConfig::recipe()), StateError);
}

TEST_CASE("FP8 emulation") {
  Rng rng(11);
  const auto p = random_params<float>(8, 16, rng);
  const auto x = random_normal<float>(8, 8, rng);
  FfnConfig cfg = FfnConfig::recipe();
  const auto [exact, c0] = ffn_forward(x, p, cfg);
  cfg.fp8_emulation = true;
  const auto [approx, c1] = ffn_forward(x, p, cfg);
  CHECK(relative_frobenius_error(approx, exact) <= 0.15);
  CHECK_FALSE(bitwise_equal(approx, exact));

  Rng r2(11);
  const auto pd = random_params<double>(8, 16, r2);
  CHECK_THROWS_AS(ffn_forward(random_normal<double>(8, 8, r2), pd, cfg), ConfigError);
}

TEST_CASE("SwiGLU dense baseline") {
  Rng rng(12);
  auto p = random_params<double>(4, 8, rng, true);
  FfnConfig cfg;
  cfg.activation = Activation::swiglu;
  const auto x = random_normal<double>(4, 4, rng);
  const auto [y3, cache] = ffn_forward(x, p, cfg);
  CHECK(relative_frobenius_error(y3, gemm(act_swiglu(x, p), p.w2)) <= 1e-15);
  CHECK(grad_check(p, x, cfg, 1e-6) <= 1e-6);
  p.w3.reset();
  CHECK_THROWS_AS(ffn_forward(x, p, cfg), ConfigError);
}

TEST_CASE("grad_check") {
  Rng rng(13);
  SUBCASE("dense") {
    for (int trial = 0; trial < 10; ++trial) {
      const auto p = random_params<double>(8, 16, rng);
      const auto x = random_normal<double>(4, 8, rng);
      CHECK(grad_check(p, x, FfnConfig::dense_baseline(), 1e-6) <= 1e-6);
    }
  }
  SUBCASE("sparse recipe, fixed-mask convention") {
    FfnConfig cfg = FfnConfig::recipe();
    cfg.split_ratio = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
      const auto p = random_params<double>(8, 16, rng);
      const auto x = random_normal<double>(4, 8, rng);
      const auto res = grad_check_detailed(p, x, cfg, 1e-6);
      CHECK_MESSAGE(res.max_rel_error <= 1e-5, res.worst_tensor << "[" << res.worst_index << "]");
    }
  }
  SUBCASE("compliant activations") {
    auto [xf, pf] = compliant_instance(4, 16, rng);
    FfnParams<double> p{cast<double>(pf.w1), cast<double>(pf.w2), std::nullopt, 1.0};
    FfnConfig cfg;
    cfg.forward_mode = ForwardMode::sparse24;
    cfg.backward_mode = BackwardMode::split_masked;
    cfg.split_ratio = 0.0;
    CHECK(grad_check(p, cast<double>(xf), cfg, 1e-6) <= 1e-6);
  }
  SUBCASE("a deliberately wrong gradient is caught") {
    // Without the mask restriction g1 disagrees with the sparsified forward.
    FfnConfig cfg = FfnConfig::recipe();
    cfg.split_ratio = 0.0;
    cfg.mask_grad_with_fwd = false;
    const auto p = random_params<double>(8, 16, rng);
    CHECK(grad_check(p, random_normal<double>(4, 8, rng), cfg, 1e-6) > 1e-3);
  }
}
