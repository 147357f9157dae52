// SPDX-License-Identifier: Apache-2.0
/**
 * @file ffn.hpp
 * @brief Squared-ReLU / SwiGLU feed-forward block with the 2:4 activation
 *        sparsity recipe.
 *
 * Forward (three stages):
 *   1. optional fixed token permutation, y1 = x W1 (FP8 row-wise if enabled)
 *   2. y2 = relu(y1)^2, token-wise 2:4 sparsified, then FP8-quantized
 *   3. y3 = y2 W2 on the 2:4 path, inverse permutation
 *
 * Backward (in the permuted frame):
 *   g2 = g3 W2^T                       dense
 *   g1 = g2 * 2 relu(y1)               optionally restricted to the forward mask
 *   dW2 = y2^T g3                      dense | feature-wise 2:4 | split
 *   dW1 = x^T g1                       dense | feature-wise 2:4 | split
 *   dX  = g1 W1^T                      dense | token-wise 2:4
 *
 * Gradients treat the forward keep/drop selection as a constant.
 */
#pragma once

#include <s24/fp8.hpp>
#include <s24/permutation.hpp>
#include <s24/sparse24.hpp>
#include <s24/split_gemm.hpp>

#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace s24 {

enum class Activation { squared_relu, swiglu };
enum class ForwardMode { dense, sparse24 };
enum class BackwardMode { dense, naive_sparse, split_masked };

const char *to_string(Activation a);
const char *to_string(ForwardMode m);
const char *to_string(BackwardMode m);
Activation parse_activation(const std::string &s);
ForwardMode parse_forward_mode(const std::string &s);
BackwardMode parse_backward_mode(const std::string &s);

struct FfnConfig {
  Activation activation = Activation::squared_relu;
  ForwardMode forward_mode = ForwardMode::dense;
  BackwardMode backward_mode = BackwardMode::dense;
  /// Zero g1 wherever the forward pass dropped or never had a value.
  bool mask_grad_with_fwd = true;
  bool permute_tokens = false;
  std::uint64_t permute_seed = 0;
  double split_ratio = 0.95;
  /// Apply the feature split to dW1 as well as dW2 (split_masked mode only).
  bool split_dw1 = true;
  /// FP8 row-wise emulation of the forward GEMMs.
  bool fp8_emulation = false;
  /// Also emulate FP8 in the dense backward GEMMs.
  bool fp8_backward = false;

  /// Throws ConfigError when a sparse mode is combined with SwiGLU or the
  /// split ratio is outside [0, 1].
  void validate() const;

  bool any_sparse() const {
    return forward_mode != ForwardMode::dense || backward_mode != BackwardMode::dense;
  }

  static FfnConfig dense_baseline();
  /// Full recipe: 2:4 forward, split backward on the forward mask, permuted tokens.
  static FfnConfig recipe();

  friend bool operator==(const FfnConfig &, const FfnConfig &) = default;
};

template <class T> struct FfnParams {
  Matrix<T> w1;                 // [d, h]
  Matrix<T> w2;                 // [h, d]
  std::optional<Matrix<T>> w3;  // [d, h], SwiGLU only
  double beta = 1.0;

  std::size_t model_dim() const { return w1.rows(); }
  std::size_t hidden_dim() const { return w1.cols(); }

  /// Shape checks plus "W3 present iff SwiGLU" and h divisible by 4 for the
  /// Squared-ReLU sparse recipe.
  void validate(const FfnConfig &cfg) const;
};

enum class GemmKind { dense, sparse24, split };

struct GemmRecord {
  std::string name;
  GemmKind kind = GemmKind::dense;
  std::uint64_t macs = 0;
};

/// Logical GEMMs issued by one forward/backward pair.
struct GemmCensus {
  std::vector<GemmRecord> records;

  std::size_t count() const { return records.size(); }
  std::size_t sparse_count() const;
  std::uint64_t macs() const;
  std::uint64_t dense_equivalent_macs = 0;
};

template <class T> struct FfnCache {
  FfnConfig config;
  Matrix<T> x_permuted;               // [n, d]
  Matrix<T> y1;                       // [n, h]
  std::optional<Matrix<T>> gate;      // x W3, SwiGLU only
  Matrix<T> y2;                       // activation fed to the second GEMM, dense layout
  std::optional<Sparse24Matrix<T>> y2_hat;
  std::optional<Mask> fwd_mask;
  std::optional<Permutation> permutation;
  std::optional<SplitPlan> plan;
  SparsifyStats stats;                // token-wise sparsification of y2 (no drops in dense mode)
};

template <class T> struct FfnGrads {
  Matrix<T> dw1;
  Matrix<T> dw2;
  Matrix<T> dx;
  std::optional<Matrix<T>> dw3;
};

template <class T> struct ForwardOptions {
  /// Use this token-wise mask instead of selecting the top-2 per group.
  const Mask *fixed_mask = nullptr;
  /// Reuse a previously computed split plan instead of recounting.
  const SplitPlan *reuse_plan = nullptr;
  GemmCensus *census = nullptr;
};

// ---------------------------------------------------------------------------
// Activations

template <class T> Matrix<T> act_squared_relu(const Matrix<T> &y1) {
  Matrix<T> out(y1.rows(), y1.cols());
  auto s = y1.data();
  auto o = out.data();
  for (std::size_t i = 0; i < s.size(); ++i) {
    const T r = s[i] > T(0) ? s[i] : T(0);
    o[i] = r * r;
  }
  return out;
}

template <class T> Matrix<T> act_squared_relu_grad(const Matrix<T> &y1) {
  Matrix<T> out(y1.rows(), y1.cols());
  auto s = y1.data();
  auto o = out.data();
  for (std::size_t i = 0; i < s.size(); ++i)
    o[i] = s[i] > T(0) ? T(2) * s[i] : T(0);
  return out;
}

template <class T> T swish(T x, double beta) {
  return x / (T(1) + std::exp(static_cast<T>(-beta) * x));
}

template <class T> T sigmoid(T x) { return T(1) / (T(1) + std::exp(-x)); }

/// swish_beta(x W1) * (x W3), elementwise.
template <class T> Matrix<T> act_swiglu(const Matrix<T> &x, const FfnParams<T> &p) {
  if (!p.w3)
    throw ConfigError("SwiGLU needs W3");
  Matrix<T> a = gemm(x, p.w1);
  const Matrix<T> b = gemm(x, *p.w3);
  auto av = a.data();
  auto bv = b.data();
  for (std::size_t i = 0; i < av.size(); ++i)
    av[i] = swish(av[i], p.beta) * bv[i];
  return a;
}

// ---------------------------------------------------------------------------

namespace detail {

template <class T> void ensure_fp8_precision() {
  if constexpr (!std::is_same_v<T, float>)
    throw ConfigError("FP8 emulation runs in working (32-bit) precision only");
}

/// a b through FP8 row-wise quantization (rows of a, columns of b).
template <class T> Matrix<T> fp8_matmul(const Matrix<T> &a, const Matrix<T> &b) {
  ensure_fp8_precision<T>();
  if constexpr (std::is_same_v<T, float>) {
    return fp8_gemm_rowwise(fp8_quantize_rowwise(a, ScaleAxis::rows),
                            fp8_quantize_rowwise(b, ScaleAxis::cols));
  } else {
    return {};
  }
}

/// Token-wise 2:4 product whose kept values and right operand go through FP8
/// row-wise quantization.
template <class T>
Matrix<T> fp8_sp_matmul(const Matrix<T> &a_dense, const Mask &mask, const Matrix<T> &b) {
  ensure_fp8_precision<T>();
  if constexpr (std::is_same_v<T, float>) {
    const Fp8Rowwise qa = fp8_quantize_rowwise(a_dense, ScaleAxis::rows);
    const Fp8Rowwise qb = fp8_quantize_rowwise(b, ScaleAxis::cols);
    Matrix<T> acc = sp_gemm(compress_with_mask(fp8_decode(qa), mask, Orientation::token_wise),
                            fp8_decode(qb));
    fp8_apply_output_scales(acc, qa.scales, qb.scales);
    return acc;
  } else {
    return {};
  }
}

class CensusScope {
public:
  CensusScope(GemmCensus *census, std::string name, GemmKind kind, std::uint64_t dense_macs)
      : census_(census), name_(std::move(name)), kind_(kind), dense_macs_(dense_macs),
        start_(mac_counter().total()) {}
  ~CensusScope() {
    if (census_) {
      census_->records.push_back({name_, kind_, mac_counter().total() - start_});
      census_->dense_equivalent_macs += dense_macs_;
    }
  }
  CensusScope(const CensusScope &) = delete;
  CensusScope &operator=(const CensusScope &) = delete;

private:
  GemmCensus *census_;
  std::string name_;
  GemmKind kind_;
  std::uint64_t dense_macs_;
  std::uint64_t start_;
};

template <class T> void check_rows_divisible(const Matrix<T> &x, const FfnConfig &cfg) {
  if ((cfg.any_sparse() || cfg.permute_tokens) && x.rows() % 4 != 0)
    throw ShapeError("ffn: token count " + std::to_string(x.rows()) +
                     " must be divisible by 4 when sparsity or permutation is on");
}

inline std::uint64_t macs_of(std::size_t m, std::size_t k, std::size_t n) {
  return static_cast<std::uint64_t>(m) * k * n;
}

} // namespace detail

/// Runs the three-stage forward. The returned cache carries everything the
/// backward pass needs; the mask is never recomputed there.
template <class T>
std::pair<Matrix<T>, FfnCache<T>> ffn_forward(const Matrix<T> &x, const FfnParams<T> &p,
                                              const FfnConfig &cfg,
                                              const ForwardOptions<T> &opt = {}) {
  cfg.validate();
  p.validate(cfg);
  if (cfg.fp8_emulation)
    detail::ensure_fp8_precision<T>();
  if (x.cols() != p.model_dim())
    throw DimensionError("ffn_forward: input width " + std::to_string(x.cols()) +
                         " != model dim " + std::to_string(p.model_dim()));
  detail::check_rows_divisible(x, cfg);
  const std::size_t n = x.rows(), d = p.model_dim(), h = p.hidden_dim();

  FfnCache<T> cache;
  cache.config = cfg;
  if (cfg.permute_tokens) {
    cache.permutation = make_permutation(cfg.permute_seed, n);
    cache.x_permuted = permute_rows(x, *cache.permutation);
  } else {
    cache.x_permuted = x;
  }
  const Matrix<T> &xp = cache.x_permuted;

  // Stage 1.
  {
    detail::CensusScope scope(opt.census, "y1 = x W1", GemmKind::dense, detail::macs_of(n, d, h));
    cache.y1 = cfg.fp8_emulation ? detail::fp8_matmul(xp, p.w1) : gemm(xp, p.w1);
  }

  // Stage 2.
  if (cfg.activation == Activation::swiglu) {
    {
      detail::CensusScope scope(opt.census, "gate = x W3", GemmKind::dense,
                                detail::macs_of(n, d, h));
      cache.gate = cfg.fp8_emulation ? detail::fp8_matmul(xp, *p.w3) : gemm(xp, *p.w3);
    }
    cache.y2 = Matrix<T>(n, h);
    auto a = cache.y1.data();
    auto b = cache.gate->data();
    auto o = cache.y2.data();
    for (std::size_t i = 0; i < o.size(); ++i)
      o[i] = swish(a[i], p.beta) * b[i];
  } else {
    cache.y2 = act_squared_relu(cache.y1);
  }

  if (cfg.backward_mode == BackwardMode::split_masked) {
    // Per-feature nonzero counts of the activation, as a GEMM epilogue would see them.
    cache.plan = opt.reuse_plan ? *opt.reuse_plan
                                : partition_features(column_nonzero_counts(cache.y2),
                                                     cfg.split_ratio);
    if (cache.plan->hidden_dim != h)
      throw DimensionError("reused split plan has the wrong hidden dimension");
  }

  if (cfg.forward_mode == ForwardMode::sparse24) {
    if (opt.fixed_mask) {
      auto s = compress_with_mask(cache.y2, *opt.fixed_mask, Orientation::token_wise);
      const auto before = detail::count_nonzero<T>(cache.y2.data());
      const auto after = detail::count_nonzero<T>(s.values());
      cache.stats = SparsifyStats::from_counts(cache.y2.size(), before, after);
      cache.fwd_mask = *opt.fixed_mask;
      cache.y2_hat = std::move(s);
    } else {
      auto sp = sparsify_token_wise(cache.y2);
      cache.stats = sp.stats;
      cache.fwd_mask = std::move(sp.mask);
      cache.y2_hat = std::move(sp.sparse);
    }
    cache.y2 = decompress(*cache.y2_hat);
  } else {
    const auto nz = detail::count_nonzero<T>(cache.y2.data());
    cache.stats = SparsifyStats::from_counts(cache.y2.size(), nz, nz);
  }

  // Stage 3.
  Matrix<T> y3p;
  if (cfg.forward_mode == ForwardMode::sparse24) {
    detail::CensusScope scope(opt.census, "y3 = y2 W2", GemmKind::sparse24,
                              detail::macs_of(n, h, d));
    y3p = cfg.fp8_emulation ? detail::fp8_sp_matmul(cache.y2, *cache.fwd_mask, p.w2)
                            : sp_gemm(*cache.y2_hat, p.w2);
  } else {
    detail::CensusScope scope(opt.census, "y3 = y2 W2", GemmKind::dense,
                              detail::macs_of(n, h, d));
    y3p = cfg.fp8_emulation ? detail::fp8_matmul(cache.y2, p.w2) : gemm(cache.y2, p.w2);
  }
  Matrix<T> y3 = cache.permutation ? inverse_permute_rows(y3p, *cache.permutation)
                                   : std::move(y3p);
  return {std::move(y3), std::move(cache)};
}

namespace detail {

template <class T>
Matrix<T> maybe_fp8_at(const Matrix<T> &a, const Matrix<T> &b, const FfnConfig &cfg) {
  return cfg.fp8_backward ? fp8_matmul(transpose(a), b) : gemm_at(a, b);
}

/// a^T b for a [n, h] and b [n, d] in the configured backward mode.
template <class T>
Matrix<T> weight_grad(const Matrix<T> &a, const Matrix<T> &b, const FfnCache<T> &cache,
                      bool allow_split, const std::string &name, GemmCensus *census,
                      SparsifyStats *stats) {
  const FfnConfig &cfg = cache.config;
  const std::uint64_t dense_macs = macs_of(a.cols(), a.rows(), b.cols());
  switch (cfg.backward_mode) {
  case BackwardMode::dense: {
    CensusScope scope(census, name, GemmKind::dense, dense_macs);
    return maybe_fp8_at(a, b, cfg);
  }
  case BackwardMode::naive_sparse: {
    CensusScope scope(census, name, GemmKind::sparse24, dense_macs);
    auto sp = sparsify_feature_wise(a);
    if (stats)
      *stats = sp.stats;
    return sp_gemm_t(sp.sparse, b);
  }
  case BackwardMode::split_masked: {
    if (!allow_split) {
      CensusScope scope(census, name, GemmKind::sparse24, dense_macs);
      auto sp = cache.fwd_mask && cfg.mask_grad_with_fwd
                    ? sparsify_feature_wise_masked(a, *cache.fwd_mask)
                    : sparsify_feature_wise(a);
      if (stats)
        *stats = sp.stats;
      return sp_gemm_t(sp.sparse, b);
    }
    CensusScope scope(census, name, GemmKind::split, dense_macs);
    const Mask mask = cache.fwd_mask && cfg.mask_grad_with_fwd
                          ? *cache.fwd_mask
                          : Mask(a.rows(), a.cols(), true);
    return split_gemm_t(a, mask, b, *cache.plan, stats);
  }
  }
  throw ConfigError("unknown backward mode");
}

template <class T> void check_cache(const FfnCache<T> &cache, const FfnParams<T> &p,
                                    const FfnConfig &cfg, const Matrix<T> &g3) {
  if (!(cache.config == cfg))
    throw StateError("ffn_backward: cache was produced under a different config");
  if (cache.y1.cols() != p.hidden_dim() || cache.x_permuted.cols() != p.model_dim())
    throw StateError("ffn_backward: cache does not match parameter shapes");
  if (g3.rows() != cache.x_permuted.rows() || g3.cols() != p.model_dim())
    throw DimensionError("ffn_backward: upstream gradient has the wrong shape");
  if (cfg.backward_mode == BackwardMode::split_masked && !cache.plan)
    throw StateError("ffn_backward: split mode needs a plan in the cache");
}

} // namespace detail

/// Backward statistics for telemetry.
struct BackwardStats {
  SparsifyStats dw2;
  SparsifyStats dw1;
  /// Nonzero entries of g1 lying outside the forward mask (0 without a mask).
  std::uint64_t g1_outside_mask = 0;
  std::uint64_t g1_nonzeros = 0;
};

template <class T>
FfnGrads<T> ffn_backward(const Matrix<T> &g3, const FfnCache<T> &cache, const FfnParams<T> &p,
                         const FfnConfig &cfg, GemmCensus *census = nullptr,
                         BackwardStats *bstats = nullptr) {
  detail::check_cache(cache, p, cfg, g3);
  const std::size_t n = g3.rows(), d = p.model_dim(), h = p.hidden_dim();
  const Matrix<T> g3p = cache.permutation ? permute_rows(g3, *cache.permutation) : g3;
  const Matrix<T> &xp = cache.x_permuted;

  Matrix<T> g2;
  {
    detail::CensusScope scope(census, "g2 = g3 W2^T", GemmKind::dense, detail::macs_of(n, d, h));
    const Matrix<T> w2t = transpose(p.w2);
    g2 = cfg.fp8_backward ? detail::fp8_matmul(g3p, w2t) : gemm(g3p, w2t);
  }

  FfnGrads<T> grads;
  Matrix<T> dxp;
  if (cfg.activation == Activation::swiglu) {
    Matrix<T> ga(n, h), gb(n, h);
    auto a = cache.y1.data();
    auto b = cache.gate->data();
    auto g = g2.data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T s = sigmoid(static_cast<T>(p.beta) * a[i]);
      const T sw = a[i] * s;
      const T dsw = s + static_cast<T>(p.beta) * a[i] * s * (T(1) - s);
      ga.data()[i] = g[i] * b[i] * dsw;
      gb.data()[i] = g[i] * sw;
    }
    grads.dw2 = detail::weight_grad(cache.y2, g3p, cache, false, "dW2 = y2^T g3", census, nullptr);
    grads.dw1 = transpose(detail::weight_grad(ga, xp, cache, false, "dW1 = x^T g1", census, nullptr));
    grads.dw3 = transpose(detail::weight_grad(gb, xp, cache, false, "dW3 = x^T g_gate", census, nullptr));
    detail::CensusScope scope(census, "dX = g1 W1^T + g_gate W3^T", GemmKind::dense,
                              2 * detail::macs_of(n, h, d));
    dxp = add(gemm(ga, transpose(p.w1)), gemm(gb, transpose(*p.w3)));
  } else {
    Matrix<T> g1 = act_squared_relu_grad(cache.y1);
    {
      auto gv = g1.data();
      auto g2v = g2.data();
      for (std::size_t i = 0; i < gv.size(); ++i)
        gv[i] *= g2v[i];
    }
    if (cfg.mask_grad_with_fwd && cache.fwd_mask)
      g1 = apply_mask(g1, *cache.fwd_mask);
    if (bstats) {
      bstats->g1_nonzeros = detail::count_nonzero<T>(g1.data());
      bstats->g1_outside_mask = 0;
      if (cache.fwd_mask)
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t c = 0; c < h; ++c)
            bstats->g1_outside_mask += g1(r, c) != T(0) && !(*cache.fwd_mask)(r, c);
    }

    grads.dw2 = detail::weight_grad(cache.y2, g3p, cache, true, "dW2 = y2^T g3", census,
                                    bstats ? &bstats->dw2 : nullptr);
    grads.dw1 = transpose(detail::weight_grad(g1, xp, cache, cfg.split_dw1, "dW1 = x^T g1",
                                              census, bstats ? &bstats->dw1 : nullptr));

    const Matrix<T> w1t = transpose(p.w1);
    if (cfg.backward_mode == BackwardMode::dense) {
      detail::CensusScope scope(census, "dX = g1 W1^T", GemmKind::dense, detail::macs_of(n, h, d));
      dxp = cfg.fp8_backward ? detail::fp8_matmul(g1, w1t) : gemm(g1, w1t);
    } else {
      detail::CensusScope scope(census, "dX = g1 W1^T", GemmKind::sparse24,
                                detail::macs_of(n, h, d));
      // With the forward mask applied, supp(g1) already fits the mask's 2:4
      // pattern and this product is exact.
      const auto s = cfg.mask_grad_with_fwd && cache.fwd_mask
                         ? compress_with_mask(g1, *cache.fwd_mask, Orientation::token_wise)
                         : sparsify_token_wise(g1).sparse;
      dxp = sp_gemm(s, w1t);
    }
  }
  grads.dx = cache.permutation ? inverse_permute_rows(dxp, *cache.permutation) : std::move(dxp);
  return grads;
}

} // namespace s24
