// SPDX-License-Identifier: Apache-2.0
#include <s24/rng.hpp>
#include <s24/train/model.hpp>

#include <cmath>

namespace s24::train {

void ModelConfig::validate() const {
  if (vocab_size < 2 || vocab_size > 256)
    throw ConfigError("vocab_size must be in [2, 256] (byte-level vocabulary)");
  if (context == 0)
    throw ConfigError("context must be at least 1");
  if (embed_dim == 0 || embed_dim % context != 0)
    throw ConfigError("embed_dim " + std::to_string(embed_dim) + " must be a positive multiple of context " +
                      std::to_string(context));
  if (hidden_dim == 0 || hidden_dim % 4 != 0)
    throw ConfigError("hidden_dim " + std::to_string(hidden_dim) + " must be a positive multiple of 4");
  if (num_blocks == 0)
    throw ConfigError("num_blocks must be at least 1");
}

void ToyModel::for_each(
    const std::function<void(const std::string &, DenseMatrix &, bool)> &f) {
  f("embed", embed, false);
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    const std::string p = "block" + std::to_string(l) + ".";
    f(p + "w1", blocks[l].w1, true);
    f(p + "w2", blocks[l].w2, true);
    if (blocks[l].w3)
      f(p + "w3", *blocks[l].w3, true);
  }
  f("head_w", head_w, true);
  f("head_b", head_b, false);
}

void ToyModel::for_each(
    const std::function<void(const std::string &, const DenseMatrix &, bool)> &f) const {
  const_cast<ToyModel *>(this)->for_each(
      [&](const std::string &name, DenseMatrix &t, bool decay) { f(name, t, decay); });
}

std::size_t ToyModel::parameter_count() const {
  std::size_t n = 0;
  for_each([&](const std::string &, const DenseMatrix &t, bool) { n += t.size(); });
  return n;
}

ToyModel init_model(const ModelConfig &cfg, Activation activation, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  const std::size_t d = cfg.embed_dim, h = cfg.hidden_dim;
  ToyModel m;
  m.config = cfg;
  m.embed = random_normal<float>(cfg.vocab_size, cfg.char_dim(), rng);
  for (std::size_t l = 0; l < cfg.num_blocks; ++l) {
    FfnParams<float> p;
    p.w1 = random_normal<float>(d, h, rng, 1.0 / std::sqrt(static_cast<double>(d)));
    p.w2 = random_normal<float>(h, d, rng, 1.0 / std::sqrt(static_cast<double>(h)));
    if (activation == Activation::swiglu)
      p.w3 = random_normal<float>(d, h, rng, 1.0 / std::sqrt(static_cast<double>(d)));
    m.blocks.push_back(std::move(p));
  }
  m.head_w = random_normal<float>(d, cfg.vocab_size, rng, 0.02);
  m.head_b = DenseMatrix(1, cfg.vocab_size);
  return m;
}

ToyModel zeros_like(const ToyModel &m) {
  ToyModel z = m;
  z.for_each([](const std::string &, DenseMatrix &t, bool) {
    for (auto &v : t.data())
      v = 0.0f;
  });
  return z;
}

namespace detail {

DenseMatrix rmsnorm(const DenseMatrix &x, std::vector<float> &inv_rms) {
  DenseMatrix u(x.rows(), x.cols());
  inv_rms.assign(x.rows(), 0.0f);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double ss = 0.0;
    for (float v : x.row(i))
      ss += static_cast<double>(v) * v;
    const auto r = static_cast<float>(1.0 / std::sqrt(ss / static_cast<double>(x.cols()) + 1e-6));
    inv_rms[i] = r;
    for (std::size_t j = 0; j < x.cols(); ++j)
      u(i, j) = x(i, j) * r;
  }
  return u;
}

DenseMatrix rmsnorm_backward(const DenseMatrix &du, const DenseMatrix &u,
                             const std::vector<float> &inv_rms) {
  DenseMatrix dx(u.rows(), u.cols());
  for (std::size_t i = 0; i < u.rows(); ++i) {
    double dot = 0.0;
    for (std::size_t j = 0; j < u.cols(); ++j)
      dot += static_cast<double>(du(i, j)) * u(i, j);
    const auto mean = static_cast<float>(dot / static_cast<double>(u.cols()));
    for (std::size_t j = 0; j < u.cols(); ++j)
      dx(i, j) = inv_rms[i] * (du(i, j) - u(i, j) * mean);
  }
  return dx;
}

} // namespace detail

ModelForward forward_model(const ToyModel &m, const TokenSet &batch, const FfnConfig &cfg,
                           const ModelForwardOptions &opt) {
  const ModelConfig &mc = m.config;
  if (batch.context != mc.context)
    throw DimensionError("batch context " + std::to_string(batch.context) +
                         " != model context " + std::to_string(mc.context));
  const std::size_t n = batch.size(), e = mc.char_dim();
  for (auto t : batch.inputs)
    if (t >= mc.vocab_size)
      throw DataError("token " + std::to_string(t) + " outside the vocabulary");

  ModelForward out;
  out.cache.inputs = batch.inputs;
  DenseMatrix x(n, mc.embed_dim);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < mc.context; ++k) {
      const auto src = m.embed.row(batch.inputs[i * mc.context + k]);
      std::copy(src.begin(), src.end(), x.row(i).begin() + static_cast<std::ptrdiff_t>(k * e));
    }

  if (opt.census)
    opt.census->assign(m.blocks.size(), {});
  for (std::size_t l = 0; l < m.blocks.size(); ++l) {
    BlockCache bc;
    bc.u = detail::rmsnorm(x, bc.inv_rms);
    ForwardOptions<float> fo;
    if (l < opt.reuse_plans.size())
      fo.reuse_plan = opt.reuse_plans[l];
    if (opt.census)
      fo.census = &(*opt.census)[l];
    auto [y, cache] = ffn_forward(bc.u, m.blocks[l], cfg, fo);
    bc.ffn = std::move(cache);
    x = add(x, y);
    out.cache.blocks.push_back(std::move(bc));
  }
  out.cache.u_final = detail::rmsnorm(x, out.cache.inv_rms_final);
  out.logits = gemm(out.cache.u_final, m.head_w);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < mc.vocab_size; ++j)
      out.logits(i, j) += m.head_b(0, j);
  return out;
}

LossResult cross_entropy(const DenseMatrix &logits, std::span<const std::uint8_t> targets) {
  const std::size_t n = logits.rows(), v = logits.cols();
  if (targets.size() != n)
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(n) + " rows");
  LossResult res;
  res.dlogits = DenseMatrix(n, v);
  if (n == 0)
    return res;
  std::vector<double> p(v);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (targets[i] >= v)
      throw DataError("target outside the vocabulary");
    double mx = -INFINITY;
    for (std::size_t j = 0; j < v; ++j)
      mx = std::max(mx, static_cast<double>(logits(i, j)));
    double z = 0.0;
    for (std::size_t j = 0; j < v; ++j) {
      p[j] = std::exp(static_cast<double>(logits(i, j)) - mx);
      z += p[j];
    }
    total += std::log(z) + mx - static_cast<double>(logits(i, targets[i]));
    for (std::size_t j = 0; j < v; ++j)
      res.dlogits(i, j) = static_cast<float>((p[j] / z - (j == targets[i] ? 1.0 : 0.0)) /
                                             static_cast<double>(n));
  }
  res.loss = total / static_cast<double>(n);
  return res;
}

ToyModel backward_model(const DenseMatrix &dlogits, const ModelCache &cache, const ToyModel &m,
                        const FfnConfig &cfg, std::vector<GemmCensus> *census,
                        std::vector<BackwardStats> *stats) {
  const ModelConfig &mc = m.config;
  const std::size_t n = dlogits.rows(), e = mc.char_dim();
  ToyModel g = zeros_like(m);

  g.head_w = gemm_at(cache.u_final, dlogits);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < mc.vocab_size; ++j)
      g.head_b(0, j) += dlogits(i, j);
  DenseMatrix dx =
      detail::rmsnorm_backward(gemm(dlogits, transpose(m.head_w)), cache.u_final, cache.inv_rms_final);

  if (census)
    census->resize(m.blocks.size());
  if (stats)
    stats->assign(m.blocks.size(), {});
  for (std::size_t l = m.blocks.size(); l-- > 0;) {
    const BlockCache &bc = cache.blocks[l];
    auto fg = ffn_backward(dx, bc.ffn, m.blocks[l], cfg, census ? &(*census)[l] : nullptr,
                           stats ? &(*stats)[l] : nullptr);
    g.blocks[l].w1 = std::move(fg.dw1);
    g.blocks[l].w2 = std::move(fg.dw2);
    if (fg.dw3)
      g.blocks[l].w3 = std::move(*fg.dw3);
    // Residual: dx flows straight through and through the normalized branch.
    dx = add(dx, detail::rmsnorm_backward(fg.dx, bc.u, bc.inv_rms));
  }

  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < mc.context; ++k) {
      auto dst = g.embed.row(cache.inputs[i * mc.context + k]);
      for (std::size_t j = 0; j < e; ++j)
        dst[j] += dx(i, k * e + j);
    }
  return g;
}

} // namespace s24::train
