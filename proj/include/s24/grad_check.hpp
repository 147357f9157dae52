// SPDX-License-Identifier: Apache-2.0
/**
 * @file grad_check.hpp
 * @brief Central-difference verification of ffn_backward.
 *
 * The probe loss is L = sum(y3 * R) for a fixed random R, so the upstream
 * gradient is R. When the forward pass sparsifies, the keep/drop mask of the
 * unperturbed forward is held fixed for every perturbed evaluation.
 */
#pragma once

#include <s24/ffn.hpp>
#include <s24/rng.hpp>

#include <algorithm>
#include <functional>
#include <string>

namespace s24 {

struct GradCheckResult {
  /// max over entries of |analytic - numeric| / max(|analytic|, |numeric|, 1)
  double max_rel_error = 0.0;
  std::string worst_tensor;
  std::size_t worst_index = 0;
  std::size_t entries_checked = 0;
};

namespace detail {

inline double probe_loss(const OracleMatrix &y3, const OracleMatrix &r) {
  double s = 0.0;
  for (std::size_t i = 0; i < y3.size(); ++i)
    s += y3.data()[i] * r.data()[i];
  return s;
}

inline void compare_grad(GradCheckResult &res, const std::string &name, const OracleMatrix &analytic,
                         OracleMatrix &param, const std::function<double()> &loss, double eps) {
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double saved = param.data()[i];
    param.data()[i] = saved + eps;
    const double up = loss();
    param.data()[i] = saved - eps;
    const double down = loss();
    param.data()[i] = saved;
    const double numeric = (up - down) / (2.0 * eps);
    const double a = analytic.data()[i];
    const double err = std::fabs(a - numeric) / std::max({std::fabs(a), std::fabs(numeric), 1.0});
    ++res.entries_checked;
    if (err > res.max_rel_error) {
      res.max_rel_error = err;
      res.worst_tensor = name;
      res.worst_index = i;
    }
  }
}

} // namespace detail

/// Compares ffn_backward against central differences for every entry of W1,
/// W2, W3 (SwiGLU) and x. `probe_seed` draws the probe weights R.
inline GradCheckResult grad_check_detailed(FfnParams<double> p, OracleMatrix x,
                                           const FfnConfig &cfg, double eps,
                                           std::uint64_t probe_seed = 7) {
  Rng rng(probe_seed);
  const auto [y3, cache] = ffn_forward(x, p, cfg);
  const OracleMatrix r = random_normal<double>(y3.rows(), y3.cols(), rng);
  const FfnGrads<double> g = ffn_backward(r, cache, p, cfg);

  ForwardOptions<double> fixed;
  if (cache.fwd_mask)
    fixed.fixed_mask = &*cache.fwd_mask;
  if (cache.plan)
    fixed.reuse_plan = &*cache.plan;
  auto loss = [&] { return detail::probe_loss(ffn_forward(x, p, cfg, fixed).first, r); };

  GradCheckResult res;
  detail::compare_grad(res, "W1", g.dw1, p.w1, loss, eps);
  detail::compare_grad(res, "W2", g.dw2, p.w2, loss, eps);
  if (p.w3)
    detail::compare_grad(res, "W3", *g.dw3, *p.w3, loss, eps);
  detail::compare_grad(res, "x", g.dx, x, loss, eps);
  return res;
}

inline double grad_check(const FfnParams<double> &p, const OracleMatrix &x, const FfnConfig &cfg,
                         double eps) {
  return grad_check_detailed(p, x, cfg, eps).max_rel_error;
}

} // namespace s24
