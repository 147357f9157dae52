// SPDX-License-Identifier: Apache-2.0
#include <s24/train/optim.hpp>

#include <cmath>
#include <numbers>

namespace s24::train {

AdamWState init_adamw(const ToyModel &m) {
  AdamWState s;
  m.for_each([&](const std::string &, const DenseMatrix &t, bool) {
    s.m.emplace_back(t.size(), 0.0f);
    s.v.emplace_back(t.size(), 0.0f);
  });
  return s;
}

double lr_at(std::int64_t step, std::int64_t total, std::int64_t warmup, double lr,
             double min_ratio) {
  if (step < warmup)
    return lr * static_cast<double>(step + 1) / static_cast<double>(warmup);
  const std::int64_t span = total - warmup;
  if (span <= 0)
    return lr;
  const double progress = std::min(1.0, static_cast<double>(step - warmup) / static_cast<double>(span));
  return lr * (min_ratio + (1.0 - min_ratio) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)));
}

double global_grad_norm(const ToyModel &grads) {
  double ss = 0.0;
  grads.for_each([&](const std::string &, const DenseMatrix &t, bool) {
    for (float v : t.data())
      ss += static_cast<double>(v) * v;
  });
  return std::sqrt(ss);
}

double clip_grad_norm(ToyModel &grads, double max_norm) {
  const double norm = global_grad_norm(grads);
  if (max_norm > 0.0 && norm > max_norm) {
    const auto scale = static_cast<float>(max_norm / norm);
    grads.for_each([&](const std::string &, DenseMatrix &t, bool) {
      for (auto &v : t.data())
        v *= scale;
    });
  }
  return norm;
}

double adamw_step(ToyModel &params, ToyModel &grads, AdamWState &state, const AdamWConfig &cfg,
                  double lr) {
  const double norm = clip_grad_norm(grads, cfg.grad_clip);
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));

  std::vector<DenseMatrix *> gs;
  grads.for_each([&](const std::string &, DenseMatrix &t, bool) { gs.push_back(&t); });
  std::size_t k = 0;
  params.for_each([&](const std::string &, DenseMatrix &p, bool decay) {
    auto pv = p.data();
    auto gv = gs[k]->data();
    auto &m = state.m[k];
    auto &v = state.v[k];
    for (std::size_t i = 0; i < pv.size(); ++i) {
      const double g = gv[i];
      m[i] = static_cast<float>(cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g);
      v[i] = static_cast<float>(cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g);
      const double mhat = m[i] / bc1, vhat = v[i] / bc2;
      double w = pv[i];
      if (decay)
        w -= lr * cfg.weight_decay * w;
      w -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
      pv[i] = static_cast<float>(w);
    }
    ++k;
  });
  return norm;
}

} // namespace s24::train
