// SPDX-License-Identifier: Apache-2.0
#include <s24/ffn.hpp>

namespace s24 {

const char *to_string(Activation a) {
  return a == Activation::squared_relu ? "squared_relu" : "swiglu";
}

const char *to_string(ForwardMode m) { return m == ForwardMode::dense ? "dense" : "sparse24"; }

const char *to_string(BackwardMode m) {
  switch (m) {
  case BackwardMode::dense:
    return "dense";
  case BackwardMode::naive_sparse:
    return "naive_sparse";
  case BackwardMode::split_masked:
    return "split_masked";
  }
  return "?";
}

Activation parse_activation(const std::string &s) {
  if (s == "squared_relu")
    return Activation::squared_relu;
  if (s == "swiglu")
    return Activation::swiglu;
  throw ConfigError("unknown activation '" + s + "' (squared_relu | swiglu)");
}

ForwardMode parse_forward_mode(const std::string &s) {
  if (s == "dense")
    return ForwardMode::dense;
  if (s == "sparse24")
    return ForwardMode::sparse24;
  throw ConfigError("unknown forward_mode '" + s + "' (dense | sparse24)");
}

BackwardMode parse_backward_mode(const std::string &s) {
  if (s == "dense")
    return BackwardMode::dense;
  if (s == "naive_sparse")
    return BackwardMode::naive_sparse;
  if (s == "split_masked")
    return BackwardMode::split_masked;
  throw ConfigError("unknown backward_mode '" + s + "' (dense | naive_sparse | split_masked)");
}

void FfnConfig::validate() const {
  if (activation == Activation::swiglu && any_sparse())
    throw ConfigError("sparse modes require the squared_relu activation");
  if (!(split_ratio >= 0.0 && split_ratio <= 1.0))
    throw ConfigError("split_ratio must be in [0, 1]");
}

FfnConfig FfnConfig::dense_baseline() { return FfnConfig{}; }

FfnConfig FfnConfig::recipe() {
  FfnConfig c;
  c.forward_mode = ForwardMode::sparse24;
  c.backward_mode = BackwardMode::split_masked;
  c.mask_grad_with_fwd = true;
  c.permute_tokens = true;
  c.split_ratio = 0.95;
  return c;
}

std::size_t GemmCensus::sparse_count() const {
  std::size_t n = 0;
  for (const auto &r : records)
    n += r.kind != GemmKind::dense;
  return n;
}

std::uint64_t GemmCensus::macs() const {
  std::uint64_t n = 0;
  for (const auto &r : records)
    n += r.macs;
  return n;
}

template <class T> void FfnParams<T>::validate(const FfnConfig &cfg) const {
  const std::size_t d = w1.rows(), h = w1.cols();
  if (w2.rows() != h || w2.cols() != d)
    throw DimensionError("W2 must be " + std::to_string(h) + "x" + std::to_string(d));
  if (cfg.activation == Activation::swiglu) {
    if (!w3)
      throw ConfigError("SwiGLU needs W3");
    if (w3->rows() != d || w3->cols() != h)
      throw DimensionError("W3 must match W1's shape");
  } else if (w3) {
    throw ConfigError("W3 is only valid with SwiGLU");
  }
  if (cfg.activation == Activation::squared_relu && h % 4 != 0)
    throw ShapeError("hidden dimension " + std::to_string(h) + " must be divisible by 4");
}

template struct FfnParams<float>;
template struct FfnParams<double>;

} // namespace s24
