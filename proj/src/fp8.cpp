// SPDX-License-Identifier: Apache-2.0
#include <s24/fp8.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace s24 {

E4m3Code e4m3_encode(double x) {
  const std::uint8_t sign = std::signbit(x) ? 0x80 : 0x00;
  double mag = std::fabs(x);
  if (mag >= kE4m3Max)
    return {static_cast<std::uint8_t>(sign | 0x7E)}; // exp 15, mantissa 6

  // Quantum of the binade containing mag; binades below 2^-6 share the
  // subnormal quantum 2^-9.
  int exp = mag > 0.0 ? std::ilogb(mag) : -6;
  exp = std::max(exp, -6);
  const double quantum = std::ldexp(1.0, exp - 3);
  // mag / quantum is exact (power-of-two scaling); nearbyint uses the
  // default round-to-nearest-even mode.
  const double steps = std::nearbyint(mag / quantum);
  const double value = steps * quantum;
  if (value == 0.0)
    return {sign};

  int vexp = std::ilogb(value);
  std::uint8_t bits;
  if (vexp < -6) {
    bits = static_cast<std::uint8_t>(steps); // subnormal: mantissa = value / 2^-9
  } else {
    const int biased = vexp + 7;
    const double frac = std::ldexp(value, -vexp) - 1.0; // in [0, 1)
    const auto mant = static_cast<std::uint8_t>(frac * 8.0);
    bits = static_cast<std::uint8_t>((biased << 3) | mant);
  }
  return {static_cast<std::uint8_t>(sign | bits)};
}

double e4m3_decode(E4m3Code c) {
  if (e4m3_is_nan(c))
    return std::numeric_limits<double>::quiet_NaN();
  const int exp = (c.bits >> 3) & 0xF;
  const int mant = c.bits & 0x7;
  const double mag = exp == 0 ? std::ldexp(static_cast<double>(mant), -9)
                              : std::ldexp(1.0 + mant / 8.0, exp - 7);
  return (c.bits & 0x80) ? -mag : mag;
}

bool e4m3_is_nan(E4m3Code c) { return (c.bits & 0x7F) == 0x7F; }

Fp8Rowwise fp8_quantize_rowwise(const DenseMatrix &a, ScaleAxis axis) {
  Fp8Rowwise q;
  q.rows = a.rows();
  q.cols = a.cols();
  q.axis = axis;
  q.codes.resize(a.size());
  const std::size_t slices = axis == ScaleAxis::rows ? a.rows() : a.cols();
  std::vector<float> amax(slices, 0.0f);
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) {
      float &m = amax[axis == ScaleAxis::rows ? r : c];
      m = std::max(m, std::fabs(a(r, c)));
    }
  q.scales.resize(slices);
  for (std::size_t s = 0; s < slices; ++s)
    q.scales[s] = amax[s] > 0.0f ? static_cast<float>(amax[s] / kE4m3Max) : 1.0f;
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c)
      q.codes[r * q.cols + c] =
          e4m3_encode(static_cast<double>(a(r, c)) / q.scale_for(r, c));
  return q;
}

DenseMatrix fp8_decode(const Fp8Rowwise &q) {
  DenseMatrix out(q.rows, q.cols);
  auto d = out.data();
  for (std::size_t i = 0; i < q.codes.size(); ++i)
    d[i] = static_cast<float>(e4m3_decode(q.codes[i]));
  return out;
}

DenseMatrix fp8_dequantize(const Fp8Rowwise &q) {
  DenseMatrix out = fp8_decode(q);
  for (std::size_t r = 0; r < q.rows; ++r)
    for (std::size_t c = 0; c < q.cols; ++c)
      out(r, c) *= q.scale_for(r, c);
  return out;
}

void fp8_apply_output_scales(DenseMatrix &acc, std::span<const float> row_scales,
                             std::span<const float> col_scales) {
  if (row_scales.size() != acc.rows() || col_scales.size() != acc.cols())
    throw DimensionError("fp8 output scales do not match product shape");
  for (std::size_t i = 0; i < acc.rows(); ++i)
    for (std::size_t j = 0; j < acc.cols(); ++j)
      acc(i, j) = row_scales[i] * col_scales[j] * acc(i, j);
}

DenseMatrix fp8_gemm_rowwise(const Fp8Rowwise &a, const Fp8Rowwise &b) {
  if (a.axis != ScaleAxis::rows || b.axis != ScaleAxis::cols)
    throw ConfigError("fp8_gemm_rowwise expects row-scaled A and column-scaled B");
  if (a.cols != b.rows)
    throw DimensionError("fp8_gemm_rowwise: inner dimensions " +
                         std::to_string(a.cols) + " and " + std::to_string(b.rows));
  DenseMatrix acc = gemm(fp8_decode(a), fp8_decode(b));
  fp8_apply_output_scales(acc, a.scales, b.scales);
  return acc;
}

} // namespace s24
