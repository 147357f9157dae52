// SPDX-License-Identifier: Apache-2.0
/**
 * @file fp8.hpp
 * @brief Software emulation of FP8 e4m3 (the "fn" flavour) with row-wise scaling.
 *
 * Bit layout: 1 sign, 4 exponent (bias 7), 3 mantissa. No infinities; the only
 * NaN encodings are S.1111.111. Largest finite magnitude is 448, smallest
 * subnormal is 2^-9.
 */
#pragma once

#include <s24/matrix.hpp>

#include <cstdint>
#include <vector>

namespace s24 {

struct E4m3Code {
  std::uint8_t bits = 0;
  friend bool operator==(E4m3Code, E4m3Code) = default;
};

inline constexpr double kE4m3Max = 448.0;

/// Nearest representable value, ties to even mantissa, saturating at +-448.
/// The sign of zero is preserved.
E4m3Code e4m3_encode(double x);

/// Exact decode; NaN codes decode to quiet NaN.
double e4m3_decode(E4m3Code c);

bool e4m3_is_nan(E4m3Code c);

enum class ScaleAxis { rows, cols };

/// Quantized matrix: codes are row-major; one scale per row (axis rows) or
/// per column (axis cols).
struct Fp8Rowwise {
  std::size_t rows = 0;
  std::size_t cols = 0;
  ScaleAxis axis = ScaleAxis::rows;
  std::vector<E4m3Code> codes;
  std::vector<float> scales;

  E4m3Code code(std::size_t r, std::size_t c) const { return codes[r * cols + c]; }
  float scale_for(std::size_t r, std::size_t c) const {
    return axis == ScaleAxis::rows ? scales[r] : scales[c];
  }
};

/// scale = amax/448 per slice (1 for an all-zero slice); entry = encode(x/scale).
Fp8Rowwise fp8_quantize_rowwise(const DenseMatrix &a, ScaleAxis axis);

/// Unscaled decoded code values.
DenseMatrix fp8_decode(const Fp8Rowwise &q);

/// Decoded values multiplied by their scales.
DenseMatrix fp8_dequantize(const Fp8Rowwise &q);

/// c[i,j] = scaleA[i] * scaleB[j] * sum_t decode(a[i,t]) * decode(b[t,j]),
/// with float accumulation over ascending t.
DenseMatrix fp8_gemm_rowwise(const Fp8Rowwise &a, const Fp8Rowwise &b);

/// Applies the row-wise/col-wise output scaling of fp8_gemm_rowwise to an
/// already accumulated product.
void fp8_apply_output_scales(DenseMatrix &acc, std::span<const float> row_scales,
                             std::span<const float> col_scales);

} // namespace s24
