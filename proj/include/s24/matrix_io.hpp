// SPDX-License-Identifier: Apache-2.0
/**
 * @file matrix_io.hpp
 * @brief Little-endian binary files for dense ("S24M") and 2:4-compressed
 *        ("S24C") matrices.
 *
 * S24M: magic "S24M", u32 version = 1, u32 rows, u32 cols, rows*cols f32
 *       row-major.
 * S24C: magic "S24C", u32 version = 1, u8 orientation (0 token-wise,
 *       1 feature-wise), u32 rows, u32 cols, 2*groups f32 values,
 *       ceil(groups/2) metadata bytes.
 *
 * No padding, no checksum. Parse failures throw FormatError with the byte
 * offset of the offending field.
 */
#pragma once

#include <s24/matrix.hpp>
#include <s24/sparse24.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace s24 {

inline constexpr std::uint32_t kFormatVersion = 1;

std::vector<std::uint8_t> encode_matrix(const DenseMatrix &a);
DenseMatrix decode_matrix(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_sparse(const Sparse24Matrix<float> &s);
Sparse24Matrix<float> decode_sparse(std::span<const std::uint8_t> bytes);

void write_matrix(const std::filesystem::path &path, const DenseMatrix &a);
DenseMatrix read_matrix(const std::filesystem::path &path);

void write_sparse(const std::filesystem::path &path, const Sparse24Matrix<float> &s);
Sparse24Matrix<float> read_sparse(const std::filesystem::path &path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path &path);
void write_file_bytes(const std::filesystem::path &path, std::span<const std::uint8_t> bytes);

enum class FileKind { dense, sparse, unknown };
/// Classifies by magic bytes only.
FileKind sniff_kind(std::span<const std::uint8_t> bytes);

} // namespace s24
