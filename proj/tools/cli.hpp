// SPDX-License-Identifier: Apache-2.0
/**
 * @file cli.hpp
 * @brief The `s24` command line, callable in-process for tests.
 *
 *   s24 bench    --op gemm|spgemm|splitgemm|ffn-fwd [--m --n --k --sparsity --ratio --iters --seed --json]
 *   s24 train    --config FILE [--steps --seed --corpus --set key=value ... --out DIR]
 *   s24 ablate   --config FILE [--rows id,id ... --out DIR]
 *   s24 inspect  FILE [--json]
 *   s24 sparsify IN OUT [--orientation token|feature] [--json]
 *
 * Exit codes: 0 success, 2 usage or format error, 3 training divergence.
 */
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace s24::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitDivergence = 3;

int run(const std::vector<std::string> &args, std::ostream &out, std::ostream &err);
int run(int argc, char **argv, std::ostream &out, std::ostream &err);

struct BenchOptions {
  std::string op = "spgemm";
  std::size_t m = 128, n = 128, k = 128;
  double sparsity = 0.9;
  double ratio = 0.95;
  int iters = 5;
  int warmup = 1;
  std::uint64_t seed = 0;
  bool timing = true;
};

struct BenchReport {
  std::string op;
  std::size_t m = 0, n = 0, k = 0;
  double sparsity = 0.0;
  double split_ratio = 0.0;
  std::uint64_t mac_count = 0;
  std::uint64_t dense_mac_count = 0;
  std::uint64_t wall_time_ns = 0;        // median over iterations
  std::uint64_t dense_wall_time_ns = 0;  // ffn-fwd only: dense forward median
  double effective_gmacs_per_s = 0.0;
  std::string checksum;                  // FNV-1a 64 of the output's bytes
};

/// Operands: gemm / spgemm multiply A[m,k] by B[k,n]; splitgemm computes
/// A^T B for A[k,m] (k tokens, m features) and B[k,n]; ffn-fwd runs the
/// recipe forward on x[m,k] with hidden width n. A has the requested zero
/// fraction. Throws ConfigError on an unknown op or bad shapes.
BenchReport bench(const BenchOptions &opt);

std::string bench_json(const BenchReport &r, bool timing);

/// FNV-1a over the raw bytes of the floats.
std::string checksum(const std::vector<float> &values);

} // namespace s24::cli
