#pragma once

#include <cstdint>
#include <vector>

#include "rectattn/core.hpp"
#include "rectattn/masks.hpp"

namespace rectattn {

/// sum|test - reference| / sum|reference|.
template <typename T, typename U>
double normalized_l1(const Matrix<T>& test, const Matrix<U>& reference);

/// Cosine of the angle between the flattened matrices.
template <typename T, typename U>
double cosine_similarity(const Matrix<T>& test, const Matrix<U>& reference);

// FLOP convention: 2 per multiply-accumulate, 4 per softmax element
// (exp, subtract, add, divide), 1 per other elementwise op.
struct FlopReport {
  double sparsity = 0;  // 1 - retained / (N * M)
  std::uint64_t flops_full = 0;
  std::uint64_t flops_sparse = 0;
  std::uint64_t flops_overhead = 0;
};

/// Counts for video-query attention; text queries cost the same either way.
FlopReport sparsity_and_flops(const BlockMask& mask, const BlockGrid& grid, std::size_t dim);

/// Work spent outside the sparse kernel: pooling, implicit attention,
/// gain/error, masks and rectification.
std::uint64_t pooled_path_flops(const BlockGrid& grid, std::size_t dim);

struct DenominatorReport {
  std::vector<double> s_sum;       // sum_j exp(s_ij - c_i)
  std::vector<double> s_sum_pool;  // sum_j exp(s_pool_ij - c_i), same shift c_i
  double satisfied_fraction = 0;
  double tau = 0.05;
};

/// Compares each video query's softmax denominator with the one implied by
/// pooled queries and keys. A token passes when |S - S_pool| < tau * |S|.
template <typename T>
DenominatorReport denominator_equivalence_report(const AttentionProblem<T>& problem,
                                                 const PooledSet& pooled, const BlockGrid& grid,
                                                 double tau = 0.05);

/// Share of (query block, key block) pairs where the relaxed compensation
/// test gain > error agrees with the softmax-form test.
template <typename T>
double gapr_condition_agreement(const AttentionProblem<T>& problem, const PooledSet& pooled,
                                const BlockGrid& grid);

double gapr_condition_agreement(const GainError& ge);

}  // namespace rectattn
