#pragma once

#include "rectattn/core.hpp"

namespace rectattn {

/// Block-level implicit full attention plus the intermediates that built it.
/// Every matrix here is a per-query-block distribution (or a slice of one).
struct ImplicitAttention {
  MatrixD a_pool;            // N x M, final implicit attention
  MatrixD a_mix_pool;        // N x (N + T_t), before reallocation
  MatrixD a_v_reallocated;   // N x N, block total mass at token granularity
  MatrixD a_t_reallocated;   // N x T_t
  MatrixD a_t_block;         // N x (M - N), text mass summed per block
};

/// Row-wise softmax of pooled queries against the mixed-granularity keys.
MatrixD mixed_pooled_scores(const PooledSet& pooled, std::size_t dim);

struct Reallocated {
  MatrixD video;  // N x N
  MatrixD text;   // N x T_t
};

/// Rebalances pooled video block weights against token-level text weights.
///
/// For row n with video part A_v and text part A_t,
///   D_n = B * sum(A_v[n, :]) + sum(A_t[n, :])
///   video[n, m] = B * A_v[n, m] / D_n,   text[n, t] = A_t[n, t] / D_n.
Reallocated reallocate(const MatrixD& a_mix, const BlockGrid& grid);

ImplicitAttention implicit_full_attention(const PooledSet& pooled, const BlockGrid& grid,
                                          std::size_t dim);

template <typename T>
ImplicitAttention implicit_full_attention(const AttentionProblem<T>& problem,
                                          const PooledSet& pooled, const BlockGrid& grid)
{
  return implicit_full_attention(pooled, grid, problem.dim());
}

/// Pre-softmax pooled scores q_pool k_pool^T / sqrt(d) over every key block (N x M).
MatrixD pooled_scores(const PooledSet& pooled, std::size_t dim);

/// Baseline that pools text keys exactly like video keys: softmax of pooled_scores.
MatrixD direct_pooled_attention(const PooledSet& pooled, std::size_t dim);

/// Token-level attention collapsed to blocks: mean over the queries of block n
/// of the summed weights on key block m. Rows stay distributions.
MatrixD block_sum_attention(const MatrixD& weights, const BlockGrid& grid);

/// Numerically stable softmax of every row, in place.
void softmax_rows(MatrixD& scores);

}  // namespace rectattn
