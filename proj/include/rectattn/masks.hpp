#pragma once

#include <optional>
#include <vector>

#include "rectattn/core.hpp"

namespace rectattn {

struct SparsityConfig {
  double top_k_fraction = 0.2;    // share of key blocks kept per query block (count floor)
  double weight_threshold = 0.3;  // p: cumulative pooled weight the kept set must reach
  std::size_t adjacency_radius = 1;
  bool force_text_blocks = true;

  void validate() const;
};

struct SparseMask {
  BlockMask mask;        // importance | adjacency | forced text
  BlockMask importance;
  BlockMask adjacency;
  std::vector<std::size_t> retained_count;
};

/// Greedy selection per query block: walk key blocks by descending implicit
/// weight (ties to the lower index) until both ceil(top_k_fraction * M) blocks
/// are kept and their weight reaches p. Adjacency keeps video blocks within
/// `adjacency_radius` of the diagonal.
SparseMask build_sparse_mask(const MatrixD& a_pool, const SparsityConfig& config,
                             const BlockGrid& grid);

/// Number of blocks the count floor asks for, clamped to [1, M].
std::size_t top_k_count(double top_k_fraction, std::size_t n_kv);

struct GainError {
  MatrixD gain;   // |sum of replicated pooled scores over the block pair|
  MatrixD error;  // |sum of first-order score deviations over the block pair|
  std::optional<MatrixD> exact_gain;
  std::optional<MatrixD> exact_error;
};

/// gain[n, m] = |B_q * B_k(m) * scores_pool[n, m]|; B_k(m) is the true length
/// of key block m so ragged text blocks count only their tokens.
MatrixD attention_gain(const MatrixD& scores_pool, const BlockGrid& grid);

/// First-order pooling error summed over each (query block, key block) pair,
/// computed in closed form from centered row sums.
template <typename T>
MatrixD pooling_error(const AttentionProblem<T>& problem, const PooledSet& pooled,
                      const BlockGrid& grid);

/// First-order deviation of token score s_ij from its pooled score:
/// ((q_i - q_pool_n) . k_pool_m + q_pool_n . (k_j - k_pool_m)) / sqrt(d).
/// pooling_error[n, m] is the absolute value of its sum over the block pair.
template <typename T>
double score_deviation(const AttentionProblem<T>& problem, const PooledSet& pooled,
                       const BlockGrid& grid, std::size_t i, std::size_t j);

struct CompensationMask {
  BlockMask mask;
};

/// mask[n, m] = gain[n, m] > error[n, m]. Restriction to excluded blocks
/// happens where the mask is applied.
CompensationMask compensation_mask(const MatrixD& gain, const MatrixD& error,
                                   const SparseMask& sparse);

/// Softmax-form gain and error from token-level weights, for validating the
/// relaxed condition. Both are normalized per query token (divided by B_q).
template <typename T>
GainError exact_gain_error(const AttentionProblem<T>& problem, const PooledSet& pooled,
                           const BlockGrid& grid);

}  // namespace rectattn
