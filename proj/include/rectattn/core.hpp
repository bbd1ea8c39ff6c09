#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "rectattn/matrix.hpp"

namespace rectattn {

/// Default block size for both queries and keys.
inline constexpr std::size_t kDefaultBlock = 128;

using GridDims = std::array<std::size_t, 3>;  // (t, h, w)

/// One attention head over a joint video+text sequence.
///
/// K and V hold video rows first, then text rows: rows [0, T_v) are video
/// tokens and rows [T_v, T_v + T_t) are text tokens.
template <typename T>
struct AttentionProblem {
  Matrix<T> q_video;  // T_v x d
  Matrix<T> q_text;   // T_t x d
  Matrix<T> k;        // (T_v + T_t) x d
  Matrix<T> v;        // (T_v + T_t) x d
  std::size_t block = kDefaultBlock;
  std::optional<GridDims> grid_dims;

  std::size_t t_video() const { return q_video.rows(); }
  std::size_t t_text() const { return q_text.rows(); }
  std::size_t dim() const { return q_video.cols(); }

  /// Throws ShapeError / BlockSizeError when the invariants do not hold.
  void validate() const;

  template <typename U>
  AttentionProblem<U> cast() const
  {
    return {q_video.template cast<U>(), q_text.template cast<U>(), k.template cast<U>(),
            v.template cast<U>(), block, grid_dims};
  }
};

/// Block geometry: N query blocks over video, M = N + ceil(T_t / B) key blocks.
struct BlockGrid {
  std::size_t n_q = 0;
  std::size_t n_kv = 0;
  std::size_t block = 0;
  std::size_t text_block_start = 0;
  std::size_t last_text_block_len = 0;
  std::size_t t_video = 0;
  std::size_t t_text = 0;

  std::size_t n_text_blocks() const { return n_kv - n_q; }
  std::size_t key_count() const { return t_video + t_text; }
  std::size_t block_begin(std::size_t m) const { return m * block; }
  std::size_t block_len(std::size_t m) const
  {
    return (m + 1 == n_kv && m >= n_q) ? last_text_block_len : block;
  }
  bool is_text_block(std::size_t m) const { return m >= n_q; }

  std::vector<std::size_t> key_block_lens() const;
  std::vector<std::size_t> video_block_lens() const;
};

BlockGrid partition(std::size_t t_video, std::size_t t_text, std::size_t block);

template <typename T>
BlockGrid partition(const AttentionProblem<T>& problem)
{
  problem.validate();
  return partition(problem.t_video(), problem.t_text(), problem.block);
}

/// Row-mean of each consecutive block of rows. Accumulates in double.
template <typename T>
MatrixD block_pool(const Matrix<T>& x, std::span<const std::size_t> block_lens);

/// Pooled representations consumed by the implicit-attention path.
struct PooledSet {
  MatrixD q_pool;      // N x d
  MatrixD k_v_pool;    // N x d, video key blocks only
  MatrixD k_pool;      // M x d, every key block (text blocks pooled too)
  MatrixD v_pool;      // M x d
  MatrixD k_mix_pool;  // (N + T_t) x d: pooled video keys then raw text keys
};

template <typename T>
PooledSet pool_problem(const AttentionProblem<T>& problem, const BlockGrid& grid);

struct OracleResult {
  MatrixD weights;
  MatrixD output;
};

/// softmax(q k^T / sqrt(d)) v in double precision, max-subtracted.
template <typename T>
OracleResult full_attention_oracle(const Matrix<T>& q, const Matrix<T>& k, const Matrix<T>& v);

/// Same as the full oracle, with key blocks excluded by the block mask
/// removed from each video query's softmax. Excluded weights are exactly 0.
template <typename T>
OracleResult masked_attention_oracle(const Matrix<T>& q_video, const Matrix<T>& k,
                                     const Matrix<T>& v, const BlockMask& mask,
                                     const BlockGrid& grid);

/// 3D Z-order code of (t, y, x): bit b of x lands at 3b, y at 3b+1, t at 3b+2.
std::uint64_t morton_code(std::uint32_t t, std::uint32_t y, std::uint32_t x);

/// perm[new_position] = old row index, ordering a row-major (t, h, w) grid
/// by Morton code.
std::vector<std::size_t> morton_permutation(const GridDims& dims);

template <typename T>
Matrix<T> permute_rows(const Matrix<T>& x, std::span<const std::size_t> perm);

/// Inverse of permute_rows with the same permutation.
template <typename T>
Matrix<T> unpermute_rows(const Matrix<T>& x, std::span<const std::size_t> perm);

template <typename T>
struct MortonReorder {
  AttentionProblem<T> problem;
  std::vector<std::size_t> permutation;  // over video tokens only
};

/// Reorders video tokens of Q/K/V along the Morton curve. Text rows stay put.
template <typename T>
MortonReorder<T> reorder_morton(const AttentionProblem<T>& problem);

/// Undo reorder_morton on a problem (bit-exact).
template <typename T>
AttentionProblem<T> restore_order(const AttentionProblem<T>& problem,
                                  std::span<const std::size_t> perm);

}  // namespace rectattn
