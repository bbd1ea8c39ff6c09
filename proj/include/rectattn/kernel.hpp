#pragma once

#include <cstdint>
#include <vector>

#include "rectattn/core.hpp"
#include "rectattn/masks.hpp"

namespace rectattn {

/// Multiply-accumulates actually executed, counted per visited block pair.
struct KernelStats {
  std::uint64_t qk_macs = 0;
  std::uint64_t pv_macs = 0;
  std::uint64_t blocks_visited = 0;
};

template <typename T>
struct AttentionOutput {
  Matrix<T> o_video;                         // T_v x d
  Matrix<T> o_text;                          // T_t x d
  std::vector<double> row_log_denominators;  // per video token, diagnostic only
};

template <typename T>
struct KernelResult {
  Matrix<T> output;
  std::vector<double> row_log_denominators;  // log sum_j exp(s_ij) over visited keys
  KernelStats stats;
};

/// Online-softmax attention for video queries over the key blocks kept by
/// `mask`. Query blocks run in parallel; within a row the retained blocks are
/// visited in ascending index order, so results do not depend on thread count.
template <typename T>
KernelResult<T> block_sparse_attention(const Matrix<T>& q_video, const Matrix<T>& k,
                                       const Matrix<T>& v, const BlockMask& mask,
                                       const BlockGrid& grid);

/// Single-threaded driver over the same per-block routine.
template <typename T>
KernelResult<T> block_sparse_attention_serial(const Matrix<T>& q_video, const Matrix<T>& k,
                                              const Matrix<T>& v, const BlockMask& mask,
                                              const BlockGrid& grid);

template <typename T>
KernelResult<T> block_sparse_attention(const Matrix<T>& q_video, const Matrix<T>& k,
                                       const Matrix<T>& v, const SparseMask& mask,
                                       const BlockGrid& grid)
{
  return block_sparse_attention(q_video, k, v, mask.mask, grid);
}

/// Dense attention tiled over `tile` queries x `tile` keys.
template <typename T>
KernelResult<T> dense_attention(const Matrix<T>& q, const Matrix<T>& k, const Matrix<T>& v,
                                std::size_t tile = kDefaultBlock);

template <typename T>
KernelResult<T> dense_attention_serial(const Matrix<T>& q, const Matrix<T>& k,
                                       const Matrix<T>& v, std::size_t tile = kDefaultBlock);

/// Full attention for text queries. An empty query set gives an empty output.
template <typename T>
Matrix<T> text_full_attention(const Matrix<T>& q_text, const Matrix<T>& k, const Matrix<T>& v,
                              std::size_t tile = kDefaultBlock);

}  // namespace rectattn
