#pragma once

#include <vector>

#include "rectattn/ipar.hpp"
#include "rectattn/kernel.hpp"
#include "rectattn/masks.hpp"

namespace rectattn {

/// R_n: implicit attention mass of the key blocks query block n keeps.
struct RectificationFactors {
  std::vector<double> r;
};

/// Rows that keep every block get exactly 1.0, the value the sum converges to
/// for a distribution.
RectificationFactors rectification_factors(const MatrixD& a_pool, const BlockMask& mask);

inline RectificationFactors rectification_factors(const MatrixD& a_pool, const SparseMask& mask)
{
  return rectification_factors(a_pool, mask.mask);
}

/// o'_i = R_n * o_i + sum over blocks m with (!kept && compensate) of
/// a_pool[n, m] * v_pool[m], for every video row i of query block n.
template <typename T>
Matrix<T> apply_rectification(const Matrix<T>& o_video, const RectificationFactors& factors,
                              const ImplicitAttention& implicit, const SparseMask& sparse,
                              const CompensationMask& comp, const MatrixD& v_pool,
                              const BlockGrid& grid);

enum class CompensationMode { Gated, All, None };

struct PipelineOptions {
  bool rectify = true;
  CompensationMode compensation = CompensationMode::Gated;
  bool morton_reorder = false;
};

struct StageTimes {
  double pool_ms = 0;
  double implicit_ms = 0;
  double compensation_ms = 0;
  double sparse_mask_ms = 0;
  double kernel_ms = 0;
  double text_ms = 0;
  double rectify_ms = 0;
  double total_ms = 0;
};

struct PipelineAccounting {
  KernelStats video_kernel;
  KernelStats text_kernel;
  StageTimes times;
};

template <typename T>
struct PipelineResult {
  AttentionOutput<T> output;  // rectified video rows (unless disabled) plus text rows
  RectificationFactors factors;
  ImplicitAttention implicit;
  SparseMask sparse_mask;
  GainError gain_error;
  CompensationMask comp_mask;       // relaxed GAPR condition over every block
  CompensationMask applied_comp;    // what was actually added, !kept && compensate
  PipelineAccounting accounting;
  BlockGrid grid;
  std::vector<std::size_t> permutation;  // non-empty when Morton reordering ran
};

template <typename T>
PipelineResult<T> rectified_attention_pipeline(const AttentionProblem<T>& problem,
                                               const SparsityConfig& config,
                                               const PipelineOptions& options = {});

/// R_n plus the compensated mass, per query block.
std::vector<double> implied_row_mass(const RectificationFactors& factors, const MatrixD& a_pool,
                                     const CompensationMask& applied);

/// Video rows followed by text rows.
template <typename T>
Matrix<T> concat_output(const AttentionOutput<T>& out)
{
  return vstack(out.o_video, out.o_text);
}

}  // namespace rectattn
