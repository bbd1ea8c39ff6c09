#include "rectattn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace rectattn {

template <typename T, typename U>
double normalized_l1(const Matrix<T>& test, const Matrix<U>& reference)
{
  if (test.rows() != reference.rows() || test.cols() != reference.cols())
    throw ShapeError("normalized_l1 operands differ in shape");
  auto a = test.values();
  auto b = reference.values();
  double diff = 0.0, norm = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += std::abs(double(a[i]) - double(b[i]));
    norm += std::abs(double(b[i]));
  }
  if (norm == 0.0) throw ZeroReferenceError("reference is all zeros");
  return diff / norm;
}

template <typename T, typename U>
double cosine_similarity(const Matrix<T>& test, const Matrix<U>& reference)
{
  if (test.rows() != reference.rows() || test.cols() != reference.cols())
    throw ShapeError("cosine_similarity operands differ in shape");
  auto a = test.values();
  auto b = reference.values();
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += double(a[i]) * double(b[i]);
    na += double(a[i]) * double(a[i]);
    nb += double(b[i]) * double(b[i]);
  }
  if (na == 0.0 || nb == 0.0) throw ZeroVectorError("cosine similarity of a zero vector");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

std::uint64_t pooled_path_flops(const BlockGrid& grid, std::size_t dim)
{
  const std::uint64_t d = dim, tv = grid.t_video, tt = grid.t_text, n = grid.n_q,
                      m = grid.n_kv, mixed = n * (grid.n_q + tt);
  std::uint64_t f = 0;
  f += (tv + 2 * (tv + tt)) * d;          // pool q_video, k, v
  f += 2 * mixed * d + 4 * mixed;         // mixed pooled softmax
  f += 3 * mixed;                         // reallocation and text block sums
  f += 2 * n * m * d + n * m;             // pooled scores and gain
  f += 2 * (tv + tv + tt) * d;            // centered sums for the pooling error
  f += 4 * n * m * d;                     // error dot products
  f += 2 * n * m;                         // compensation mask and sparse selection
  f += n * m + 2 * n * m * d + 2 * tv * d;  // R, compensation vectors, apply
  return f;
}

FlopReport sparsity_and_flops(const BlockMask& mask, const BlockGrid& grid, std::size_t dim)
{
  if (mask.rows() != grid.n_q || mask.cols() != grid.n_kv)
    throw ShapeError("mask shape does not match the block grid");
  FlopReport r;
  const std::uint64_t d = dim;
  r.flops_full = 4 * std::uint64_t(grid.t_video) * grid.key_count() * d;
  std::uint64_t pairs = 0;
  for (std::size_t n = 0; n < grid.n_q; ++n)
    for (std::size_t m = 0; m < grid.n_kv; ++m)
      if (mask(n, m)) pairs += std::uint64_t(grid.block) * grid.block_len(m);
  r.flops_sparse = 4 * pairs * d;
  r.sparsity = 1.0 - double(mask.count()) / double(grid.n_q * grid.n_kv);
  r.flops_overhead = pooled_path_flops(grid, dim);
  return r;
}

template <typename T>
DenominatorReport denominator_equivalence_report(const AttentionProblem<T>& problem,
                                                 const PooledSet& pooled, const BlockGrid& grid,
                                                 double tau)
{
  const std::size_t d = problem.dim();
  if (pooled.q_pool.rows() != grid.n_q || pooled.k_pool.rows() != grid.n_kv)
    throw ShapeError("pooled set does not match the block grid");
  const double scale = 1.0 / std::sqrt(double(d));

  // Pooled scores are shared by every query of a block.
  MatrixD s_pool(grid.n_q, grid.n_kv);
  for (std::size_t n = 0; n < grid.n_q; ++n)
    for (std::size_t m = 0; m < grid.n_kv; ++m) {
      double acc = 0.0;
      for (std::size_t c = 0; c < d; ++c) acc += pooled.q_pool(n, c) * pooled.k_pool(m, c);
      s_pool(n, m) = acc * scale;
    }

  DenominatorReport rep;
  rep.tau = tau;
  rep.s_sum.resize(grid.t_video);
  rep.s_sum_pool.resize(grid.t_video);
  std::vector<double> scores(grid.key_count());
  std::size_t satisfied = 0;
  for (std::size_t i = 0; i < grid.t_video; ++i) {
    const std::size_t n = i / grid.block;
    auto q = problem.q_video.row(i);
    double shift = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < scores.size(); ++j) {
      auto k = problem.k.row(j);
      double acc = 0.0;
      for (std::size_t c = 0; c < d; ++c) acc += double(q[c]) * double(k[c]);
      scores[j] = acc * scale;
      shift = std::max(shift, scores[j]);
    }
    for (std::size_t m = 0; m < grid.n_kv; ++m) shift = std::max(shift, s_pool(n, m));

    double s_true = 0.0, s_pooled = 0.0;
    for (double s : scores) s_true += std::exp(s - shift);
    for (std::size_t m = 0; m < grid.n_kv; ++m)
      s_pooled += double(grid.block_len(m)) * std::exp(s_pool(n, m) - shift);
    rep.s_sum[i] = s_true;
    rep.s_sum_pool[i] = s_pooled;
    if (std::abs(s_true - s_pooled) < tau * std::abs(s_true)) ++satisfied;
  }
  rep.satisfied_fraction = double(satisfied) / double(grid.t_video);
  return rep;
}

double gapr_condition_agreement(const GainError& ge)
{
  if (!ge.exact_gain || !ge.exact_error) throw ShapeError("exact gain/error not computed");
  const auto& g = ge.gain;
  std::size_t agree = 0;
  for (std::size_t n = 0; n < g.rows(); ++n)
    for (std::size_t m = 0; m < g.cols(); ++m) {
      const bool relaxed = ge.gain(n, m) > ge.error(n, m);
      const bool exact = (*ge.exact_gain)(n, m) > (*ge.exact_error)(n, m);
      agree += relaxed == exact ? 1 : 0;
    }
  return double(agree) / double(g.size());
}

template <typename T>
double gapr_condition_agreement(const AttentionProblem<T>& problem, const PooledSet& pooled,
                                const BlockGrid& grid)
{
  return gapr_condition_agreement(exact_gain_error(problem, pooled, grid));
}

#define RECTATTN_INSTANTIATE_PAIR(T, U)                                   \
  template double normalized_l1(const Matrix<T>&, const Matrix<U>&);      \
  template double cosine_similarity(const Matrix<T>&, const Matrix<U>&);

RECTATTN_INSTANTIATE_PAIR(float, float)
RECTATTN_INSTANTIATE_PAIR(float, double)
RECTATTN_INSTANTIATE_PAIR(double, float)
RECTATTN_INSTANTIATE_PAIR(double, double)

#undef RECTATTN_INSTANTIATE_PAIR

template DenominatorReport denominator_equivalence_report(const AttentionProblem<float>&,
                                                          const PooledSet&, const BlockGrid&,
                                                          double);
template DenominatorReport denominator_equivalence_report(const AttentionProblem<double>&,
                                                          const PooledSet&, const BlockGrid&,
                                                          double);
template double gapr_condition_agreement(const AttentionProblem<float>&, const PooledSet&,
                                         const BlockGrid&);
template double gapr_condition_agreement(const AttentionProblem<double>&, const PooledSet&,
                                         const BlockGrid&);

}  // namespace rectattn
