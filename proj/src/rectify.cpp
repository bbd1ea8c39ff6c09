#include "rectattn/rectify.hpp"

#include <chrono>
#include <string>

namespace rectattn {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since)
{
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

}  // namespace

RectificationFactors rectification_factors(const MatrixD& a_pool, const BlockMask& mask)
{
  if (a_pool.rows() != mask.rows() || a_pool.cols() != mask.cols())
    throw ShapeError("implicit attention and mask shapes differ");
  RectificationFactors f{std::vector<double>(a_pool.rows())};
  for (std::size_t n = 0; n < a_pool.rows(); ++n) {
    if (mask.row_count(n) == mask.cols()) {
      f.r[n] = 1.0;
      continue;
    }
    double acc = 0.0;
    for (std::size_t m = 0; m < a_pool.cols(); ++m)
      if (mask(n, m)) acc += a_pool(n, m);
    f.r[n] = acc;
  }
  return f;
}

template <typename T>
Matrix<T> apply_rectification(const Matrix<T>& o_video, const RectificationFactors& factors,
                              const ImplicitAttention& implicit, const SparseMask& sparse,
                              const CompensationMask& comp, const MatrixD& v_pool,
                              const BlockGrid& grid)
{
  const auto& a_pool = implicit.a_pool;
  if (o_video.rows() != grid.t_video || factors.r.size() != grid.n_q)
    throw ShapeError("rectification inputs do not match the block grid");
  if (a_pool.rows() != grid.n_q || a_pool.cols() != grid.n_kv ||
      sparse.mask.rows() != grid.n_q || sparse.mask.cols() != grid.n_kv ||
      comp.mask.rows() != grid.n_q || comp.mask.cols() != grid.n_kv)
    throw ShapeError("block matrices must be N x M");
  if (v_pool.rows() != grid.n_kv || v_pool.cols() != o_video.cols())
    throw ShapeError("pooled values must be M x d");

  const std::size_t d = o_video.cols();
  Matrix<T> out(o_video.rows(), d);
  std::vector<double> compensation(d);
  for (std::size_t n = 0; n < grid.n_q; ++n) {
    std::fill(compensation.begin(), compensation.end(), 0.0);
    for (std::size_t m = 0; m < grid.n_kv; ++m) {
      if (sparse.mask(n, m) || !comp.mask(n, m)) continue;
      const double w = a_pool(n, m);
      auto vp = v_pool.row(m);
      for (std::size_t c = 0; c < d; ++c) compensation[c] += w * vp[c];
    }
    const double r = factors.r[n];
    for (std::size_t i = n * grid.block; i < (n + 1) * grid.block; ++i) {
      auto src = o_video.row(i);
      auto dst = out.row(i);
      for (std::size_t c = 0; c < d; ++c) dst[c] = T(r * double(src[c]) + compensation[c]);
    }
  }
  return out;
}

std::vector<double> implied_row_mass(const RectificationFactors& factors, const MatrixD& a_pool,
                                     const CompensationMask& applied)
{
  std::vector<double> mass(factors.r);
  for (std::size_t n = 0; n < a_pool.rows(); ++n)
    for (std::size_t m = 0; m < a_pool.cols(); ++m)
      if (applied.mask(n, m)) mass[n] += a_pool(n, m);
  return mass;
}

template <typename T>
PipelineResult<T> rectified_attention_pipeline(const AttentionProblem<T>& input,
                                               const SparsityConfig& config,
                                               const PipelineOptions& options)
{
  config.validate();
  const auto start = Clock::now();
  PipelineResult<T> res;

  MortonReorder<T> reordered;
  const AttentionProblem<T>* problem = &input;
  if (options.morton_reorder) {
    reordered = reorder_morton(input);
    problem = &reordered.problem;
    res.permutation = reordered.permutation;
  }
  res.grid = partition(*problem);
  const auto& grid = res.grid;
  auto& times = res.accounting.times;

  auto t0 = Clock::now();
  const PooledSet pooled = pool_problem(*problem, grid);
  times.pool_ms = elapsed_ms(t0);

  t0 = Clock::now();
  res.implicit = implicit_full_attention(pooled, grid, problem->dim());
  times.implicit_ms = elapsed_ms(t0);

  t0 = Clock::now();
  res.gain_error.gain = attention_gain(pooled_scores(pooled, problem->dim()), grid);
  res.gain_error.error = pooling_error(*problem, pooled, grid);
  times.compensation_ms = elapsed_ms(t0);

  t0 = Clock::now();
  res.sparse_mask = build_sparse_mask(res.implicit.a_pool, config, grid);
  times.sparse_mask_ms = elapsed_ms(t0);

  t0 = Clock::now();
  res.comp_mask = compensation_mask(res.gain_error.gain, res.gain_error.error, res.sparse_mask);
  times.compensation_ms += elapsed_ms(t0);

  t0 = Clock::now();
  auto video = block_sparse_attention(problem->q_video, problem->k, problem->v,
                                      res.sparse_mask.mask, grid);
  times.kernel_ms = elapsed_ms(t0);
  res.accounting.video_kernel = video.stats;

  t0 = Clock::now();
  if (problem->t_text() > 0) {
    auto text = dense_attention(problem->q_text, problem->k, problem->v, grid.block);
    res.output.o_text = std::move(text.output);
    res.accounting.text_kernel = text.stats;
  } else {
    res.output.o_text = Matrix<T>(0, problem->dim());
  }
  times.text_ms = elapsed_ms(t0);

  t0 = Clock::now();
  CompensationMask effective{BlockMask(grid.n_q, grid.n_kv)};
  if (options.rectify) {
    switch (options.compensation) {
      case CompensationMode::Gated: effective = res.comp_mask; break;
      case CompensationMode::All: effective.mask = BlockMask(grid.n_q, grid.n_kv, true); break;
      case CompensationMode::None: break;
    }
  }
  res.applied_comp.mask = BlockMask(grid.n_q, grid.n_kv);
  for (std::size_t n = 0; n < grid.n_q; ++n)
    for (std::size_t m = 0; m < grid.n_kv; ++m)
      if (!res.sparse_mask.mask(n, m) && effective.mask(n, m)) res.applied_comp.mask.set(n, m);

  res.factors = rectification_factors(res.implicit.a_pool, res.sparse_mask.mask);
  if (options.rectify) {
    res.output.o_video = apply_rectification(video.output, res.factors, res.implicit,
                                             res.sparse_mask, effective, pooled.v_pool, grid);
  } else {
    res.output.o_video = std::move(video.output);
  }
  res.output.row_log_denominators = std::move(video.row_log_denominators);
  times.rectify_ms = elapsed_ms(t0);

  if (options.morton_reorder) {
    std::span<const std::size_t> perm(res.permutation);
    res.output.o_video = unpermute_rows(res.output.o_video, perm);
    std::vector<double> logs(res.output.row_log_denominators.size());
    for (std::size_t r = 0; r < perm.size(); ++r) logs[perm[r]] = res.output.row_log_denominators[r];
    res.output.row_log_denominators = std::move(logs);
  }
  times.total_ms = elapsed_ms(start);
  return res;
}

template Matrix<float> apply_rectification(const Matrix<float>&, const RectificationFactors&,
                                           const ImplicitAttention&, const SparseMask&,
                                           const CompensationMask&, const MatrixD&,
                                           const BlockGrid&);
template Matrix<double> apply_rectification(const Matrix<double>&, const RectificationFactors&,
                                            const ImplicitAttention&, const SparseMask&,
                                            const CompensationMask&, const MatrixD&,
                                            const BlockGrid&);
template PipelineResult<float> rectified_attention_pipeline(const AttentionProblem<float>&,
                                                            const SparsityConfig&,
                                                            const PipelineOptions&);
template PipelineResult<double> rectified_attention_pipeline(const AttentionProblem<double>&,
                                                             const SparsityConfig&,
                                                             const PipelineOptions&);

}  // namespace rectattn
