#include "rectattn/masks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "rectattn/ipar.hpp"

namespace rectattn {

void SparsityConfig::validate() const
{
  if (!(top_k_fraction > 0.0 && top_k_fraction <= 1.0))
    throw ConfigError("top_k_fraction must lie in (0, 1], got " + std::to_string(top_k_fraction));
  if (!(weight_threshold >= 0.0 && weight_threshold <= 1.0))
    throw ConfigError("weight threshold p must lie in [0, 1], got " +
                      std::to_string(weight_threshold));
}

std::size_t top_k_count(double top_k_fraction, std::size_t n_kv)
{
  // The epsilon keeps fractions like 1/3 * 3 from rounding up to 2.
  const double raw = std::ceil(top_k_fraction * double(n_kv) - 1e-9);
  return std::clamp<std::size_t>(std::size_t(std::max(raw, 1.0)), 1, n_kv);
}

SparseMask build_sparse_mask(const MatrixD& a_pool, const SparsityConfig& config,
                             const BlockGrid& grid)
{
  config.validate();
  const std::size_t n_rows = grid.n_q, n_cols = grid.n_kv;
  if (a_pool.rows() != n_rows || a_pool.cols() != n_cols)
    throw ShapeError("implicit attention must be N x M");

  SparseMask sm{BlockMask(n_rows, n_cols), BlockMask(n_rows, n_cols), BlockMask(n_rows, n_cols),
                std::vector<std::size_t>(n_rows)};
  const std::size_t floor_count = top_k_count(config.top_k_fraction, n_cols);
  std::vector<std::size_t> order(n_cols);

  for (std::size_t n = 0; n < n_rows; ++n) {
    auto w = a_pool.row(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::ranges::stable_sort(order, [&](std::size_t a, std::size_t b) { return w[a] > w[b]; });
    std::size_t kept = 0;
    double cumulative = 0.0;
    for (std::size_t m : order) {
      if (kept >= floor_count && cumulative >= config.weight_threshold) break;
      sm.importance.set(n, m);
      cumulative += w[m];
      ++kept;
    }

    const std::size_t lo = n >= config.adjacency_radius ? n - config.adjacency_radius : 0;
    const std::size_t hi = std::min(n + config.adjacency_radius, grid.n_q - 1);
    for (std::size_t m = lo; m <= hi; ++m) sm.adjacency.set(n, m);

    for (std::size_t m = 0; m < n_cols; ++m) {
      const bool forced = config.force_text_blocks && grid.is_text_block(m);
      if (sm.importance(n, m) || sm.adjacency(n, m) || forced) sm.mask.set(n, m);
    }
    sm.retained_count[n] = sm.mask.row_count(n);
  }
  return sm;
}

MatrixD attention_gain(const MatrixD& scores_pool, const BlockGrid& grid)
{
  if (scores_pool.rows() != grid.n_q || scores_pool.cols() != grid.n_kv)
    throw ShapeError("pooled scores must be N x M");
  MatrixD gain(grid.n_q, grid.n_kv);
  for (std::size_t n = 0; n < grid.n_q; ++n)
    for (std::size_t m = 0; m < grid.n_kv; ++m)
      gain(n, m) = std::abs(double(grid.block) * double(grid.block_len(m)) * scores_pool(n, m));
  return gain;
}

template <typename T>
MatrixD pooling_error(const AttentionProblem<T>& problem, const PooledSet& pooled,
                      const BlockGrid& grid)
{
  const std::size_t d = problem.dim();
  if (pooled.q_pool.rows() != grid.n_q || pooled.k_pool.rows() != grid.n_kv ||
      pooled.q_pool.cols() != d || pooled.k_pool.cols() != d)
    throw ShapeError("pooled set does not match the problem");

  // Centered row sums: sum_i (q_i - q_pool_n) and sum_j (k_j - k_pool_m).
  MatrixD q_dev(grid.n_q, d), k_dev(grid.n_kv, d);
  for (std::size_t i = 0; i < grid.t_video; ++i) {
    const std::size_t n = i / grid.block;
    auto q = problem.q_video.row(i);
    auto qp = pooled.q_pool.row(n);
    auto dst = q_dev.row(n);
    for (std::size_t c = 0; c < d; ++c) dst[c] += double(q[c]) - qp[c];
  }
  for (std::size_t j = 0; j < grid.key_count(); ++j) {
    const std::size_t m = j / grid.block;
    auto k = problem.k.row(j);
    auto kp = pooled.k_pool.row(m);
    auto dst = k_dev.row(m);
    for (std::size_t c = 0; c < d; ++c) dst[c] += double(k[c]) - kp[c];
  }

  const double scale = 1.0 / std::sqrt(double(d));
  const double bq = double(grid.block);
  MatrixD error(grid.n_q, grid.n_kv);
  for (std::size_t n = 0; n < grid.n_q; ++n) {
    for (std::size_t m = 0; m < grid.n_kv; ++m) {
      double query_term = 0.0, key_term = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        query_term += q_dev(n, c) * pooled.k_pool(m, c);
        key_term += pooled.q_pool(n, c) * k_dev(m, c);
      }
      error(n, m) = std::abs((double(grid.block_len(m)) * query_term + bq * key_term) * scale);
    }
  }
  return error;
}

template <typename T>
double score_deviation(const AttentionProblem<T>& problem, const PooledSet& pooled,
                       const BlockGrid& grid, std::size_t i, std::size_t j)
{
  if (i >= grid.t_video || j >= grid.key_count()) throw ShapeError("token index out of range");
  const std::size_t n = i / grid.block, m = j / grid.block, d = problem.dim();
  auto q = problem.q_video.row(i);
  auto k = problem.k.row(j);
  double acc = 0.0;
  for (std::size_t c = 0; c < d; ++c)
    acc += (double(q[c]) - pooled.q_pool(n, c)) * pooled.k_pool(m, c) +
           pooled.q_pool(n, c) * (double(k[c]) - pooled.k_pool(m, c));
  return acc / std::sqrt(double(d));
}

CompensationMask compensation_mask(const MatrixD& gain, const MatrixD& error,
                                   const SparseMask& sparse)
{
  if (gain.rows() != error.rows() || gain.cols() != error.cols())
    throw ShapeError("gain and error shapes differ");
  if (sparse.mask.rows() != gain.rows() || sparse.mask.cols() != gain.cols())
    throw ShapeError("sparse mask shape differs from gain");
  CompensationMask cm{BlockMask(gain.rows(), gain.cols())};
  for (std::size_t n = 0; n < gain.rows(); ++n)
    for (std::size_t m = 0; m < gain.cols(); ++m)
      if (gain(n, m) > error(n, m)) cm.mask.set(n, m);
  return cm;
}

template <typename T>
GainError exact_gain_error(const AttentionProblem<T>& problem, const PooledSet& pooled,
                           const BlockGrid& grid)
{
  const auto implicit = implicit_full_attention(pooled, grid, problem.dim());
  const auto truth = full_attention_oracle(problem.q_video, problem.k, problem.v);

  GainError ge;
  ge.gain = attention_gain(pooled_scores(pooled, problem.dim()), grid);
  ge.error = pooling_error(problem, pooled, grid);
  MatrixD exact_gain(grid.n_q, grid.n_kv), exact_error(grid.n_q, grid.n_kv);
  for (std::size_t n = 0; n < grid.n_q; ++n)
    for (std::size_t m = 0; m < grid.n_kv; ++m) exact_gain(n, m) = implicit.a_pool(n, m);

  for (std::size_t i = 0; i < grid.t_video; ++i) {
    const std::size_t n = i / grid.block;
    auto w = truth.weights.row(i);
    for (std::size_t j = 0; j < w.size(); ++j) {
      const std::size_t m = j / grid.block;
      const double remapped = implicit.a_pool(n, m) / double(grid.block_len(m));
      exact_error(n, m) += std::abs(w[j] - remapped);
    }
  }
  for (auto& x : exact_error.values()) x /= double(grid.block);
  ge.exact_gain = std::move(exact_gain);
  ge.exact_error = std::move(exact_error);
  return ge;
}

template MatrixD pooling_error(const AttentionProblem<float>&, const PooledSet&, const BlockGrid&);
template MatrixD pooling_error(const AttentionProblem<double>&, const PooledSet&, const BlockGrid&);
template double score_deviation(const AttentionProblem<float>&, const PooledSet&,
                                const BlockGrid&, std::size_t, std::size_t);
template double score_deviation(const AttentionProblem<double>&, const PooledSet&,
                                const BlockGrid&, std::size_t, std::size_t);
template GainError exact_gain_error(const AttentionProblem<float>&, const PooledSet&,
                                    const BlockGrid&);
template GainError exact_gain_error(const AttentionProblem<double>&, const PooledSet&,
                                    const BlockGrid&);

}  // namespace rectattn
