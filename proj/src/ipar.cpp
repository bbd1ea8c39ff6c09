#include "rectattn/ipar.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace rectattn {

namespace {

MatrixD scaled_products(const MatrixD& q, const MatrixD& k, std::size_t dim)
{
  if (q.cols() != dim || k.cols() != dim) throw ShapeError("pooled head dimension mismatch");
  const double scale = 1.0 / std::sqrt(double(dim));
  MatrixD s(q.rows(), k.rows());
  for (std::size_t n = 0; n < q.rows(); ++n) {
    auto qr = q.row(n);
    for (std::size_t m = 0; m < k.rows(); ++m) {
      auto kr = k.row(m);
      double acc = 0.0;
      for (std::size_t c = 0; c < dim; ++c) acc += qr[c] * kr[c];
      s(n, m) = acc * scale;
    }
  }
  return s;
}

}  // namespace

void softmax_rows(MatrixD& scores)
{
  for (std::size_t r = 0; r < scores.rows(); ++r) {
    auto row = scores.row(r);
    if (row.empty()) continue;
    const double mx = *std::ranges::max_element(row);
    double denom = 0.0;
    for (auto& x : row) {
      x = std::exp(x - mx);
      denom += x;
    }
    for (auto& x : row) x /= denom;
  }
}

MatrixD mixed_pooled_scores(const PooledSet& pooled, std::size_t dim)
{
  MatrixD s = scaled_products(pooled.q_pool, pooled.k_mix_pool, dim);
  softmax_rows(s);
  return s;
}

Reallocated reallocate(const MatrixD& a_mix, const BlockGrid& grid)
{
  const std::size_t n_video = grid.n_q;
  if (a_mix.rows() != grid.n_q || a_mix.cols() != n_video + grid.t_text)
    throw ShapeError("mixed pooled weights must be N x (N + T_t)");
  const double b = double(grid.block);
  Reallocated out{MatrixD(grid.n_q, n_video), MatrixD(grid.n_q, grid.t_text)};
  for (std::size_t n = 0; n < grid.n_q; ++n) {
    auto row = a_mix.row(n);
    double video_sum = 0.0, text_sum = 0.0;
    for (std::size_t m = 0; m < n_video; ++m) video_sum += row[m];
    for (std::size_t t = 0; t < grid.t_text; ++t) text_sum += row[n_video + t];
    const double denom = b * video_sum + text_sum;
    if (!(denom > 0.0))
      throw DegenerateRowError("reallocation denominator is zero in row " + std::to_string(n));
    for (std::size_t m = 0; m < n_video; ++m) out.video(n, m) = b * row[m] / denom;
    for (std::size_t t = 0; t < grid.t_text; ++t) out.text(n, t) = row[n_video + t] / denom;
  }
  return out;
}

ImplicitAttention implicit_full_attention(const PooledSet& pooled, const BlockGrid& grid,
                                          std::size_t dim)
{
  ImplicitAttention ia;
  ia.a_mix_pool = mixed_pooled_scores(pooled, dim);
  auto [video, text] = reallocate(ia.a_mix_pool, grid);
  ia.a_v_reallocated = std::move(video);
  ia.a_t_reallocated = std::move(text);

  const std::size_t n_text_blocks = grid.n_text_blocks();
  ia.a_t_block = MatrixD(grid.n_q, n_text_blocks);
  for (std::size_t n = 0; n < grid.n_q; ++n) {
    for (std::size_t tb = 0; tb < n_text_blocks; ++tb) {
      const std::size_t begin = tb * grid.block;
      const std::size_t end = std::min(begin + grid.block, grid.t_text);
      double acc = 0.0;
      for (std::size_t t = begin; t < end; ++t) acc += ia.a_t_reallocated(n, t);
      ia.a_t_block(n, tb) = acc;
    }
  }

  ia.a_pool = MatrixD(grid.n_q, grid.n_kv);
  for (std::size_t n = 0; n < grid.n_q; ++n) {
    for (std::size_t m = 0; m < grid.n_q; ++m) ia.a_pool(n, m) = ia.a_v_reallocated(n, m);
    for (std::size_t tb = 0; tb < n_text_blocks; ++tb)
      ia.a_pool(n, grid.n_q + tb) = ia.a_t_block(n, tb);
  }
  return ia;
}

MatrixD pooled_scores(const PooledSet& pooled, std::size_t dim)
{
  return scaled_products(pooled.q_pool, pooled.k_pool, dim);
}

MatrixD direct_pooled_attention(const PooledSet& pooled, std::size_t dim)
{
  MatrixD s = pooled_scores(pooled, dim);
  softmax_rows(s);
  return s;
}

MatrixD block_sum_attention(const MatrixD& weights, const BlockGrid& grid)
{
  if (weights.rows() != grid.t_video || weights.cols() != grid.key_count())
    throw ShapeError("weights must be T_v x (T_v + T_t)");
  MatrixD out(grid.n_q, grid.n_kv);
  for (std::size_t i = 0; i < grid.t_video; ++i) {
    const std::size_t n = i / grid.block;
    auto w = weights.row(i);
    for (std::size_t j = 0; j < w.size(); ++j) out(n, j / grid.block) += w[j];
  }
  for (auto& x : out.values()) x /= double(grid.block);
  return out;
}

}  // namespace rectattn
