#include "rectattn/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace rectattn {

namespace {

template <typename T>
double dot(std::span<const T> a, std::span<const T> b)
{
  double acc = 0.0;
  for (std::size_t c = 0; c < a.size(); ++c) acc += double(a[c]) * double(b[c]);
  return acc;
}

template <typename T>
void check_qkv(const Matrix<T>& q, const Matrix<T>& k, const Matrix<T>& v)
{
  if (q.cols() != k.cols() || k.cols() != v.cols())
    throw ShapeError("q/k/v head dimensions differ");
  if (k.rows() != v.rows()) throw ShapeError("k and v row counts differ");
}

// Softmax of one score row restricted to `keep`, written in place; returns
// the output row as the weighted sum of v rows.
template <typename T>
void softmax_row_and_mix(std::span<double> scores, const std::vector<char>& keep,
                         const Matrix<T>& v, std::span<double> out)
{
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < scores.size(); ++j)
    if (keep[j]) mx = std::max(mx, scores[j]);
  double denom = 0.0;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    scores[j] = keep[j] ? std::exp(scores[j] - mx) : 0.0;
    denom += scores[j];
  }
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t j = 0; j < scores.size(); ++j) {
    scores[j] /= denom;
    if (scores[j] == 0.0) continue;
    auto vr = v.row(j);
    for (std::size_t c = 0; c < out.size(); ++c) out[c] += scores[j] * double(vr[c]);
  }
}

// Spread the low 21 bits of x so bit b lands at position 3b.
std::uint64_t spread3(std::uint64_t x)
{
  x &= 0x1fffffULL;
  x = (x | (x << 32)) & 0x1f00000000ffffULL;
  x = (x | (x << 16)) & 0x1f0000ff0000ffULL;
  x = (x | (x << 8)) & 0x100f00f00f00f00fULL;
  x = (x | (x << 4)) & 0x10c30c30c30c30c3ULL;
  x = (x | (x << 2)) & 0x1249249249249249ULL;
  return x;
}

}  // namespace

template <typename T>
void AttentionProblem<T>::validate() const
{
  if (block == 0) throw BlockSizeError("block size must be positive");
  const std::size_t d = q_video.cols();
  if (q_video.rows() == 0) throw ShapeError("problem has no video queries");
  if (!q_text.empty() && q_text.cols() != d) throw ShapeError("q_text head dimension differs");
  if (k.cols() != d || v.cols() != d) throw ShapeError("k/v head dimension differs from q");
  const std::size_t total = t_video() + t_text();
  if (k.rows() != total || v.rows() != total)
    throw ShapeError("k/v rows must equal T_v + T_t = " + std::to_string(total));
  if (t_video() % block != 0)
    throw BlockSizeError("T_v=" + std::to_string(t_video()) + " is not a multiple of B=" +
                         std::to_string(block));
  if (grid_dims) {
    const auto& g = *grid_dims;
    if (g[0] * g[1] * g[2] != t_video()) throw ShapeError("grid t*h*w must equal T_v");
  }
}

std::vector<std::size_t> BlockGrid::key_block_lens() const
{
  std::vector<std::size_t> lens(n_kv);
  for (std::size_t m = 0; m < n_kv; ++m) lens[m] = block_len(m);
  return lens;
}

std::vector<std::size_t> BlockGrid::video_block_lens() const
{
  return std::vector<std::size_t>(n_q, block);
}

BlockGrid partition(std::size_t t_video, std::size_t t_text, std::size_t block)
{
  if (block == 0) throw BlockSizeError("block size must be positive");
  if (t_video == 0) throw BlockSizeError("T_v must be at least one block");
  if (t_video % block != 0)
    throw BlockSizeError("T_v=" + std::to_string(t_video) + " is not a multiple of B=" +
                         std::to_string(block));
  BlockGrid g;
  g.block = block;
  g.t_video = t_video;
  g.t_text = t_text;
  g.n_q = t_video / block;
  g.n_kv = g.n_q + (t_text + block - 1) / block;
  g.text_block_start = g.n_q;
  g.last_text_block_len = t_text == 0 ? 0 : t_text - (g.n_kv - g.n_q - 1) * block;
  return g;
}

template <typename T>
MatrixD block_pool(const Matrix<T>& x, std::span<const std::size_t> block_lens)
{
  std::size_t total = 0;
  for (auto len : block_lens) {
    if (len == 0) throw ShapeError("block length must be at least 1");
    total += len;
  }
  if (total != x.rows())
    throw ShapeError("block lengths sum to " + std::to_string(total) + ", matrix has " +
                     std::to_string(x.rows()) + " rows");
  MatrixD out(block_lens.size(), x.cols());
  std::size_t r0 = 0;
  for (std::size_t m = 0; m < block_lens.size(); ++m) {
    auto dst = out.row(m);
    for (std::size_t r = r0; r < r0 + block_lens[m]; ++r) {
      auto src = x.row(r);
      for (std::size_t c = 0; c < x.cols(); ++c) dst[c] += double(src[c]);
    }
    for (auto& val : dst) val /= double(block_lens[m]);
    r0 += block_lens[m];
  }
  return out;
}

template <typename T>
PooledSet pool_problem(const AttentionProblem<T>& problem, const BlockGrid& grid)
{
  const auto video_lens = grid.video_block_lens();
  const auto key_lens = grid.key_block_lens();
  PooledSet p;
  p.q_pool = block_pool(problem.q_video, std::span<const std::size_t>(video_lens));
  p.k_pool = block_pool(problem.k, std::span<const std::size_t>(key_lens));
  p.v_pool = block_pool(problem.v, std::span<const std::size_t>(key_lens));
  p.k_v_pool = p.k_pool.slice_rows(0, grid.n_q);

  const std::size_t d = problem.dim();
  p.k_mix_pool = MatrixD(grid.n_q + grid.t_text, d);
  for (std::size_t r = 0; r < grid.n_q; ++r) std::ranges::copy(p.k_v_pool.row(r), p.k_mix_pool.row(r).begin());
  for (std::size_t t = 0; t < grid.t_text; ++t) {
    auto src = problem.k.row(grid.t_video + t);
    auto dst = p.k_mix_pool.row(grid.n_q + t);
    for (std::size_t c = 0; c < d; ++c) dst[c] = double(src[c]);
  }
  return p;
}

template <typename T>
OracleResult full_attention_oracle(const Matrix<T>& q, const Matrix<T>& k, const Matrix<T>& v)
{
  check_qkv(q, k, v);
  const double scale = 1.0 / std::sqrt(double(q.cols()));
  OracleResult res{MatrixD(q.rows(), k.rows()), MatrixD(q.rows(), v.cols())};
  const std::vector<char> keep(k.rows(), 1);
  for (std::size_t i = 0; i < q.rows(); ++i) {
    auto w = res.weights.row(i);
    for (std::size_t j = 0; j < k.rows(); ++j) w[j] = dot(q.row(i), k.row(j)) * scale;
    softmax_row_and_mix(w, keep, v, res.output.row(i));
  }
  return res;
}

template <typename T>
OracleResult masked_attention_oracle(const Matrix<T>& q_video, const Matrix<T>& k,
                                     const Matrix<T>& v, const BlockMask& mask,
                                     const BlockGrid& grid)
{
  check_qkv(q_video, k, v);
  if (q_video.rows() != grid.t_video || k.rows() != grid.key_count())
    throw ShapeError("q/k rows do not match the block grid");
  if (mask.rows() != grid.n_q || mask.cols() != grid.n_kv)
    throw ShapeError("mask shape does not match the block grid");
  for (std::size_t n = 0; n < grid.n_q; ++n)
    if (mask.row_count(n) == 0)
      throw EmptyRowError("query block " + std::to_string(n) + " retains no key block");

  const double scale = 1.0 / std::sqrt(double(q_video.cols()));
  OracleResult res{MatrixD(q_video.rows(), k.rows()), MatrixD(q_video.rows(), v.cols())};
  std::vector<char> keep(k.rows());
  for (std::size_t i = 0; i < q_video.rows(); ++i) {
    const std::size_t n = i / grid.block;
    for (std::size_t j = 0; j < k.rows(); ++j) keep[j] = mask(n, j / grid.block) ? 1 : 0;
    auto w = res.weights.row(i);
    for (std::size_t j = 0; j < k.rows(); ++j)
      w[j] = keep[j] ? dot(q_video.row(i), k.row(j)) * scale : 0.0;
    softmax_row_and_mix(w, keep, v, res.output.row(i));
  }
  return res;
}

std::uint64_t morton_code(std::uint32_t t, std::uint32_t y, std::uint32_t x)
{
  return spread3(x) | (spread3(y) << 1) | (spread3(t) << 2);
}

std::vector<std::size_t> morton_permutation(const GridDims& dims)
{
  const auto [gt, gh, gw] = dims;
  const std::size_t total = gt * gh * gw;
  std::vector<std::uint64_t> codes(total);
  for (std::size_t t = 0; t < gt; ++t)
    for (std::size_t y = 0; y < gh; ++y)
      for (std::size_t x = 0; x < gw; ++x)
        codes[(t * gh + y) * gw + x] =
            morton_code(std::uint32_t(t), std::uint32_t(y), std::uint32_t(x));
  std::vector<std::size_t> perm(total);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::ranges::stable_sort(perm, [&](std::size_t a, std::size_t b) { return codes[a] < codes[b]; });
  return perm;
}

template <typename T>
Matrix<T> permute_rows(const Matrix<T>& x, std::span<const std::size_t> perm)
{
  if (perm.size() > x.rows()) throw ShapeError("permutation longer than matrix");
  Matrix<T> out = x;
  for (std::size_t r = 0; r < perm.size(); ++r) std::ranges::copy(x.row(perm[r]), out.row(r).begin());
  return out;
}

template <typename T>
Matrix<T> unpermute_rows(const Matrix<T>& x, std::span<const std::size_t> perm)
{
  if (perm.size() > x.rows()) throw ShapeError("permutation longer than matrix");
  Matrix<T> out = x;
  for (std::size_t r = 0; r < perm.size(); ++r) std::ranges::copy(x.row(r), out.row(perm[r]).begin());
  return out;
}

template <typename T>
MortonReorder<T> reorder_morton(const AttentionProblem<T>& problem)
{
  if (!problem.grid_dims) throw MissingGridError("Morton reordering needs grid dimensions");
  problem.validate();
  MortonReorder<T> out;
  out.permutation = morton_permutation(*problem.grid_dims);
  std::span<const std::size_t> perm(out.permutation);
  out.problem = problem;
  out.problem.q_video = permute_rows(problem.q_video, perm);
  out.problem.k = permute_rows(problem.k, perm);
  out.problem.v = permute_rows(problem.v, perm);
  return out;
}

template <typename T>
AttentionProblem<T> restore_order(const AttentionProblem<T>& problem,
                                  std::span<const std::size_t> perm)
{
  AttentionProblem<T> out = problem;
  out.q_video = unpermute_rows(problem.q_video, perm);
  out.k = unpermute_rows(problem.k, perm);
  out.v = unpermute_rows(problem.v, perm);
  return out;
}

#define RECTATTN_INSTANTIATE(T)                                                                  \
  template struct AttentionProblem<T>;                                                           \
  template MatrixD block_pool(const Matrix<T>&, std::span<const std::size_t>);                   \
  template PooledSet pool_problem(const AttentionProblem<T>&, const BlockGrid&);                 \
  template OracleResult full_attention_oracle(const Matrix<T>&, const Matrix<T>&,                \
                                              const Matrix<T>&);                                 \
  template OracleResult masked_attention_oracle(const Matrix<T>&, const Matrix<T>&,              \
                                                const Matrix<T>&, const BlockMask&,              \
                                                const BlockGrid&);                               \
  template Matrix<T> permute_rows(const Matrix<T>&, std::span<const std::size_t>);               \
  template Matrix<T> unpermute_rows(const Matrix<T>&, std::span<const std::size_t>);             \
  template MortonReorder<T> reorder_morton(const AttentionProblem<T>&);                          \
  template AttentionProblem<T> restore_order(const AttentionProblem<T>&,                         \
                                             std::span<const std::size_t>);

RECTATTN_INSTANTIATE(float)
RECTATTN_INSTANTIATE(double)

#undef RECTATTN_INSTANTIATE

}  // namespace rectattn
