#include "rectattn/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "rectattn/parallel.hpp"

namespace rectattn {

namespace {

struct KeyRange {
  std::size_t begin;
  std::size_t end;
};

// K transposed to d x T so the score loop streams contiguous keys.
template <typename T>
std::vector<T> transpose_keys(const Matrix<T>& k)
{
  const std::size_t n = k.rows(), d = k.cols();
  std::vector<T> kt(n * d);
  for (std::size_t j = 0; j < n; ++j) {
    auto row = k.row(j);
    for (std::size_t c = 0; c < d; ++c) kt[c * n + j] = row[c];
  }
  return kt;
}

template <typename T>
class TileAttention {
 public:
  TileAttention(const Matrix<T>& q, const Matrix<T>& v, const std::vector<T>& kt,
                std::size_t max_rows, std::size_t max_keys)
      : q_(q), v_(v), kt_(kt), n_keys_(v.rows()), d_(q.cols()),
        scale_(T(1) / std::sqrt(T(q.cols()))),
        scores_(max_rows * max_keys), q_scaled_(max_rows * q.cols()),
        row_max_(max_rows), row_sum_(max_rows), acc_(max_rows * q.cols())
  {}

  // Attends rows [r0, r1) of q over `ranges`, in order, and writes the
  // normalized result into out rows [r0, r1).
  void run(std::size_t r0, std::size_t r1, const std::vector<KeyRange>& ranges, Matrix<T>& out,
           std::vector<double>& log_denoms)
  {
    const std::size_t rows = r1 - r0;
    std::fill_n(row_max_.begin(), rows, -std::numeric_limits<T>::infinity());
    std::fill_n(row_sum_.begin(), rows, T(0));
    std::fill_n(acc_.begin(), rows * d_, T(0));
    for (std::size_t r = 0; r < rows; ++r) {
      auto qr = q_.row(r0 + r);
      for (std::size_t c = 0; c < d_; ++c) q_scaled_[r * d_ + c] = qr[c] * scale_;
    }

    for (const auto& range : ranges) consume(rows, range);

    for (std::size_t r = 0; r < rows; ++r) {
      auto dst = out.row(r0 + r);
      const T inv = T(1) / row_sum_[r];
      for (std::size_t c = 0; c < d_; ++c) dst[c] = acc_[r * d_ + c] * inv;
      log_denoms[r0 + r] = std::log(double(row_sum_[r])) + double(row_max_[r]);
    }
  }

 private:
  void consume(std::size_t rows, KeyRange range)
  {
    const std::size_t len = range.end - range.begin;
    for (std::size_t r = 0; r < rows; ++r) {
      T* s = scores_.data() + r * len;
      std::fill_n(s, len, T(0));
      const T* qr = q_scaled_.data() + r * d_;
      for (std::size_t c = 0; c < d_; ++c) {
        const T qc = qr[c];
        const T* kc = kt_.data() + c * n_keys_ + range.begin;
        for (std::size_t j = 0; j < len; ++j) s[j] += qc * kc[j];
      }
    }

    for (std::size_t r = 0; r < rows; ++r) {
      T* s = scores_.data() + r * len;
      T block_max = s[0];
      for (std::size_t j = 1; j < len; ++j) block_max = std::max(block_max, s[j]);
      const T new_max = std::max(row_max_[r], block_max);
      const T rescale = std::exp(row_max_[r] - new_max);
      T sum = 0;
      for (std::size_t j = 0; j < len; ++j) {
        s[j] = std::exp(s[j] - new_max);
        sum += s[j];
      }
      row_sum_[r] = row_sum_[r] * rescale + sum;
      row_max_[r] = new_max;

      T* acc = acc_.data() + r * d_;
      if (rescale != T(1))
        for (std::size_t c = 0; c < d_; ++c) acc[c] *= rescale;
      for (std::size_t j = 0; j < len; ++j) {
        const T p = s[j];
        const T* vr = v_.row(range.begin + j).data();
        for (std::size_t c = 0; c < d_; ++c) acc[c] += p * vr[c];
      }
    }
  }

  const Matrix<T>& q_;
  const Matrix<T>& v_;
  const std::vector<T>& kt_;
  std::size_t n_keys_;
  std::size_t d_;
  T scale_;
  std::vector<T> scores_;
  std::vector<T> q_scaled_;
  std::vector<T> row_max_;
  std::vector<T> row_sum_;
  std::vector<T> acc_;
};

template <typename T>
void check_inputs(const Matrix<T>& q, const Matrix<T>& k, const Matrix<T>& v)
{
  if (q.cols() != k.cols() || k.cols() != v.cols())
    throw ShapeError("q/k/v head dimensions differ");
  if (k.rows() != v.rows()) throw ShapeError("k and v row counts differ");
}

template <typename T>
KernelResult<T> sparse_impl(const Matrix<T>& q_video, const Matrix<T>& k, const Matrix<T>& v,
                            const BlockMask& mask, const BlockGrid& grid, bool parallel)
{
  check_inputs(q_video, k, v);
  if (q_video.rows() != grid.t_video || k.rows() != grid.key_count())
    throw ShapeError("q/k rows do not match the block grid");
  if (mask.rows() != grid.n_q || mask.cols() != grid.n_kv)
    throw ShapeError("mask shape does not match the block grid");
  for (std::size_t n = 0; n < grid.n_q; ++n)
    if (mask.row_count(n) == 0)
      throw EmptyRowError("query block " + std::to_string(n) + " retains no key block");

  KernelResult<T> res{Matrix<T>(q_video.rows(), v.cols()),
                      std::vector<double>(q_video.rows()), {}};
  const auto kt = transpose_keys(k);
  const std::size_t d = q_video.cols();
  std::vector<KernelStats> per_block(grid.n_q);
  const long n_blocks = long(grid.n_q);
  const int threads = parallel ? thread_count() : 1;

#pragma omp parallel num_threads(threads) if (parallel)
  {
    TileAttention<T> tile(q_video, v, kt, grid.block, grid.block);
    std::vector<KeyRange> ranges;
#pragma omp for schedule(dynamic)
    for (long nb = 0; nb < n_blocks; ++nb) {
      const auto n = std::size_t(nb);
      ranges.clear();
      for (std::size_t m = 0; m < grid.n_kv; ++m) {
        if (!mask(n, m)) continue;
        const std::size_t begin = grid.block_begin(m);
        ranges.push_back({begin, begin + grid.block_len(m)});
        const std::uint64_t macs = std::uint64_t(grid.block) * grid.block_len(m) * d;
        per_block[n].qk_macs += macs;
        per_block[n].pv_macs += macs;
        per_block[n].blocks_visited += 1;
      }
      tile.run(n * grid.block, (n + 1) * grid.block, ranges, res.output, res.row_log_denominators);
    }
  }
  for (const auto& s : per_block) {
    res.stats.qk_macs += s.qk_macs;
    res.stats.pv_macs += s.pv_macs;
    res.stats.blocks_visited += s.blocks_visited;
  }
  return res;
}

template <typename T>
KernelResult<T> dense_impl(const Matrix<T>& q, const Matrix<T>& k, const Matrix<T>& v,
                           std::size_t tile_size, bool parallel)
{
  check_inputs(q, k, v);
  if (tile_size == 0) throw BlockSizeError("tile size must be positive");
  KernelResult<T> res{Matrix<T>(q.rows(), v.cols()), std::vector<double>(q.rows()), {}};
  if (q.rows() == 0) return res;
  if (k.rows() == 0) throw EmptyRowError("dense attention needs at least one key");

  std::vector<KeyRange> ranges;
  for (std::size_t j = 0; j < k.rows(); j += tile_size)
    ranges.push_back({j, std::min(j + tile_size, k.rows())});
  const auto kt = transpose_keys(k);
  const long n_tiles = long((q.rows() + tile_size - 1) / tile_size);
  const int threads = parallel ? thread_count() : 1;

#pragma omp parallel num_threads(threads) if (parallel)
  {
    TileAttention<T> tile(q, v, kt, tile_size, tile_size);
#pragma omp for schedule(dynamic)
    for (long t = 0; t < n_tiles; ++t) {
      const std::size_t r0 = std::size_t(t) * tile_size;
      tile.run(r0, std::min(r0 + tile_size, q.rows()), ranges, res.output,
               res.row_log_denominators);
    }
  }
  const std::uint64_t macs = std::uint64_t(q.rows()) * k.rows() * q.cols();
  res.stats = {macs, macs, std::uint64_t(n_tiles) * ranges.size()};
  return res;
}

}  // namespace

template <typename T>
KernelResult<T> block_sparse_attention(const Matrix<T>& q_video, const Matrix<T>& k,
                                       const Matrix<T>& v, const BlockMask& mask,
                                       const BlockGrid& grid)
{
  return sparse_impl(q_video, k, v, mask, grid, true);
}

template <typename T>
KernelResult<T> block_sparse_attention_serial(const Matrix<T>& q_video, const Matrix<T>& k,
                                              const Matrix<T>& v, const BlockMask& mask,
                                              const BlockGrid& grid)
{
  return sparse_impl(q_video, k, v, mask, grid, false);
}

template <typename T>
KernelResult<T> dense_attention(const Matrix<T>& q, const Matrix<T>& k, const Matrix<T>& v,
                                std::size_t tile)
{
  return dense_impl(q, k, v, tile, true);
}

template <typename T>
KernelResult<T> dense_attention_serial(const Matrix<T>& q, const Matrix<T>& k,
                                       const Matrix<T>& v, std::size_t tile)
{
  return dense_impl(q, k, v, tile, false);
}

template <typename T>
Matrix<T> text_full_attention(const Matrix<T>& q_text, const Matrix<T>& k, const Matrix<T>& v,
                              std::size_t tile)
{
  if (q_text.rows() == 0) {
    check_inputs(Matrix<T>(0, k.cols()), k, v);
    return Matrix<T>(0, v.cols());
  }
  return dense_attention(q_text, k, v, tile).output;
}

#define RECTATTN_INSTANTIATE(T)                                                                   \
  template KernelResult<T> block_sparse_attention(const Matrix<T>&, const Matrix<T>&,             \
                                                  const Matrix<T>&, const BlockMask&,             \
                                                  const BlockGrid&);                              \
  template KernelResult<T> block_sparse_attention_serial(const Matrix<T>&, const Matrix<T>&,      \
                                                         const Matrix<T>&, const BlockMask&,      \
                                                         const BlockGrid&);                       \
  template KernelResult<T> dense_attention(const Matrix<T>&, const Matrix<T>&, const Matrix<T>&,  \
                                           std::size_t);                                          \
  template KernelResult<T> dense_attention_serial(const Matrix<T>&, const Matrix<T>&,             \
                                                  const Matrix<T>&, std::size_t);                 \
  template Matrix<T> text_full_attention(const Matrix<T>&, const Matrix<T>&, const Matrix<T>&,    \
                                         std::size_t);

RECTATTN_INSTANTIATE(float)
RECTATTN_INSTANTIATE(double)

#undef RECTATTN_INSTANTIATE

}  // namespace rectattn
