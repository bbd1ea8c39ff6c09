#include "rectattn/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "rectattn/experiment.hpp"
#include "rectattn/kernel.hpp"
#include "rectattn/rectify.hpp"
#include "rectattn/synthetic.hpp"

namespace rectattn {

namespace {

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi)
{
  const std::size_t span = hi - lo + 1;
  return lo + std::min(span - 1, std::size_t(rng.uniform() * double(span)));
}

template <typename T, typename U>
double max_abs_diff(const Matrix<T>& a, const Matrix<U>& b)
{
  double m = 0.0;
  auto x = a.values();
  auto y = b.values();
  for (std::size_t i = 0; i < x.size(); ++i) m = std::max(m, std::abs(double(x[i]) - double(y[i])));
  return m;
}

void note(CheckResult& r, const std::string& what)
{
  if (r.violations++ == 0) r.detail = what;
  r.passed = false;
}

AttentionProblem<double> random_problem(Rng& rng, std::uint64_t seed, std::size_t index)
{
  static constexpr std::size_t kBlocks[] = {4, 8, 16};
  static constexpr std::size_t kDims[] = {8, 16, 32, 64};
  const std::size_t b = kBlocks[pick(rng, 0, 2)];
  const std::size_t n = pick(rng, 1, 512 / b);
  const std::size_t tt = pick(rng, 0, 32);
  const std::size_t d = kDims[pick(rng, 0, 3)];
  const std::size_t tv = n * b;
  const std::uint64_t s = splitmix64(seed + index);
  AttentionProblem<double> p;
  p.block = b;
  p.q_video = gaussian_matrix(tv, d, s, 1);
  p.q_text = gaussian_matrix(tt, d, s, 2);
  p.k = gaussian_matrix(tv + tt, d, s, 3);
  p.v = gaussian_matrix(tv + tt, d, s, 4);
  // Spread the score scale so some rows are peaky.
  const double scale = 0.5 + 2.5 * rng.uniform();
  for (auto& x : p.q_video.values()) x *= scale;
  return p;
}

BlockMask random_mask(Rng& rng, const BlockGrid& grid)
{
  const double density = rng.uniform();
  BlockMask mask(grid.n_q, grid.n_kv);
  for (std::size_t r = 0; r < grid.n_q; ++r) {
    for (std::size_t c = 0; c < grid.n_kv; ++c)
      if (rng.uniform() < density) mask.set(r, c);
    if (mask.row_count(r) == 0) mask.set(r, pick(rng, 0, grid.n_kv - 1));
  }
  return mask;
}

SyntheticSpec random_spec(Rng& rng, std::uint64_t seed)
{
  SyntheticSpec spec;
  spec.seed = seed;
  spec.block = pick(rng, 0, 1) == 0 ? 4 : 8;
  const std::size_t n = pick(rng, 2, 16);
  spec.t_video = n * spec.block;
  spec.grid = {1, n, spec.block};
  spec.t_text = pick(rng, 0, 20);
  spec.dim = std::size_t(8) << pick(rng, 0, 2);
  spec.locality = 2.0 * rng.uniform();
  spec.text_norm_boost = 1.0 + 2.0 * rng.uniform();
  spec.intra_block_noise = 0.6 * rng.uniform();
  return spec;
}

SparsityConfig random_sparsity(Rng& rng)
{
  SparsityConfig c;
  c.top_k_fraction = rng.uniform();
  c.weight_threshold = rng.uniform() < 0.5 ? 0.0 : 0.9 * rng.uniform();
  c.adjacency_radius = pick(rng, 0, 2);
  c.force_text_blocks = pick(rng, 0, 1) == 1;
  return c;
}

template <typename T>
void kernel_instance(CheckResult& r, const AttentionProblem<T>& p, const BlockMask& mask,
                     const BlockGrid& grid, double tol, std::size_t index)
{
  const auto oracle = masked_attention_oracle(p.q_video, p.k, p.v, mask, grid);
  const auto fast = block_sparse_attention(p.q_video, p.k, p.v, mask, grid);
  const auto serial = block_sparse_attention_serial(p.q_video, p.k, p.v, mask, grid);
  const double err = max_abs_diff(fast.output, oracle.output);
  r.max_abs_error = std::max(r.max_abs_error, err);
  const char* prec = precision_name(precision_of<T>());
  if (err > tol) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "instance %zu (%s): max abs error %.3g > %.3g", index, prec, err, tol);
    note(r, buf);
  }
  if (!(fast.output == serial.output))
    note(r, "instance " + std::to_string(index) + " (" + prec + "): serial and parallel differ");
}

}  // namespace

CheckResult check_kernel_equivalence(std::size_t instances, std::uint64_t seed, double tol_single,
                                     double tol_double)
{
  CheckResult r;
  r.name = "kernel-oracle equivalence";
  Rng rng(seed, 100);
  for (std::size_t i = 0; i < instances; ++i) {
    const auto p = random_problem(rng, seed, i);
    const auto grid = partition(p);
    const auto mask = random_mask(rng, grid);
    kernel_instance(r, p, mask, grid, tol_double, i);
    kernel_instance(r, p.cast<float>(), mask, grid, tol_single, i);
    ++r.instances;
  }
  return r;
}

CheckResult check_zero_sparsity(std::size_t instances, std::uint64_t seed, double tol)
{
  CheckResult r;
  r.name = "zero-sparsity identity";
  Rng rng(seed, 101);
  SparsityConfig config;
  config.top_k_fraction = 1.0;
  for (std::size_t i = 0; i < instances; ++i) {
    const auto p = gen_synthetic_as<float>(random_spec(rng, seed + i));
    const auto res = rectified_attention_pipeline(p, config);
    const auto oracle = full_attention_oracle(vstack(p.q_video, p.q_text), p.k, p.v);
    const double err = max_abs_diff(concat_output(res.output), oracle.output);
    r.max_abs_error = std::max(r.max_abs_error, err);
    if (err > tol) note(r, "instance " + std::to_string(i) + ": error " + std::to_string(err));
    if (!res.sparse_mask.mask.all()) note(r, "instance " + std::to_string(i) + ": mask not full");
    ++r.instances;
  }
  return r;
}

CheckResult check_invariants(std::size_t configs, std::uint64_t seed)
{
  CheckResult r;
  r.name = "invariant suite";
  Rng rng(seed, 102);
  for (std::size_t i = 0; i < configs; ++i) {
    const std::string tag = "config " + std::to_string(i) + ": ";
    const auto p = gen_synthetic_as<double>(random_spec(rng, seed + i));
    const auto config = random_sparsity(rng);
    static constexpr CompensationMode kModes[] = {CompensationMode::Gated, CompensationMode::All,
                                                  CompensationMode::None};
    const auto res = rectified_attention_pipeline(
        p, config, {true, kModes[pick(rng, 0, 2)], pick(rng, 0, 3) == 0});
    for (const auto& v : pipeline_violations(res)) note(r, tag + v);

    // R grows with the mask.
    const auto& a_pool = res.implicit.a_pool;
    BlockMask grown = res.sparse_mask.mask;
    for (std::size_t n = 0; n < grown.rows(); ++n)
      for (std::size_t m = 0; m < grown.cols(); ++m)
        if (rng.uniform() < 0.3) grown.set(n, m);
    const auto r_small = rectification_factors(a_pool, res.sparse_mask.mask);
    const auto r_big = rectification_factors(a_pool, grown);
    for (std::size_t n = 0; n < r_small.r.size(); ++n)
      if (r_big.r[n] < r_small.r[n] - 1e-12) note(r, tag + "R shrank under mask growth");

    // Masks only grow with top_k_fraction and p.
    SparsityConfig lo = config, hi = config;
    hi.top_k_fraction = std::min(1.0, lo.top_k_fraction + 0.5 * rng.uniform());
    if (!build_sparse_mask(a_pool, lo, res.grid).mask.subset_of(
            build_sparse_mask(a_pool, hi, res.grid).mask))
      note(r, tag + "mask not monotone in top_k_fraction");
    hi = config;
    hi.weight_threshold = std::min(1.0, lo.weight_threshold + 0.5 * rng.uniform());
    if (!build_sparse_mask(a_pool, lo, res.grid).mask.subset_of(
            build_sparse_mask(a_pool, hi, res.grid).mask))
      note(r, tag + "mask not monotone in p");
    ++r.instances;
  }
  return r;
}

CheckResult check_text_attention(std::size_t instances, std::uint64_t seed, double tol)
{
  CheckResult r;
  r.name = "text attention";
  Rng rng(seed, 103);
  for (std::size_t i = 0; i < instances; ++i) {
    const auto p = random_problem(rng, seed + 7919, i).cast<float>();
    const auto out = text_full_attention(p.q_text, p.k, p.v);
    if (p.t_text() == 0) {
      if (out.rows() != 0) note(r, "non-empty output for empty text");
    } else {
      const double err = max_abs_diff(out, full_attention_oracle(p.q_text, p.k, p.v).output);
      r.max_abs_error = std::max(r.max_abs_error, err);
      if (err > tol) note(r, "instance " + std::to_string(i) + ": error " + std::to_string(err));
    }
    ++r.instances;
  }
  return r;
}

CheckResult check_morton_roundtrip(std::uint64_t seed)
{
  CheckResult r;
  r.name = "morton round trip";
  for (const GridDims dims : {GridDims{1, 2, 2}, GridDims{2, 4, 4}, GridDims{3, 5, 7},
                              GridDims{4, 8, 8}}) {
    SyntheticSpec spec;
    spec.seed = seed;
    spec.grid = dims;
    spec.t_video = dims[0] * dims[1] * dims[2];
    spec.block = 1;
    spec.t_text = 3;
    spec.dim = 8;
    const auto p = gen_synthetic(spec);
    const auto re = reorder_morton(p);
    const auto back = restore_order(re.problem, re.permutation);
    if (!(back.q_video == p.q_video && back.k == p.k && back.v == p.v && back.q_text == p.q_text))
      note(r, "round trip changed the problem");
    ++r.instances;
  }
  return r;
}

std::vector<CheckResult> run_verify(std::uint64_t seed)
{
  return {check_kernel_equivalence(100, seed), check_zero_sparsity(20, seed),
          check_invariants(200, seed), check_text_attention(20, seed),
          check_morton_roundtrip(seed)};
}

std::string format_check(const CheckResult& r)
{
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s  %-28s %4zu instances  %zu violations  max_abs_error=%.3g",
                r.passed ? "PASS" : "FAIL", r.name.c_str(), r.instances, r.violations,
                r.max_abs_error);
  std::string line = buf;
  if (!r.passed) line += "  first: " + r.detail;
  return line;
}

}  // namespace rectattn
