#include "doctest.h"
#include "rectattn/metrics.hpp"
#include "rectattn/rectify.hpp"
#include "test_util.hpp"

using namespace rectattn;
using namespace testutil;

namespace {

SparseMask wrap(BlockMask m)
{
  SparseMask sm;
  sm.importance = m;
  sm.adjacency = BlockMask(m.rows(), m.cols());
  sm.retained_count.resize(m.rows());
  for (std::size_t n = 0; n < m.rows(); ++n) sm.retained_count[n] = m.row_count(n);
  sm.mask = std::move(m);
  return sm;
}

}  // namespace

TEST_CASE("rectification factors")
{
  const MatrixD a(1, 3, {0.5, 0.3, 0.2});
  BlockMask m(1, 3);
  m.set(0, 0);
  m.set(0, 1);
  CHECK(rectification_factors(a, m).r[0] == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(rectification_factors(a, BlockMask(1, 3, true)).r[0] == 1.0);
  CHECK_THROWS_AS(rectification_factors(a, BlockMask(2, 3)), ShapeError);
}

TEST_CASE("rectification is the identity at zero sparsity")
{
  const auto p = input_problem("kernel", 8);
  const auto grid = partition(p);
  const auto pooled = pool_problem(p, grid);
  const auto implicit = implicit_full_attention(p, pooled, grid);
  const auto sm = wrap(BlockMask(grid.n_q, grid.n_kv, true));
  const auto o = block_sparse_attention(p.q_video, p.k, p.v, sm.mask, grid).output;
  const auto f = rectification_factors(implicit.a_pool, sm);
  const CompensationMask comp{BlockMask(grid.n_q, grid.n_kv, true)};
  CHECK(apply_rectification(o, f, implicit, sm, comp, pooled.v_pool, grid) == o);
}

TEST_CASE("without compensation the output is R times the sparse output")
{
  const auto p = input_problem("kernel", 8);
  const auto grid = partition(p);
  const auto pooled = pool_problem(p, grid);
  const auto implicit = implicit_full_attention(p, pooled, grid);
  const auto sm = build_sparse_mask(implicit.a_pool, {0.2, 0.0, 0, false}, grid);
  const auto o = block_sparse_attention(p.q_video, p.k, p.v, sm.mask, grid).output;
  const auto f = rectification_factors(implicit.a_pool, sm);
  const CompensationMask none{BlockMask(grid.n_q, grid.n_kv)};
  const auto out = apply_rectification(o, f, implicit, sm, none, pooled.v_pool, grid);
  for (std::size_t i = 0; i < o.rows(); ++i)
    for (std::size_t c = 0; c < o.cols(); ++c) CHECK(out(i, c) == f.r[i / 8] * o(i, c));
}

TEST_CASE("pipeline golden output on the seed-42 problem")
{
  const auto p = input_problem("demo", 8);
  const SparsityConfig config{0.2, 0.3, 1, true};
  const auto res = rectified_attention_pipeline(p, config);
  CHECK(res.sparse_mask.mask == mask_from(golden("demo_mask")));
  const MatrixD r = golden("demo_r");
  for (std::size_t n = 0; n < res.factors.r.size(); ++n)
    CHECK(std::abs(res.factors.r[n] - r(n, 0)) < 1e-13);
  CHECK(max_abs_diff(res.output.o_video, golden("demo_rectified_o_video")) < 1e-9);

  const auto flops = sparsity_and_flops(res.sparse_mask.mask, res.grid, p.dim());
  const auto rec = recorded();
  CHECK(flops.sparsity == doctest::Approx(rec["demo_sparsity"].get<double>()).epsilon(1e-15));
  CHECK(flops.flops_full == rec["demo_flops_full"].get<std::uint64_t>());
  CHECK(flops.flops_sparse == rec["demo_flops_sparse"].get<std::uint64_t>());
  // Instrumented kernel counters: 2 * d flops per multiply-add, QK and PV.
  CHECK(2 * (res.accounting.video_kernel.qk_macs + res.accounting.video_kernel.pv_macs) ==
        flops.flops_sparse);
}

TEST_CASE("rectified output beats unrectified on the seed-42 problem")
{
  const auto p = input_problem("demo", 8);
  const auto ref = full_attention_oracle(vstack(p.q_video, p.q_text), p.k, p.v).output;
  const SparsityConfig config{0.2, 0.3, 1, true};
  const auto rect = rectified_attention_pipeline(p, config);
  const auto plain = rectified_attention_pipeline(p, config, {false, CompensationMode::None, false});
  CHECK(normalized_l1(concat_output(rect.output), ref) <
        normalized_l1(concat_output(plain.output), ref));
}

TEST_CASE("zero sparsity pipeline equals full attention")
{
  const auto p = input_problem("demo", 8).cast<float>();
  const auto res = rectified_attention_pipeline(p, {1.0, 0.3, 1, true});
  CHECK(res.sparse_mask.mask.all());
  for (double r : res.factors.r) CHECK(r == 1.0);
  CHECK(res.applied_comp.mask.count() == 0);
  const auto ref = full_attention_oracle(vstack(p.q_video, p.q_text), p.k, p.v).output;
  CHECK(max_abs_diff(concat_output(res.output), ref) < 1e-5);
}

TEST_CASE("homogeneous blocks without text: rectification recovers full attention")
{
  const auto p = homogeneous_problem(8, 4, 0, 16, 77);
  const auto ref = full_attention_oracle(p.q_video, p.k, p.v).output;
  for (double frac : {0.5, 0.25, 0.125}) {
    const auto res = rectified_attention_pipeline(p, {frac, 0.0, 0, false});
    REQUIRE_FALSE(res.sparse_mask.mask.all());
    CHECK(max_abs_diff(res.output.o_video, ref) < 1e-6);
  }
}

TEST_CASE("morton reordering in the pipeline returns rows in input order")
{
  const auto p = input_problem("demo", 8);
  auto with_grid = p;
  with_grid.grid_dims = GridDims{1, 16, 16};
  const SparsityConfig config{1.0, 0.0, 0, true};
  const auto res = rectified_attention_pipeline(with_grid, config, {true, CompensationMode::Gated, true});
  CHECK_FALSE(res.permutation.empty());
  const auto ref = full_attention_oracle(p.q_video, p.k, p.v).output;
  CHECK(max_abs_diff(res.output.o_video, ref) < 1e-12);
  CHECK_THROWS_AS(rectified_attention_pipeline(p, config, {true, CompensationMode::Gated, true}),
                  MissingGridError);
}

TEST_CASE("compensation modes")
{
  const auto p = input_problem("demo", 8);
  const SparsityConfig config{0.1, 0.0, 0, false};
  const auto gated = rectified_attention_pipeline(p, config, {true, CompensationMode::Gated, false});
  const auto all = rectified_attention_pipeline(p, config, {true, CompensationMode::All, false});
  const auto none = rectified_attention_pipeline(p, config, {true, CompensationMode::None, false});
  for (const auto* r : {&gated, &all, &none})
    for (std::size_t n = 0; n < r->grid.n_q; ++n)
      for (std::size_t m = 0; m < r->grid.n_kv; ++m)
        if (r->applied_comp.mask(n, m)) CHECK_FALSE(r->sparse_mask.mask(n, m));
  CHECK(none.applied_comp.mask.count() == 0);
  CHECK(all.applied_comp.mask.count() ==
        all.grid.n_q * all.grid.n_kv - all.sparse_mask.mask.count());
  CHECK(gated.applied_comp.mask.subset_of(all.applied_comp.mask));
  for (double m : implied_row_mass(all.factors, all.implicit.a_pool, all.applied_comp))
    CHECK(m == doctest::Approx(1.0).epsilon(1e-12));
}
