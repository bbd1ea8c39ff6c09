#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace rectattn {

struct CheckResult {
  std::string name;
  bool passed = true;
  std::size_t instances = 0;
  std::size_t violations = 0;
  double max_abs_error = 0;
  std::string detail;  // first violation, if any
};

/// block_sparse_attention against masked_attention_oracle on random problems
/// (T_v <= 512, T_t <= 32, B in {4, 8, 16}, random masks with non-empty rows)
/// in single and double precision; the serial and OpenMP drivers must agree
/// bit for bit.
CheckResult check_kernel_equivalence(std::size_t instances, std::uint64_t seed,
                                     double tol_single = 1e-5, double tol_double = 1e-12);

/// Pipeline with top_k_fraction = 1 against full attention, single precision.
CheckResult check_zero_sparsity(std::size_t instances, std::uint64_t seed, double tol = 1e-5);

/// Mask, rectification and mass invariants over random synthetic configs.
CheckResult check_invariants(std::size_t configs, std::uint64_t seed);

/// Text rows of the engine against the full oracle.
CheckResult check_text_attention(std::size_t instances, std::uint64_t seed, double tol = 1e-5);

/// Morton reorder followed by restore is the identity.
CheckResult check_morton_roundtrip(std::uint64_t seed);

/// The default suite run by `rectattn verify`.
std::vector<CheckResult> run_verify(std::uint64_t seed = 42);

std::string format_check(const CheckResult& r);

}  // namespace rectattn
