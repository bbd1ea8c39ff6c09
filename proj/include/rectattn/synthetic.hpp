#pragma once

#include <cstdint>
#include <random>

#include "rectattn/core.hpp"

namespace rectattn {

/// Seeded generator used for every synthetic tensor.
///
/// Each tensor draws from its own stream: the engine is std::mt19937_64
/// seeded with splitmix64(seed ^ splitmix64(stream + 1)). Normals come from
/// Box-Muller on 53-bit uniforms, since std::normal_distribution output is
/// not specified across standard libraries.
class Rng {
 public:
  Rng(std::uint64_t seed, std::uint64_t stream);

  double uniform();  // (0, 1]
  double normal();

 private:
  std::mt19937_64 engine_;
  double spare_ = 0;
  bool has_spare_ = false;
};

std::uint64_t splitmix64(std::uint64_t x);

/// Gaussian matrix from one stream; used by tests and fixtures.
MatrixD gaussian_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed,
                        std::uint64_t stream = 0);

struct SyntheticSpec {
  std::uint64_t seed = 42;
  std::size_t t_video = 256;
  std::size_t t_text = 16;
  std::size_t dim = 32;
  std::size_t block = 8;
  GridDims grid{1, 16, 16};
  double locality = 1.0;         // alpha: weight of the block positional embedding
  double text_norm_boost = 2.0;  // beta: RMS multiplier for text keys
  double intra_block_noise = 0.3;  // sigma: per-token deviation inside a block
  Precision precision = Precision::Single;

  void validate() const;
};

/// Video token i of block b:  base(b) + alpha * pos(b) + sigma * noise_i,
/// with separate bases for queries and keys and pos(b) a sinusoidal embedding
/// of the block's mean (t, h, w) coordinate. Text queries are standard normal,
/// text keys are scaled by beta, and V is standard normal per token.
AttentionProblem<double> gen_synthetic(const SyntheticSpec& spec);

template <typename T>
AttentionProblem<T> gen_synthetic_as(const SyntheticSpec& spec)
{
  if constexpr (std::is_same_v<T, double>) {
    return gen_synthetic(spec);
  } else {
    return gen_synthetic(spec).template cast<T>();
  }
}

}  // namespace rectattn
