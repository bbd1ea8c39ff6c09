#include "rectattn/synthetic.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace rectattn {

namespace {

enum Stream : std::uint64_t {
  kQueryBase = 1,
  kQueryNoise,
  kKeyBase,
  kKeyNoise,
  kTextQuery,
  kTextKey,
  kValue,
};

// Sinusoidal embedding of a 3D coordinate: dimension pairs cycle through the
// t, h, w axes with frequencies pi * 2^level / extent.
std::vector<double> positional_embedding(const std::array<double, 3>& coord,
                                         const GridDims& extent, std::size_t dim)
{
  std::vector<double> pe(dim, 0.0);
  for (std::size_t c = 0; c + 1 < dim; c += 2) {
    const std::size_t pair = c / 2;
    const std::size_t axis = pair % 3;
    const std::size_t level = pair / 3;
    const double omega = std::numbers::pi * std::ldexp(1.0, int(level)) / double(extent[axis]);
    pe[c] = std::sin(omega * coord[axis]);
    pe[c + 1] = std::cos(omega * coord[axis]);
  }
  return pe;
}

}  // namespace

std::uint64_t splitmix64(std::uint64_t x)
{
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed, std::uint64_t stream)
    : engine_(splitmix64(seed ^ splitmix64(stream + 1)))
{}

double Rng::uniform()
{
  // 53 random bits mapped to (0, 1].
  return (double(engine_() >> 11) + 1.0) * 0x1.0p-53;
}

double Rng::normal()
{
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

MatrixD gaussian_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed,
                        std::uint64_t stream)
{
  Rng rng(seed, stream);
  MatrixD m(rows, cols);
  for (auto& x : m.values()) x = rng.normal();
  return m;
}

void SyntheticSpec::validate() const
{
  if (t_video == 0 || dim == 0 || block == 0) throw ConfigError("sizes must be at least 1");
  if (t_video % block != 0)
    throw ConfigError("T_v=" + std::to_string(t_video) + " is not a multiple of B=" +
                      std::to_string(block));
  if (grid[0] * grid[1] * grid[2] != t_video) throw ConfigError("grid t*h*w must equal T_v");
  if (!(locality >= 0.0)) throw ConfigError("locality (alpha) must be >= 0");
  if (!(text_norm_boost >= 1.0)) throw ConfigError("text norm boost (beta) must be >= 1");
  if (!(intra_block_noise >= 0.0)) throw ConfigError("intra-block noise (sigma) must be >= 0");
}

AttentionProblem<double> gen_synthetic(const SyntheticSpec& spec)
{
  spec.validate();
  const std::size_t tv = spec.t_video, tt = spec.t_text, d = spec.dim, b = spec.block;
  const std::size_t n_blocks = tv / b;
  const auto [gt, gh, gw] = spec.grid;

  Rng q_base(spec.seed, kQueryBase), q_noise(spec.seed, kQueryNoise);
  Rng k_base(spec.seed, kKeyBase), k_noise(spec.seed, kKeyNoise);
  Rng text_q(spec.seed, kTextQuery), text_k(spec.seed, kTextKey), values(spec.seed, kValue);

  AttentionProblem<double> p;
  p.block = b;
  p.grid_dims = spec.grid;
  p.q_video = MatrixD(tv, d);
  p.q_text = MatrixD(tt, d);
  p.k = MatrixD(tv + tt, d);
  p.v = MatrixD(tv + tt, d);

  std::vector<double> qb(d), kb(d);
  for (std::size_t blk = 0; blk < n_blocks; ++blk) {
    std::array<double, 3> centre{0.0, 0.0, 0.0};
    for (std::size_t i = blk * b; i < (blk + 1) * b; ++i) {
      centre[0] += double(i / (gh * gw));
      centre[1] += double((i / gw) % gh);
      centre[2] += double(i % gw);
    }
    for (auto& c : centre) c /= double(b);
    const auto pe = positional_embedding(centre, {gt, gh, gw}, d);

    for (std::size_t c = 0; c < d; ++c) qb[c] = q_base.normal();
    for (std::size_t c = 0; c < d; ++c) kb[c] = k_base.normal();
    for (std::size_t i = blk * b; i < (blk + 1) * b; ++i) {
      for (std::size_t c = 0; c < d; ++c) {
        p.q_video(i, c) = qb[c] + spec.locality * pe[c] + spec.intra_block_noise * q_noise.normal();
        p.k(i, c) = kb[c] + spec.locality * pe[c] + spec.intra_block_noise * k_noise.normal();
      }
    }
  }
  for (std::size_t t = 0; t < tt; ++t)
    for (std::size_t c = 0; c < d; ++c) {
      p.q_text(t, c) = text_q.normal();
      p.k(tv + t, c) = spec.text_norm_boost * text_k.normal();
    }
  for (auto& x : p.v.values()) x = values.normal();
  p.validate();
  return p;
}

}  // namespace rectattn
