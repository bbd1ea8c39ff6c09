// Writes the seeded input tensors under tests/fixtures/inputs. The expected
// values next to them come from tests/oracle/golden.py, which reads these.
//
//   make_fixtures <fixtures/inputs>

#include <cstdio>

#include "rectattn/rsat.hpp"
#include "rectattn/synthetic.hpp"

using namespace rectattn;

namespace {

std::filesystem::path dir;

void put(const std::string& name, const MatrixD& m) { write_matrix(dir / (name + ".rsat"), m); }

void put_problem(const std::string& prefix, const AttentionProblem<double>& p)
{
  put(prefix + "_q_video", p.q_video);
  put(prefix + "_q_text", p.q_text);
  put(prefix + "_k", p.k);
  put(prefix + "_v", p.v);
}

AttentionProblem<double> synthetic(std::size_t tv, std::size_t tt, std::size_t block,
                                   std::size_t dim, GridDims grid)
{
  SyntheticSpec spec;
  spec.seed = 42;
  spec.t_video = tv;
  spec.t_text = tt;
  spec.block = block;
  spec.dim = dim;
  spec.grid = grid;
  return gen_synthetic(spec);
}

}  // namespace

int main(int argc, char** argv)
{
  if (argc != 2) {
    std::fprintf(stderr, "usage: %s OUT_DIR\n", argv[0]);
    return 2;
  }
  dir = argv[1];
  std::filesystem::create_directories(dir);

  put("pool_x", gaussian_matrix(8, 4, 42));
  put("masked_q", gaussian_matrix(16, 8, 42, 1));
  put("masked_k", gaussian_matrix(16, 8, 42, 2));
  put("masked_v", gaussian_matrix(16, 8, 42, 3));
  put("l1_a", gaussian_matrix(16, 8, 42, 5));
  put("l1_b", gaussian_matrix(16, 8, 42, 6));

  put_problem("mix", synthetic(16, 3, 4, 8, {1, 4, 4}));
  put_problem("ipar", synthetic(32, 6, 4, 8, {1, 4, 8}));
  put_problem("gain", synthetic(16, 0, 4, 8, {1, 4, 4}));
  put_problem("kernel", synthetic(64, 8, 8, 16, {1, 8, 8}));
  put_problem("demo", synthetic(256, 16, 8, 32, {1, 16, 16}));
  std::printf("fixtures written to %s\n", dir.string().c_str());
  return 0;
}
