// rectattn: generate problems, run variants, sweep sparsity, plot, verify.

#include <cstdio>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "rectattn/experiment.hpp"
#include "rectattn/ipar.hpp"
#include "rectattn/plot.hpp"
#include "rectattn/rsat.hpp"
#include "rectattn/verify.hpp"

using namespace rectattn;

namespace {

struct SourceFlags {
  SyntheticSpec spec;
  std::string grid = "1,16,16";
  std::string precision = "single";
  std::string input_dir;  // read q_video/q_text/k/v.rsat instead of generating
};

struct RunFlags {
  std::string config_path;
  SparsityConfig sparsity;
  std::string variants = "sparse-unrectified,sparse-rectified";
  std::string out = "out";
  bool morton = false;
  bool timing = false;
  std::string dump_apool;
};

GridDims parse_grid_flag(const std::string& s)
{
  GridDims g{};
  std::istringstream in(s);
  std::string item;
  std::size_t i = 0;
  while (std::getline(in, item, ',')) {
    if (i == 3) throw ConfigError("--grid takes three values t,h,w");
    g[i++] = std::stoul(item);
  }
  if (i != 3) throw ConfigError("--grid takes three values t,h,w");
  return g;
}

Precision parse_precision_flag(const std::string& s)
{
  if (s == "single") return Precision::Single;
  if (s == "double") return Precision::Double;
  throw ConfigError("--precision must be single or double");
}

std::vector<double> parse_fractions(const std::string& s)
{
  std::vector<double> out;
  std::istringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(std::stod(item));
  return out;
}

void add_source_flags(CLI::App* app, SourceFlags& f)
{
  app->add_option("--seed", f.spec.seed, "generator seed")->capture_default_str();
  app->add_option("--tv", f.spec.t_video, "video tokens")->capture_default_str();
  app->add_option("--tt", f.spec.t_text, "text tokens")->capture_default_str();
  app->add_option("--d", f.spec.dim, "head dimension")->capture_default_str();
  app->add_option("--block", f.spec.block, "block size B")->capture_default_str();
  app->add_option("--grid", f.grid, "video grid t,h,w")->capture_default_str();
  app->add_option("--alpha", f.spec.locality, "locality strength")->capture_default_str();
  app->add_option("--beta", f.spec.text_norm_boost, "text key norm boost")->capture_default_str();
  app->add_option("--sigma", f.spec.intra_block_noise, "intra-block noise")->capture_default_str();
  app->add_option("--precision", f.precision, "single or double")->capture_default_str();
}

SyntheticSpec finish_spec(const SourceFlags& f)
{
  SyntheticSpec spec = f.spec;
  spec.grid = parse_grid_flag(f.grid);
  spec.precision = parse_precision_flag(f.precision);
  spec.validate();
  return spec;
}

void add_run_flags(CLI::App* app, SourceFlags& src, RunFlags& f)
{
  add_source_flags(app, src);
  app->add_option("--input", src.input_dir, "directory written by `gen`");
  app->add_option("--config", f.config_path, "experiment config JSON");
  app->add_option("--topk", f.sparsity.top_k_fraction, "top-k fraction")->capture_default_str();
  app->add_option("--p", f.sparsity.weight_threshold, "cumulative weight threshold")
      ->capture_default_str();
  app->add_option("--adj-radius", f.sparsity.adjacency_radius, "adjacency radius")
      ->capture_default_str();
  app->add_option("--force-text", f.sparsity.force_text_blocks, "keep every text block (0/1)")
      ->capture_default_str();
  app->add_option("--variants", f.variants, "comma-separated variant list")->capture_default_str();
  app->add_option("--out", f.out, "output directory")->capture_default_str();
  app->add_flag("--morton", f.morton, "reorder video tokens along a Morton curve");
  app->add_flag("--timing", f.timing, "record wall times (otherwise written as 0)");
}

ExperimentConfig build_config(const SourceFlags& src, const RunFlags& f, CLI::App* app)
{
  if (!f.config_path.empty()) {
    const std::filesystem::path path = f.config_path;
    auto cfg = parse_experiment_config(read_file(path), path.parent_path());
    // Explicit command-line flags override the file.
    if (app->count("--out")) cfg.out_dir = f.out;
    if (app->count("--morton")) cfg.morton = f.morton;
    if (app->count("--timing")) cfg.timing = f.timing;
    return cfg;
  }
  ExperimentConfig cfg;
  if (!src.input_dir.empty()) {
    const std::filesystem::path dir = src.input_dir;
    cfg.source.q_video = dir / "q_video.rsat";
    cfg.source.q_text = dir / "q_text.rsat";
    cfg.source.k = dir / "k.rsat";
    cfg.source.v = dir / "v.rsat";
    cfg.source.block = src.spec.block;
    if (app->count("--grid")) cfg.source.grid = parse_grid_flag(src.grid);
    cfg.source.precision = parse_precision_flag(src.precision);
  } else {
    cfg.source.synthetic = finish_spec(src);
    cfg.source.block = src.spec.block;
    cfg.source.precision = cfg.source.synthetic->precision;
  }
  cfg.sparsity = f.sparsity;
  cfg.variants = parse_variant_list(f.variants);
  cfg.out_dir = f.out;
  cfg.morton = f.morton;
  cfg.timing = f.timing;
  cfg.validate();
  return cfg;
}

void print_reports(const std::vector<AlignmentReport>& reports)
{
  std::printf("%-26s %10s %12s %10s %8s\n", "variant", "sparsity", "norm_l1", "cosine", "checks");
  for (const auto& r : reports)
    std::printf("%-26s %10.4f %12.6g %10.6f %8s\n", variant_name(r.variant), r.sparsity,
                r.normalized_l1, r.cosine_similarity, r.checks_passed ? "ok" : "FAILED");
}

int cmd_gen(const SourceFlags& src, const std::string& out)
{
  const auto spec = finish_spec(src);
  const std::filesystem::path dir = out;
  std::filesystem::create_directories(dir);
  const auto p = gen_synthetic(spec);
  auto write = [&](const char* name, const MatrixD& m) {
    if (spec.precision == Precision::Single)
      write_matrix(dir / name, m.cast<float>());
    else
      write_matrix(dir / name, m);
  };
  write("q_video.rsat", p.q_video);
  write("q_text.rsat", p.q_text);
  write("k.rsat", p.k);
  write("v.rsat", p.v);
  std::printf("wrote %s/{q_video,q_text,k,v}.rsat (T_v=%zu T_t=%zu d=%zu)\n", out.c_str(),
              p.t_video(), p.t_text(), p.dim());
  return 0;
}

void dump_apool(const ExperimentConfig& cfg, const std::string& path)
{
  auto p = load_problem<double>(cfg.source);
  if (cfg.morton) p = reorder_morton(p).problem;
  const auto grid = partition(p);
  const auto implicit = implicit_full_attention(p, pool_problem(p, grid), grid);
  write_matrix(path, implicit.a_pool);
  std::printf("wrote a_pool (%zu x %zu) to %s\n", grid.n_q, grid.n_kv, path.c_str());
}

}  // namespace

int main(int argc, char** argv)
{
  CLI::App app{"Rectified block-sparse attention experiments"};
  app.require_subcommand(1);

  SourceFlags gen_src;
  std::string gen_out = "problem";
  auto* gen = app.add_subcommand("gen", "generate a synthetic problem as RSAT files");
  add_source_flags(gen, gen_src);
  gen->add_option("--out", gen_out, "output directory")->capture_default_str();

  SourceFlags run_src;
  RunFlags run_flags;
  auto* run = app.add_subcommand("run", "evaluate variants against the full-attention oracle");
  add_run_flags(run, run_src, run_flags);
  run->add_option("--dump-apool", run_flags.dump_apool, "also write implicit attention as RSAT");

  SourceFlags sweep_src;
  RunFlags sweep_flags;
  sweep_flags.variants = "sparse-unrectified,sparse-rectified,sparse-rectified-no-gapr";
  std::string topk_list = "0.5,0.2,0.1";
  bool no_plot = false;
  auto* sweep = app.add_subcommand("sweep", "evaluate variants over several top-k fractions");
  add_run_flags(sweep, sweep_src, sweep_flags);
  sweep->add_option("--topk-list", topk_list, "comma-separated top-k fractions")
      ->capture_default_str();
  sweep->add_flag("--no-plot", no_plot, "skip SVG rendering");

  std::string plot_csv, plot_out = "out";
  auto* plot = app.add_subcommand("plot", "render SVG charts from a sweep CSV");
  plot->add_option("--csv", plot_csv, "sweep CSV")->required();
  plot->add_option("--out", plot_out, "output directory")->capture_default_str();

  std::uint64_t verify_seed = 42;
  auto* verify = app.add_subcommand("verify", "run the oracle-equivalence and invariant suites");
  verify->add_option("--seed", verify_seed, "suite seed")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return cmd_gen(gen_src, gen_out);
    if (*run) {
      const auto cfg = build_config(run_src, run_flags, run);
      const auto reports = run_experiment(cfg);
      print_reports(reports);
      if (!run_flags.dump_apool.empty()) dump_apool(cfg, run_flags.dump_apool);
      std::printf("reports written to %s\n", cfg.out_dir.string().c_str());
      return 0;
    }
    if (*sweep) {
      const auto cfg = build_config(sweep_src, sweep_flags, sweep);
      std::fputs(sweep_sparsity(cfg, parse_fractions(topk_list)).c_str(), stdout);
      if (!no_plot) {
        for (const auto& path : render_plots(cfg.out_dir / "sweep.csv", cfg.out_dir))
          std::printf("wrote %s\n", path.string().c_str());
      }
      return 0;
    }
    if (*plot) {
      for (const auto& path : render_plots(plot_csv, plot_out))
        std::printf("wrote %s\n", path.string().c_str());
      return 0;
    }
    if (*verify) {
      std::size_t failed = 0;
      for (const auto& r : run_verify(verify_seed)) {
        std::puts(format_check(r).c_str());
        failed += r.passed ? 0 : 1;
      }
      std::printf("%zu check(s) failed\n", failed);
      return failed == 0 ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
