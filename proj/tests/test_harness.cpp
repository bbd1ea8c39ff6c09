#include <sstream>

#include "doctest.h"
#include "rectattn/experiment.hpp"
#include "rectattn/masks.hpp"
#include "rectattn/plot.hpp"
#include "test_util.hpp"

using namespace rectattn;
using namespace testutil;

namespace {

std::filesystem::path scratch(const std::string& name)
{
  const auto dir = std::filesystem::temp_directory_path() / ("rectattn_test_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

ExperimentConfig demo_config(const std::filesystem::path& out)
{
  ExperimentConfig cfg;
  cfg.source.synthetic = SyntheticSpec{};
  cfg.source.block = 8;
  cfg.out_dir = out;
  return cfg;
}

std::vector<std::string> lines(const std::string& text)
{
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

}  // namespace

TEST_CASE("rng streams are deterministic and independent")
{
  Rng a(42, 1), b(42, 1), c(42, 2);
  for (int i = 0; i < 10; ++i) {
    const double x = a.normal();
    CHECK(x == b.normal());
    CHECK(x != c.normal());
  }
  Rng u(7, 0);
  for (int i = 0; i < 1000; ++i) {
    const double x = u.uniform();
    CHECK(x > 0.0);
    CHECK(x <= 1.0);
  }
}

TEST_CASE("gaussian generator moments")
{
  const MatrixD g = gaussian_matrix(200, 50, 3);
  double mean = 0, sq = 0;
  for (double x : g.values()) {
    mean += x;
    sq += x * x;
  }
  mean /= double(g.size());
  sq /= double(g.size());
  CHECK(std::abs(mean) < 0.03);
  CHECK(std::abs(sq - 1.0) < 0.05);
}

TEST_CASE("synthetic spec validation")
{
  SyntheticSpec s;
  CHECK_NOTHROW(s.validate());
  auto bad = s;
  bad.grid = {1, 16, 15};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = s;
  bad.text_norm_boost = 0.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = s;
  bad.intra_block_noise = -1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = s;
  bad.t_video = 250;
  bad.grid = {1, 10, 25};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("synthetic generator matches frozen fixture")
{
  const auto p = gen_synthetic({});
  const auto frozen = input_problem("demo", 8);
  CHECK(p.q_video == frozen.q_video);
  CHECK(p.q_text == frozen.q_text);
  CHECK(p.k == frozen.k);
  CHECK(p.v == frozen.v);
  CHECK(gen_synthetic({}).k == p.k);
}

TEST_CASE("sigma zero gives homogeneous video blocks")
{
  SyntheticSpec s;
  s.intra_block_noise = 0.0;
  const auto p = gen_synthetic(s);
  for (std::size_t i = 0; i < p.t_video(); ++i)
    for (std::size_t c = 0; c < p.dim(); ++c) {
      CHECK(p.q_video(i, c) == p.q_video(i - i % 8, c));
      CHECK(p.k(i, c) == p.k(i - i % 8, c));
    }
  const auto grid = partition(p);
  const auto e = pooling_error(p, pool_problem(p, grid), grid);
  for (std::size_t n = 0; n < grid.n_q; ++n)
    for (std::size_t m = 0; m < grid.n_q; ++m) CHECK(e(n, m) < 1e-12);
}

TEST_CASE("text norm boost scales text keys")
{
  SyntheticSpec s;
  s.text_norm_boost = 3.0;
  const auto boosted = gen_synthetic(s);
  s.text_norm_boost = 1.0;
  const auto plain = gen_synthetic(s);
  for (std::size_t j = s.t_video; j < s.t_video + s.t_text; ++j)
    for (std::size_t c = 0; c < s.dim; ++c)
      CHECK(boosted.k(j, c) == doctest::Approx(3.0 * plain.k(j, c)).epsilon(1e-15));
}

TEST_CASE("variant names round trip")
{
  for (Variant v : {Variant::Full, Variant::SparseUnrectified, Variant::SparseRectified,
                    Variant::SparseRectifiedNoGapr, Variant::CompensateAll})
    CHECK(parse_variant(variant_name(v)) == v);
  CHECK(parse_variant_list("full,sparse-rectified").size() == 2);
  CHECK_THROWS_AS(parse_variant("dense"), ConfigError);
  CHECK_THROWS_AS(parse_variant_list(""), ConfigError);
}

TEST_CASE("full variant is a self-comparison")
{
  auto cfg = demo_config(scratch("full"));
  cfg.variants = {Variant::Full};
  const auto reps = evaluate_variants(gen_synthetic_as<float>({}), cfg);
  REQUIRE(reps.size() == 1);
  CHECK(reps[0].normalized_l1 == 0.0);
  CHECK(reps[0].sparsity == 0.0);
  CHECK(reps[0].cosine_similarity == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("run_experiment writes reports matching the frozen fixture")
{
  const auto out = scratch("run80");
  auto cfg = demo_config(out);
  cfg.sparsity.top_k_fraction = 0.05;
  const auto reps = run_experiment(cfg);
  REQUIRE(reps.size() == 2);
  CHECK(reps[0].sparsity == doctest::Approx(0.8).epsilon(0.01));
  CHECK(reps[1].normalized_l1 < reps[0].normalized_l1);
  CHECK(reps[0].checks_passed);
  CHECK(reps[1].checks_passed);
  const auto golden_dir = fixture_dir() / "golden" / "run_80";
  for (const char* f : {"reports.csv", "report_sparse-unrectified.json", "report_sparse-rectified.json"})
    CHECK(read_file(out / f) == read_file(golden_dir / f));

  const auto j = nlohmann::json::parse(read_file(out / "report_sparse-rectified.json"));
  CHECK(j["schema_version"] == kReportSchemaVersion);
  CHECK(j["checks_passed"] == true);
  std::filesystem::remove_all(out);
}

TEST_CASE("missing input file leaves no partial output")
{
  const auto out = scratch("missing");
  ExperimentConfig cfg;
  cfg.source.q_video = "/nonexistent/q_video.rsat";
  cfg.source.q_text = "/nonexistent/q_text.rsat";
  cfg.source.k = "/nonexistent/k.rsat";
  cfg.source.v = "/nonexistent/v.rsat";
  cfg.out_dir = out;
  CHECK_THROWS_AS(run_experiment(cfg), IoError);
  CHECK_FALSE(std::filesystem::exists(out));
}

TEST_CASE("file-backed problem gives the same reports as the generator")
{
  const auto out = scratch("files");
  ExperimentConfig cfg;
  const auto dir = fixture_dir() / "inputs";
  cfg.source.q_video = dir / "demo_q_video.rsat";
  cfg.source.q_text = dir / "demo_q_text.rsat";
  cfg.source.k = dir / "demo_k.rsat";
  cfg.source.v = dir / "demo_v.rsat";
  cfg.source.block = 8;
  cfg.source.precision = Precision::Double;
  cfg.out_dir = out;
  auto syn = demo_config(out);
  syn.source.synthetic->precision = Precision::Double;
  syn.source.precision = Precision::Double;
  const auto a = run_experiment(cfg);
  const auto b = run_experiment(syn);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(csv_row(a[i]) == csv_row(b[i]));
  std::filesystem::remove_all(out);
}

TEST_CASE("sweep rows")
{
  const auto out = scratch("sweep");
  auto cfg = demo_config(out);
  cfg.variants = {Variant::SparseUnrectified, Variant::SparseRectified, Variant::Full};
  auto rows = lines(sweep_sparsity(cfg, {1.0}));
  REQUIRE(rows.size() == 4);
  for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i].find(",0,") != std::string::npos);
  for (const auto& p : parse_sweep_csv(read_file(out / "sweep.csv"))) CHECK(p.sparsity == 0.0);

  cfg.variants = {Variant::SparseRectified};
  double last = -1.0;
  for (const auto& p : parse_sweep_csv(sweep_sparsity(cfg, {0.5, 0.2, 0.1}))) {
    CHECK(p.sparsity > last);
    last = p.sparsity;
  }
  CHECK_THROWS_AS(sweep_sparsity(cfg, {}), ConfigError);
  CHECK_THROWS_AS(sweep_sparsity(cfg, {0.5, 1.5}), ConfigError);
  CHECK_THROWS_AS(sweep_sparsity(cfg, {0.0}), ConfigError);
  std::filesystem::remove_all(out);
}

TEST_CASE("demo sweep matches the frozen CSV and the numpy oracle")
{
  const auto out = scratch("demo_sweep");
  auto cfg = demo_config(out);
  cfg.variants = {Variant::SparseUnrectified, Variant::SparseRectified,
                  Variant::SparseRectifiedNoGapr};
  const auto csv = sweep_sparsity(cfg, {0.5, 0.2, 0.1});
  const auto golden_dir = fixture_dir() / "golden" / "demo_sweep";
  CHECK(csv == read_file(golden_dir / "sweep.csv"));

  const auto points = parse_sweep_csv(csv);
  const auto oracle = lines(read_file(fixture_dir() / "golden" / "demo_sweep_oracle.csv"));
  REQUIRE(oracle.size() == points.size() + 1);
  for (std::size_t i = 0; i < points.size(); ++i) {
    std::istringstream row(oracle[i + 1]);
    std::string frac, variant, l1, cs, sp;
    std::getline(row, frac, ',');
    std::getline(row, variant, ',');
    std::getline(row, l1, ',');
    std::getline(row, cs, ',');
    std::getline(row, sp, ',');
    CHECK(points[i].variant == variant);
    CHECK(points[i].normalized_l1 == doctest::Approx(std::stod(l1)).epsilon(1e-5));
    CHECK(points[i].cosine_similarity == doctest::Approx(std::stod(cs)).epsilon(1e-6));
    CHECK(points[i].sparsity == doctest::Approx(std::stod(sp)).epsilon(1e-8));
  }

  const auto svgs = render_plots(out / "sweep.csv", out);
  REQUIRE(svgs.size() == 2);
  for (const auto& svg : svgs) CHECK(read_file(svg) == read_file(golden_dir / svg.filename()));
  std::filesystem::remove_all(out);
}

TEST_CASE("plot schema errors and degenerate series")
{
  CHECK_THROWS_AS(parse_sweep_csv(""), SchemaError);
  CHECK_THROWS_AS(parse_sweep_csv(csv_header()), SchemaError);
  CHECK_THROWS_AS(parse_sweep_csv("a,b\n1,2\n"), SchemaError);
  CHECK_THROWS_AS(parse_sweep_csv("variant,sparsity,normalized_l1,cosine_similarity\nx,zz,1,1\n"),
                  SchemaError);

  const std::vector<SweepPoint> one{{"sparse-rectified", 0.5, 0.1, 0.99}};
  const auto svg = render_metric_svg(one, "normalized_l1");
  CHECK(svg.find("<circle") != std::string::npos);
  CHECK(svg.find("<polyline") == std::string::npos);

  const std::vector<SweepPoint> two{{"a", 0.5, 0.1, 0.99}, {"a", 0.7, 0.2, 0.98}};
  CHECK(render_metric_svg(two, "cosine_similarity").find("<polyline") != std::string::npos);
  CHECK(render_metric_svg(two, "normalized_l1") == render_metric_svg(two, "normalized_l1"));
  CHECK_THROWS_AS(render_metric_svg(two, "speed"), SchemaError);
}

TEST_CASE("experiment config JSON")
{
  const auto cfg = parse_experiment_config(R"({
    "synthetic": {"seed": 7, "t_video": 64, "t_text": 4, "dim": 16, "block": 8,
                  "grid": [1, 8, 8], "sigma": 0.1, "precision": "double"},
    "sparsity": {"top_k": 0.3, "p": 0.5, "adjacency_radius": 2, "force_text": false},
    "variants": ["full", "compensate-all"],
    "out": "elsewhere",
    "morton": true
  })");
  REQUIRE(cfg.source.synthetic);
  CHECK(cfg.source.synthetic->seed == 7);
  CHECK(cfg.source.synthetic->intra_block_noise == 0.1);
  CHECK(cfg.source.precision == Precision::Double);
  CHECK(cfg.sparsity.top_k_fraction == 0.3);
  CHECK(cfg.sparsity.adjacency_radius == 2);
  CHECK_FALSE(cfg.sparsity.force_text_blocks);
  CHECK(cfg.variants.size() == 2);
  CHECK(cfg.out_dir == "elsewhere");
  CHECK(cfg.morton);

  const auto files = parse_experiment_config(
      R"({"files": {"q_video": "a.rsat", "q_text": "b.rsat", "k": "c.rsat", "v": "d.rsat", "block": 4}})",
      "/data");
  CHECK(files.source.k == std::filesystem::path("/data/c.rsat"));
  CHECK(files.source.block == 4);

  CHECK_THROWS_AS(parse_experiment_config("{"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config(R"({"synthetic": {}, "bogus": 1})"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config(R"({"synthetic": {"sigma": "x"}})"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config(R"({"synthetic": {}, "variants": []})"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config(R"({"sparsity": {}})"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config(R"({"synthetic": {}, "sparsity": {"top_k": 2}})"),
                  ConfigError);
}

TEST_CASE("timing flag controls wall-time fields")
{
  auto cfg = demo_config(scratch("timing"));
  cfg.variants = {Variant::SparseRectified};
  const auto quiet = evaluate_variants(gen_synthetic_as<float>({}), cfg);
  CHECK(quiet[0].wall_time_ms.total_ms == 0.0);
  cfg.timing = true;
  const auto timed = evaluate_variants(gen_synthetic_as<float>({}), cfg);
  CHECK(timed[0].wall_time_ms.total_ms > 0.0);
}
