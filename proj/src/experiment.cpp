#include "rectattn/experiment.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "json.hpp"
#include "rectattn/kernel.hpp"
#include "rectattn/metrics.hpp"
#include "rectattn/rsat.hpp"

namespace rectattn {

namespace {

using ojson = nlohmann::ordered_json;

struct VariantName {
  Variant variant;
  const char* name;
};

constexpr VariantName kVariantNames[] = {
    {Variant::Full, "full"},
    {Variant::SparseUnrectified, "sparse-unrectified"},
    {Variant::SparseRectified, "sparse-rectified"},
    {Variant::SparseRectifiedNoGapr, "sparse-rectified-no-gapr"},
    {Variant::CompensateAll, "compensate-all"},
};

std::string fmt_double(double x)
{
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", x);
  return buf;
}

}  // namespace

template <typename T>
AttentionProblem<T> load_problem(const ProblemSource& src)
{
  if (src.synthetic) return gen_synthetic_as<T>(*src.synthetic);
  AttentionProblem<T> p;
  p.q_video = read_matrix<T>(src.q_video);
  p.q_text = read_matrix<T>(src.q_text);
  p.k = read_matrix<T>(src.k);
  p.v = read_matrix<T>(src.v);
  if (p.q_text.rows() == 0) p.q_text = Matrix<T>(0, p.q_video.cols());
  p.block = src.block;
  p.grid_dims = src.grid;
  p.validate();
  return p;
}

template AttentionProblem<float> load_problem(const ProblemSource&);
template AttentionProblem<double> load_problem(const ProblemSource&);

namespace {

template <typename Fn>
auto with_precision(const ProblemSource& src, Fn&& fn)
{
  if (src.precision == Precision::Single) return fn(load_problem<float>(src));
  return fn(load_problem<double>(src));
}

double wall(bool timing, double ms) { return timing ? ms : 0.0; }

StageTimes masked_times(const StageTimes& t, bool timing)
{
  return {wall(timing, t.pool_ms),        wall(timing, t.implicit_ms),
          wall(timing, t.compensation_ms), wall(timing, t.sparse_mask_ms),
          wall(timing, t.kernel_ms),      wall(timing, t.text_ms),
          wall(timing, t.rectify_ms),     wall(timing, t.total_ms)};
}

GridDims parse_grid(const ojson& j)
{
  if (!j.is_array() || j.size() != 3) throw ConfigError("grid must be [t, h, w]");
  return {j[0].get<std::size_t>(), j[1].get<std::size_t>(), j[2].get<std::size_t>()};
}

Precision parse_precision(const std::string& s)
{
  if (s == "single" || s == "f32") return Precision::Single;
  if (s == "double" || s == "f64") return Precision::Double;
  throw ConfigError("precision must be single or double, got '" + s + "'");
}

void reject_unknown(const ojson& obj, std::initializer_list<const char*> allowed,
                    const char* where)
{
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError(std::string("unknown key '") + key + "' in " + where);
  }
}

}  // namespace

const char* variant_name(Variant v)
{
  for (const auto& vn : kVariantNames)
    if (vn.variant == v) return vn.name;
  return "unknown";
}

Variant parse_variant(const std::string& name)
{
  for (const auto& vn : kVariantNames)
    if (name == vn.name) return vn.variant;
  throw ConfigError("unknown variant '" + name + "'");
}

std::vector<Variant> parse_variant_list(const std::string& csv)
{
  std::vector<Variant> out;
  std::size_t pos = 0;
  while (pos <= csv.size()) {
    const auto comma = csv.find(',', pos);
    const auto item = csv.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    if (!item.empty()) out.push_back(parse_variant(item));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  if (out.empty()) throw ConfigError("variant list is empty");
  return out;
}

PipelineOptions variant_options(Variant v)
{
  switch (v) {
    case Variant::SparseUnrectified: return {false, CompensationMode::None, false};
    case Variant::SparseRectified: return {true, CompensationMode::Gated, false};
    case Variant::SparseRectifiedNoGapr: return {true, CompensationMode::None, false};
    case Variant::CompensateAll: return {true, CompensationMode::All, false};
    case Variant::Full: break;
  }
  throw ConfigError("the full variant does not run the sparse pipeline");
}

void ExperimentConfig::validate() const
{
  if (variants.empty()) throw ConfigError("at least one variant is required");
  sparsity.validate();
  if (source.synthetic) source.synthetic->validate();
}

template <typename T>
std::vector<std::string> pipeline_violations(const PipelineResult<T>& res)
{
  std::vector<std::string> bad;
  const auto& g = res.grid;
  const auto& a_pool = res.implicit.a_pool;
  for (std::size_t n = 0; n < g.n_q; ++n) {
    double sum = 0.0;
    for (std::size_t m = 0; m < g.n_kv; ++m) {
      if (a_pool(n, m) < 0.0) bad.push_back("negative implicit weight");
      sum += a_pool(n, m);
    }
    if (std::abs(sum - 1.0) > 1e-6) bad.push_back("implicit row " + std::to_string(n) + " sums to " + fmt_double(sum));
    if (res.sparse_mask.mask.row_count(n) == 0) bad.push_back("empty mask row " + std::to_string(n));
    if (!res.sparse_mask.mask(n, n)) bad.push_back("diagonal block dropped in row " + std::to_string(n));
    const double r = res.factors.r[n];
    if (!(r > 0.0 && r <= 1.0 + 1e-6)) bad.push_back("R out of range in row " + std::to_string(n));
    for (std::size_t m = 0; m < g.n_kv; ++m)
      if (res.applied_comp.mask(n, m) && res.sparse_mask.mask(n, m))
        bad.push_back("compensated block is also retained");
  }
  if (!res.sparse_mask.importance.subset_of(res.sparse_mask.mask) ||
      !res.sparse_mask.adjacency.subset_of(res.sparse_mask.mask))
    bad.push_back("mask is not a superset of importance and adjacency");
  for (double mass : implied_row_mass(res.factors, a_pool, res.applied_comp))
    if (mass > 1.0 + 1e-6) bad.push_back("implied row mass " + fmt_double(mass) + " exceeds 1");
  return bad;
}

template <typename T>
std::vector<AlignmentReport> evaluate_variants(const AttentionProblem<T>& problem,
                                               const ExperimentConfig& config)
{
  config.validate();
  problem.validate();
  const Matrix<T> all_queries = vstack(problem.q_video, problem.q_text);
  const MatrixD reference = full_attention_oracle(all_queries, problem.k, problem.v).output;

  double agreement = 0.0;
  {
    const AttentionProblem<T> ordered =
        config.morton ? reorder_morton(problem).problem : problem;
    const auto grid = partition(ordered);
    agreement = gapr_condition_agreement(ordered, pool_problem(ordered, grid), grid);
  }
  const auto grid = partition(problem);

  std::vector<AlignmentReport> reports;
  for (Variant variant : config.variants) {
    AlignmentReport rep;
    rep.variant = variant;
    rep.sparsity_config = config.sparsity;
    rep.gapr_agreement = agreement;
    if (variant == Variant::Full) {
      rep.normalized_l1 = normalized_l1(reference, reference);
      rep.cosine_similarity = cosine_similarity(reference, reference);
      rep.sparsity = 0.0;
      rep.flops_full = rep.flops_sparse = 4 * std::uint64_t(grid.t_video) * grid.key_count() * problem.dim();
      if (config.timing) {
        const auto t0 = std::chrono::steady_clock::now();
        (void)dense_attention(all_queries, problem.k, problem.v, problem.block);
        const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        rep.wall_time_ms.kernel_ms = rep.wall_time_ms.total_ms = ms;
      }
      reports.push_back(rep);
      continue;
    }

    auto options = variant_options(variant);
    options.morton_reorder = config.morton;
    const auto res = rectified_attention_pipeline(problem, config.sparsity, options);
    const Matrix<T> output = concat_output(res.output);
    rep.normalized_l1 = normalized_l1(output, reference);
    rep.cosine_similarity = cosine_similarity(output, reference);
    const auto flops = sparsity_and_flops(res.sparse_mask.mask, res.grid, problem.dim());
    rep.sparsity = flops.sparsity;
    rep.flops_full = flops.flops_full;
    rep.flops_sparse = flops.flops_sparse;
    rep.flops_overhead = flops.flops_overhead;
    rep.wall_time_ms = masked_times(res.accounting.times, config.timing);
    rep.checks_passed = pipeline_violations(res).empty();
    reports.push_back(rep);
  }
  return reports;
}

std::string csv_header()
{
  return "top_k_fraction,p,adjacency_radius,force_text,variant,normalized_l1,cosine_similarity,"
         "sparsity,flops_full,flops_sparse,flops_overhead,gapr_agreement,checks_passed,"
         "wall_pool_ms,wall_implicit_ms,wall_compensation_ms,wall_sparse_mask_ms,"
         "wall_kernel_ms,wall_text_ms,wall_rectify_ms,wall_total_ms\n";
}

std::string csv_row(const AlignmentReport& r)
{
  const auto& t = r.wall_time_ms;
  std::string row;
  auto add = [&](const std::string& s) {
    if (!row.empty()) row += ',';
    row += s;
  };
  add(fmt_double(r.sparsity_config.top_k_fraction));
  add(fmt_double(r.sparsity_config.weight_threshold));
  add(std::to_string(r.sparsity_config.adjacency_radius));
  add(r.sparsity_config.force_text_blocks ? "1" : "0");
  add(variant_name(r.variant));
  add(fmt_double(r.normalized_l1));
  add(fmt_double(r.cosine_similarity));
  add(fmt_double(r.sparsity));
  add(std::to_string(r.flops_full));
  add(std::to_string(r.flops_sparse));
  add(std::to_string(r.flops_overhead));
  add(fmt_double(r.gapr_agreement));
  add(r.checks_passed ? "1" : "0");
  for (double ms : {t.pool_ms, t.implicit_ms, t.compensation_ms, t.sparse_mask_ms, t.kernel_ms,
                    t.text_ms, t.rectify_ms, t.total_ms})
    add(fmt_double(ms));
  return row + "\n";
}

std::string report_json(const AlignmentReport& r)
{
  const auto& t = r.wall_time_ms;
  ojson j;
  j["schema_version"] = kReportSchemaVersion;
  j["variant"] = variant_name(r.variant);
  j["sparsity_config"] = {{"top_k_fraction", r.sparsity_config.top_k_fraction},
                          {"p", r.sparsity_config.weight_threshold},
                          {"adjacency_radius", r.sparsity_config.adjacency_radius},
                          {"force_text_blocks", r.sparsity_config.force_text_blocks}};
  j["normalized_l1"] = r.normalized_l1;
  j["cosine_similarity"] = r.cosine_similarity;
  j["sparsity"] = r.sparsity;
  j["flops_full"] = r.flops_full;
  j["flops_sparse"] = r.flops_sparse;
  j["flops_overhead"] = r.flops_overhead;
  j["wall_time_ms"] = {{"pool", t.pool_ms},         {"implicit", t.implicit_ms},
                       {"compensation", t.compensation_ms}, {"sparse_mask", t.sparse_mask_ms},
                       {"kernel", t.kernel_ms},     {"text", t.text_ms},
                       {"rectify", t.rectify_ms},   {"total", t.total_ms}};
  j["gapr_agreement"] = r.gapr_agreement;
  j["checks_passed"] = r.checks_passed;
  return j.dump(2) + "\n";
}

std::vector<AlignmentReport> run_experiment(const ExperimentConfig& config)
{
  config.validate();
  auto reports = with_precision(config.source, [&](const auto& problem) {
    return evaluate_variants(problem, config);
  });

  std::error_code ec;
  std::filesystem::create_directories(config.out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + config.out_dir.string());
  std::string csv = csv_header();
  for (const auto& r : reports) {
    write_file_atomic(config.out_dir / (std::string("report_") + variant_name(r.variant) + ".json"),
                      report_json(r));
    csv += csv_row(r);
  }
  write_file_atomic(config.out_dir / "reports.csv", csv);
  return reports;
}

std::string sweep_sparsity(const ExperimentConfig& config, const std::vector<double>& fractions)
{
  if (fractions.empty()) throw ConfigError("sweep needs at least one top-k fraction");
  for (double f : fractions)
    if (!(f > 0.0 && f <= 1.0)) throw ConfigError("top-k fractions must lie in (0, 1]");
  config.validate();

  std::string csv = csv_header();
  with_precision(config.source, [&](const auto& problem) {
    for (double f : fractions) {
      ExperimentConfig point = config;
      point.sparsity.top_k_fraction = f;
      for (const auto& r : evaluate_variants(problem, point)) csv += csv_row(r);
    }
    return 0;
  });

  std::error_code ec;
  std::filesystem::create_directories(config.out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + config.out_dir.string());
  write_file_atomic(config.out_dir / "sweep.csv", csv);
  return csv;
}

ExperimentConfig parse_experiment_config(const std::string& json_text,
                                         const std::filesystem::path& base_dir)
{
  ojson j;
  try {
    j = ojson::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid config JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  reject_unknown(j, {"synthetic", "files", "sparsity", "variants", "out", "morton", "timing"},
                 "config");

  ExperimentConfig cfg;
  try {
    if (j.contains("synthetic") == j.contains("files"))
      throw ConfigError("config needs exactly one of 'synthetic' or 'files'");
    if (j.contains("synthetic")) {
      const auto& s = j["synthetic"];
      reject_unknown(s, {"seed", "t_video", "t_text", "dim", "block", "grid", "alpha", "beta",
                         "sigma", "precision"},
                     "synthetic");
      SyntheticSpec spec;
      spec.seed = s.value("seed", spec.seed);
      spec.t_video = s.value("t_video", spec.t_video);
      spec.t_text = s.value("t_text", spec.t_text);
      spec.dim = s.value("dim", spec.dim);
      spec.block = s.value("block", spec.block);
      spec.grid = s.contains("grid") ? parse_grid(s["grid"]) : GridDims{1, 1, spec.t_video};
      spec.locality = s.value("alpha", spec.locality);
      spec.text_norm_boost = s.value("beta", spec.text_norm_boost);
      spec.intra_block_noise = s.value("sigma", spec.intra_block_noise);
      spec.precision = parse_precision(s.value("precision", std::string("single")));
      cfg.source.synthetic = spec;
      cfg.source.precision = spec.precision;
      cfg.source.block = spec.block;
    } else {
      const auto& f = j["files"];
      reject_unknown(f, {"q_video", "q_text", "k", "v", "block", "grid", "precision"}, "files");
      auto path = [&](const char* key) {
        if (!f.contains(key)) throw ConfigError(std::string("files.") + key + " is required");
        std::filesystem::path p = f[key].get<std::string>();
        return p.is_relative() && !base_dir.empty() ? base_dir / p : p;
      };
      cfg.source.q_video = path("q_video");
      cfg.source.q_text = path("q_text");
      cfg.source.k = path("k");
      cfg.source.v = path("v");
      cfg.source.block = f.value("block", kDefaultBlock);
      if (f.contains("grid")) cfg.source.grid = parse_grid(f["grid"]);
      cfg.source.precision = parse_precision(f.value("precision", std::string("single")));
    }
    if (j.contains("sparsity")) {
      const auto& s = j["sparsity"];
      reject_unknown(s, {"top_k", "p", "adjacency_radius", "force_text"}, "sparsity");
      cfg.sparsity.top_k_fraction = s.value("top_k", cfg.sparsity.top_k_fraction);
      cfg.sparsity.weight_threshold = s.value("p", cfg.sparsity.weight_threshold);
      cfg.sparsity.adjacency_radius = s.value("adjacency_radius", cfg.sparsity.adjacency_radius);
      cfg.sparsity.force_text_blocks = s.value("force_text", cfg.sparsity.force_text_blocks);
    }
    if (j.contains("variants")) {
      cfg.variants.clear();
      for (const auto& v : j["variants"]) cfg.variants.push_back(parse_variant(v.get<std::string>()));
    }
    if (j.contains("out")) cfg.out_dir = j["out"].get<std::string>();
    cfg.morton = j.value("morton", false);
    cfg.timing = j.value("timing", false);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

template std::vector<std::string> pipeline_violations(const PipelineResult<float>&);
template std::vector<std::string> pipeline_violations(const PipelineResult<double>&);
template std::vector<AlignmentReport> evaluate_variants(const AttentionProblem<float>&,
                                                        const ExperimentConfig&);
template std::vector<AlignmentReport> evaluate_variants(const AttentionProblem<double>&,
                                                        const ExperimentConfig&);

}  // namespace rectattn
