#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rectattn/masks.hpp"
#include "rectattn/rectify.hpp"
#include "rectattn/synthetic.hpp"

namespace rectattn {

inline constexpr int kReportSchemaVersion = 1;

enum class Variant {
  Full,
  SparseUnrectified,
  SparseRectified,
  SparseRectifiedNoGapr,
  CompensateAll,
};

const char* variant_name(Variant v);
Variant parse_variant(const std::string& name);
std::vector<Variant> parse_variant_list(const std::string& csv);

/// Pipeline switches that realise a sparse variant.
PipelineOptions variant_options(Variant v);

/// Where the problem comes from: a synthetic spec, or four RSAT files.
struct ProblemSource {
  std::optional<SyntheticSpec> synthetic;
  std::filesystem::path q_video, q_text, k, v;
  std::size_t block = kDefaultBlock;
  std::optional<GridDims> grid;
  Precision precision = Precision::Single;
};

/// Generates or reads the problem; file inputs throw IoError when missing.
template <typename T>
AttentionProblem<T> load_problem(const ProblemSource& source);

struct ExperimentConfig {
  ProblemSource source;
  SparsityConfig sparsity;
  std::vector<Variant> variants{Variant::SparseUnrectified, Variant::SparseRectified};
  std::filesystem::path out_dir = "out";
  bool morton = false;
  bool timing = false;  // wall times are written as 0 unless set, keeping output byte-stable

  void validate() const;
};

struct AlignmentReport {
  Variant variant = Variant::Full;
  SparsityConfig sparsity_config;
  double normalized_l1 = 0;
  double cosine_similarity = 1;
  double sparsity = 0;
  std::uint64_t flops_full = 0;
  std::uint64_t flops_sparse = 0;
  std::uint64_t flops_overhead = 0;
  StageTimes wall_time_ms;
  double gapr_agreement = 0;
  bool checks_passed = true;
};

/// Mask, factor and mass invariants for one pipeline run; empty when clean.
template <typename T>
std::vector<std::string> pipeline_violations(const PipelineResult<T>& result);

/// Runs each variant on an in-memory problem against full_attention_oracle.
template <typename T>
std::vector<AlignmentReport> evaluate_variants(const AttentionProblem<T>& problem,
                                               const ExperimentConfig& config);

/// Loads the problem, evaluates all variants, then writes report_<variant>.json
/// files and reports.csv. Nothing is written if loading or evaluation fails.
std::vector<AlignmentReport> run_experiment(const ExperimentConfig& config);

/// One row per (fraction, variant); writes sweep.csv and returns its text.
std::string sweep_sparsity(const ExperimentConfig& config, const std::vector<double>& fractions);

std::string csv_header();
std::string csv_row(const AlignmentReport& r);
std::string report_json(const AlignmentReport& r);

/// Parses an experiment config from JSON text; unknown keys are rejected.
ExperimentConfig parse_experiment_config(const std::string& json_text,
                                         const std::filesystem::path& base_dir = {});

}  // namespace rectattn
