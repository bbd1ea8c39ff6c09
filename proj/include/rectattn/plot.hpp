#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace rectattn {

struct SweepPoint {
  std::string variant;
  double sparsity = 0;
  double normalized_l1 = 0;
  double cosine_similarity = 0;
};

/// Parses sweep/report CSV text. Requires the variant, sparsity,
/// normalized_l1 and cosine_similarity columns and at least one data row.
std::vector<SweepPoint> parse_sweep_csv(const std::string& csv);

/// Line chart of one metric against sparsity, one series per variant.
/// Series with a single point get a marker and no line.
std::string render_metric_svg(const std::vector<SweepPoint>& points, const std::string& metric);

/// Writes sweep_normalized_l1.svg and sweep_cosine_similarity.svg into out_dir
/// and returns their paths.
std::vector<std::filesystem::path> render_plots(const std::filesystem::path& csv_path,
                                                const std::filesystem::path& out_dir);

}  // namespace rectattn
