#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace softworld::cli {

struct CurveGroup {
    std::string label;
    std::vector<std::vector<double>> runs;  // one value series per seed
};

/// Learning-curve SVG: per group, mean across runs as a polyline plus a
/// min/max band; x is the episode index, y the episode return. Output is
/// deterministic for identical inputs.
void write_learning_curves_svg(const std::filesystem::path& path, const std::string& title,
                               const std::vector<CurveGroup>& groups);

/// Groups per-episode reward sums from the metric CSVs in a directory,
/// keyed by the variant column. Throws IoError when no CSV is found.
std::vector<CurveGroup> curves_from_csv_dir(const std::filesystem::path& dir);

}  // namespace softworld::cli
