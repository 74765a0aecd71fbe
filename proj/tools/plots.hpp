#pragma once

// Minimal PNG renderers for the exported data files. The CSVs are the
// contract; these images are only for a quick look.

#include "osda/common.hpp"
#include "osda/eval.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace osda::plots {

struct Series {
  std::string name;
  std::vector<double> x, y;
};

// Box plot of one distribution with a dashed horizontal reference line.
void render_boxplot(const std::filesystem::path& path, const std::vector<double>& values, const BoxStats& stats,
                    double reference, const std::string& title);

// Scatter of 2-D points coloured by group index.
void render_scatter(const std::filesystem::path& path, const Matrix& points, const std::vector<int>& group,
                    const std::vector<std::string>& group_names, const std::string& title);

// Line chart, one polyline per series.
void render_lines(const std::filesystem::path& path, const std::vector<Series>& series, const std::string& title,
                  const std::string& x_label);

}  // namespace osda::plots
