#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gmah/trainer.hpp"

namespace gmah {

// y0 = x0, y_t = weight * y_{t-1} + (1 - weight) * x_t. NaN entries are
// passed through and do not reset the running value.
std::vector<double> smooth(std::span<const double> series, double weight);

struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;  // "nan" cells become NaN

  bool has(const std::string& column) const;
  // SchemaError when the column is missing.
  std::vector<double> column(const std::string& name) const;
};

CsvTable read_csv(const std::filesystem::path& path);

struct CurveRun {
  std::string label;
  std::filesystem::path csv;
};

struct CurveOptions {
  std::vector<std::string> columns{"reward_mean"};
  std::string x_column = "step";
  double weight = 0.89;
  std::string title;
};

// One raw (faint) and one smoothed (bold) path per run and column.
std::string render_curves(const std::vector<CurveRun>& runs, const CurveOptions& opts);
void write_curves(const std::vector<CurveRun>& runs, const CurveOptions& opts, const std::filesystem::path& out);

// One panel per agent, left to right; cell shade is linear in the visit count.
std::string render_heatmap(const EvalReport& report);
void write_heatmap(const EvalReport& report, const std::filesystem::path& out);

}  // namespace gmah
