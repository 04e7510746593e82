#pragma once

// Reward-curve export: rolling mean and deviation over a trailing window of
// episode rewards, written both as derived CSV columns and as an SVG line
// chart with a shaded deviation band.

#include <string>
#include <vector>

#include "polgrad/common.hpp"

namespace polgrad {

inline constexpr int kRollingWindow = 100;

struct EpisodeRow {
  long long episode = 0;
  long long end_step = 0;
  double reward = 0.0;
  int length = 0;
};

std::vector<EpisodeRow> read_episodes_csv(const std::string& path);

// Trailing-window mean and population standard deviation per entry.
void rolling_stats(const std::vector<double>& values, int window,
                   std::vector<double>& mean_out, std::vector<double>& std_out);

// Writes <stem>_rolling.csv and <stem>_curve.svg next to the input; throws
// ConfigError when the CSV has no data rows (no file is produced).
struct CurveOutputs {
  std::string rolling_csv;
  std::string svg;
};
CurveOutputs export_curve(const std::string& episodes_csv_path,
                          int window = kRollingWindow);

}  // namespace polgrad
