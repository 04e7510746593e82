#include "polgrad/curves.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace polgrad {

std::vector<EpisodeRow> read_episodes_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("curves: cannot open " + path);
  std::string line;
  if (!std::getline(f, line)) throw ConfigError("curves: empty file " + path);
  if (line.rfind("schema,", 0) != 0)
    throw ConfigError("curves: unrecognized header in " + path);
  std::vector<EpisodeRow> rows;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    EpisodeRow row;
    std::getline(ls, cell, ',');  // schema version
    std::getline(ls, cell, ',');
    row.episode = std::stoll(cell);
    std::getline(ls, cell, ',');
    row.end_step = std::stoll(cell);
    std::getline(ls, cell, ',');
    row.reward = parse_double(cell);
    std::getline(ls, cell, ',');
    row.length = std::stoi(cell);
    rows.push_back(row);
  }
  return rows;
}

void rolling_stats(const std::vector<double>& values, int window,
                   std::vector<double>& mean_out, std::vector<double>& std_out) {
  mean_out.resize(values.size());
  std_out.resize(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::size_t lo = i + 1 >= static_cast<std::size_t>(window)
                               ? i + 1 - static_cast<std::size_t>(window)
                               : 0;
    const std::size_t n = i - lo + 1;
    double acc = 0.0;
    for (std::size_t k = lo; k <= i; ++k) acc += values[k];
    const double mean = acc / static_cast<double>(n);
    double var = 0.0;
    for (std::size_t k = lo; k <= i; ++k) var += (values[k] - mean) * (values[k] - mean);
    mean_out[i] = mean;
    std_out[i] = std::sqrt(var / static_cast<double>(n));
  }
}

namespace {

std::string strip_csv_suffix(const std::string& path) {
  if (path.size() > 4 && path.substr(path.size() - 4) == ".csv")
    return path.substr(0, path.size() - 4);
  return path;
}

std::string px(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

void write_svg(const std::string& path, const std::string& title,
               const std::vector<EpisodeRow>& rows, const std::vector<double>& mean,
               const std::vector<double>& dev) {
  const double W = 860, H = 520;
  const double ml = 80, mr = 25, mt = 45, mb = 55;
  double x_lo = static_cast<double>(rows.front().end_step);
  double x_hi = static_cast<double>(rows.back().end_step);
  if (x_hi <= x_lo) x_hi = x_lo + 1.0;
  double y_lo = mean[0] - dev[0], y_hi = mean[0] + dev[0];
  for (std::size_t i = 0; i < mean.size(); ++i) {
    y_lo = std::min(y_lo, mean[i] - dev[i]);
    y_hi = std::max(y_hi, mean[i] + dev[i]);
  }
  if (y_hi <= y_lo) y_hi = y_lo + 1.0;
  const double pad = 0.05 * (y_hi - y_lo);
  y_lo -= pad;
  y_hi += pad;
  auto X = [&](double v) { return ml + (v - x_lo) / (x_hi - x_lo) * (W - ml - mr); };
  auto Y = [&](double v) { return H - mb - (v - y_lo) / (y_hi - y_lo) * (H - mt - mb); };

  std::ofstream f(path);
  if (!f) throw ConfigError("curves: cannot write " + path);
  f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\""
    << H << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
  f << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
  f << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" "
    << "font-family=\"sans-serif\" font-size=\"15\">" << title << "</text>\n";

  // deviation band
  f << "<polygon fill=\"#4c72b0\" fill-opacity=\"0.25\" stroke=\"none\" points=\"";
  for (std::size_t i = 0; i < rows.size(); ++i)
    f << px(X(static_cast<double>(rows[i].end_step))) << ","
      << px(Y(mean[i] + dev[i])) << " ";
  for (std::size_t i = rows.size(); i-- > 0;)
    f << px(X(static_cast<double>(rows[i].end_step))) << ","
      << px(Y(mean[i] - dev[i])) << " ";
  f << "\"/>\n";

  // rolling mean line
  f << "<polyline fill=\"none\" stroke=\"#4c72b0\" stroke-width=\"1.8\" points=\"";
  for (std::size_t i = 0; i < rows.size(); ++i)
    f << px(X(static_cast<double>(rows[i].end_step))) << "," << px(Y(mean[i])) << " ";
  f << "\"/>\n";

  // axes
  f << "<line x1=\"" << px(ml) << "\" y1=\"" << px(H - mb) << "\" x2=\"" << px(W - mr)
    << "\" y2=\"" << px(H - mb) << "\" stroke=\"black\"/>\n";
  f << "<line x1=\"" << px(ml) << "\" y1=\"" << px(mt) << "\" x2=\"" << px(ml)
    << "\" y2=\"" << px(H - mb) << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 5; ++k) {
    const double xv = x_lo + (x_hi - x_lo) * k / 5.0;
    const double yv = y_lo + (y_hi - y_lo) * k / 5.0;
    f << "<line x1=\"" << px(X(xv)) << "\" y1=\"" << px(H - mb) << "\" x2=\""
      << px(X(xv)) << "\" y2=\"" << px(H - mb + 5) << "\" stroke=\"black\"/>\n";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3g", xv);
    f << "<text x=\"" << px(X(xv)) << "\" y=\"" << px(H - mb + 20)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
      << buf << "</text>\n";
    f << "<line x1=\"" << px(ml - 5) << "\" y1=\"" << px(Y(yv)) << "\" x2=\""
      << px(ml) << "\" y2=\"" << px(Y(yv)) << "\" stroke=\"black\"/>\n";
    std::snprintf(buf, sizeof(buf), "%.4g", yv);
    f << "<text x=\"" << px(ml - 9) << "\" y=\"" << px(Y(yv) + 4)
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << buf
      << "</text>\n";
  }
  f << "<text x=\"" << (ml + (W - ml - mr) / 2) << "\" y=\"" << H - 14
    << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
    << "environment steps</text>\n";
  f << "<text x=\"18\" y=\"" << (mt + (H - mt - mb) / 2)
    << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
    << "transform=\"rotate(-90 18 " << (mt + (H - mt - mb) / 2) << ")\">"
    << "episode reward (rolling mean +- deviation)</text>\n";
  f << "</svg>\n";
}

}  // namespace

CurveOutputs export_curve(const std::string& episodes_csv_path, int window) {
  const auto rows = read_episodes_csv(episodes_csv_path);
  if (rows.empty())
    throw ConfigError("curves: no episodes in " + episodes_csv_path);
  std::vector<double> rewards;
  rewards.reserve(rows.size());
  for (const auto& r : rows) rewards.push_back(r.reward);
  std::vector<double> mean, dev;
  rolling_stats(rewards, window, mean, dev);

  CurveOutputs out;
  const std::string stem = strip_csv_suffix(episodes_csv_path);
  out.rolling_csv = stem + "_rolling.csv";
  out.svg = stem + "_curve.svg";
  {
    std::ofstream f(out.rolling_csv);
    if (!f) throw ConfigError("curves: cannot write " + out.rolling_csv);
    f << "schema,episode,end_step,reward,roll_mean,roll_std\n";
    for (std::size_t i = 0; i < rows.size(); ++i)
      f << 1 << "," << rows[i].episode << "," << rows[i].end_step << ","
        << fmt_g17(rows[i].reward) << "," << fmt_g17(mean[i]) << ","
        << fmt_g17(dev[i]) << "\n";
  }
  write_svg(out.svg, episodes_csv_path, rows, mean, dev);
  return out;
}

}  // namespace polgrad
