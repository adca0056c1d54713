#include "ddm2/report.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "ddm2/pipeline.hpp"
#include "ddm2/png.hpp"

namespace fs = std::filesystem;

namespace ddm2 {

namespace {

// curve plotting onto a canvas with margins; x/y auto-scaled
void plot_curves(const std::string& path, const std::vector<std::vector<double>>& xs,
                 const std::vector<std::vector<double>>& ys) {
  const int H = 360, W = 520, m = 30;
  Canvas cv(H, W);
  cv.rect(m, m, H - m, W - m, 128);

  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (size_t c = 0; c < xs.size(); c++)
    for (size_t i = 0; i < xs[c].size(); i++) {
      xmin = std::min(xmin, xs[c][i]);
      xmax = std::max(xmax, xs[c][i]);
      ymin = std::min(ymin, ys[c][i]);
      ymax = std::max(ymax, ys[c][i]);
    }
  if (!(xmax > xmin)) xmax = xmin + 1;
  if (!(ymax > ymin)) ymax = ymin + 1;

  auto px = [&](double x) { return m + (x - xmin) / (xmax - xmin) * (W - 2 * m); };
  auto py = [&](double y) { return H - m - (y - ymin) / (ymax - ymin) * (H - 2 * m); };

  for (size_t c = 0; c < xs.size(); c++) {
    uint8_t shade = uint8_t(20 + (c * 160) / std::max<size_t>(1, xs.size()));
    for (size_t i = 1; i < xs[c].size(); i++)
      cv.line(py(ys[c][i - 1]), px(xs[c][i - 1]), py(ys[c][i]), px(xs[c][i]), shade);
  }
  cv.save(path);
}

std::vector<std::pair<std::string, std::vector<double>>> read_csv_columns(
    const std::string& path) {
  std::ifstream f(path);
  if (!f) return {};
  std::string line;
  if (!std::getline(f, line)) return {};
  std::vector<std::pair<std::string, std::vector<double>>> cols;
  std::stringstream hs(line);
  std::string name;
  while (std::getline(hs, name, ',')) cols.push_back({name, {}});
  while (std::getline(f, line)) {
    std::stringstream ls(line);
    std::string cell;
    size_t i = 0;
    while (std::getline(ls, cell, ',') && i < cols.size()) {
      try {
        cols[i].second.push_back(std::stod(cell));
      } catch (...) {
        cols[i].second.push_back(0.0);
      }
      i++;
    }
  }
  return cols;
}

void boxplot(const std::string& path,
             const std::vector<std::pair<std::string, std::vector<double>>>& series) {
  const int H = 360, W = 120 + 90 * int(series.size()), m = 30;
  Canvas cv(H, W);
  double ymin = 1e300, ymax = -1e300;
  for (const auto& [name, vals] : series)
    for (double v : vals) {
      ymin = std::min(ymin, v);
      ymax = std::max(ymax, v);
    }
  if (!(ymax > ymin)) ymax = ymin + 1;
  auto py = [&](double y) {
    return int(H - m - (y - ymin) / (ymax - ymin) * (H - 2 * m));
  };
  for (size_t s = 0; s < series.size(); s++) {
    std::vector<double> v = series[s].second;
    if (v.empty()) continue;
    std::sort(v.begin(), v.end());
    auto q = [&](double p) {
      double pos = p * double(v.size() - 1);
      size_t i = size_t(pos);
      return i + 1 >= v.size() ? v.back() : v[i] * (1 - (pos - double(i))) + v[i + 1] * (pos - double(i));
    };
    int cx = 80 + 90 * int(s);
    cv.rect(py(q(0.75)), cx - 25, py(q(0.25)), cx + 25, 60);
    cv.line(py(q(0.5)), cx - 25, py(q(0.5)), cx + 25, 0);
    cv.line(py(v.front()), cx, py(q(0.25)), cx, 100);
    cv.line(py(q(0.75)), cx, py(v.back()), cx, 100);
  }
  cv.save(path);
}

}  // namespace

void write_report(const PipelineConfig& cfg, const std::string& workdir) {
  fs::path wd(workdir);
  fs::path rd = wd / "report";
  fs::create_directories(rd);
  nlohmann::json written = nlohmann::json::array();

  // schedule table + comparison of the configured shape against its mirror
  NoiseSchedule sched = cfg.build_schedule();
  sched.export_csv((rd / "schedule.csv").string());
  written.push_back("report/schedule.csv");
  {
    ScheduleShape other = cfg.schedule_shape == ScheduleShape::reverse_warmup
                              ? ScheduleShape::warmup
                              : ScheduleShape::reverse_warmup;
    NoiseSchedule mirror = NoiseSchedule::build(other, cfg.schedule_T, cfg.beta_start,
                                                cfg.beta_end, cfg.linear_ratio);
    std::vector<std::vector<double>> xs(2), ys(2);
    for (int t = 1; t <= sched.T(); t++) {
      xs[0].push_back(t);
      ys[0].push_back(sched.lambda1(t));
      xs[1].push_back(t);
      ys[1].push_back(mirror.lambda1(t));
    }
    plot_curves((rd / "schedule_comparison.png").string(), xs, ys);
    written.push_back("report/schedule_comparison.png");
  }

  // RMSE trajectories from the denoise traces
  fs::path tdir = wd / paths::traces_dir;
  if (fs::exists(tdir)) {
    std::vector<std::vector<double>> xs, ys;
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(tdir))
      if (e.path().extension() == ".csv") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const fs::path& p : files) {
      if (xs.size() >= 16) break;  // keep the figure readable
      auto cols = read_csv_columns(p.string());
      if (cols.size() < 2) continue;
      std::vector<double> steps(cols[0].second.size());
      for (size_t i = 0; i < steps.size(); i++) steps[i] = double(i);
      xs.push_back(steps);
      ys.push_back(cols[1].second);
    }
    if (!xs.empty()) {
      plot_curves((rd / "rmse_trajectories.png").string(), xs, ys);
      written.push_back("report/rmse_trajectories.png");
    }
  }

  // metric boxplots
  fs::path metrics = wd / paths::metrics_csv;
  if (fs::exists(metrics)) {
    auto cols = read_csv_columns(metrics.string());
    std::vector<std::pair<std::string, std::vector<double>>> series;
    for (const auto& c : cols)
      if (c.first != "volume" && c.first != "slice") series.push_back(c);
    if (!series.empty()) {
      boxplot((rd / "metrics_boxplot.png").string(), series);
      written.push_back("report/metrics_boxplot.png");
      std::vector<std::pair<std::string, std::vector<double>>> deltas;
      for (const auto& c : series)
        if (c.first.starts_with("delta_")) deltas.push_back(c);
      if (!deltas.empty()) {
        boxplot((rd / "relative_scores_boxplot.png").string(), deltas);
        written.push_back("report/relative_scores_boxplot.png");
      }
    }
  }

  nlohmann::json summary = {{"artifacts", written}};
  std::ofstream sf(rd / "report.json", std::ios::trunc);
  sf << summary.dump(2) << '\n';
}

}  // namespace ddm2
