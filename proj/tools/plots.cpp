#include "plots.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace osda::plots {
namespace {

constexpr int kW = 720, kH = 480;
constexpr int kLeft = 70, kRight = 20, kTop = 40, kBottom = 50;

const cv::Scalar kPalette[] = {{180, 119, 31}, {14, 127, 255}, {44, 160, 44}, {40, 39, 214}, {189, 103, 148},
                               {75, 86, 140},  {194, 119, 227}, {127, 127, 127}, {34, 189, 188}, {207, 190, 23}};

cv::Scalar color(int i) { return kPalette[static_cast<std::size_t>(i) % std::size(kPalette)]; }

struct Frame {
  cv::Mat img{kH, kW, CV_8UC3, cv::Scalar(255, 255, 255)};
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;

  cv::Point at(double x, double y) const {
    const double fx = (x - x0) / (x1 - x0), fy = (y - y0) / (y1 - y0);
    return {kLeft + static_cast<int>(std::lround(fx * (kW - kLeft - kRight))),
            kH - kBottom - static_cast<int>(std::lround(fy * (kH - kTop - kBottom)))};
  }

  void text(const std::string& s, cv::Point p, double scale = 0.45) {
    cv::putText(img, s, p, cv::FONT_HERSHEY_SIMPLEX, scale, cv::Scalar(30, 30, 30), 1, cv::LINE_AA);
  }

  void axes(const std::string& title, bool x_ticks = true) {
    cv::rectangle(img, {kLeft, kTop}, {kW - kRight, kH - kBottom}, cv::Scalar(60, 60, 60), 1);
    text(title, {kLeft, kTop - 14}, 0.55);
    char buf[32];
    for (int i = 0; i <= 4; ++i) {
      const double y = y0 + (y1 - y0) * i / 4.0;
      const cv::Point p = at(x0, y);
      cv::line(img, p, {p.x - 5, p.y}, cv::Scalar(60, 60, 60));
      std::snprintf(buf, sizeof buf, "%.3g", y);
      text(buf, {5, p.y + 4}, 0.4);
      if (!x_ticks) continue;
      const double x = x0 + (x1 - x0) * i / 4.0;
      const cv::Point q = at(x, y0);
      cv::line(img, q, {q.x, q.y + 5}, cv::Scalar(60, 60, 60));
      std::snprintf(buf, sizeof buf, "%.3g", x);
      text(buf, {q.x - 12, q.y + 20}, 0.4);
    }
  }

  void save(const std::filesystem::path& path) const {
    if (!cv::imwrite(path.string(), img)) throw IoError("could not write " + path.string());
  }
};

void pad(double& lo, double& hi) {
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
    return;
  }
  const double m = 0.05 * (hi - lo);
  lo -= m;
  hi += m;
}

}  // namespace

void render_boxplot(const std::filesystem::path& path, const std::vector<double>& values, const BoxStats& s,
                    double reference, const std::string& title) {
  Frame f;
  f.y0 = std::min(s.min, reference);
  f.y1 = std::max(s.max, reference);
  pad(f.y0, f.y1);
  f.axes(title, false);

  const double lo_whisk = std::max(s.min, s.lower_fence), hi_whisk = std::min(s.max, s.upper_fence);
  const double cx = 0.5, half = 0.15;
  const cv::Scalar ink(90, 60, 20);
  cv::rectangle(f.img, f.at(cx - half, s.q3), f.at(cx + half, s.q1), cv::Scalar(230, 200, 160), cv::FILLED);
  cv::rectangle(f.img, f.at(cx - half, s.q3), f.at(cx + half, s.q1), ink, 1);
  cv::line(f.img, f.at(cx - half, s.median), f.at(cx + half, s.median), ink, 2);
  cv::line(f.img, f.at(cx, s.q3), f.at(cx, hi_whisk), ink);
  cv::line(f.img, f.at(cx, s.q1), f.at(cx, lo_whisk), ink);
  cv::line(f.img, f.at(cx - half / 2, hi_whisk), f.at(cx + half / 2, hi_whisk), ink);
  cv::line(f.img, f.at(cx - half / 2, lo_whisk), f.at(cx + half / 2, lo_whisk), ink);
  for (double v : values)
    if (v < s.lower_fence || v > s.upper_fence) cv::circle(f.img, f.at(cx, v), 3, ink, 1, cv::LINE_AA);

  // dashed reference line
  const cv::Point a = f.at(f.x0, reference), b = f.at(f.x1, reference);
  for (int x = a.x; x < b.x; x += 12) cv::line(f.img, {x, a.y}, {std::min(x + 6, b.x), a.y}, cv::Scalar(0, 0, 220), 1);
  char buf[48];
  std::snprintf(buf, sizeof buf, "threshold %.2f", reference);
  f.text(buf, {b.x - 120, a.y - 6}, 0.4);
  f.save(path);
}

void render_scatter(const std::filesystem::path& path, const Matrix& points, const std::vector<int>& group,
                    const std::vector<std::string>& group_names, const std::string& title) {
  Frame f;
  if (points.rows() > 0) {
    f.x0 = points.col(0).minCoeff();
    f.x1 = points.col(0).maxCoeff();
    f.y0 = points.col(1).minCoeff();
    f.y1 = points.col(1).maxCoeff();
  }
  pad(f.x0, f.x1);
  pad(f.y0, f.y1);
  f.axes(title);
  for (long i = 0; i < points.rows(); ++i)
    cv::circle(f.img, f.at(points(i, 0), points(i, 1)), 2, color(group[static_cast<std::size_t>(i)]), cv::FILLED,
               cv::LINE_AA);
  for (std::size_t g = 0; g < group_names.size(); ++g) {
    const int y = kTop + 16 + 16 * static_cast<int>(g);
    cv::circle(f.img, {kW - kRight - 110, y - 4}, 4, color(static_cast<int>(g)), cv::FILLED);
    f.text(group_names[g], {kW - kRight - 100, y}, 0.4);
  }
  f.save(path);
}

void render_lines(const std::filesystem::path& path, const std::vector<Series>& series, const std::string& title,
                  const std::string& x_label) {
  Frame f;
  bool any = false;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.y[i])) continue;
      if (!any) {
        f.x0 = f.x1 = s.x[i];
        f.y0 = f.y1 = s.y[i];
        any = true;
      }
      f.x0 = std::min(f.x0, s.x[i]);
      f.x1 = std::max(f.x1, s.x[i]);
      f.y0 = std::min(f.y0, s.y[i]);
      f.y1 = std::max(f.y1, s.y[i]);
    }
  pad(f.x0, f.x1);
  pad(f.y0, f.y1);
  f.axes(title);
  f.text(x_label, {kW / 2 - 30, kH - 10}, 0.45);
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    std::vector<cv::Point> pts;
    for (std::size_t i = 0; i < s.x.size(); ++i)
      if (std::isfinite(s.y[i])) pts.push_back(f.at(s.x[i], s.y[i]));
    const cv::Scalar c = color(static_cast<int>(k));
    if (pts.size() > 1) cv::polylines(f.img, pts, false, c, 2, cv::LINE_AA);
    if (pts.size() <= 50)
      for (const auto& p : pts) cv::circle(f.img, p, 3, c, cv::FILLED, cv::LINE_AA);
    const int y = kTop + 16 + 16 * static_cast<int>(k);
    cv::line(f.img, {kW - kRight - 130, y - 4}, {kW - kRight - 112, y - 4}, c, 2);
    f.text(s.name, {kW - kRight - 106, y}, 0.4);
  }
  f.save(path);
}

}  // namespace osda::plots
