// Copyright 2026 The fedq Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <algorithm>
#include <cmath>
#include <sstream>

#include <fmt/core.h>

#include "fedq/errors.hpp"
#include "fedq/harness.hpp"

namespace fedq {
namespace {

constexpr std::size_t kMaxPoints = 1000;
constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                   "#9467bd", "#8c564b", "#e377c2", "#17becf"};
constexpr const char* kDashes[] = {"", "6,3", "2,2", "8,3,2,3"};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

// Indices kept when thinning a series to at most kMaxPoints, always keeping the last.
std::vector<std::size_t> thin(std::size_t n) {
  std::vector<std::size_t> idx;
  const std::size_t stride = std::max<std::size_t>(1, (n + kMaxPoints - 1) / kMaxPoints);
  for (std::size_t i = 0; i < n; i += stride) idx.push_back(i);
  if (!idx.empty() && idx.back() != n - 1) idx.push_back(n - 1);
  return idx;
}

double nice_step(double range) {
  if (!(range > 0.0)) return 1.0;
  const double raw = range / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    if (m * mag >= raw) return m * mag;
  }
  return 10.0 * mag;
}

}  // namespace

std::string emit_svg(std::span<const SvgSeries> series, const SvgStyle& style) {
  if (series.empty()) throw ConfigError("emit_svg needs at least one series");
  const double left = 70, right = 20, top = 40, bottom = 55;
  const double pw = style.width - left - right;
  const double ph = style.height - top - bottom;

  std::size_t x_max = 1;
  double y_max = 0.0;
  for (const SvgSeries& s : series) {
    x_max = std::max(x_max, s.mean.size() > 1 ? s.mean.size() - 1 : std::size_t{1});
    for (std::size_t i = 0; i < s.mean.size(); ++i) {
      const double sd = i < s.std.size() ? s.std[i] : 0.0;
      if (std::isfinite(s.mean[i] + sd)) y_max = std::max(y_max, s.mean[i] + sd);
    }
  }
  const double y_step = nice_step(y_max > 0.0 ? y_max : 1.0);
  const double y_top = y_step * std::max(1.0, std::ceil(y_max / y_step));
  const double x_step = nice_step(static_cast<double>(x_max));

  auto px = [&](double x) { return left + pw * x / static_cast<double>(x_max); };
  auto py = [&](double y) { return top + ph * (1.0 - std::clamp(y, 0.0, y_top) / y_top); };

  std::ostringstream o;
  o << fmt::format(
      "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" "
      "viewBox=\"0 0 {0} {1}\" font-family=\"sans-serif\" font-size=\"12\">\n",
      style.width, style.height);
  o << fmt::format("<rect width=\"{}\" height=\"{}\" fill=\"white\"/>\n", style.width,
                   style.height);
  o << fmt::format("<text x=\"{:.1f}\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
                   style.width / 2.0, escape(style.title));

  // Axes and ticks.
  o << "<g stroke=\"black\" stroke-width=\"1\">\n";
  o << fmt::format("<line x1=\"{0:.1f}\" y1=\"{1:.1f}\" x2=\"{2:.1f}\" y2=\"{1:.1f}\"/>\n", left,
                   top + ph, left + pw);
  o << fmt::format("<line x1=\"{0:.1f}\" y1=\"{1:.1f}\" x2=\"{0:.1f}\" y2=\"{2:.1f}\"/>\n", left,
                   top, top + ph);
  o << "</g>\n<g fill=\"black\">\n";
  for (double x = 0.0; x <= static_cast<double>(x_max) + 1e-9; x += x_step) {
    o << fmt::format("<line x1=\"{0:.1f}\" y1=\"{1:.1f}\" x2=\"{0:.1f}\" y2=\"{2:.1f}\" "
                     "stroke=\"black\"/>\n",
                     px(x), top + ph, top + ph + 5);
    o << fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">{:g}</text>\n",
                     px(x), top + ph + 18, x);
  }
  for (double y = 0.0; y <= y_top + 1e-12 * y_top; y += y_step) {
    o << fmt::format("<line x1=\"{0:.1f}\" y1=\"{1:.1f}\" x2=\"{2:.1f}\" y2=\"{1:.1f}\" "
                     "stroke=\"black\"/>\n",
                     left - 5, py(y), left);
    o << fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"end\">{:g}</text>\n",
                     left - 8, py(y) + 4, y);
  }
  o << fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">{}</text>\n",
                   left + pw / 2, static_cast<double>(style.height) - 12, escape(style.x_label));
  o << fmt::format(
      "<text x=\"16\" y=\"{0:.1f}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {0:.1f})\">"
      "{1}</text>\n",
      top + ph / 2, escape(style.y_label));
  o << "</g>\n";

  for (std::size_t k = 0; k < series.size(); ++k) {
    const SvgSeries& s = series[k];
    if (s.mean.empty()) continue;
    const char* color = kColors[k % std::size(kColors)];
    const char* dash = kDashes[(k / std::size(kColors) + k) % std::size(kDashes)];
    const std::vector<std::size_t> idx = thin(s.mean.size());
    auto sd = [&](std::size_t i) { return i < s.std.size() ? s.std[i] : 0.0; };

    std::string band;
    for (std::size_t i : idx) {
      band += fmt::format("{:.2f},{:.2f} ", px(static_cast<double>(i)), py(s.mean[i] + sd(i)));
    }
    for (auto it = idx.rbegin(); it != idx.rend(); ++it) {
      band += fmt::format("{:.2f},{:.2f} ", px(static_cast<double>(*it)),
                          py(s.mean[*it] - sd(*it)));
    }
    o << fmt::format("<polygon points=\"{}\" fill=\"{}\" fill-opacity=\"0.2\" stroke=\"none\"/>\n",
                     band, color);
    std::string line;
    for (std::size_t i : idx) {
      line += fmt::format("{:.2f},{:.2f} ", px(static_cast<double>(i)), py(s.mean[i]));
    }
    o << fmt::format("<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"",
                     line, color);
    if (*dash) o << fmt::format(" stroke-dasharray=\"{}\"", dash);
    o << "/>\n";
  }

  // Legend.
  o << "<g>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const double y = top + 12 + 18.0 * static_cast<double>(k);
    const double x = left + pw - 200;
    const char* color = kColors[k % std::size(kColors)];
    const char* dash = kDashes[(k / std::size(kColors) + k) % std::size(kDashes)];
    o << fmt::format("<line x1=\"{:.1f}\" y1=\"{:.1f}\" x2=\"{:.1f}\" y2=\"{:.1f}\" stroke=\"{}\" "
                     "stroke-width=\"2\"",
                     x, y, x + 28, y, color);
    if (*dash) o << fmt::format(" stroke-dasharray=\"{}\"", dash);
    o << "/>\n";
    o << fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\">{}</text>\n", x + 34, y + 4,
                     escape(series[k].label));
  }
  o << "</g>\n</svg>\n";
  return o.str();
}

}  // namespace fedq
