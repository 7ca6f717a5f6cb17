#include "stimulheat/plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <fmt/format.h>

namespace stimulheat {

namespace {

constexpr double kWidth = 800.0;
constexpr double kHeight = 400.0;
constexpr double kLeft = 80.0;
constexpr double kRight = 20.0;
constexpr double kTop = 30.0;
constexpr double kBottom = 50.0;
constexpr int kTicks = 5;

// Round step for roughly `ticks` intervals over `span`.
double nice_step(double span, int ticks) {
  const double raw = span / ticks;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  const double norm = raw / mag;
  const double nice = norm < 1.5 ? 1.0 : norm < 3.0 ? 2.0 : norm < 7.0 ? 5.0 : 10.0;
  return nice * mag;
}

struct Range {
  double lo;
  double hi;
};

Range padded(double lo, double hi) {
  if (!(hi > lo)) {
    const double pad = std::max(1.0, std::abs(lo) * 0.1);
    return {lo - pad, hi + pad};
  }
  const double pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad};
}

}  // namespace

const std::vector<PlotChannel>& plot_channels() {
  static const std::vector<PlotChannel> channels = {
      {"t_abs_c", "absorbed face temperature (°C)", [](const TraceRecord& r) { return r.t_abs_c; }},
      {"t_emit_c", "emitted face temperature (°C)", [](const TraceRecord& r) { return r.t_emit_c; }},
      {"t_skin_c", "skin temperature (°C)", [](const TraceRecord& r) { return r.t_skin_c; }},
      {"current_a", "drive current (A)", [](const TraceRecord& r) { return r.current_a; }},
      {"heat_w", "absorbed heat flow (W)", [](const TraceRecord& r) { return r.heat_w; }},
      {"setpoint", "setpoint (W or °C)", [](const TraceRecord& r) { return r.setpoint; }},
      {"battery_pct", "battery charge (%)", [](const TraceRecord& r) { return r.battery_pct; }},
  };
  return channels;
}

std::string render_svg(const Trace& trace, const PlotChannel& channel) {
  double t0 = 0.0;
  double t1 = 1.0;
  double y0 = 0.0;
  double y1 = 0.0;
  if (!trace.empty()) {
    t0 = trace.front().time_s;
    t1 = std::max(trace.back().time_s, t0 + 1e-9);
    y0 = y1 = channel.value(trace.front());
    for (const auto& r : trace) {
      y0 = std::min(y0, channel.value(r));
      y1 = std::max(y1, channel.value(r));
    }
  }
  const Range yr = padded(y0, y1);
  const double pw = kWidth - kLeft - kRight;
  const double ph = kHeight - kTop - kBottom;
  auto px = [&](double t) { return kLeft + (t - t0) / (t1 - t0) * pw; };
  auto py = [&](double y) { return kTop + (yr.hi - y) / (yr.hi - yr.lo) * ph; };

  std::string svg = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\" "
      "font-family=\"sans-serif\" font-size=\"12\">\n"
      "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      "<title>{2}</title>\n",
      kWidth, kHeight, channel.column);

  // Grid and tick labels.
  const double ystep = nice_step(yr.hi - yr.lo, kTicks);
  for (double y = std::ceil(yr.lo / ystep) * ystep; y <= yr.hi; y += ystep) {
    svg += fmt::format(
        "<line x1=\"{0:.2f}\" y1=\"{1:.2f}\" x2=\"{2:.2f}\" y2=\"{1:.2f}\" stroke=\"#ddd\"/>\n"
        "<text x=\"{3:.2f}\" y=\"{4:.2f}\" text-anchor=\"end\">{5:g}</text>\n",
        kLeft, py(y), kLeft + pw, kLeft - 6, py(y) + 4, std::abs(y) < ystep * 1e-9 ? 0.0 : y);
  }
  const double tstep = nice_step(t1 - t0, kTicks * 2);
  for (double t = std::ceil(t0 / tstep) * tstep; t <= t1 + 1e-9; t += tstep) {
    svg += fmt::format(
        "<line x1=\"{0:.2f}\" y1=\"{1:.2f}\" x2=\"{0:.2f}\" y2=\"{2:.2f}\" stroke=\"#ddd\"/>\n"
        "<text x=\"{0:.2f}\" y=\"{3:.2f}\" text-anchor=\"middle\">{4:g}</text>\n",
        px(t), kTop, kTop + ph, kTop + ph + 16, t);
  }
  svg += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n",
                     kLeft, kTop, pw, ph);

  if (!trace.empty()) {
    svg += "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\" points=\"";
    for (const auto& r : trace) svg += fmt::format("{:.2f},{:.2f} ", px(r.time_s), py(channel.value(r)));
    svg += "\"/>\n";
  }

  svg += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"middle\">time (s)</text>\n",
                     kLeft + pw / 2, kHeight - 10);
  svg += fmt::format(
      "<text x=\"16\" y=\"{0:.2f}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {0:.2f})\">{1}</text>\n",
      kTop + ph / 2, channel.label);
  svg += "</svg>\n";
  return svg;
}

std::vector<std::filesystem::path> write_plots(const Trace& trace, const std::filesystem::path& dir,
                                               std::string_view prefix) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error(fmt::format("cannot create '{}': {}", dir.string(), ec.message()));
  std::vector<std::filesystem::path> written;
  for (const PlotChannel& channel : plot_channels()) {
    const auto path = dir / fmt::format("{}{}.svg", prefix, channel.column);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(fmt::format("cannot open '{}' for writing", path.string()));
    out << render_svg(trace, channel);
    if (!out) throw std::runtime_error(fmt::format("write to '{}' failed", path.string()));
    written.push_back(path);
  }
  return written;
}

}  // namespace stimulheat
