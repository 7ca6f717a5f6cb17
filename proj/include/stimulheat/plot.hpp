#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "stimulheat/device.hpp"

namespace stimulheat {

struct PlotChannel {
  std::string_view column;  // trace column name, also the file stem
  std::string_view label;   // y axis label with unit
  double (*value)(const TraceRecord&);
};

/// Channels plotted by write_plots, one SVG each.
[[nodiscard]] const std::vector<PlotChannel>& plot_channels();

/// Renders one channel as a standalone SVG line chart against time.
[[nodiscard]] std::string render_svg(const Trace& trace, const PlotChannel& channel);

/// Writes `<prefix><column>.svg` into `dir` for every channel and returns
/// the paths. Creates `dir` if needed.
std::vector<std::filesystem::path> write_plots(const Trace& trace, const std::filesystem::path& dir,
                                               std::string_view prefix = "");

}  // namespace stimulheat
