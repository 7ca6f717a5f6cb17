#include "stimulheat/driver.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace stimulheat {

void DriverParams::validate() const {
  if (dac_bits < 1 || dac_bits > 16) throw std::invalid_argument("DriverParams: dac_bits must be in [1, 16]");
  if (!(i_max > 0.0)) throw std::invalid_argument("DriverParams: i_max must be > 0");
  if (!(supply_volts > 0.0)) throw std::invalid_argument("DriverParams: supply_volts must be > 0");
}

DriveOutput quantize(const CurrentRequest& request, const DriverParams& params) {
  const std::uint32_t full_scale = params.full_scale_code();
  const double magnitude = std::min(std::abs(request.current), params.i_max);
  // floor(x + 0.5): half codes round up.
  const auto code = static_cast<std::uint32_t>(
      std::min<double>(std::floor(magnitude / params.i_max * full_scale + 0.5), full_scale));
  const double amps = static_cast<double>(code) * params.i_max / full_scale;

  DriveOutput out;
  out.code = code;
  out.polarity = std::signbit(request.current) && code != 0 ? Polarity::Reverse : Polarity::Forward;
  out.current = out.polarity == Polarity::Reverse ? -amps : amps;
  out.saturated = request.saturated;
  return out;
}

DriveOutput compliance_check(const DriveOutput& output, const TedParams& ted, double t_abs,
                             double t_emit, const DriverParams& params) {
  if (output.current == 0.0) return output;

  // Voltage the bridge must supply in the direction of the current.
  const double sign = output.current > 0.0 ? 1.0 : -1.0;
  const double seebeck = sign * ted.seebeck_alpha * (t_emit - t_abs);
  const double required = std::abs(output.current) * ted.resistance_ohm + seebeck;
  if (required <= params.supply_volts) return output;

  const double limit = std::max(0.0, (params.supply_volts - seebeck) / ted.resistance_ohm);
  DriveOutput out = output;
  out.current = sign * std::min(limit, std::abs(output.current));
  out.compliance_limited = true;
  return out;
}

}  // namespace stimulheat
