#pragma once

#include <cstdint>

#include "stimulheat/control.hpp"
#include "stimulheat/ted.hpp"

namespace stimulheat {

/// Continuous current source: a DAC sets the magnitude, an H-bridge the sign.
struct DriverParams {
  int dac_bits = 8;
  double i_max = 0.6;         // A, full-scale current
  double supply_volts = 3.7;  // V, compliance limit

  void validate() const;
  [[nodiscard]] std::uint32_t full_scale_code() const { return (1u << dac_bits) - 1u; }
  [[nodiscard]] double lsb() const { return i_max / full_scale_code(); }
};

enum class Polarity : std::uint8_t { Forward, Reverse };

struct DriveOutput {
  double current = 0.0;  // A, signed
  Polarity polarity = Polarity::Forward;
  std::uint32_t code = 0;
  bool saturated = false;            // the controller hit its current limit
  bool compliance_limited = false;   // the supply could not sustain the current
};

/// Rounds |request| to the nearest DAC code (half rounds up) over [0, i_max].
/// Negative requests select Reverse polarity. Idempotent.
[[nodiscard]] DriveOutput quantize(const CurrentRequest& request, const DriverParams& params);

/// Cuts the current back to the largest magnitude whose terminal voltage
/// |I R + alpha (T_e - T_a)| fits under the supply, and flags it. Never raises
/// |current|.
[[nodiscard]] DriveOutput compliance_check(const DriveOutput& output, const TedParams& ted,
                                           double t_abs, double t_emit, const DriverParams& params);

}  // namespace stimulheat
