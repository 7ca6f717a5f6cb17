#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "stimulheat/ted.hpp"

namespace stimulheat {

enum class ControlMode : std::uint8_t { Off = 0, HeatFlow = 1, Temperature = 2 };

/// Generic stimulus levels, hottest first.
enum class Level : std::uint8_t { VeryHot = 0, Hot = 1, Neutral = 2, Cold = 3, VeryCold = 4 };

std::string_view to_string(ControlMode mode);
std::string_view to_string(Level level);
std::optional<ControlMode> parse_mode(std::string_view text);
std::optional<Level> parse_level(std::string_view text);

inline constexpr double kHeatMinW = -9.0;
inline constexpr double kHeatMaxW = 9.0;
inline constexpr double kTempMinC = 15.0;
inline constexpr double kTempMaxC = 42.0;

struct HeatSetpoint {
  double watts = 0.0;
};

struct TempSetpoint {
  double celsius = 35.0;
};

/// Thrown when a setpoint falls outside the legal range of its mode.
class RangeError : public std::out_of_range {
 public:
  RangeError(double min, double max, double value);

  double min() const { return min_; }
  double max() const { return max_; }
  double value() const { return value_; }

 private:
  double min_;
  double max_;
  double value_;
};

struct PidParams {
  double kp = 1.0;       // A/K
  double ki = 1.0;       // A/(K s)
  double kd = 0.0;       // A s/K
  double i_limit = 0.6;  // A, clamp on the integral term

  void validate() const;
};

struct PidState {
  double integral = 0.0;             // A
  std::optional<double> prev_error;  // K; empty right after a reset
};

struct CurrentRequest {
  double current = 0.0;  // A
  bool saturated = false;
};

struct PidOutput {
  CurrentRequest request;
  double integral = 0.0;
};

/// Inverts the absorbed-heat quadratic for the current that delivers `q_set`.
///
/// Among exact solutions inside [-i_max, i_max] the smallest |I| wins. When
/// the setpoint is out of reach the in-range current closest in heat is
/// returned and `saturated` is set; since Q1 is concave that is the clamped
/// vertex when asking for too much cooling, and the hotter bound when asking
/// for too much heating.
[[nodiscard]] CurrentRequest current_for_heat(const TedParams& ted, double t_abs, double t_emit,
                                              double q_set, double i_max);

/// One PID update with output clamp and conditional integration. The
/// integral only accumulates when that does not push further into an
/// already-saturated output.
[[nodiscard]] PidOutput pid_step(const PidParams& pid, double error, double prev_error,
                                 double integral, double dt, double i_max);

[[nodiscard]] HeatSetpoint level_to_heat(Level level);
[[nodiscard]] TempSetpoint level_to_temp(Level level);

/// Returns `raw` if it lies in the legal range of `mode`, throws RangeError
/// otherwise. Values are never coerced. Throws std::invalid_argument for Off.
[[nodiscard]] double clamp_setpoint(ControlMode mode, double raw);

struct ControllerInputs {
  double t_abs = 0.0;      // K
  double t_emit = 0.0;     // K
  double t_contact = 0.0;  // K, the regulated temperature
};

/// Setpoint in the unit of `mode`: watts for HeatFlow, degrees C for Temperature.
struct ControllerTick {
  CurrentRequest request;
  PidState pid_state;
};

/// Runs the active loop once. Temperature mode drives the contact face
/// toward the setpoint; warming needs negative current (Q1 < 0), so the PID
/// output is negated on its way to the driver.
[[nodiscard]] ControllerTick controller_tick(ControlMode mode, double setpoint,
                                             const ControllerInputs& measured,
                                             const PidState& pid_state, const PidParams& pid,
                                             const TedParams& ted, double dt, double i_max);

}  // namespace stimulheat
