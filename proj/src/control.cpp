#include "stimulheat/control.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

namespace stimulheat {

namespace {

constexpr std::array<std::string_view, 3> kModeNames{"off", "heat", "temp"};
constexpr std::array<std::string_view, 5> kLevelNames{"very-hot", "hot", "neutral", "cold",
                                                      "very-cold"};

std::string range_message(double min, double max, double value) {
  std::ostringstream os;
  os << "setpoint " << value << " outside [" << min << ", " << max << "]";
  return os.str();
}

double heat_residual(const TedParams& ted, double t_abs, double t_emit, double q_set, double i) {
  return std::abs(heat_flow_absorbed(ted, t_abs, t_emit, i) - q_set);
}

}  // namespace

std::string_view to_string(ControlMode mode) { return kModeNames.at(static_cast<std::size_t>(mode)); }
std::string_view to_string(Level level) { return kLevelNames.at(static_cast<std::size_t>(level)); }

std::optional<ControlMode> parse_mode(std::string_view text) {
  for (std::size_t i = 0; i < kModeNames.size(); ++i) {
    if (text == kModeNames[i]) return static_cast<ControlMode>(i);
  }
  if (text == "heat-flow" || text == "flow") return ControlMode::HeatFlow;
  if (text == "temperature") return ControlMode::Temperature;
  return std::nullopt;
}

std::optional<Level> parse_level(std::string_view text) {
  for (std::size_t i = 0; i < kLevelNames.size(); ++i) {
    if (text == kLevelNames[i]) return static_cast<Level>(i);
  }
  return std::nullopt;
}

RangeError::RangeError(double min, double max, double value)
    : std::out_of_range(range_message(min, max, value)), min_(min), max_(max), value_(value) {}

void PidParams::validate() const {
  if (!(kp >= 0.0) || !(ki >= 0.0) || !(kd >= 0.0)) {
    throw std::invalid_argument("PidParams: gains must be >= 0");
  }
  if (!(i_limit > 0.0)) throw std::invalid_argument("PidParams: i_limit must be > 0");
}

CurrentRequest current_for_heat(const TedParams& ted, double t_abs, double t_emit, double q_set,
                                double i_max) {
  // a I^2 + b I + c = 0
  const double a = -0.5 * ted.resistance_ohm;
  const double b = ted.seebeck_alpha * t_abs;
  const double c = (t_abs - t_emit) / ted.theta_m - q_set;
  const double disc = b * b - 4.0 * a * c;

  if (disc >= 0.0) {
    // Stable form: avoids cancellation in the small root.
    const double q = -0.5 * (b + std::copysign(std::sqrt(disc), b));
    std::array<double, 2> roots{q / a, q != 0.0 ? c / q : q / a};
    std::sort(roots.begin(), roots.end(),
              [](double x, double y) { return std::abs(x) < std::abs(y); });
    for (double root : roots) {
      if (std::abs(root) <= i_max) return {root, false};
    }
  }

  // Out of reach: best in-range approximation.
  const double vertex = max_cooling_current(ted, t_abs, i_max);
  if (q_set >= heat_flow_absorbed(ted, t_abs, t_emit, vertex)) return {vertex, true};
  const double lo = heat_residual(ted, t_abs, t_emit, q_set, -i_max);
  const double hi = heat_residual(ted, t_abs, t_emit, q_set, i_max);
  return {lo <= hi ? -i_max : i_max, true};
}

PidOutput pid_step(const PidParams& pid, double error, double prev_error, double integral, double dt,
                   double i_max) {
  if (!(dt > 0.0)) throw std::invalid_argument("pid_step: dt must be > 0");

  const double candidate = std::clamp(integral + pid.ki * error * dt, -pid.i_limit, pid.i_limit);
  const double derivative = pid.kd * (error - prev_error) / dt;
  const double u = pid.kp * error + candidate + derivative;
  const bool saturated = std::abs(u) > i_max;

  double next_integral = candidate;
  if (saturated && (candidate - integral) * u > 0.0) {
    // Pushing further into the rail: hold.
    next_integral = std::clamp(integral, -pid.i_limit, pid.i_limit);
  }
  return {{std::clamp(u, -i_max, i_max), saturated}, next_integral};
}

HeatSetpoint level_to_heat(Level level) {
  static constexpr std::array<double, 5> kWatts{-4.0, -2.0, 0.0, 2.0, 4.0};
  return {kWatts.at(static_cast<std::size_t>(level))};
}

TempSetpoint level_to_temp(Level level) {
  static constexpr std::array<double, 5> kCelsius{41.0, 38.0, 35.0, 32.0, 29.0};
  return {kCelsius.at(static_cast<std::size_t>(level))};
}

double clamp_setpoint(ControlMode mode, double raw) {
  switch (mode) {
    case ControlMode::HeatFlow:
      if (!(raw >= kHeatMinW && raw <= kHeatMaxW)) throw RangeError(kHeatMinW, kHeatMaxW, raw);
      return raw;
    case ControlMode::Temperature:
      if (!(raw >= kTempMinC && raw <= kTempMaxC)) throw RangeError(kTempMinC, kTempMaxC, raw);
      return raw;
    case ControlMode::Off:
      break;
  }
  throw std::invalid_argument("clamp_setpoint: no setpoint range in Off mode");
}

ControllerTick controller_tick(ControlMode mode, double setpoint, const ControllerInputs& measured,
                               const PidState& pid_state, const PidParams& pid, const TedParams& ted,
                               double dt, double i_max) {
  switch (mode) {
    case ControlMode::Off:
      return {{0.0, false}, PidState{}};
    case ControlMode::HeatFlow: {
      const double q_set = clamp_setpoint(mode, setpoint);
      return {current_for_heat(ted, measured.t_abs, measured.t_emit, q_set, i_max), PidState{}};
    }
    case ControlMode::Temperature: {
      const double target = to_kelvin(clamp_setpoint(mode, setpoint));
      const double error = target - measured.t_contact;
      const double prev = pid_state.prev_error.value_or(error);
      const PidOutput out = pid_step(pid, error, prev, pid_state.integral, dt, i_max);
      return {{-out.request.current, out.request.saturated}, PidState{out.integral, error}};
    }
  }
  throw std::invalid_argument("controller_tick: unknown mode");
}

}  // namespace stimulheat
