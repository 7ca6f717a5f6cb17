#pragma once

#include <optional>

namespace stimulheat {

inline constexpr double kZeroCelsius = 273.15;

constexpr double to_kelvin(double celsius) { return celsius + kZeroCelsius; }
constexpr double to_celsius(double kelvin) { return kelvin - kZeroCelsius; }

/// Lumped parameters of the Peltier module.
struct TedParams {
  double seebeck_alpha = 0.028;  // V/K
  double resistance_ohm = 5.8;   // ohm
  double theta_m = 12.0;         // K/W, face-to-face thermal resistance

  /// Throws std::invalid_argument unless all three are strictly positive.
  void validate() const;
};

/// Thermal network around the module: absorbed face, emitted face and a skin
/// node, tied to body core and ambient boundary temperatures.
///
/// The defaults are fitted so the closed temperature loop slews at roughly
/// 2.25 C/s with the shipped PID gains. They are not measurements.
struct ThermalNetworkParams {
  double c_abs = 2.2;       // J/K
  double c_emit = 20.0;     // J/K, module hot side plus ceramic sink
  double c_skin = 20.0;     // J/K
  double r_contact = 6.0;   // K/W, absorbed face <-> skin
  double r_body = 8.0;      // K/W, skin <-> body core
  double r_sink = 8.0;      // K/W, emitted face <-> ambient
  // Puts the unpowered skin at 31 C: 31 + r_body * (31 - 23) / (r_contact + theta_m + r_sink).
  double t_core = to_kelvin(31.0 + 8.0 * 8.0 / 26.0);
  double t_ambient = to_kelvin(23.0);

  /// When set, the emitted face is pinned at this temperature (an ideal heat
  /// sink). Models the constant-T_e mitigation for hot-side saturation.
  std::optional<double> emit_hold_k;

  void validate() const;

  /// Core temperature that makes the unpowered skin node settle at
  /// `skin_k`, given the other network parameters and `ted.theta_m`.
  [[nodiscard]] double core_for_skin_equilibrium(double skin_k, const TedParams& ted) const;
};

struct PlantState {
  double t_abs = to_kelvin(31.0);   // absorbed (skin-side) face, K
  double t_emit = to_kelvin(31.0);  // emitted (heat-sink) face, K
  double t_skin = to_kelvin(31.0);
  double sim_time = 0.0;            // s

  [[nodiscard]] bool in_envelope() const;
};

inline constexpr double kEnvelopeMinK = 250.0;
inline constexpr double kEnvelopeMaxK = 400.0;
inline constexpr double kMaxPlantDt = 0.01;

/// Heat pumped out of the absorbed face (W). Positive cools the skin side.
///   Q1 = -(R/2) I^2 + alpha T_a I + (T_a - T_e) / theta_m
[[nodiscard]] double heat_flow_absorbed(const TedParams& ted, double t_abs, double t_emit,
                                        double current);

/// Electrical power drawn by the module: I^2 R + alpha (T_e - T_a) I.
/// Negative values mean the module generates against the drive.
[[nodiscard]] double electrical_power(const TedParams& ted, double t_abs, double t_emit,
                                      double current);

/// Heat rejected at the emitted face. Equals absorbed heat plus electrical power.
[[nodiscard]] double heat_flow_emitted(const TedParams& ted, double t_abs, double t_emit,
                                       double current);

/// Terminal voltage the module needs to carry `current`: I R + alpha (T_e - T_a).
[[nodiscard]] double terminal_voltage(const TedParams& ted, double t_abs, double t_emit,
                                      double current);

/// Largest absorbed heat reachable with |I| <= i_max. Q1 is concave in I, so
/// this is the vertex alpha T_a / R clamped to the current range.
[[nodiscard]] double max_cooling_heat(const TedParams& ted, double t_abs, double t_emit,
                                      double i_max);

/// Current at which max_cooling_heat is attained.
[[nodiscard]] double max_cooling_current(const TedParams& ted, double t_abs, double i_max);

/// Advances the network by one classic RK4 step of `dt` seconds with a
/// constant drive current. Throws std::invalid_argument for dt outside
/// (0, 0.01] and std::domain_error when the state leaves [250, 400] K.
[[nodiscard]] PlantState plant_step(const PlantState& state, const ThermalNetworkParams& net,
                                    const TedParams& ted, double current, double dt);

}  // namespace stimulheat
