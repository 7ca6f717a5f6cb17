#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "stimulheat/control.hpp"
#include "stimulheat/driver.hpp"
#include "stimulheat/protocol.hpp"
#include "stimulheat/ted.hpp"

namespace stimulheat {

inline constexpr std::string_view kDeviceName = "StimulHeat-SIM";
inline constexpr std::string_view kDeviceSerial = "0001";

struct DeviceConfig {
  TedParams ted;
  ThermalNetworkParams network;
  DriverParams driver;
  PidParams pid;

  double sim_dt = 0.001;    // s
  int control_hz = 100;
  int telemetry_hz = 10;

  double battery_capacity_mah = 850.0;
  double battery_volts = 3.7;
  double quiescent_watts = 0.05;

  double sensor_noise_std = 0.0;  // K
  std::uint64_t seed = 1;
  bool realtime = true;

  std::uint16_t tcp_port = 7453;
  std::uint16_t ws_port = 7454;

  /// Throws std::invalid_argument on inconsistent settings. Also checks
  /// that the module can reach the +-4 W levels within i_max at zero
  /// gradient.
  void validate() const;

  [[nodiscard]] int steps_per_tick() const;
  [[nodiscard]] int ticks_per_telemetry() const;
  [[nodiscard]] double control_period() const { return 1.0 / control_hz; }
};

/// Reads an INI file (sections ted, network, driver, pid, sim, battery,
/// service) on top of the defaults. Temperatures are in degrees C.
/// Throws std::runtime_error with the path on I/O or parse errors.
[[nodiscard]] DeviceConfig load_config(const std::filesystem::path& path);
void write_config(std::ostream& out, const DeviceConfig& config);

struct BatteryState {
  double capacity_mah = 850.0;
  double charge_mah = 850.0;

  [[nodiscard]] double percent() const { return 100.0 * charge_mah / capacity_mah; }
  [[nodiscard]] bool empty() const { return charge_mah <= 0.0; }
};

/// Coulomb counting: removes power / volts * dt of charge, floored at zero.
[[nodiscard]] BatteryState step_battery(const BatteryState& state, double power_watts, double dt,
                                        double volts);

/// The unpowered steady state of the network: no current, skin at its
/// natural equilibrium.
[[nodiscard]] PlantState resting_state(const ThermalNetworkParams& net, const TedParams& ted);

/// One row per control tick. Temperatures are the true plant values at the
/// start of the tick; current and heat are what the driver delivered then.
struct TraceRecord {
  double time_s = 0.0;
  double t_abs_c = 0.0;
  double t_emit_c = 0.0;
  double t_skin_c = 0.0;
  double current_a = 0.0;
  double heat_w = 0.0;
  double setpoint = 0.0;  // W or degrees C depending on mode
  ControlMode mode = ControlMode::Off;
  bool saturated = false;
  double battery_pct = 100.0;

  // Not part of the CSV.
  bool compliance_limited = false;
  bool enabled = false;
  double max_power_w = 0.0;    // over the tick's sim steps
  double max_voltage_v = 0.0;  // |terminal voltage|, over the tick's sim steps
};

using Trace = std::vector<TraceRecord>;

/// Device emulator: plant, controller and driver advanced in lockstep.
/// Not thread-safe; the service owns one instance on its simulation thread.
class Device {
 public:
  explicit Device(DeviceConfig config);

  /// Applies a command between ticks. Returns the reply frame content: Ack,
  /// Nack, Telemetry (GetStatus) or DeviceInfo.
  protocol::Message apply(const protocol::Message& command);

  /// Advances one control period.
  TraceRecord tick();

  [[nodiscard]] protocol::Telemetry telemetry() const;
  [[nodiscard]] protocol::DeviceInfo device_info() const;

  [[nodiscard]] const DeviceConfig& config() const { return config_; }
  [[nodiscard]] const PlantState& plant() const { return plant_; }
  [[nodiscard]] const BatteryState& battery() const { return battery_; }
  [[nodiscard]] const TraceRecord& last() const { return last_; }
  [[nodiscard]] ControlMode mode() const { return mode_; }
  [[nodiscard]] bool enabled() const { return enabled_; }
  [[nodiscard]] double heat_setpoint_w() const { return heat_setpoint_w_; }
  [[nodiscard]] double temp_setpoint_c() const { return temp_setpoint_c_; }
  [[nodiscard]] const PidParams& pid() const { return config_.pid; }
  [[nodiscard]] std::uint64_t ticks() const { return ticks_; }
  [[nodiscard]] double time_s() const;

  /// Total energy drawn from the battery so far (J).
  [[nodiscard]] double energy_drawn_j() const { return energy_j_; }

  /// Nack for a command whose decoded value broke its legal range.
  [[nodiscard]] static protocol::Nack range_nack(protocol::MsgType command);

 private:
  [[nodiscard]] double active_setpoint(ControlMode mode) const;
  [[nodiscard]] std::int32_t setpoint_raw(ControlMode mode) const;
  [[nodiscard]] protocol::Ack ack(protocol::MsgType command) const;
  void reset_loop();

  DeviceConfig config_;
  PlantState plant_;
  BatteryState battery_;
  PidState pid_state_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> noise_{0.0, 1.0};

  ControlMode mode_ = ControlMode::HeatFlow;
  bool enabled_ = false;
  double heat_setpoint_w_ = 0.0;
  double temp_setpoint_c_ = 35.0;

  std::uint64_t ticks_ = 0;
  double energy_j_ = 0.0;
  TraceRecord last_;
};

/// A constant setpoint held for a duration.
struct Hold {
  double duration_s = 0.0;
  ControlMode mode = ControlMode::HeatFlow;
  double setpoint = 0.0;  // W or degrees C
  bool stimulus = false;  // false for baselines between stimuli
};

struct Scenario {
  std::string name;
  std::vector<Hold> holds;

  [[nodiscard]] double duration_s() const;
  /// Throws std::invalid_argument for empty scripts, non-positive or
  /// off-grid durations and out-of-range setpoints.
  void validate(const DeviceConfig& config) const;
};

/// Names accepted by builtin_scenario.
[[nodiscard]] std::vector<std::string> builtin_scenario_names();

/// charac-heat, charac-temp, user-study, very-cold-hold. Throws
/// std::invalid_argument for unknown names.
[[nodiscard]] Scenario builtin_scenario(std::string_view name);

/// Runs the script on a fresh device, enabled from t = 0, one record per
/// control tick. Never sleeps.
[[nodiscard]] Trace run_scenario(const DeviceConfig& config, const Scenario& scenario);

}  // namespace stimulheat
