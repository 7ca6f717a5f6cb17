#include "stimulheat/device.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>
#include <stdexcept>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

namespace stimulheat {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

bool is_integer(double x, double tol = 1e-9) { return std::abs(x - std::round(x)) <= tol * std::max(1.0, std::abs(x)); }

// ptree's defaulted get() silently falls back on unparsable values.
template <class T>
std::optional<T> read_optional(const boost::property_tree::ptree& tree, const std::string& key) {
  const auto child = tree.get_child_optional(key);
  if (!child) return std::nullopt;
  if (auto value = child->get_value_optional<T>()) return *value;
  throw std::runtime_error(fmt::format("{}: invalid value '{}'", key, child->data()));
}

template <class T>
T read(const boost::property_tree::ptree& tree, const std::string& key, T fallback) {
  return read_optional<T>(tree, key).value_or(fallback);
}

}  // namespace

void DeviceConfig::validate() const {
  ted.validate();
  network.validate();
  driver.validate();
  pid.validate();
  if (!(sim_dt > 0.0) || sim_dt > kMaxPlantDt) throw std::invalid_argument("sim_dt must lie in (0, 0.01] s");
  if (control_hz <= 0 || telemetry_hz <= 0) throw std::invalid_argument("rates must be > 0");
  if (!is_integer(1.0 / (sim_dt * control_hz))) {
    throw std::invalid_argument("control period must be a whole number of sim steps");
  }
  if (telemetry_hz > control_hz || control_hz % telemetry_hz != 0) {
    throw std::invalid_argument("telemetry_hz must divide control_hz");
  }
  if (!(battery_capacity_mah > 0.0) || !(battery_volts > 0.0) || !(quiescent_watts >= 0.0)) {
    throw std::invalid_argument("battery settings must be positive");
  }
  if (!(sensor_noise_std >= 0.0)) throw std::invalid_argument("sensor_noise_std must be >= 0");

  // The generic +-4 W levels must be reachable at zero gradient.
  const double skin = to_kelvin(31.0);
  const double level = level_to_heat(Level::VeryCold).watts;
  if (max_cooling_heat(ted, skin, skin, driver.i_max) < level ||
      heat_flow_absorbed(ted, skin, skin, -driver.i_max) > -level) {
    throw std::invalid_argument("TED parameters cannot reach the +-4 W levels within i_max");
  }
}

int DeviceConfig::steps_per_tick() const {
  return static_cast<int>(std::lround(1.0 / (sim_dt * control_hz)));
}

int DeviceConfig::ticks_per_telemetry() const { return control_hz / telemetry_hz; }

DeviceConfig load_config(const std::filesystem::path& path) {
  namespace pt = boost::property_tree;
  std::ifstream in(path);
  if (!in) throw std::runtime_error(fmt::format("{}: cannot open config file", path.string()));

  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw std::runtime_error(fmt::format("{}:{}: {}", path.string(), e.line(), e.message()));
  }

  DeviceConfig c;
  try {
    c.ted.seebeck_alpha = read(tree, "ted.alpha", c.ted.seebeck_alpha);
    c.ted.resistance_ohm = read(tree, "ted.resistance", c.ted.resistance_ohm);
    c.ted.theta_m = read(tree, "ted.theta_m", c.ted.theta_m);

    auto& n = c.network;
    n.c_abs = read(tree, "network.c_abs", n.c_abs);
    n.c_emit = read(tree, "network.c_emit", n.c_emit);
    n.c_skin = read(tree, "network.c_skin", n.c_skin);
    n.r_contact = read(tree, "network.r_contact", n.r_contact);
    n.r_body = read(tree, "network.r_body", n.r_body);
    n.r_sink = read(tree, "network.r_sink", n.r_sink);
    n.t_ambient = to_kelvin(read(tree, "network.t_ambient_c", to_celsius(n.t_ambient)));
    if (auto hold = read_optional<double>(tree, "network.emit_hold_c")) n.emit_hold_k = to_kelvin(*hold);
    if (auto core = read_optional<double>(tree, "network.t_core_c")) {
      n.t_core = to_kelvin(*core);
    } else if (auto skin = read_optional<double>(tree, "network.skin_rest_c")) {
      n.t_core = n.core_for_skin_equilibrium(to_kelvin(*skin), c.ted);
    }

    c.driver.dac_bits = read(tree, "driver.dac_bits", c.driver.dac_bits);
    c.driver.i_max = read(tree, "driver.i_max", c.driver.i_max);
    c.driver.supply_volts = read(tree, "driver.supply_volts", c.driver.supply_volts);

    c.pid.kp = read(tree, "pid.kp", c.pid.kp);
    c.pid.ki = read(tree, "pid.ki", c.pid.ki);
    c.pid.kd = read(tree, "pid.kd", c.pid.kd);
    c.pid.i_limit = read(tree, "pid.i_limit", c.pid.i_limit);

    c.sim_dt = read(tree, "sim.dt", c.sim_dt);
    c.control_hz = read(tree, "sim.control_hz", c.control_hz);
    c.telemetry_hz = read(tree, "sim.telemetry_hz", c.telemetry_hz);
    c.sensor_noise_std = read(tree, "sim.sensor_noise_std", c.sensor_noise_std);
    c.seed = read(tree, "sim.seed", c.seed);
    c.realtime = read(tree, "sim.realtime", c.realtime);

    c.battery_capacity_mah = read(tree, "battery.capacity_mah", c.battery_capacity_mah);
    c.battery_volts = read(tree, "battery.volts", c.battery_volts);
    c.quiescent_watts = read(tree, "battery.quiescent_watts", c.quiescent_watts);

    c.tcp_port = read(tree, "service.tcp_port", c.tcp_port);
    c.ws_port = read(tree, "service.ws_port", c.ws_port);
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(fmt::format("{}: {}", path.string(), e.what()));
  }

  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(fmt::format("{}: {}", path.string(), e.what()));
  }
  return c;
}

void write_config(std::ostream& out, const DeviceConfig& c) {
  fmt::print(out, "[ted]\nalpha = {}\nresistance = {}\ntheta_m = {}\n\n", c.ted.seebeck_alpha,
             c.ted.resistance_ohm, c.ted.theta_m);
  const auto& n = c.network;
  fmt::print(out,
             "[network]\nc_abs = {}\nc_emit = {}\nc_skin = {}\nr_contact = {}\nr_body = {}\nr_sink = {}\n"
             "t_core_c = {}\nt_ambient_c = {}\n",
             n.c_abs, n.c_emit, n.c_skin, n.r_contact, n.r_body, n.r_sink, to_celsius(n.t_core),
             to_celsius(n.t_ambient));
  if (n.emit_hold_k) fmt::print(out, "emit_hold_c = {}\n", to_celsius(*n.emit_hold_k));
  fmt::print(out, "\n[driver]\ndac_bits = {}\ni_max = {}\nsupply_volts = {}\n\n", c.driver.dac_bits,
             c.driver.i_max, c.driver.supply_volts);
  fmt::print(out, "[pid]\nkp = {}\nki = {}\nkd = {}\ni_limit = {}\n\n", c.pid.kp, c.pid.ki, c.pid.kd,
             c.pid.i_limit);
  fmt::print(out, "[sim]\ndt = {}\ncontrol_hz = {}\ntelemetry_hz = {}\nsensor_noise_std = {}\nseed = {}\nrealtime = {}\n\n",
             c.sim_dt, c.control_hz, c.telemetry_hz, c.sensor_noise_std, c.seed, c.realtime);
  fmt::print(out, "[battery]\ncapacity_mah = {}\nvolts = {}\nquiescent_watts = {}\n\n",
             c.battery_capacity_mah, c.battery_volts, c.quiescent_watts);
  fmt::print(out, "[service]\ntcp_port = {}\nws_port = {}\n", c.tcp_port, c.ws_port);
}

BatteryState step_battery(const BatteryState& state, double power_watts, double dt, double volts) {
  if (!(power_watts >= 0.0)) throw std::invalid_argument("step_battery: power must be >= 0");
  if (!(dt > 0.0)) throw std::invalid_argument("step_battery: dt must be > 0");
  BatteryState next = state;
  const double drawn_mah = power_watts / volts * dt * 1000.0 / 3600.0;
  next.charge_mah = std::max(0.0, state.charge_mah - drawn_mah);
  return next;
}

PlantState resting_state(const ThermalNetworkParams& net, const TedParams& ted) {
  const double sink = net.emit_hold_k.value_or(net.t_ambient);
  const double path = net.r_body + net.r_contact + ted.theta_m + (net.emit_hold_k ? 0.0 : net.r_sink);
  const double flow = (net.t_core - sink) / path;
  PlantState s;
  s.t_skin = net.t_core - flow * net.r_body;
  s.t_abs = s.t_skin - flow * net.r_contact;
  s.t_emit = net.emit_hold_k ? *net.emit_hold_k : s.t_abs - flow * ted.theta_m;
  s.sim_time = 0.0;
  return s;
}

Device::Device(DeviceConfig config)
    : config_(std::move(config)), rng_(config_.seed) {
  config_.validate();
  plant_ = resting_state(config_.network, config_.ted);
  battery_ = {config_.battery_capacity_mah, config_.battery_capacity_mah};
  last_.t_abs_c = to_celsius(plant_.t_abs);
  last_.t_emit_c = to_celsius(plant_.t_emit);
  last_.t_skin_c = to_celsius(plant_.t_skin);
  last_.battery_pct = battery_.percent();
  last_.mode = mode_;
}

double Device::time_s() const { return static_cast<double>(ticks_) / config_.control_hz; }

double Device::active_setpoint(ControlMode mode) const {
  switch (mode) {
    case ControlMode::HeatFlow: return heat_setpoint_w_;
    case ControlMode::Temperature: return temp_setpoint_c_;
    case ControlMode::Off: break;
  }
  return 0.0;
}

std::int32_t Device::setpoint_raw(ControlMode mode) const {
  switch (mode) {
    case ControlMode::HeatFlow: return protocol::heat_setpoint_watts(heat_setpoint_w_).milliwatts;
    case ControlMode::Temperature: return protocol::temp_setpoint_celsius(temp_setpoint_c_).centi_celsius;
    case ControlMode::Off: break;
  }
  return 0;
}

protocol::Ack Device::ack(protocol::MsgType command) const {
  protocol::Ack a;
  a.command = command;
  a.mode = static_cast<std::uint8_t>(mode_);
  a.enabled = enabled_;
  a.setpoint_raw = setpoint_raw(mode_);
  if (command == protocol::MsgType::SetHeatSetpoint) a.setpoint_raw = setpoint_raw(ControlMode::HeatFlow);
  if (command == protocol::MsgType::SetTempSetpoint) a.setpoint_raw = setpoint_raw(ControlMode::Temperature);
  a.pid = protocol::to_wire(config_.pid);
  return a;
}

protocol::Nack Device::range_nack(protocol::MsgType command) {
  using protocol::MsgType;
  protocol::Nack n;
  n.command = command;
  n.reason = protocol::NackReason::RangeViolation;
  switch (command) {
    case MsgType::SetHeatSetpoint:
      n.min_raw = protocol::heat_setpoint_watts(kHeatMinW).milliwatts;
      n.max_raw = protocol::heat_setpoint_watts(kHeatMaxW).milliwatts;
      break;
    case MsgType::SetTempSetpoint:
      n.min_raw = protocol::temp_setpoint_celsius(kTempMinC).centi_celsius;
      n.max_raw = protocol::temp_setpoint_celsius(kTempMaxC).centi_celsius;
      break;
    case MsgType::SetMode: n.max_raw = static_cast<std::int32_t>(ControlMode::Temperature); break;
    case MsgType::SetLevel: n.max_raw = static_cast<std::int32_t>(Level::VeryCold); break;
    case MsgType::Enable: n.max_raw = 1; break;
    case MsgType::SetPid: n.max_raw = std::numeric_limits<std::int32_t>::max(); break;
    default: n.reason = protocol::NackReason::Rejected; break;
  }
  return n;
}

void Device::reset_loop() { pid_state_ = PidState{}; }

protocol::Message Device::apply(const protocol::Message& command) {
  using protocol::MsgType;
  const MsgType type = protocol::type_of(command);
  auto rejected = [type] {
    protocol::Nack n;
    n.command = type;
    n.reason = protocol::NackReason::Rejected;
    return n;
  };

  return std::visit(
      overloaded{
          [&](const protocol::Enable& m) -> protocol::Message {
            if (m.on && battery_.empty()) return rejected();
            if (m.on != enabled_) reset_loop();
            enabled_ = m.on;
            return ack(type);
          },
          [&](const protocol::SetMode& m) -> protocol::Message {
            if (static_cast<std::uint8_t>(m.mode) > static_cast<std::uint8_t>(ControlMode::Temperature)) {
              return range_nack(type);
            }
            if (m.mode != mode_) reset_loop();
            mode_ = m.mode;
            return ack(type);
          },
          [&](const protocol::SetLevel& m) -> protocol::Message {
            if (static_cast<std::uint8_t>(m.level) > static_cast<std::uint8_t>(Level::VeryCold)) {
              return range_nack(type);
            }
            if (mode_ == ControlMode::HeatFlow) {
              heat_setpoint_w_ = level_to_heat(m.level).watts;
            } else if (mode_ == ControlMode::Temperature) {
              temp_setpoint_c_ = level_to_temp(m.level).celsius;
            } else {
              return rejected();
            }
            return ack(type);
          },
          [&](const protocol::SetHeatSetpoint& m) -> protocol::Message {
            try {
              heat_setpoint_w_ = clamp_setpoint(ControlMode::HeatFlow, m.milliwatts / protocol::kMilliwattsPerWatt);
            } catch (const RangeError&) {
              return range_nack(type);
            }
            return ack(type);
          },
          [&](const protocol::SetTempSetpoint& m) -> protocol::Message {
            try {
              temp_setpoint_c_ =
                  clamp_setpoint(ControlMode::Temperature, m.centi_celsius / protocol::kCentiPerDegree);
            } catch (const RangeError&) {
              return range_nack(type);
            }
            return ack(type);
          },
          [&](const protocol::SetPid& m) -> protocol::Message {
            const PidParams pid = protocol::from_wire(m);
            try {
              pid.validate();
            } catch (const std::invalid_argument&) {
              return range_nack(type);
            }
            config_.pid = pid;
            return ack(type);
          },
          [&](const protocol::GetStatus&) -> protocol::Message { return telemetry(); },
          [&](const protocol::GetDeviceInfo&) -> protocol::Message { return device_info(); },
          [&](const auto&) -> protocol::Message { return rejected(); },
      },
      command);
}

TraceRecord Device::tick() {
  const auto& ted = config_.ted;
  const auto& drv = config_.driver;

  if (battery_.empty() && enabled_) {
    enabled_ = false;
    reset_loop();
  }
  const ControlMode mode = enabled_ ? mode_ : ControlMode::Off;

  ControllerInputs sensors{plant_.t_abs, plant_.t_emit, plant_.t_abs};
  if (config_.sensor_noise_std > 0.0) {
    sensors.t_abs += config_.sensor_noise_std * noise_(rng_);
    sensors.t_emit += config_.sensor_noise_std * noise_(rng_);
    sensors.t_contact = sensors.t_abs;
  }

  const ControllerTick control = controller_tick(mode, active_setpoint(mode), sensors, pid_state_,
                                                 config_.pid, ted, config_.control_period(), drv.i_max);
  pid_state_ = control.pid_state;
  const DriveOutput drive = quantize(control.request, drv);

  TraceRecord rec;
  rec.time_s = time_s();
  rec.t_abs_c = to_celsius(plant_.t_abs);
  rec.t_emit_c = to_celsius(plant_.t_emit);
  rec.t_skin_c = to_celsius(plant_.t_skin);
  rec.setpoint = active_setpoint(mode);
  rec.mode = mode;
  rec.enabled = enabled_;

  // The current source reacts to compliance within a sim step, far faster
  // than the thermal dynamics, so the limit is re-evaluated every step.
  const int steps = config_.steps_per_tick();
  for (int i = 0; i < steps; ++i) {
    const DriveOutput out = compliance_check(drive, ted, plant_.t_abs, plant_.t_emit, drv);
    const double power = electrical_power(ted, plant_.t_abs, plant_.t_emit, out.current);
    const double volts = std::abs(terminal_voltage(ted, plant_.t_abs, plant_.t_emit, out.current));
    if (i == 0) {
      rec.current_a = out.current;
      rec.heat_w = heat_flow_absorbed(ted, plant_.t_abs, plant_.t_emit, out.current);
    }
    rec.compliance_limited = rec.compliance_limited || out.compliance_limited;
    rec.max_power_w = std::max(rec.max_power_w, power);
    if (out.current != 0.0) rec.max_voltage_v = std::max(rec.max_voltage_v, volts);

    // The driver cannot push charge back into the battery.
    const double drawn = std::max(0.0, power) + config_.quiescent_watts;
    battery_ = step_battery(battery_, drawn, config_.sim_dt, config_.battery_volts);
    energy_j_ += drawn * config_.sim_dt;
    plant_ = plant_step(plant_, config_.network, ted, out.current, config_.sim_dt);
  }
  rec.saturated = drive.saturated || rec.compliance_limited;
  rec.battery_pct = battery_.percent();

  ++ticks_;
  plant_.sim_time = time_s();
  last_ = rec;
  return rec;
}

protocol::Telemetry Device::telemetry() const {
  using protocol::to_fixed;
  protocol::Telemetry t;
  t.timestamp_ms = static_cast<std::uint32_t>(std::llround(last_.time_s * 1000.0));
  t.t_abs_cc = to_fixed<std::int16_t>(last_.t_abs_c, protocol::kCentiPerDegree);
  t.t_emit_cc = to_fixed<std::int16_t>(last_.t_emit_c, protocol::kCentiPerDegree);
  t.t_contact_cc = to_fixed<std::int16_t>(last_.t_skin_c, protocol::kCentiPerDegree);
  t.current_ma = to_fixed<std::int16_t>(last_.current_a, protocol::kMilliampsPerAmp);
  t.heat_mw = to_fixed<std::int16_t>(last_.heat_w, protocol::kMilliwattsPerWatt);
  t.setpoint_raw = setpoint_raw(last_.mode);
  t.mode = static_cast<std::uint8_t>(last_.mode);
  t.flags = static_cast<std::uint8_t>((last_.saturated ? protocol::flags::kSaturated : 0) |
                                      (last_.compliance_limited ? protocol::flags::kComplianceLimited : 0) |
                                      (enabled_ ? protocol::flags::kEnabled : 0));
  t.battery_pct = static_cast<std::uint8_t>(std::clamp(std::ceil(battery_.percent()), 0.0, 100.0));
  return t;
}

protocol::DeviceInfo Device::device_info() const {
  return {protocol::kProtocolVersion, std::string(kDeviceName), std::string(kDeviceSerial)};
}

double Scenario::duration_s() const {
  double total = 0.0;
  for (const Hold& h : holds) total += h.duration_s;
  return total;
}

void Scenario::validate(const DeviceConfig& config) const {
  if (holds.empty()) throw std::invalid_argument("scenario '" + name + "' has no holds");
  for (const Hold& h : holds) {
    if (!(h.duration_s > 0.0) || !is_integer(h.duration_s * config.control_hz)) {
      throw std::invalid_argument(
          fmt::format("scenario '{}': hold duration {} s is not a positive whole number of control periods",
                      name, h.duration_s));
    }
    if (h.mode != ControlMode::Off) {
      try {
        (void)clamp_setpoint(h.mode, h.setpoint);
      } catch (const RangeError& e) {
        throw std::invalid_argument(fmt::format("scenario '{}': {}", name, e.what()));
      }
    }
  }
}

std::vector<std::string> builtin_scenario_names() {
  return {"charac-heat", "charac-temp", "user-study", "very-cold-hold"};
}

Scenario builtin_scenario(std::string_view name) {
  constexpr double kStep = 5.0;
  Scenario s;
  s.name = std::string(name);
  if (name == "charac-heat") {
    s.holds.push_back({kStep, ControlMode::HeatFlow, 0.0, false});
    for (double q : {-3.0, -2.0, -1.0, 1.0, 2.0, 3.0}) {
      s.holds.push_back({kStep, ControlMode::HeatFlow, q, true});
      s.holds.push_back({kStep, ControlMode::HeatFlow, 0.0, false});
    }
  } else if (name == "charac-temp") {
    s.holds.push_back({kStep, ControlMode::Temperature, 31.0, false});
    for (double t : {25.0, 27.0, 29.0, 34.0, 37.0, 40.0}) {
      s.holds.push_back({kStep, ControlMode::Temperature, t, true});
      s.holds.push_back({kStep, ControlMode::Temperature, 31.0, false});
    }
  } else if (name == "user-study") {
    // 5 s neutral wait before each 5 s stimulus.
    for (double q : {2.0, 0.0, -2.0, 2.0, -2.0, 2.0, 0.0, -2.0, 0.0, -2.0, 2.0, 0.0, 2.0, -2.0, 2.0,
                     0.0, -2.0, 0.0}) {
      s.holds.push_back({kStep, ControlMode::HeatFlow, 0.0, false});
      s.holds.push_back({kStep, ControlMode::HeatFlow, q, true});
    }
  } else if (name == "very-cold-hold") {
    s.holds.push_back({kStep, ControlMode::HeatFlow, 0.0, false});
    s.holds.push_back({300.0, ControlMode::HeatFlow, level_to_heat(Level::VeryCold).watts, true});
  } else {
    throw std::invalid_argument("unknown scenario '" + std::string(name) + "'");
  }
  return s;
}

Trace run_scenario(const DeviceConfig& config, const Scenario& scenario) {
  scenario.validate(config);
  Device device(config);
  (void)device.apply(protocol::Enable{true});

  Trace trace;
  trace.reserve(static_cast<std::size_t>(std::llround(scenario.duration_s() * config.control_hz)));
  for (const Hold& hold : scenario.holds) {
    (void)device.apply(protocol::SetMode{hold.mode});
    if (hold.mode == ControlMode::HeatFlow) {
      (void)device.apply(protocol::heat_setpoint_watts(hold.setpoint));
    } else if (hold.mode == ControlMode::Temperature) {
      (void)device.apply(protocol::temp_setpoint_celsius(hold.setpoint));
    }
    const auto ticks = std::llround(hold.duration_s * config.control_hz);
    for (long long i = 0; i < ticks; ++i) trace.push_back(device.tick());
  }
  return trace;
}

}  // namespace stimulheat
