// Pass/fail run of the acceptance criteria. One PASS or FAIL line per
// criterion on stdout, details indented below it. Exit status is the
// number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "../support/oracles.hpp"
#include "../support/random.hpp"
#include "../support/messages.hpp"
#include "stimulheat/device.hpp"
#include "stimulheat/metrics.hpp"
#include "stimulheat/protocol.hpp"
#include "stimulheat/trace_io.hpp"

using namespace stimulheat;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void verdict(bool pass, const std::string& name, const std::vector<std::string>& details) {
  fmt::print("{} {}\n", pass ? "PASS" : "FAIL", name);
  for (const auto& d : details) fmt::print("    {}\n", d);
  std::fflush(stdout);
  if (!pass) ++failures;
}

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string csv_of(const Trace& trace) {
  std::ostringstream out;
  write_csv(out, trace);
  return out.str();
}

std::vector<StepMetrics> stimuli(const Trace& trace, const Scenario& scenario) {
  std::vector<StepMetrics> out;
  for (const auto& m : compute_metrics(trace, events_from_scenario(trace, scenario))) {
    if (m.event.stimulus) out.push_back(m);
  }
  return out;
}

// Every non-neutral level stepped to from neutral in one mode, 5 s each.
Scenario level_steps(ControlMode mode) {
  auto value = [mode](Level l) {
    return mode == ControlMode::HeatFlow ? level_to_heat(l).watts : level_to_temp(l).celsius;
  };
  Scenario s{mode == ControlMode::HeatFlow ? "levels-heat" : "levels-temp", {}};
  s.holds.push_back({5.0, mode, value(Level::Neutral), false});
  for (Level l : {Level::VeryHot, Level::Hot, Level::Cold, Level::VeryCold}) {
    s.holds.push_back({5.0, mode, value(l), true});
    s.holds.push_back({5.0, mode, value(Level::Neutral), false});
  }
  return s;
}

// Maximum electrical power and terminal voltage seen in a run.
struct Envelope {
  double power = 0.0;
  double volts = 0.0;
  void add(const TraceRecord& r) {
    power = std::max(power, r.max_power_w);
    volts = std::max(volts, r.max_voltage_v);
  }
};

struct BatteryRun {
  double hours = 0.0;
  Envelope envelope;
};

// Drives the device with +-9 W requests, flipping polarity every
// `flip_s` seconds (0 keeps `first` throughout), until the battery cuts out.
BatteryRun battery_run(const DeviceConfig& config, double first, double flip_s) {
  Device device(config);
  (void)device.apply(protocol::Enable{true});
  (void)device.apply(protocol::heat_setpoint_watts(first));
  const auto flip_ticks = static_cast<std::uint64_t>(std::llround(flip_s * config.control_hz));
  BatteryRun run;
  double sign = 1.0;
  while (device.enabled()) {
    if (flip_ticks > 0 && device.ticks() > 0 && device.ticks() % flip_ticks == 0) {
      sign = -sign;
      (void)device.apply(protocol::heat_setpoint_watts(sign * first));
    }
    run.envelope.add(device.tick());
    if (device.time_s() > 10 * 3600.0) break;
  }
  run.hours = device.time_s() / 3600.0;
  return run;
}

void inversion_oracle() {
  const auto start = Clock::now();
  stimulheat::testing::Gen gen(1001);
  constexpr int kCases = 2000;
  int grid_misses = 0;
  int achievable = 0;
  double worst_gap = 0.0;
  double worst_residual = 0.0;
  for (int n = 0; n < kCases; ++n) {
    const TedParams ted = gen.ted();
    const double ta = gen.uniform(280.0, 320.0);
    const double te = gen.uniform(280.0, 330.0);
    const double i_max = gen.uniform(0.1, 1.0);
    // Alternate between setpoints inside the reachable range and anywhere.
    const double q_set = n % 2 == 0 ? heat_flow_absorbed(ted, ta, te, gen.uniform(-i_max, i_max))
                                    : gen.uniform(-12.0, 12.0);
    const auto got = current_for_heat(ted, ta, te, q_set, i_max);
    const auto oracle = stimulheat::testing::grid_inverse(ted, ta, te, q_set, i_max);
    const double gap = std::abs(got.current - oracle.current);
    worst_gap = std::max(worst_gap, gap);
    if (gap > 1e-4 + 1e-12) ++grid_misses;

    const double q_lo = std::min(heat_flow_absorbed(ted, ta, te, -i_max), heat_flow_absorbed(ted, ta, te, i_max));
    const double q_hi = max_cooling_heat(ted, ta, te, i_max);
    if (q_set >= q_lo && q_set <= q_hi) {
      ++achievable;
      worst_residual = std::max(worst_residual, std::abs(heat_flow_absorbed(ted, ta, te, got.current) - q_set));
    }
  }
  const double elapsed = seconds_since(start);
  verdict(grid_misses == 0 && worst_residual <= 1e-9 && achievable >= 1000 && elapsed < 5.0,
          "inversion oracle equivalence",
          {fmt::format("{} cases ({} achievable), grid mismatches {}, worst |I - I_grid| {:.3e} A (limit 1e-4)",
                       kCases, achievable, grid_misses, worst_gap),
           fmt::format("worst residual on achievable setpoints {:.3e} W (limit 1e-9)", worst_residual),
           fmt::format("runtime {:.3f} s (limit 5 s)", elapsed)});
}

void heat_response(const DeviceConfig& config, Envelope& envelope) {
  const auto scenario = builtin_scenario("charac-heat");
  const auto start = Clock::now();
  const Trace trace = run_scenario(config, scenario);
  const double elapsed = seconds_since(start);
  for (const auto& r : trace) envelope.add(r);

  const double limit = 2 * config.control_period();
  bool pass = elapsed < 10.0;
  std::vector<std::string> details;
  for (const auto& m : compute_metrics(trace, events_from_scenario(trace, scenario))) {
    const bool ok = m.reached && m.response_time_s <= limit + 1e-9;
    pass = pass && ok;
    details.push_back(fmt::format("{:+.0f} -> {:+.0f} W: 90 % after {:.3f} s", m.event.from, m.event.to,
                                  m.response_time_s));
  }
  details.push_back(fmt::format("limit {:.3f} s; {:.0f} s simulated in {:.3f} s wall (limit 10 s)", limit,
                                scenario.duration_s(), elapsed));
  verdict(pass, "heat-mode response within two control periods", details);
}

void temperature_slew(const DeviceConfig& config, Envelope& envelope) {
  const auto scenario = builtin_scenario("charac-temp");
  const Trace trace = run_scenario(config, scenario);
  for (const auto& r : trace) envelope.add(r);
  bool pass = true;
  std::vector<std::string> details;
  for (const auto& m : stimuli(trace, scenario)) {
    const bool ok = m.slew_c_per_s >= 1.575 && m.slew_c_per_s <= 2.925 && m.steady_state_error < 0.5;
    pass = pass && ok;
    details.push_back(fmt::format("{:.0f} -> {:.0f} C: slew {:.3f} C/s, steady-state error {:.3f} C{}",
                                  m.event.from, m.event.to, m.slew_c_per_s, m.steady_state_error,
                                  ok ? "" : "  <-- out of bounds"));
  }
  details.push_back("bounds: slew in [1.575, 2.925] C/s, error < 0.5 C");
  verdict(pass, "PID slew reproduction", details);
}

void precision_ordering(const DeviceConfig& config, Envelope& envelope) {
  auto mean_normalized = [&](ControlMode mode, std::vector<std::string>& details) {
    const Scenario s = level_steps(mode);
    const Trace trace = run_scenario(config, s);
    for (const auto& r : trace) envelope.add(r);
    double sum = 0.0;
    const auto steps = stimuli(trace, s);
    for (const auto& m : steps) {
      sum += m.normalized_error();
      details.push_back(fmt::format("{} {:+g} -> {:+g}: error {:.4f}, normalized {:.5f}",
                                    mode == ControlMode::HeatFlow ? "heat" : "temp", m.event.from, m.event.to,
                                    m.steady_state_error, m.normalized_error()));
    }
    return sum / static_cast<double>(steps.size());
  };
  std::vector<std::string> details;
  const double heat = mean_normalized(ControlMode::HeatFlow, details);
  const double temp = mean_normalized(ControlMode::Temperature, details);
  details.push_back(fmt::format("mean normalized error over matched levels: heat {:.5f}, temperature {:.5f}", heat,
                                temp));

  // For reference only: the characterization scripts, whose step sizes differ between modes.
  auto characterization = [&](const char* name) {
    const auto s = builtin_scenario(name);
    const auto steps = stimuli(run_scenario(config, s), s);
    double sum = 0.0;
    for (const auto& m : steps) sum += m.normalized_error();
    return sum / static_cast<double>(steps.size());
  };
  details.push_back(fmt::format("info: charac-heat {:.5f} vs charac-temp {:.5f} (unmatched step sizes)",
                                characterization("charac-heat"), characterization("charac-temp")));
  verdict(heat < temp, "mode precision ordering (heat more precise than temperature)", details);
}

void hot_side_saturation(const DeviceConfig& config, Envelope& envelope) {
  const auto scenario = builtin_scenario("very-cold-hold");
  Device device(config);
  (void)device.apply(protocol::Enable{true});
  Trace hold;
  bool flagged = false;
  for (std::size_t h = 0; h < scenario.holds.size(); ++h) {
    const Hold& step = scenario.holds[h];
    (void)device.apply(protocol::SetMode{step.mode});
    (void)device.apply(protocol::heat_setpoint_watts(step.setpoint));
    const auto ticks = std::llround(step.duration_s * config.control_hz);
    for (long long i = 0; i < ticks; ++i) {
      const auto rec = device.tick();
      envelope.add(rec);
      if (h + 1 < scenario.holds.size()) continue;
      hold.push_back(rec);
      if (device.ticks() % config.ticks_per_telemetry() == 0) {
        flagged = flagged || (device.telemetry().flags & protocol::flags::kSaturated) != 0;
      }
    }
  }
  bool monotone = true;
  for (std::size_t i = 1; i < hold.size(); ++i) monotone = monotone && hold[i].t_emit_c >= hold[i - 1].t_emit_c;
  const double q0 = hold.front().heat_w;
  const double q_end = hold.back().heat_w;
  const double decline = 1.0 - q_end / q0;
  verdict(monotone && hold.back().t_emit_c > hold.front().t_emit_c && decline >= 0.25 && flagged,
          "hot-side saturation under a 300 s very-cold hold",
          {fmt::format("T_e {:.2f} -> {:.2f} C, monotone {}", hold.front().t_emit_c, hold.back().t_emit_c,
                       monotone ? "yes" : "no"),
           fmt::format("delivered heat {:.3f} -> {:.3f} W, decline {:.1f} % (limit >= 25 %)", q0, q_end,
                       100.0 * decline),
           fmt::format("saturation flag raised in telemetry: {}", flagged ? "yes" : "no")});
}

void battery_runtime(const DeviceConfig& config, Envelope& envelope) {
  const BatteryRun alternating = battery_run(config, 9.0, 5.0);
  const BatteryRun cooling = battery_run(config, 9.0, 0.0);
  const BatteryRun heating = battery_run(config, -9.0, 0.0);
  for (const auto* run : {&alternating, &cooling, &heating}) {
    envelope.power = std::max(envelope.power, run->envelope.power);
    envelope.volts = std::max(envelope.volts, run->envelope.volts);
  }
  verdict(alternating.hours >= 1.3 && alternating.hours <= 1.5, "battery runtime at sustained maximum drive",
          {fmt::format("+-9 W requests alternating every 5 s: {:.3f} h (bounds [1.3, 1.5] h)", alternating.hours),
           fmt::format("info: constant +9 W request {:.3f} h, constant -9 W request {:.3f} h", cooling.hours,
                       heating.hours)});
}

void protocol_robustness() {
  using namespace protocol;
  stimulheat::testing::Gen gen(1002);
  int round_trip_failures = 0;
  for (int n = 0; n < 10000; ++n) {
    const Message m = stimulheat::testing::random_message(gen);
    const auto r = decode(encode(m));
    const auto* back = std::get_if<Message>(&r);
    if (!back || !(*back == m)) ++round_trip_failures;
  }

  const Bytes reference = encode(Telemetry{123456, 2915, 3120, 3100, -345, 2000, 2000, 1, 0x05, 87});
  int undetected = 0;
  int flips = 0;
  for (std::size_t byte = 0; byte < reference.size(); ++byte) {
    for (int bit = 0; bit < 8; ++bit) {
      Bytes bad = reference;
      bad[byte] ^= static_cast<std::uint8_t>(1u << bit);
      ++flips;
      if (std::holds_alternative<Message>(decode(bad))) ++undetected;
    }
  }

  int resync_failures = 0;
  const Message probe = SetHeatSetpoint{-2000};
  const Bytes frame = encode(probe);
  for (int trial = 0; trial < 1000; ++trial) {
    Bytes stream;
    auto garbage = [&] {
      const int len = gen.integer(0, 64);
      for (int i = 0; i < len; ++i) {
        stream.push_back(gen.integer(0, 4) == 0 ? kMagic : static_cast<std::uint8_t>(gen.integer(0, 255)));
      }
    };
    garbage();
    stream.insert(stream.end(), frame.begin(), frame.end());
    garbage();
    stream.insert(stream.end(), frame.begin(), frame.end());
    stream.insert(stream.end(), kMaxPayload + kFrameOverhead, 0x00);
    StreamDecoder d;
    d.feed(stream);
    int found = 0;
    while (auto r = d.next()) {
      if (const auto* m = std::get_if<Message>(&*r)) found += *m == probe ? 1 : 100;
    }
    if (found != 2) ++resync_failures;
  }
  verdict(round_trip_failures == 0 && undetected == 0 && resync_failures == 0, "protocol robustness",
          {fmt::format("round trip: 10000 random messages, {} failures", round_trip_failures),
           fmt::format("single-bit corruptions: {} of {} undetected", undetected, flips),
           fmt::format("resynchronization: 1000 garbage-injected streams, {} failures", resync_failures)});
}

void determinism(const DeviceConfig& config) {
  std::vector<std::string> details;
  bool pass = true;
  for (const auto& name : builtin_scenario_names()) {
    const auto scenario = builtin_scenario(name);
    const std::string a = csv_of(run_scenario(config, scenario));
    const std::string b = csv_of(run_scenario(config, scenario));
    pass = pass && a == b;
    details.push_back(fmt::format("{}: {} bytes, {}", name, a.size(), a == b ? "identical" : "DIFFERENT"));
  }
  verdict(pass, "determinism of built-in scenarios", details);
}

}  // namespace

int main() {
  DeviceConfig config;
  config.realtime = false;
  config.sensor_noise_std = 0.0;

  Envelope envelope;
  inversion_oracle();
  heat_response(config, envelope);
  temperature_slew(config, envelope);
  precision_ordering(config, envelope);
  {
    const auto scenario = builtin_scenario("user-study");
    for (const auto& r : run_scenario(config, scenario)) envelope.add(r);
  }
  hot_side_saturation(config, envelope);
  battery_runtime(config, envelope);
  verdict(envelope.power <= 2.22 + 1e-9 && envelope.volts <= 3.7 + 1e-9, "power budget and supply compliance",
          {fmt::format("max electrical power {:.4f} W (limit 2.22 W)", envelope.power),
           fmt::format("max terminal voltage {:.4f} V (limit 3.7 V)", envelope.volts),
           "over charac-heat, charac-temp, user-study, very-cold-hold, level steps and battery runs"});
  protocol_robustness();
  determinism(config);

  fmt::print("{} criteria failed\n", failures);
  return failures;
}
