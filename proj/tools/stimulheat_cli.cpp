// stimulheat: host-side client for a running emulator.
//
// Exit codes: 0 success, 1 usage or I/O error, 2 connection failure,
// 3 range violation, 4 bad trace.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include "stimulheat/client.hpp"
#include "stimulheat/device.hpp"
#include "stimulheat/metrics.hpp"
#include "stimulheat/plot.hpp"
#include "stimulheat/trace_io.hpp"
#include "stimulheat/vectors.hpp"

using namespace stimulheat;

namespace {

enum Exit { kOk = 0, kError = 1, kConnection = 2, kRange = 3, kBadTrace = 4 };

struct RangeViolation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct BadTrace : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string addr = "127.0.0.1:7453";
  std::string out;
  std::string scenario;
  std::string format;
  std::string config;
  double duration = 10.0;
  bool local = false;
  bool all_events = false;
};

std::string describe_nack(const protocol::Nack& n) {
  using protocol::MsgType;
  if (n.reason == protocol::NackReason::Rejected) {
    return fmt::format("{} rejected by the device", protocol::name_of(n.command));
  }
  switch (n.command) {
    case MsgType::SetHeatSetpoint:
      return fmt::format("heat setpoint out of range [{:g}, {:g}] W", n.min_raw / 1000.0, n.max_raw / 1000.0);
    case MsgType::SetTempSetpoint:
      return fmt::format("temperature setpoint out of range [{:g}, {:g}] C", n.min_raw / 100.0, n.max_raw / 100.0);
    default:
      return fmt::format("{} value out of range [{}, {}]", protocol::name_of(n.command), n.min_raw, n.max_raw);
  }
}

void print_ack(const protocol::Ack& a) {
  const auto mode = static_cast<ControlMode>(a.mode);
  std::string setpoint = "-";
  if (mode == ControlMode::HeatFlow) setpoint = fmt::format("{:g} W", a.setpoint_raw / 1000.0);
  if (mode == ControlMode::Temperature) setpoint = fmt::format("{:g} C", a.setpoint_raw / 100.0);
  const PidParams pid = protocol::from_wire(a.pid);
  fmt::print("ok {}: mode={} enabled={} setpoint={} pid=({:g}, {:g}, {:g}, {:g})\n", protocol::name_of(a.command),
             to_string(mode), a.enabled ? "on" : "off", setpoint, pid.kp, pid.ki, pid.kd, pid.i_limit);
}

void send(ClientSession& session, const protocol::Message& command) {
  const auto reply = session.command(command);
  if (const auto* nack = std::get_if<protocol::Nack>(&reply)) {
    if (nack->reason == protocol::NackReason::RangeViolation) throw RangeViolation(describe_nack(*nack));
    throw std::runtime_error(describe_nack(*nack));
  }
  if (const auto* ack = std::get_if<protocol::Ack>(&reply)) print_ack(*ack);
}

std::unique_ptr<ClientSession> open(const Options& o) {
  return ClientSession::connect(Address::parse(o.addr));
}

TraceFormat chosen_format(const Options& o) {
  if (o.format == "jsonl") return TraceFormat::Jsonl;
  if (o.format == "csv") return TraceFormat::Csv;
  return o.out.empty() ? TraceFormat::Csv : format_for(o.out);
}

// Streams rows to stdout, or to --out.
class TraceSink {
 public:
  explicit TraceSink(const Options& o) : format_(chosen_format(o)) {
    if (!o.out.empty()) {
      file_.open(o.out, std::ios::binary);
      if (!file_) throw std::runtime_error(fmt::format("cannot open '{}' for writing", o.out));
    }
    if (format_ == TraceFormat::Csv) write_csv_header(stream());
  }

  void operator()(const TraceRecord& r) {
    if (format_ == TraceFormat::Jsonl) {
      write_jsonl_row(stream(), r);
    } else {
      write_csv_row(stream(), r);
    }
    stream().flush();
  }

 private:
  std::ostream& stream() { return file_.is_open() ? static_cast<std::ostream&>(file_) : std::cout; }

  TraceFormat format_;
  std::ofstream file_;
};

Trace load_or_throw(const std::string& path) {
  try {
    return load_trace(path);
  } catch (const std::exception& e) {
    throw BadTrace(e.what());
  }
}

void print_metrics(const std::vector<StepMetrics>& metrics, const Options& o) {
  if (o.format == "jsonl") {
    for (const auto& m : metrics) {
      fmt::print(
          "{{\"time_s\":{},\"mode\":\"{}\",\"from\":{},\"to\":{},\"stimulus\":{},\"reached\":{},"
          "\"response_time_s\":{},\"slew_c_per_s\":{},\"steady_state_error\":{},\"normalized_error\":{},"
          "\"overshoot_pct\":{}}}\n",
          m.event.time_s, to_string(m.event.mode), m.event.from, m.event.to, m.event.stimulus, m.reached,
          m.reached ? fmt::format("{}", m.response_time_s) : "null", m.slew_c_per_s, m.steady_state_error,
          m.normalized_error(), m.overshoot_pct);
    }
    return;
  }
  fmt::print("time_s,mode,from,to,stimulus,reached,response_time_s,slew_c_per_s,steady_state_error,"
             "normalized_error,overshoot_pct\n");
  for (const auto& m : metrics) {
    fmt::print("{:.3f},{},{:g},{:g},{},{},{},{:.4f},{:.5f},{:.5f},{:.2f}\n", m.event.time_s, to_string(m.event.mode),
               m.event.from, m.event.to, m.event.stimulus ? 1 : 0, m.reached ? 1 : 0,
               m.reached ? fmt::format("{:.3f}", m.response_time_s) : "", m.slew_c_per_s, m.steady_state_error,
               m.normalized_error(), m.overshoot_pct);
  }
}

std::vector<StepMetrics> metrics_for(const Trace& trace, const Options& o) {
  try {
    const auto events = o.scenario.empty() ? events_from_trace(trace)
                                           : events_from_scenario(trace, builtin_scenario(o.scenario));
    std::vector<StepEvent> selected;
    for (const auto& e : events) {
      if (e.stimulus || o.all_events) selected.push_back(e);
    }
    return compute_metrics(trace, selected);
  } catch (const TraceError& e) {
    throw BadTrace(e.what());
  }
}

DeviceConfig local_config(const Options& o) {
  return o.config.empty() ? DeviceConfig{} : load_config(o.config);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"StimulHeat client"};
  app.require_subcommand(1);
  Options o;
  app.add_option("--addr", o.addr, "service address HOST:PORT")->capture_default_str();

  auto add_out = [&](CLI::App* cmd) { cmd->add_option("--out", o.out, "output file (default stdout)"); };
  auto add_format = [&](CLI::App* cmd) {
    cmd->add_option("--format", o.format, "output format")->check(CLI::IsMember({"csv", "jsonl"}));
  };

  auto* connect = app.add_subcommand("connect", "connect and print device information");
  auto* on = app.add_subcommand("on", "enable thermal control");
  auto* off = app.add_subcommand("off", "disable thermal control");

  std::string level_name;
  std::string level_mode;
  auto* set_level = app.add_subcommand("set-level", "apply a generic level in the active mode");
  set_level->add_option("level", level_name, "very-hot, hot, neutral, cold or very-cold")->required();
  set_level->add_option("--mode", level_mode, "switch mode first")->check(CLI::IsMember({"heat", "temp"}));

  double heat_w = 0.0;
  auto* set_heat = app.add_subcommand("set-heat", "heat-flow mode with a setpoint in W (positive cools)");
  set_heat->add_option("watts", heat_w)->required()->allow_extra_args(false);
  set_heat->positionals_at_end();

  double temp_c = 0.0;
  auto* set_temp = app.add_subcommand("set-temp", "temperature mode with a setpoint in C");
  set_temp->add_option("celsius", temp_c)->required();

  std::vector<double> gains;
  auto* set_pid = app.add_subcommand("set-pid", "PID gains: KP KI KD I_LIMIT");
  set_pid->add_option("gains", gains)->required()->expected(4);

  auto* status = app.add_subcommand("status", "print one telemetry frame");
  add_format(status);

  auto* record = app.add_subcommand("record", "record live telemetry");
  record->add_option("--duration", o.duration, "device seconds to record")->capture_default_str();
  add_out(record);
  add_format(record);

  auto* scenario = app.add_subcommand("scenario", "run a built-in scenario");
  scenario->add_option("--scenario", o.scenario, "scenario name")
      ->required()
      ->check(CLI::IsMember(builtin_scenario_names()));
  scenario->add_flag("--local", o.local, "simulate in-process at full rate instead of using the service");
  scenario->add_option("--config", o.config, "INI configuration for --local")->check(CLI::ExistingFile);
  add_out(scenario);
  add_format(scenario);

  std::string trace_path;
  auto* metrics = app.add_subcommand("metrics", "step metrics of a trace");
  metrics->add_option("trace", trace_path, "trace file (.csv or .jsonl)")->required();
  metrics->add_option("--scenario", o.scenario, "take stimulus flags from this scenario")
      ->check(CLI::IsMember(builtin_scenario_names()));
  metrics->add_flag("--all", o.all_events, "include returns to baseline");
  add_format(metrics);

  auto* replay = app.add_subcommand("replay", "stream a trace file, optionally converting its format");
  replay->add_option("trace", trace_path, "trace file")->required();
  add_out(replay);
  add_format(replay);

  auto* plot = app.add_subcommand("plot", "one SVG chart per channel");
  plot->add_option("trace", trace_path, "trace file")->required();
  plot->add_option("--out", o.out, "output directory")->required();

  auto* vectors = app.add_subcommand("test-vectors", "export protocol test vectors as JSON");
  add_out(vectors);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Usage errors share the generic code; 2 to 4 have fixed meanings.
    return app.exit(e) == 0 ? kOk : kError;
  }

  try {
    if (connect->parsed()) {
      auto s = open(o);
      const auto& info = s->device_info();
      const auto t = s->status();
      fmt::print("connected to {} serial {} (protocol {}), battery {}%, {}\n", info.name, info.serial,
                 info.protocol_version, t.battery_pct, (t.flags & protocol::flags::kEnabled) ? "on" : "off");
    } else if (on->parsed() || off->parsed()) {
      send(*open(o), protocol::Enable{on->parsed()});
    } else if (set_level->parsed()) {
      const auto level = parse_level(level_name);
      if (!level) throw CLI::ValidationError("level", "unknown level '" + level_name + "'");
      auto s = open(o);
      if (!level_mode.empty()) send(*s, protocol::SetMode{*parse_mode(level_mode)});
      send(*s, protocol::SetLevel{*level});
    } else if (set_heat->parsed()) {
      if (!(heat_w >= kHeatMinW && heat_w <= kHeatMaxW)) {
        throw RangeViolation(fmt::format("heat setpoint out of range [{:g}, {:g}] W", kHeatMinW, kHeatMaxW));
      }
      auto s = open(o);
      send(*s, protocol::SetMode{ControlMode::HeatFlow});
      send(*s, protocol::heat_setpoint_watts(heat_w));
    } else if (set_temp->parsed()) {
      if (!(temp_c >= kTempMinC && temp_c <= kTempMaxC)) {
        throw RangeViolation(fmt::format("temperature setpoint out of range [{:g}, {:g}] C", kTempMinC, kTempMaxC));
      }
      auto s = open(o);
      send(*s, protocol::SetMode{ControlMode::Temperature});
      send(*s, protocol::temp_setpoint_celsius(temp_c));
    } else if (set_pid->parsed()) {
      const PidParams pid{gains[0], gains[1], gains[2], gains[3]};
      protocol::SetPid wire;
      try {
        pid.validate();
        wire = protocol::to_wire(pid);
      } catch (const std::exception& e) {
        throw RangeViolation(e.what());
      }
      send(*open(o), wire);
    } else if (status->parsed()) {
      const TraceRecord r = from_telemetry(open(o)->status());
      if (o.format == "jsonl") {
        write_jsonl_row(std::cout, r);
      } else if (o.format == "csv") {
        write_csv_header(std::cout);
        write_csv_row(std::cout, r);
      } else {
        fmt::print(
            "t={:.2f} s mode={} enabled={} setpoint={:g} T_a={:.2f} C T_e={:.2f} C skin={:.2f} C I={:.3f} A "
            "Q={:.3f} W saturated={} battery={:g}%\n",
            r.time_s, to_string(r.mode), r.enabled ? "on" : "off", r.setpoint, r.t_abs_c, r.t_emit_c, r.t_skin_c,
            r.current_a, r.heat_w, r.saturated ? 1 : 0, r.battery_pct);
      }
    } else if (record->parsed()) {
      auto s = open(o);
      TraceSink sink(o);
      (void)record_live(*s, o.duration, [&sink](const TraceRecord& r) { sink(r); });
    } else if (scenario->parsed()) {
      const Scenario sc = builtin_scenario(o.scenario);
      TraceSink sink(o);
      if (o.local) {
        for (const auto& r : run_scenario(local_config(o), sc)) sink(r);
      } else {
        auto s = open(o);
        (void)run_live_scenario(*s, sc, [&sink](const TraceRecord& r) { sink(r); });
      }
    } else if (metrics->parsed()) {
      print_metrics(metrics_for(load_or_throw(trace_path), o), o);
    } else if (replay->parsed()) {
      TraceSink sink(o);
      for (const auto& r : load_or_throw(trace_path)) sink(r);
    } else if (plot->parsed()) {
      for (const auto& path : write_plots(load_or_throw(trace_path), o.out)) fmt::print("{}\n", path.string());
    } else if (vectors->parsed()) {
      const std::string doc = protocol::test_vectors_json();
      if (o.out.empty()) {
        std::cout << doc;
      } else {
        std::ofstream file(o.out, std::ios::binary);
        if (!(file << doc)) throw std::runtime_error(fmt::format("cannot write '{}'", o.out));
      }
    }
    return kOk;
  } catch (const ClientError& e) {
    fmt::print(stderr, "stimulheat: {}\n", e.what());
    return e.kind() == ClientError::Kind::Refused ? kRange : kConnection;
  } catch (const RangeViolation& e) {
    fmt::print(stderr, "stimulheat: {}\n", e.what());
    return kRange;
  } catch (const BadTrace& e) {
    fmt::print(stderr, "stimulheat: bad trace: {}\n", e.what());
    return kBadTrace;
  } catch (const CLI::Error& e) {
    return app.exit(e) == 0 ? kOk : kError;
  } catch (const std::exception& e) {
    fmt::print(stderr, "stimulheat: {}\n", e.what());
    return kError;
  }
}
