// stimulheat-sim: the device emulator daemon.
//
//   stimulheat-sim [--config PATH] [--realtime|--fast] [--seed N]
//   stimulheat-sim --scenario charac-temp --out trace.csv

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "stimulheat/device.hpp"
#include "stimulheat/service.hpp"
#include "stimulheat/trace_io.hpp"

using namespace stimulheat;

int main(int argc, char** argv) {
  CLI::App app{"StimulHeat device emulator"};
  std::string config_path;
  bool realtime = false;
  bool fast = false;
  std::optional<std::uint64_t> seed;
  std::optional<double> noise;
  std::optional<std::uint16_t> tcp_port;
  std::optional<std::uint16_t> ws_port;
  std::string bind = "127.0.0.1";
  std::string scenario;
  std::string out;
  std::string format;

  app.add_option("--config", config_path, "INI configuration file")->check(CLI::ExistingFile);
  auto* rt = app.add_flag("--realtime", realtime, "pace the simulation at wall-clock speed (default)");
  app.add_flag("--fast", fast, "run the simulation as fast as possible")->excludes(rt);
  app.add_option("--seed", seed, "sensor noise seed");
  app.add_option("--noise", noise, "sensor noise standard deviation (K)");
  app.add_option("--bind", bind, "listen address");
  app.add_option("--tcp-port", tcp_port, "TCP port (0 picks a free one)");
  app.add_option("--ws-port", ws_port, "WebSocket port (0 picks a free one)");
  app.add_option("--scenario", scenario, "run a built-in scenario headless and exit")
      ->check(CLI::IsMember(builtin_scenario_names()));
  app.add_option("--out", out, "trace file for --scenario (default stdout)");
  app.add_option("--format", format, "trace format")->check(CLI::IsMember({"csv", "jsonl"}));
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    DeviceConfig config = config_path.empty() ? DeviceConfig{} : load_config(config_path);
    if (fast) config.realtime = false;
    if (realtime) config.realtime = true;
    if (seed) config.seed = *seed;
    if (noise) config.sensor_noise_std = *noise;
    if (tcp_port) config.tcp_port = *tcp_port;
    if (ws_port) config.ws_port = *ws_port;
    config.validate();

    if (!scenario.empty()) {
      const Trace trace = run_scenario(config, builtin_scenario(scenario));
      if (out.empty()) {
        if (format == "jsonl") {
          write_jsonl(std::cout, trace);
        } else {
          write_csv(std::cout, trace);
        }
      } else {
        const auto fmt = format.empty() ? format_for(out) : format == "jsonl" ? TraceFormat::Jsonl : TraceFormat::Csv;
        save_trace(out, trace, fmt);
      }
      return 0;
    }

    // Signals are taken synchronously below; block them before any thread starts.
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    Service service(config);
    service.start(bind);
    fmt::print("stimulheat-sim listening tcp={}:{} ws=ws://{}:{}/ws mode={}\n", bind, service.tcp_port(), bind,
               service.ws_port(), config.realtime ? "realtime" : "fast");
    std::fflush(stdout);

    int received = 0;
    sigwait(&signals, &received);
    service.stop();
    fmt::print("stopped after {} ticks\n", service.ticks());
    return 0;
  } catch (const std::exception& e) {
    fmt::print(stderr, "stimulheat-sim: {}\n", e.what());
    return 1;
  }
}
