#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "stimulheat/device.hpp"

namespace stimulheat {

/// The emulator daemon. One simulation thread owns the Device and is the
/// only writer; transport sessions run on a separate I/O thread and talk to
/// it through a command queue (in) and posted frames (out).
///
/// Frames are served raw over TCP and as binary WebSocket messages on /ws.
/// A port of 0 in the config picks an ephemeral port; the bound ports are
/// available after start().
class Service {
 public:
  explicit Service(DeviceConfig config);
  ~Service();

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds both listeners and starts the simulation and I/O threads.
  /// Throws std::runtime_error if a port cannot be bound.
  void start(const std::string& bind_address = "127.0.0.1");

  /// Stops both threads and closes every session. Idempotent.
  void stop();

  /// Blocks until stop() is called from another thread or a signal handler.
  void wait();

  [[nodiscard]] std::uint16_t tcp_port() const;
  [[nodiscard]] std::uint16_t ws_port() const;
  [[nodiscard]] std::size_t session_count() const;
  [[nodiscard]] std::uint64_t ticks() const;
  [[nodiscard]] std::uint64_t telemetry_sent() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace stimulheat
