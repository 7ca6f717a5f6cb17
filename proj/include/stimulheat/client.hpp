#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "stimulheat/device.hpp"
#include "stimulheat/protocol.hpp"

namespace stimulheat {

class ClientError : public std::runtime_error {
 public:
  enum class Kind { ConnectionRefused, ProtocolMismatch, Timeout, Closed, Refused };

  ClientError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  [[nodiscard]] Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct Address {
  std::string host = "127.0.0.1";
  std::uint16_t port = 7453;

  /// Accepts HOST:PORT or a bare HOST. Throws std::invalid_argument.
  [[nodiscard]] static Address parse(std::string_view text);
};

inline constexpr std::chrono::milliseconds kDefaultTimeout{2000};

/// A TCP session with a running service. A background reader thread sorts
/// incoming frames into telemetry and command replies.
class ClientSession {
 public:
  /// Decode failures plus skipped bytes tolerated before the peer is
  /// declared not to speak the protocol.
  static constexpr std::size_t kMismatchThreshold = 32;

  /// Connects and fetches DeviceInfo. Throws ClientError with
  /// ConnectionRefused when nothing listens, ProtocolMismatch when the
  /// peer answers with something other than valid frames.
  [[nodiscard]] static std::unique_ptr<ClientSession> connect(
      const Address& address, std::chrono::milliseconds timeout = kDefaultTimeout);

  ~ClientSession();
  ClientSession(const ClientSession&) = delete;
  ClientSession& operator=(const ClientSession&) = delete;

  [[nodiscard]] const protocol::DeviceInfo& device_info() const;

  /// Sends a command and waits for its Ack or Nack (DeviceInfo for
  /// GetDeviceInfo). Use status() for GetStatus.
  protocol::Message command(const protocol::Message& message, std::chrono::milliseconds timeout = kDefaultTimeout);

  /// Requests and returns a fresh telemetry frame.
  protocol::Telemetry status(std::chrono::milliseconds timeout = kDefaultTimeout);

  /// Next telemetry frame in arrival order, or nullopt on timeout.
  std::optional<protocol::Telemetry> next_telemetry(std::chrono::milliseconds timeout = kDefaultTimeout);
  void clear_telemetry();

  [[nodiscard]] std::size_t decode_errors() const;
  void close();

 private:
  struct Impl;
  explicit ClientSession(std::unique_ptr<Impl> impl);
  std::unique_ptr<Impl> impl_;
};

/// Records telemetry until `duration_s` of device time has elapsed since
/// the first frame. Calls `on_row` for every row if given.
[[nodiscard]] Trace record_live(ClientSession& session, double duration_s,
                                const std::function<void(const TraceRecord&)>& on_row = {});

/// Plays a scenario against a live device, timing holds by the telemetry
/// clock, and returns the recorded telemetry. A Nack raises ClientError
/// with kind Refused.
[[nodiscard]] Trace run_live_scenario(ClientSession& session, const Scenario& scenario,
                                      const std::function<void(const TraceRecord&)>& on_row = {});

}  // namespace stimulheat
