#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "stimulheat/control.hpp"

/// Framed binary protocol between the emulator and its clients.
///
/// Frame layout (all multi-byte integers little-endian):
///
///   0x53 | len:u16 | type:u8 | payload[len] | crc:u16
///
/// The CRC is CRC-16/CCITT-FALSE over type and payload. Payloads are at most
/// 256 bytes. See docs/protocol.md for per-message layouts.
namespace stimulheat::protocol {

inline constexpr std::uint8_t kMagic = 0x53;
inline constexpr std::size_t kMaxPayload = 256;
inline constexpr std::size_t kHeaderSize = 4;  // magic, len, type
inline constexpr std::size_t kFrameOverhead = kHeaderSize + 2;
inline constexpr std::uint8_t kProtocolVersion = 1;
inline constexpr std::size_t kMaxNameLength = 32;

enum class MsgType : std::uint8_t {
  Enable = 0x01,
  SetMode = 0x02,
  SetLevel = 0x03,
  SetHeatSetpoint = 0x04,
  SetTempSetpoint = 0x05,
  SetPid = 0x06,
  GetStatus = 0x07,
  GetDeviceInfo = 0x08,
  Telemetry = 0x81,
  Ack = 0x82,
  Nack = 0x83,
  DeviceInfo = 0x84,
};

// Fixed-point scales.
inline constexpr double kMilliwattsPerWatt = 1000.0;
inline constexpr double kCentiPerDegree = 100.0;
inline constexpr double kMilliampsPerAmp = 1000.0;
inline constexpr double kPidScale = 1e6;

struct Enable {
  bool on = false;
  bool operator==(const Enable&) const = default;
};
struct SetMode {
  ControlMode mode = ControlMode::Off;
  bool operator==(const SetMode&) const = default;
};
struct SetLevel {
  Level level = Level::Neutral;
  bool operator==(const SetLevel&) const = default;
};
struct SetHeatSetpoint {
  std::int32_t milliwatts = 0;
  bool operator==(const SetHeatSetpoint&) const = default;
};
struct SetTempSetpoint {
  std::int32_t centi_celsius = 0;
  bool operator==(const SetTempSetpoint&) const = default;
};
/// Gains in units of 1e-6 (A/K, A/(K s), A s/K, A).
struct SetPid {
  std::int32_t kp = 0;
  std::int32_t ki = 0;
  std::int32_t kd = 0;
  std::int32_t i_limit = 0;
  bool operator==(const SetPid&) const = default;
};
struct GetStatus {
  bool operator==(const GetStatus&) const = default;
};
struct GetDeviceInfo {
  bool operator==(const GetDeviceInfo&) const = default;
};

namespace flags {
inline constexpr std::uint8_t kSaturated = 0x01;
inline constexpr std::uint8_t kComplianceLimited = 0x02;
inline constexpr std::uint8_t kEnabled = 0x04;
}  // namespace flags

struct Telemetry {
  std::uint32_t timestamp_ms = 0;
  std::int16_t t_abs_cc = 0;
  std::int16_t t_emit_cc = 0;
  std::int16_t t_contact_cc = 0;
  std::int16_t current_ma = 0;
  std::int16_t heat_mw = 0;
  std::int32_t setpoint_raw = 0;  // mW in heat mode, centi-C in temperature mode
  std::uint8_t mode = 0;
  std::uint8_t flags = 0;
  std::uint8_t battery_pct = 0;
  bool operator==(const Telemetry&) const = default;
};

/// Applied device state, echoed after every accepted command.
struct Ack {
  MsgType command = MsgType::GetStatus;
  std::uint8_t mode = 0;
  bool enabled = false;
  std::int32_t setpoint_raw = 0;
  SetPid pid;
  bool operator==(const Ack&) const = default;
};

enum class NackReason : std::uint8_t { RangeViolation = 1, Rejected = 2 };

/// A refused command, with the legal range in the command's raw units.
struct Nack {
  MsgType command = MsgType::GetStatus;
  NackReason reason = NackReason::RangeViolation;
  std::int32_t min_raw = 0;
  std::int32_t max_raw = 0;
  bool operator==(const Nack&) const = default;
};

struct DeviceInfo {
  std::uint8_t protocol_version = kProtocolVersion;
  std::string name;
  std::string serial;
  bool operator==(const DeviceInfo&) const = default;
};

using Message = std::variant<Enable, SetMode, SetLevel, SetHeatSetpoint, SetTempSetpoint, SetPid,
                             GetStatus, GetDeviceInfo, Telemetry, Ack, Nack, DeviceInfo>;

[[nodiscard]] MsgType type_of(const Message& message);
[[nodiscard]] bool is_command(const Message& message);
[[nodiscard]] std::string_view name_of(MsgType type);

enum class DecodeError : std::uint8_t { BadMagic, BadLength, BadCrc, UnknownType, RangeViolation };

[[nodiscard]] std::string_view to_string(DecodeError error);

struct DecodeFailure {
  DecodeError error;
  std::uint8_t msg_type = 0;  // when known
  bool operator==(const DecodeFailure&) const = default;
};

using DecodeResult = std::variant<Message, DecodeFailure>;

using Bytes = std::vector<std::uint8_t>;

/// CRC-16/CCITT-FALSE (poly 0x1021, init 0xFFFF, no reflection, no final xor).
[[nodiscard]] std::uint16_t crc16(std::span<const std::uint8_t> data,
                                  std::uint16_t crc = 0xFFFF);

/// Throws std::out_of_range for fields the wire format cannot carry
/// (unknown enum values, oversized strings).
[[nodiscard]] Bytes encode(const Message& message);

/// Decodes exactly one frame occupying the whole buffer.
[[nodiscard]] DecodeResult decode(std::span<const std::uint8_t> frame);

/// Rounds `value * scale` to the nearest integer of type T. Throws
/// std::out_of_range when the result does not fit.
template <typename T>
[[nodiscard]] T to_fixed(double value, double scale);

[[nodiscard]] SetPid to_wire(const PidParams& pid);
[[nodiscard]] PidParams from_wire(const SetPid& pid);
[[nodiscard]] SetHeatSetpoint heat_setpoint_watts(double watts);
[[nodiscard]] SetTempSetpoint temp_setpoint_celsius(double celsius);

/// Incremental decoder for a byte stream. Skips bytes until a magic byte,
/// and on a bad frame drops only that magic byte before rescanning, so a
/// valid frame hidden behind garbage is still found. One instance per
/// connection; not thread-safe.
class StreamDecoder {
 public:
  void feed(std::span<const std::uint8_t> bytes);

  /// Next decoded message or error, if one is complete.
  [[nodiscard]] std::optional<DecodeResult> next();

  [[nodiscard]] std::size_t buffered() const { return buffer_.size(); }
  [[nodiscard]] std::size_t skipped_bytes() const { return skipped_; }

 private:
  std::deque<std::uint8_t> buffer_;
  std::size_t skipped_ = 0;
};

}  // namespace stimulheat::protocol
