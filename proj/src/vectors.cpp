#include "stimulheat/vectors.hpp"

#include <stdexcept>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

namespace stimulheat::protocol {

namespace {

using json = nlohmann::ordered_json;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

json pid_fields(const SetPid& p) {
  return {{"kp", p.kp}, {"ki", p.ki}, {"kd", p.kd}, {"i_limit", p.i_limit}};
}

json fields_of(const Message& message) {
  return std::visit(
      overloaded{
          [](const Enable& m) { return json{{"on", m.on}}; },
          [](const SetMode& m) { return json{{"mode", static_cast<int>(m.mode)}}; },
          [](const SetLevel& m) { return json{{"level", static_cast<int>(m.level)}}; },
          [](const SetHeatSetpoint& m) { return json{{"milliwatts", m.milliwatts}}; },
          [](const SetTempSetpoint& m) { return json{{"centi_celsius", m.centi_celsius}}; },
          [](const SetPid& m) { return pid_fields(m); },
          [](const GetStatus&) { return json::object(); },
          [](const GetDeviceInfo&) { return json::object(); },
          [](const Telemetry& m) {
            return json{{"timestamp_ms", m.timestamp_ms}, {"t_abs_cc", m.t_abs_cc},
                        {"t_emit_cc", m.t_emit_cc},       {"t_contact_cc", m.t_contact_cc},
                        {"current_ma", m.current_ma},     {"heat_mw", m.heat_mw},
                        {"setpoint_raw", m.setpoint_raw}, {"mode", m.mode},
                        {"flags", m.flags},               {"battery_pct", m.battery_pct}};
          },
          [](const Ack& m) {
            return json{{"command", static_cast<int>(m.command)},
                        {"mode", m.mode},
                        {"enabled", m.enabled},
                        {"setpoint_raw", m.setpoint_raw},
                        {"pid", pid_fields(m.pid)}};
          },
          [](const Nack& m) {
            return json{{"command", static_cast<int>(m.command)},
                        {"reason", static_cast<int>(m.reason)},
                        {"min_raw", m.min_raw},
                        {"max_raw", m.max_raw}};
          },
          [](const DeviceInfo& m) {
            return json{{"protocol_version", m.protocol_version}, {"name", m.name}, {"serial", m.serial}};
          },
      },
      message);
}

// Frame with a hand-built payload, bypassing encode's checks.
Bytes raw_frame(std::uint8_t type, const Bytes& payload) {
  Bytes frame{kMagic, static_cast<std::uint8_t>(payload.size() & 0xFF),
              static_cast<std::uint8_t>(payload.size() >> 8), type};
  for (auto b : payload) frame.push_back(b);
  const auto crc = crc16(std::span(frame).subspan(3));
  frame.push_back(static_cast<std::uint8_t>(crc & 0xFF));
  frame.push_back(static_cast<std::uint8_t>(crc >> 8));
  return frame;
}

}  // namespace

std::string to_hex(std::span<const std::uint8_t> bytes) {
  std::string out;
  out.reserve(bytes.size() * 2);
  for (auto b : bytes) out += fmt::format("{:02X}", b);
  return out;
}

Bytes from_hex(std::string_view text) {
  auto nibble = [text](char c) -> std::uint8_t {
    if (c >= '0' && c <= '9') return static_cast<std::uint8_t>(c - '0');
    if (c >= 'a' && c <= 'f') return static_cast<std::uint8_t>(c - 'a' + 10);
    if (c >= 'A' && c <= 'F') return static_cast<std::uint8_t>(c - 'A' + 10);
    throw std::invalid_argument(fmt::format("bad hex digit '{}' in '{}'", c, text));
  };
  std::string digits;
  for (char c : text) {
    if (c != ' ') digits += c;
  }
  if (digits.size() % 2 != 0) throw std::invalid_argument("odd number of hex digits");
  Bytes out;
  for (std::size_t i = 0; i < digits.size(); i += 2) {
    out.push_back(static_cast<std::uint8_t>(nibble(digits[i]) << 4 | nibble(digits[i + 1])));
  }
  return out;
}

std::string test_vectors_json() {
  json vectors = json::array();
  auto valid = [&](std::string name, const Message& m) {
    vectors.push_back({{"name", std::move(name)},
                       {"hex", to_hex(encode(m))},
                       {"valid", true},
                       {"type", std::string(name_of(type_of(m)))},
                       {"fields", fields_of(m)}});
  };
  auto invalid = [&](std::string name, const Bytes& frame, DecodeError error) {
    vectors.push_back({{"name", std::move(name)},
                       {"hex", to_hex(frame)},
                       {"valid", false},
                       {"error", std::string(to_string(error))}});
  };

  valid("enable on", Enable{true});
  valid("enable off", Enable{false});
  valid("mode off", SetMode{ControlMode::Off});
  valid("mode heat", SetMode{ControlMode::HeatFlow});
  valid("mode temp", SetMode{ControlMode::Temperature});
  for (auto level : {Level::VeryHot, Level::Hot, Level::Neutral, Level::Cold, Level::VeryCold}) {
    valid(fmt::format("level {}", to_string(level)), SetLevel{level});
  }
  valid("heat -2 W", SetHeatSetpoint{-2000});
  valid("heat +4 W", SetHeatSetpoint{4000});
  valid("heat min -9 W", SetHeatSetpoint{-9000});
  valid("heat max +9 W", SetHeatSetpoint{9000});
  valid("temp 31 C", SetTempSetpoint{3100});
  valid("temp min 15 C", SetTempSetpoint{1500});
  valid("temp max 42 C", SetTempSetpoint{4200});
  valid("pid defaults", to_wire(PidParams{}));
  valid("pid kp 0.2", SetPid{200000, 1000000, 0, 600000});
  valid("get status", GetStatus{});
  valid("get device info", GetDeviceInfo{});
  valid("telemetry", Telemetry{12340, 2915, 3120, 3100, -345, 2000, 2000, 1, 0x05, 87});
  valid("ack set heat", Ack{MsgType::SetHeatSetpoint, 1, true, -2000, to_wire(PidParams{})});
  valid("nack temp range", Nack{MsgType::SetTempSetpoint, NackReason::RangeViolation, 1500, 4200});
  valid("nack level rejected", Nack{MsgType::SetLevel, NackReason::Rejected, 0, 0});
  valid("device info", DeviceInfo{kProtocolVersion, "StimulHeat-SIM", "0001"});

  const Bytes enable = encode(Enable{true});
  Bytes bad_magic = enable;
  bad_magic[0] = 0x54;
  invalid("bad magic", bad_magic, DecodeError::BadMagic);
  Bytes bad_crc = enable;
  bad_crc.back() ^= 0x01;
  invalid("bad crc", bad_crc, DecodeError::BadCrc);
  Bytes short_frame(enable.begin(), enable.end() - 1);
  invalid("truncated", short_frame, DecodeError::BadLength);
  invalid("payload too long for type", raw_frame(0x01, {1, 0}), DecodeError::BadLength);
  invalid("unknown type", raw_frame(0x09, {}), DecodeError::UnknownType);
  invalid("temp 43 C", encode(SetTempSetpoint{4300}), DecodeError::RangeViolation);
  invalid("temp 14.99 C", encode(SetTempSetpoint{1499}), DecodeError::RangeViolation);
  invalid("heat 9.001 W", encode(SetHeatSetpoint{9001}), DecodeError::RangeViolation);
  invalid("heat -9.001 W", encode(SetHeatSetpoint{-9001}), DecodeError::RangeViolation);
  invalid("level 5", raw_frame(0x03, {5}), DecodeError::RangeViolation);
  invalid("mode 3", raw_frame(0x02, {3}), DecodeError::RangeViolation);
  invalid("enable 2", raw_frame(0x01, {2}), DecodeError::RangeViolation);

  json doc;
  doc["protocol_version"] = kProtocolVersion;
  doc["vectors"] = std::move(vectors);
  return doc.dump(2) + "\n";
}

}  // namespace stimulheat::protocol
