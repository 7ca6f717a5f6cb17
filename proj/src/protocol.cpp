#include "stimulheat/protocol.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <type_traits>

namespace stimulheat::protocol {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) {
    out_.push_back(static_cast<std::uint8_t>(v & 0xFF));
    out_.push_back(static_cast<std::uint8_t>(v >> 8));
  }
  void u32(std::uint32_t v) {
    for (int shift = 0; shift < 32; shift += 8) out_.push_back(static_cast<std::uint8_t>(v >> shift));
  }
  void i16(std::int16_t v) { u16(static_cast<std::uint16_t>(v)); }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void str(const std::string& s) {
    if (s.size() > kMaxNameLength) throw std::out_of_range("string field longer than 32 bytes");
    u8(static_cast<std::uint8_t>(s.size()));
    out_.insert(out_.end(), s.begin(), s.end());
  }
  Bytes take() { return std::move(out_); }

 private:
  Bytes out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}

  bool ok() const { return ok_; }
  bool done() const { return pos_ == data_.size(); }

  std::uint8_t u8() {
    if (pos_ + 1 > data_.size()) return fail<std::uint8_t>();
    return data_[pos_++];
  }
  std::uint16_t u16() {
    if (pos_ + 2 > data_.size()) return fail<std::uint16_t>();
    const auto v = static_cast<std::uint16_t>(data_[pos_] | (data_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    if (pos_ + 4 > data_.size()) return fail<std::uint32_t>();
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | data_[pos_ + static_cast<std::size_t>(i)];
    pos_ += 4;
    return v;
  }
  std::int16_t i16() { return static_cast<std::int16_t>(u16()); }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  std::string str() {
    const std::size_t n = u8();
    if (!ok_ || n > kMaxNameLength || pos_ + n > data_.size()) return fail<std::string>();
    std::string s(data_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  data_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }

 private:
  template <typename T>
  T fail() {
    ok_ = false;
    return T{};
  }

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
  bool ok_ = true;
};

constexpr bool valid_mode(std::uint8_t v) { return v <= static_cast<std::uint8_t>(ControlMode::Temperature); }
constexpr bool valid_level(std::uint8_t v) { return v <= static_cast<std::uint8_t>(Level::VeryCold); }

bool known_type(std::uint8_t t) {
  return (t >= 0x01 && t <= 0x08) || (t >= 0x81 && t <= 0x84);
}

bool command_type(std::uint8_t t) { return t >= 0x01 && t <= 0x08; }

constexpr std::int32_t kHeatMinRaw = -9000;
constexpr std::int32_t kHeatMaxRaw = 9000;
constexpr std::int32_t kTempMinRaw = 1500;
constexpr std::int32_t kTempMaxRaw = 4200;

void write_pid(Writer& w, const SetPid& p) {
  w.i32(p.kp);
  w.i32(p.ki);
  w.i32(p.kd);
  w.i32(p.i_limit);
}

SetPid read_pid(Reader& r) {
  SetPid p;
  p.kp = r.i32();
  p.ki = r.i32();
  p.kd = r.i32();
  p.i_limit = r.i32();
  return p;
}

bool valid_pid(const SetPid& p) { return p.kp >= 0 && p.ki >= 0 && p.kd >= 0 && p.i_limit > 0; }

void encode_payload(Writer& w, const Message& message) {
  auto enum_byte = [](auto value, bool valid) {
    if (!valid) throw std::out_of_range("enum value not representable on the wire");
    return static_cast<std::uint8_t>(value);
  };
  std::visit(
      overloaded{
          [&](const Enable& m) { w.u8(m.on ? 1 : 0); },
          [&](const SetMode& m) {
            w.u8(enum_byte(m.mode, valid_mode(static_cast<std::uint8_t>(m.mode))));
          },
          [&](const SetLevel& m) {
            w.u8(enum_byte(m.level, valid_level(static_cast<std::uint8_t>(m.level))));
          },
          [&](const SetHeatSetpoint& m) { w.i32(m.milliwatts); },
          [&](const SetTempSetpoint& m) { w.i32(m.centi_celsius); },
          [&](const SetPid& m) { write_pid(w, m); },
          [&](const GetStatus&) {},
          [&](const GetDeviceInfo&) {},
          [&](const Telemetry& m) {
            w.u32(m.timestamp_ms);
            w.i16(m.t_abs_cc);
            w.i16(m.t_emit_cc);
            w.i16(m.t_contact_cc);
            w.i16(m.current_ma);
            w.i16(m.heat_mw);
            w.i32(m.setpoint_raw);
            w.u8(m.mode);
            w.u8(m.flags);
            w.u8(m.battery_pct);
          },
          [&](const Ack& m) {
            w.u8(enum_byte(m.command, command_type(static_cast<std::uint8_t>(m.command))));
            w.u8(m.mode);
            w.u8(m.enabled ? 1 : 0);
            w.i32(m.setpoint_raw);
            write_pid(w, m.pid);
          },
          [&](const Nack& m) {
            w.u8(enum_byte(m.command, command_type(static_cast<std::uint8_t>(m.command))));
            w.u8(static_cast<std::uint8_t>(m.reason));
            w.i32(m.min_raw);
            w.i32(m.max_raw);
          },
          [&](const DeviceInfo& m) {
            w.u8(m.protocol_version);
            w.str(m.name);
            w.str(m.serial);
          },
      },
      message);
}

// Parses a payload whose frame already passed magic, length and CRC checks.
DecodeResult decode_payload(std::uint8_t type, std::span<const std::uint8_t> payload) {
  if (!known_type(type)) return DecodeFailure{DecodeError::UnknownType, type};
  Reader r(payload);
  auto range = [type]() -> DecodeResult { return DecodeFailure{DecodeError::RangeViolation, type}; };

  std::optional<Message> message;
  bool in_range = true;
  switch (static_cast<MsgType>(type)) {
    case MsgType::Enable: {
      const auto v = r.u8();
      in_range = v <= 1;
      message = Enable{v == 1};
      break;
    }
    case MsgType::SetMode: {
      const auto v = r.u8();
      in_range = valid_mode(v);
      message = SetMode{static_cast<ControlMode>(v)};
      break;
    }
    case MsgType::SetLevel: {
      const auto v = r.u8();
      in_range = valid_level(v);
      message = SetLevel{static_cast<Level>(v)};
      break;
    }
    case MsgType::SetHeatSetpoint: {
      const auto v = r.i32();
      in_range = v >= kHeatMinRaw && v <= kHeatMaxRaw;
      message = SetHeatSetpoint{v};
      break;
    }
    case MsgType::SetTempSetpoint: {
      const auto v = r.i32();
      in_range = v >= kTempMinRaw && v <= kTempMaxRaw;
      message = SetTempSetpoint{v};
      break;
    }
    case MsgType::SetPid: {
      const SetPid p = read_pid(r);
      in_range = valid_pid(p);
      message = p;
      break;
    }
    case MsgType::GetStatus:
      message = GetStatus{};
      break;
    case MsgType::GetDeviceInfo:
      message = GetDeviceInfo{};
      break;
    case MsgType::Telemetry: {
      Telemetry t;
      t.timestamp_ms = r.u32();
      t.t_abs_cc = r.i16();
      t.t_emit_cc = r.i16();
      t.t_contact_cc = r.i16();
      t.current_ma = r.i16();
      t.heat_mw = r.i16();
      t.setpoint_raw = r.i32();
      t.mode = r.u8();
      t.flags = r.u8();
      t.battery_pct = r.u8();
      in_range = valid_mode(t.mode) && t.battery_pct <= 100 && t.flags <= 0x07;
      message = t;
      break;
    }
    case MsgType::Ack: {
      Ack a;
      const auto cmd = r.u8();
      a.command = static_cast<MsgType>(cmd);
      a.mode = r.u8();
      const auto enabled = r.u8();
      a.enabled = enabled == 1;
      a.setpoint_raw = r.i32();
      a.pid = read_pid(r);
      in_range = command_type(cmd) && valid_mode(a.mode) && enabled <= 1;
      message = a;
      break;
    }
    case MsgType::Nack: {
      Nack n;
      const auto cmd = r.u8();
      const auto reason = r.u8();
      n.command = static_cast<MsgType>(cmd);
      n.reason = static_cast<NackReason>(reason);
      n.min_raw = r.i32();
      n.max_raw = r.i32();
      in_range = command_type(cmd) && (reason == 1 || reason == 2);
      message = n;
      break;
    }
    case MsgType::DeviceInfo: {
      DeviceInfo d;
      d.protocol_version = r.u8();
      d.name = r.str();
      d.serial = r.str();
      message = d;
      break;
    }
  }
  if (!r.ok() || !r.done()) return DecodeFailure{DecodeError::BadLength, type};
  if (!in_range) return range();
  return *message;
}

}  // namespace

MsgType type_of(const Message& message) {
  return std::visit(
      overloaded{
          [](const Enable&) { return MsgType::Enable; },
          [](const SetMode&) { return MsgType::SetMode; },
          [](const SetLevel&) { return MsgType::SetLevel; },
          [](const SetHeatSetpoint&) { return MsgType::SetHeatSetpoint; },
          [](const SetTempSetpoint&) { return MsgType::SetTempSetpoint; },
          [](const SetPid&) { return MsgType::SetPid; },
          [](const GetStatus&) { return MsgType::GetStatus; },
          [](const GetDeviceInfo&) { return MsgType::GetDeviceInfo; },
          [](const Telemetry&) { return MsgType::Telemetry; },
          [](const Ack&) { return MsgType::Ack; },
          [](const Nack&) { return MsgType::Nack; },
          [](const DeviceInfo&) { return MsgType::DeviceInfo; },
      },
      message);
}

bool is_command(const Message& message) { return command_type(static_cast<std::uint8_t>(type_of(message))); }

std::string_view name_of(MsgType type) {
  switch (type) {
    case MsgType::Enable: return "Enable";
    case MsgType::SetMode: return "SetMode";
    case MsgType::SetLevel: return "SetLevel";
    case MsgType::SetHeatSetpoint: return "SetHeatSetpoint";
    case MsgType::SetTempSetpoint: return "SetTempSetpoint";
    case MsgType::SetPid: return "SetPid";
    case MsgType::GetStatus: return "GetStatus";
    case MsgType::GetDeviceInfo: return "GetDeviceInfo";
    case MsgType::Telemetry: return "Telemetry";
    case MsgType::Ack: return "Ack";
    case MsgType::Nack: return "Nack";
    case MsgType::DeviceInfo: return "DeviceInfo";
  }
  return "Unknown";
}

std::string_view to_string(DecodeError error) {
  switch (error) {
    case DecodeError::BadMagic: return "BadMagic";
    case DecodeError::BadLength: return "BadLength";
    case DecodeError::BadCrc: return "BadCrc";
    case DecodeError::UnknownType: return "UnknownType";
    case DecodeError::RangeViolation: return "RangeViolation";
  }
  return "Unknown";
}

std::uint16_t crc16(std::span<const std::uint8_t> data, std::uint16_t crc) {
  for (std::uint8_t byte : data) {
    crc ^= static_cast<std::uint16_t>(byte << 8);
    for (int bit = 0; bit < 8; ++bit) {
      crc = (crc & 0x8000) ? static_cast<std::uint16_t>((crc << 1) ^ 0x1021)
                           : static_cast<std::uint16_t>(crc << 1);
    }
  }
  return crc;
}

Bytes encode(const Message& message) {
  Writer payload_writer;
  encode_payload(payload_writer, message);
  const Bytes payload = payload_writer.take();
  if (payload.size() > kMaxPayload) throw std::out_of_range("payload exceeds 256 bytes");

  Bytes frame;
  frame.reserve(payload.size() + kFrameOverhead);
  frame.push_back(kMagic);
  frame.push_back(static_cast<std::uint8_t>(payload.size() & 0xFF));
  frame.push_back(static_cast<std::uint8_t>(payload.size() >> 8));
  frame.push_back(static_cast<std::uint8_t>(type_of(message)));
  frame.insert(frame.end(), payload.begin(), payload.end());
  const std::uint16_t crc = crc16(std::span(frame).subspan(3));
  frame.push_back(static_cast<std::uint8_t>(crc & 0xFF));
  frame.push_back(static_cast<std::uint8_t>(crc >> 8));
  return frame;
}

DecodeResult decode(std::span<const std::uint8_t> frame) {
  if (frame.empty() || frame[0] != kMagic) return DecodeFailure{DecodeError::BadMagic};
  if (frame.size() < kFrameOverhead) return DecodeFailure{DecodeError::BadLength};
  const std::size_t length = frame[1] | (frame[2] << 8);
  if (length > kMaxPayload || frame.size() != length + kFrameOverhead) {
    return DecodeFailure{DecodeError::BadLength};
  }
  const std::uint8_t type = frame[3];
  const auto body = frame.subspan(3, length + 1);
  const std::uint16_t wire_crc =
      static_cast<std::uint16_t>(frame[length + 4] | (frame[length + 5] << 8));
  if (crc16(body) != wire_crc) return DecodeFailure{DecodeError::BadCrc, type};
  return decode_payload(type, body.subspan(1));
}

template <typename T>
T to_fixed(double value, double scale) {
  const double scaled = std::round(value * scale);
  if (!std::isfinite(scaled) || scaled < static_cast<double>(std::numeric_limits<T>::min()) ||
      scaled > static_cast<double>(std::numeric_limits<T>::max())) {
    throw std::out_of_range("value does not fit its fixed-point field");
  }
  return static_cast<T>(scaled);
}

template std::int16_t to_fixed<std::int16_t>(double, double);
template std::int32_t to_fixed<std::int32_t>(double, double);
template std::uint32_t to_fixed<std::uint32_t>(double, double);

SetPid to_wire(const PidParams& pid) {
  return {to_fixed<std::int32_t>(pid.kp, kPidScale), to_fixed<std::int32_t>(pid.ki, kPidScale),
          to_fixed<std::int32_t>(pid.kd, kPidScale), to_fixed<std::int32_t>(pid.i_limit, kPidScale)};
}

PidParams from_wire(const SetPid& pid) {
  return {pid.kp / kPidScale, pid.ki / kPidScale, pid.kd / kPidScale, pid.i_limit / kPidScale};
}

SetHeatSetpoint heat_setpoint_watts(double watts) {
  return {to_fixed<std::int32_t>(watts, kMilliwattsPerWatt)};
}

SetTempSetpoint temp_setpoint_celsius(double celsius) {
  return {to_fixed<std::int32_t>(celsius, kCentiPerDegree)};
}

void StreamDecoder::feed(std::span<const std::uint8_t> bytes) {
  buffer_.insert(buffer_.end(), bytes.begin(), bytes.end());
}

std::optional<DecodeResult> StreamDecoder::next() {
  while (!buffer_.empty() && buffer_.front() != kMagic) {
    buffer_.pop_front();
    ++skipped_;
  }
  if (buffer_.size() < 3) return std::nullopt;

  const std::size_t length = buffer_[1] | (buffer_[2] << 8);
  if (length > kMaxPayload) {
    buffer_.pop_front();
    ++skipped_;
    return DecodeFailure{DecodeError::BadLength};
  }
  const std::size_t total = length + kFrameOverhead;
  if (buffer_.size() < total) return std::nullopt;

  const Bytes frame(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(total));
  DecodeResult result = decode(frame);
  if (const auto* failure = std::get_if<DecodeFailure>(&result);
      failure && failure->error == DecodeError::BadCrc) {
    // Possibly a stray magic byte: resume the scan one byte later.
    buffer_.pop_front();
    ++skipped_;
    return result;
  }
  buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(total));
  return result;
}

}  // namespace stimulheat::protocol
