#include "stimulheat/client.hpp"

#include <array>
#include <charconv>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <thread>

#include <boost/asio.hpp>
#include <fmt/format.h>

#include "stimulheat/trace_io.hpp"

namespace stimulheat {

namespace asio = boost::asio;
using tcp = asio::ip::tcp;
using Clock = std::chrono::steady_clock;

namespace {

// Telemetry kept for a reader that is not draining the queue.
constexpr std::size_t kMaxBufferedTelemetry = 100000;

bool answers(const protocol::Message& reply, protocol::MsgType command) {
  if (const auto* ack = std::get_if<protocol::Ack>(&reply)) return ack->command == command;
  if (const auto* nack = std::get_if<protocol::Nack>(&reply)) return nack->command == command;
  return command == protocol::MsgType::GetDeviceInfo && std::holds_alternative<protocol::DeviceInfo>(reply);
}

}  // namespace

Address Address::parse(std::string_view text) {
  Address a;
  const auto colon = text.rfind(':');
  a.host = std::string(text.substr(0, colon));
  if (a.host.empty()) throw std::invalid_argument(fmt::format("address '{}' has no host", text));
  if (colon != std::string_view::npos) {
    const auto port = text.substr(colon + 1);
    unsigned value = 0;
    const auto [ptr, ec] = std::from_chars(port.data(), port.data() + port.size(), value);
    if (ec != std::errc() || ptr != port.data() + port.size() || value == 0 || value > 65535) {
      throw std::invalid_argument(fmt::format("address '{}' has an invalid port", text));
    }
    a.port = static_cast<std::uint16_t>(value);
  }
  return a;
}

struct ClientSession::Impl {
  asio::io_context io;
  tcp::socket socket{io};
  std::thread reader;

  std::mutex mutex;
  std::condition_variable cv;
  std::deque<protocol::Telemetry> telemetry;
  std::deque<protocol::Message> replies;
  std::size_t errors = 0;
  bool closed = false;

  std::mutex command_mutex;
  protocol::DeviceInfo info;

  void read_loop() {
    protocol::StreamDecoder decoder;
    std::size_t failures = 0;
    std::array<std::uint8_t, 4096> buffer{};
    while (true) {
      boost::system::error_code ec;
      const std::size_t n = socket.read_some(asio::buffer(buffer), ec);
      std::lock_guard lock(mutex);
      if (ec) {
        closed = true;
        cv.notify_all();
        return;
      }
      decoder.feed({buffer.data(), n});
      while (auto result = decoder.next()) {
        if (const auto* message = std::get_if<protocol::Message>(&*result)) {
          if (const auto* t = std::get_if<protocol::Telemetry>(message)) {
            if (telemetry.size() >= kMaxBufferedTelemetry) telemetry.pop_front();
            telemetry.push_back(*t);
          } else {
            replies.push_back(*message);
          }
        } else {
          ++failures;
        }
      }
      errors = failures + decoder.skipped_bytes();
      cv.notify_all();
    }
  }

  void send(const protocol::Message& message) {
    const auto frame = protocol::encode(message);
    boost::system::error_code ec;
    asio::write(socket, asio::buffer(frame), ec);
    if (ec) throw ClientError(ClientError::Kind::Closed, "send failed: " + ec.message());
  }

  void shutdown() {
    boost::system::error_code ignored;
    socket.shutdown(tcp::socket::shutdown_both, ignored);
    if (reader.joinable()) reader.join();
    socket.close(ignored);
  }
};

ClientSession::ClientSession(std::unique_ptr<Impl> impl) : impl_(std::move(impl)) {}

ClientSession::~ClientSession() { close(); }

void ClientSession::close() {
  if (impl_) impl_->shutdown();
}

std::unique_ptr<ClientSession> ClientSession::connect(const Address& address, std::chrono::milliseconds timeout) {
  auto impl = std::make_unique<Impl>();
  const auto where = fmt::format("{}:{}", address.host, address.port);

  boost::system::error_code ec;
  tcp::resolver resolver(impl->io);
  const auto endpoints = resolver.resolve(address.host, std::to_string(address.port), ec);
  if (ec) throw ClientError(ClientError::Kind::ConnectionRefused, fmt::format("{}: {}", where, ec.message()));

  bool done = false;
  asio::async_connect(impl->socket, endpoints, [&](const boost::system::error_code& e, const tcp::endpoint&) {
    ec = e;
    done = true;
  });
  impl->io.run_for(timeout);
  if (!done) {
    throw ClientError(ClientError::Kind::ConnectionRefused, fmt::format("{}: connection timed out", where));
  }
  if (ec) throw ClientError(ClientError::Kind::ConnectionRefused, fmt::format("{}: {}", where, ec.message()));
  impl->socket.set_option(tcp::no_delay(true), ec);

  Impl& d = *impl;
  d.reader = std::thread([&d] { d.read_loop(); });
  auto session = std::unique_ptr<ClientSession>(new ClientSession(std::move(impl)));

  d.send(protocol::GetDeviceInfo{});
  std::unique_lock lock(d.mutex);
  const auto deadline = Clock::now() + timeout;
  auto got_info = [&] {
    for (const auto& r : d.replies) {
      if (std::holds_alternative<protocol::DeviceInfo>(r)) return true;
    }
    return false;
  };
  d.cv.wait_until(lock, deadline, [&] { return got_info() || d.closed || d.errors >= kMismatchThreshold; });
  if (!got_info()) {
    const auto reason = d.errors >= kMismatchThreshold ? fmt::format("{} undecodable bytes or frames", d.errors)
                        : d.closed                      ? std::string("peer closed the connection")
                                                        : std::string("no DeviceInfo reply");
    lock.unlock();
    throw ClientError(ClientError::Kind::ProtocolMismatch, fmt::format("{}: {}", where, reason));
  }
  for (auto it = d.replies.begin(); it != d.replies.end(); ++it) {
    if (const auto* info = std::get_if<protocol::DeviceInfo>(&*it)) {
      d.info = *info;
      d.replies.erase(it);
      break;
    }
  }
  if (d.info.protocol_version != protocol::kProtocolVersion) {
    lock.unlock();
    throw ClientError(ClientError::Kind::ProtocolMismatch,
                      fmt::format("{}: protocol version {} (expected {})", where, d.info.protocol_version,
                                  protocol::kProtocolVersion));
  }
  return session;
}

const protocol::DeviceInfo& ClientSession::device_info() const { return impl_->info; }

protocol::Message ClientSession::command(const protocol::Message& message, std::chrono::milliseconds timeout) {
  Impl& d = *impl_;
  std::lock_guard serial(d.command_mutex);
  const auto type = protocol::type_of(message);
  {
    std::lock_guard lock(d.mutex);
    d.replies.clear();
  }
  d.send(message);

  std::unique_lock lock(d.mutex);
  const auto deadline = Clock::now() + timeout;
  while (true) {
    while (!d.replies.empty()) {
      protocol::Message reply = std::move(d.replies.front());
      d.replies.pop_front();
      if (answers(reply, type)) return reply;
    }
    if (d.closed) throw ClientError(ClientError::Kind::Closed, "connection closed");
    if (d.cv.wait_until(lock, deadline) == std::cv_status::timeout && d.replies.empty()) {
      throw ClientError(ClientError::Kind::Timeout,
                        fmt::format("no reply to {}", protocol::name_of(type)));
    }
  }
}

protocol::Telemetry ClientSession::status(std::chrono::milliseconds timeout) {
  Impl& d = *impl_;
  std::lock_guard serial(d.command_mutex);
  clear_telemetry();
  d.send(protocol::GetStatus{});
  if (auto t = next_telemetry(timeout)) return *t;
  throw ClientError(ClientError::Kind::Timeout, "no telemetry");
}

std::optional<protocol::Telemetry> ClientSession::next_telemetry(std::chrono::milliseconds timeout) {
  Impl& d = *impl_;
  std::unique_lock lock(d.mutex);
  d.cv.wait_for(lock, timeout, [&d] { return !d.telemetry.empty() || d.closed; });
  if (d.telemetry.empty()) {
    if (d.closed) throw ClientError(ClientError::Kind::Closed, "connection closed");
    return std::nullopt;
  }
  const protocol::Telemetry t = d.telemetry.front();
  d.telemetry.pop_front();
  return t;
}

void ClientSession::clear_telemetry() {
  std::lock_guard lock(impl_->mutex);
  impl_->telemetry.clear();
}

std::size_t ClientSession::decode_errors() const {
  std::lock_guard lock(impl_->mutex);
  return impl_->errors;
}

namespace {

protocol::Telemetry require_telemetry(ClientSession& session) {
  if (auto t = session.next_telemetry()) return *t;
  throw ClientError(ClientError::Kind::Timeout, "telemetry stopped");
}

void require_ack(ClientSession& session, const protocol::Message& command) {
  const auto reply = session.command(command);
  if (const auto* nack = std::get_if<protocol::Nack>(&reply)) {
    throw ClientError(ClientError::Kind::Refused,
                      fmt::format("{} refused, legal raw range [{}, {}]", protocol::name_of(nack->command),
                                  nack->min_raw, nack->max_raw));
  }
}

}  // namespace

Trace record_live(ClientSession& session, double duration_s, const std::function<void(const TraceRecord&)>& on_row) {
  const auto span_ms = static_cast<std::int64_t>(std::llround(duration_s * 1000.0));
  session.clear_telemetry();
  Trace trace;
  const protocol::Telemetry first = require_telemetry(session);
  protocol::Telemetry t = first;
  while (static_cast<std::int64_t>(t.timestamp_ms) - first.timestamp_ms < span_ms) {
    trace.push_back(from_telemetry(t));
    if (on_row) on_row(trace.back());
    t = require_telemetry(session);
  }
  return trace;
}

Trace run_live_scenario(ClientSession& session, const Scenario& scenario,
                        const std::function<void(const TraceRecord&)>& on_row) {
  Trace trace;
  std::optional<std::int64_t> deadline_ms;
  require_ack(session, protocol::Enable{true});
  session.clear_telemetry();
  for (const Hold& hold : scenario.holds) {
    require_ack(session, protocol::SetMode{hold.mode});
    if (hold.mode == ControlMode::HeatFlow) require_ack(session, protocol::heat_setpoint_watts(hold.setpoint));
    if (hold.mode == ControlMode::Temperature) require_ack(session, protocol::temp_setpoint_celsius(hold.setpoint));
    const auto span = static_cast<std::int64_t>(std::llround(hold.duration_s * 1000.0));
    while (true) {
      const protocol::Telemetry t = require_telemetry(session);
      if (!deadline_ms) deadline_ms = static_cast<std::int64_t>(t.timestamp_ms);
      if (static_cast<std::int64_t>(t.timestamp_ms) >= *deadline_ms + span) {
        *deadline_ms += span;
        trace.push_back(from_telemetry(t));
        if (on_row) on_row(trace.back());
        break;
      }
      trace.push_back(from_telemetry(t));
      if (on_row) on_row(trace.back());
    }
  }
  return trace;
}

}  // namespace stimulheat
