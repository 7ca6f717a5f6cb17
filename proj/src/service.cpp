#include "stimulheat/service.hpp"

#include <atomic>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <set>
#include <thread>
#include <variant>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <fmt/format.h>

namespace stimulheat {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;
using protocol::Bytes;

namespace {

using Frame = std::shared_ptr<const Bytes>;

// Frames queued on one session before it is treated as stalled and dropped.
constexpr std::size_t kMaxQueuedFrames = 1024;
// Fast mode pauses the simulation while this many frames are still unsent.
constexpr std::size_t kFastBackpressure = 256;

class Session;

struct Pending {
  std::weak_ptr<Session> origin;
  std::variant<protocol::Message, protocol::DecodeFailure> item;
};

// Shared between sessions (I/O thread) and the simulation thread.
struct Hub {
  std::mutex mutex;
  std::deque<Pending> commands;
  std::atomic<std::size_t> unsent{0};

  void push(Pending p) {
    std::lock_guard lock(mutex);
    commands.push_back(std::move(p));
  }
  std::deque<Pending> take() {
    std::lock_guard lock(mutex);
    return std::exchange(commands, {});
  }
};

class Session : public std::enable_shared_from_this<Session> {
 public:
  Session(Hub& hub, std::set<std::shared_ptr<Session>>& registry) : hub_(hub), registry_(registry) {}
  virtual ~Session() = default;

  virtual void start() = 0;

  // I/O thread only.
  void send(const Frame& frame) {
    if (closed_) return;
    if (queue_.size() >= kMaxQueuedFrames) {
      close();
      return;
    }
    queue_.push_back(frame);
    ++hub_.unsent;
    resume();
  }

  void close() {
    if (closed_) return;
    closed_ = true;
    hub_.unsent -= queue_.size();
    queue_.clear();
    shutdown();
    registry_.erase(shared_from_this());
  }

 protected:
  virtual void write_frame(const Frame& frame) = 0;
  virtual void shutdown() = 0;

  void on_written(const boost::system::error_code& ec) {
    if (closed_) return;
    queue_.pop_front();
    --hub_.unsent;
    writing_ = false;
    if (ec) {
      close();
      return;
    }
    resume();
  }

  // Frames wait in the queue until the transport is ready for them.
  virtual bool ready() const { return true; }

  void resume() {
    if (!writing_ && !queue_.empty() && ready()) write_next();
  }

  void on_bytes(const std::uint8_t* data, std::size_t size) {
    decoder_.feed({data, size});
    while (auto result = decoder_.next()) {
      if (const auto* message = std::get_if<protocol::Message>(&*result)) {
        if (protocol::is_command(*message)) hub_.push({weak_from_this(), *message});
      } else {
        const auto& failure = std::get<protocol::DecodeFailure>(*result);
        if (failure.error == protocol::DecodeError::RangeViolation) hub_.push({weak_from_this(), failure});
      }
    }
  }

  bool closed_ = false;

 private:
  void write_next() {
    writing_ = true;
    write_frame(queue_.front());
  }

  Hub& hub_;
  std::set<std::shared_ptr<Session>>& registry_;
  protocol::StreamDecoder decoder_;
  std::deque<Frame> queue_;
  bool writing_ = false;
};

class TcpSession final : public Session {
 public:
  TcpSession(tcp::socket socket, Hub& hub, std::set<std::shared_ptr<Session>>& registry)
      : Session(hub, registry), socket_(std::move(socket)) {}

  void start() override { read(); }

 protected:
  void write_frame(const Frame& frame) override {
    asio::async_write(socket_, asio::buffer(*frame),
                      [self = shared_from_this(), frame](const boost::system::error_code& ec, std::size_t) {
                        static_cast<TcpSession&>(*self).on_written(ec);
                      });
  }

  void shutdown() override {
    boost::system::error_code ignored;
    socket_.shutdown(tcp::socket::shutdown_both, ignored);
    socket_.close(ignored);
  }

 private:
  void read() {
    socket_.async_read_some(asio::buffer(buffer_), [self = shared_from_this()](const boost::system::error_code& ec,
                                                                               std::size_t n) {
      auto& s = static_cast<TcpSession&>(*self);
      if (s.closed_) return;
      if (ec) {
        s.close();
        return;
      }
      s.on_bytes(s.buffer_.data(), n);
      s.read();
    });
  }

  tcp::socket socket_;
  std::array<std::uint8_t, 4096> buffer_{};
};

class WsSession final : public Session {
 public:
  WsSession(tcp::socket socket, Hub& hub, std::set<std::shared_ptr<Session>>& registry)
      : Session(hub, registry), ws_(std::move(socket)) {}

  void start() override {
    http::async_read(ws_.next_layer(), http_buffer_, request_,
                     [self = shared_from_this()](const boost::system::error_code& ec, std::size_t) {
                       static_cast<WsSession&>(*self).on_request(ec);
                     });
  }

 protected:
  void write_frame(const Frame& frame) override {
    ws_.async_write(asio::buffer(*frame),
                    [self = shared_from_this(), frame](const boost::system::error_code& ec, std::size_t) {
                      static_cast<WsSession&>(*self).on_written(ec);
                    });
  }

  bool ready() const override { return accepted_; }

  void shutdown() override {
    boost::system::error_code ignored;
    ws_.next_layer().shutdown(tcp::socket::shutdown_both, ignored);
    ws_.next_layer().close(ignored);
  }

 private:
  void on_request(const boost::system::error_code& ec) {
    if (closed_) return;
    if (ec || !websocket::is_upgrade(request_) || request_.target() != "/ws") {
      reject();
      return;
    }
    ws_.binary(true);
    ws_.async_accept(request_, [self = shared_from_this()](const boost::system::error_code& e) {
      auto& s = static_cast<WsSession&>(*self);
      if (s.closed_) return;
      if (e) {
        s.close();
        return;
      }
      s.accepted_ = true;
      s.read();
      s.resume();
    });
  }

  void reject() {
    auto response = std::make_shared<http::response<http::string_body>>(http::status::not_found, request_.version());
    response->set(http::field::content_type, "text/plain");
    response->body() = "websocket endpoint is /ws\n";
    response->prepare_payload();
    http::async_write(ws_.next_layer(), *response,
                      [self = shared_from_this(), response](const boost::system::error_code&, std::size_t) {
                        self->close();
                      });
  }

  void read() {
    ws_.async_read(read_buffer_, [self = shared_from_this()](const boost::system::error_code& ec, std::size_t) {
      auto& s = static_cast<WsSession&>(*self);
      if (s.closed_) return;
      if (ec) {
        s.close();
        return;
      }
      const auto data = s.read_buffer_.data();
      s.on_bytes(static_cast<const std::uint8_t*>(data.data()), data.size());
      s.read_buffer_.consume(s.read_buffer_.size());
      s.read();
    });
  }

  websocket::stream<tcp::socket> ws_;
  beast::flat_buffer http_buffer_;
  beast::flat_buffer read_buffer_;
  http::request<http::string_body> request_;
  bool accepted_ = false;
};

}  // namespace

struct Service::Impl {
  explicit Impl(DeviceConfig c) : config(std::move(c)), device(config) {}

  DeviceConfig config;
  Device device;  // simulation thread only, once started

  asio::io_context io;
  std::optional<asio::executor_work_guard<asio::io_context::executor_type>> work;
  std::optional<tcp::acceptor> tcp_acceptor;
  std::optional<tcp::acceptor> ws_acceptor;
  std::set<std::shared_ptr<Session>> sessions;  // I/O thread only
  std::atomic<std::size_t> session_count{0};
  Hub hub;

  std::thread io_thread;
  std::thread sim_thread;
  std::atomic<bool> running{false};
  std::atomic<std::uint64_t> ticks{0};
  std::atomic<std::uint64_t> telemetry_sent{0};
  std::uint16_t tcp_port = 0;
  std::uint16_t ws_port = 0;

  std::mutex stop_mutex;
  std::condition_variable stopped_cv;
  bool stopped = false;

  template <typename S>
  void accept(tcp::acceptor& acceptor) {
    acceptor.async_accept([this, &acceptor](const boost::system::error_code& ec, tcp::socket socket) {
      if (!acceptor.is_open()) return;
      if (!ec) {
        boost::system::error_code ignored;
        socket.set_option(tcp::no_delay(true), ignored);
        auto session = std::make_shared<S>(std::move(socket), hub, sessions);
        sessions.insert(session);
        session->start();
        session_count = sessions.size();
      }
      accept<S>(acceptor);
    });
  }

  void post_frame(const std::weak_ptr<Session>& origin, Frame frame) {
    asio::post(io, [this, origin, frame = std::move(frame)] {
      if (auto s = origin.lock()) s->send(frame);
      session_count = sessions.size();
    });
  }

  void broadcast(Frame frame) {
    asio::post(io, [this, frame = std::move(frame)] {
      // Copy: a stalled session removes itself from the set while we iterate.
      const auto targets = sessions;
      for (const auto& s : targets) s->send(frame);
      session_count = sessions.size();
    });
    ++telemetry_sent;
  }

  void drain_commands() {
    for (Pending& p : hub.take()) {
      protocol::Message reply = std::visit(
          [this](const auto& item) -> protocol::Message {
            using T = std::decay_t<decltype(item)>;
            if constexpr (std::is_same_v<T, protocol::Message>) {
              return device.apply(item);
            } else {
              return Device::range_nack(static_cast<protocol::MsgType>(item.msg_type));
            }
          },
          p.item);
      post_frame(p.origin, std::make_shared<const Bytes>(protocol::encode(reply)));
    }
  }

  void simulate() {
    using clock = std::chrono::steady_clock;
    const auto period = std::chrono::duration_cast<clock::duration>(
        std::chrono::duration<double>(config.control_period()));
    const auto telemetry_every = static_cast<std::uint64_t>(config.ticks_per_telemetry());
    auto deadline = clock::now();

    while (running) {
      drain_commands();
      (void)device.tick();
      ticks = device.ticks();
      if (device.ticks() % telemetry_every == 0) {
        broadcast(std::make_shared<const Bytes>(protocol::encode(device.telemetry())));
      }
      if (config.realtime) {
        deadline += period;
        std::this_thread::sleep_until(deadline);
      } else {
        while (running && hub.unsent > kFastBackpressure) std::this_thread::sleep_for(std::chrono::microseconds(200));
        if (device.ticks() % 64 == 0) std::this_thread::yield();
      }
    }
  }
};

Service::Service(DeviceConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {}

Service::~Service() { stop(); }

void Service::start(const std::string& bind_address) {
  auto& d = *impl_;
  if (d.running) return;
  const auto address = asio::ip::make_address(bind_address);
  auto open = [&](std::uint16_t port, const char* what) {
    tcp::acceptor acceptor(d.io);
    const tcp::endpoint endpoint(address, port);
    try {
      acceptor.open(endpoint.protocol());
      acceptor.set_option(asio::socket_base::reuse_address(true));
      acceptor.bind(endpoint);
      acceptor.listen();
    } catch (const boost::system::system_error& e) {
      throw std::runtime_error(fmt::format("cannot listen for {} on {}:{}: {}", what, bind_address, port,
                                           e.code().message()));
    }
    return acceptor;
  };
  d.tcp_acceptor.emplace(open(d.config.tcp_port, "tcp"));
  d.ws_acceptor.emplace(open(d.config.ws_port, "websocket"));
  d.tcp_port = d.tcp_acceptor->local_endpoint().port();
  d.ws_port = d.ws_acceptor->local_endpoint().port();

  d.accept<TcpSession>(*d.tcp_acceptor);
  d.accept<WsSession>(*d.ws_acceptor);
  d.work.emplace(d.io.get_executor());
  d.running = true;
  d.io_thread = std::thread([&d] { d.io.run(); });
  d.sim_thread = std::thread([&d] { d.simulate(); });
}

void Service::stop() {
  auto& d = *impl_;
  if (d.running.exchange(false)) {
    d.sim_thread.join();
    asio::post(d.io, [&d] {
      boost::system::error_code ignored;
      d.tcp_acceptor->close(ignored);
      d.ws_acceptor->close(ignored);
      const auto all = d.sessions;
      for (const auto& s : all) s->close();
      d.session_count = 0;
    });
    d.work.reset();
    d.io_thread.join();
  }
  std::lock_guard lock(d.stop_mutex);
  d.stopped = true;
  d.stopped_cv.notify_all();
}

void Service::wait() {
  auto& d = *impl_;
  std::unique_lock lock(d.stop_mutex);
  d.stopped_cv.wait(lock, [&d] { return d.stopped; });
}

std::uint16_t Service::tcp_port() const { return impl_->tcp_port; }
std::uint16_t Service::ws_port() const { return impl_->ws_port; }
std::size_t Service::session_count() const { return impl_->session_count; }
std::uint64_t Service::ticks() const { return impl_->ticks; }
std::uint64_t Service::telemetry_sent() const { return impl_->telemetry_sent; }

}  // namespace stimulheat
