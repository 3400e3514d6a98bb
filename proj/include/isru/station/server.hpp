#pragma once

// Live session endpoint over TCP. One poll loop owns the session: it reads
// client frames, ticks the session on a paced clock and broadcasts scene
// snapshots. One client may control; any number may watch.
//
// Pacing: one tick every dt / time_scale wall seconds. Snapshots go out every
// k ticks, k chosen so that at least snapshot_hz arrive per wall second.
// A client that cannot keep up only ever has the newest snapshot queued.

#include "isru/errors.hpp"
#include "isru/link/capture.hpp"
#include "isru/station/protocol.hpp"
#include "isru/station/session.hpp"

#include <arpa/inet.h>
#include <cerrno>
#include <cstring>
#include <fcntl.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <cmath>
#include <list>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace isru::station {

struct ServerOptions {
  std::string bind_address = "127.0.0.1";
  std::uint16_t port = 0;        // 0: pick a free port
  double time_scale = 1.0;       // sim seconds per wall second
  double snapshot_hz = 20.0;     // snapshots per wall second, at least 10
  std::uint64_t seed = 1;
  std::string capture_path;      // empty: no capture

  void validate() const {
    if (!(time_scale > 0.0 && time_scale <= 1000.0)) throw BadConfig("server: time_scale must be in (0, 1000]");
    if (!(snapshot_hz >= 10.0 && snapshot_hz <= 1000.0)) throw BadConfig("server: snapshot_hz must be in [10, 1000]");
  }
};

namespace detail {

class Fd {
 public:
  Fd() = default;
  explicit Fd(int fd) : fd_(fd) {}
  Fd(Fd&& o) noexcept : fd_(o.release()) {}
  Fd& operator=(Fd&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = o.release();
    }
    return *this;
  }
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  ~Fd() { reset(); }

  int get() const { return fd_; }
  explicit operator bool() const { return fd_ >= 0; }
  int release() {
    const int f = fd_;
    fd_ = -1;
    return f;
  }
  void reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_ = -1;
};

inline void set_nonblocking(int fd) {
  const int flags = ::fcntl(fd, F_GETFL, 0);
  if (flags < 0 || ::fcntl(fd, F_SETFL, flags | O_NONBLOCK) < 0)
    throw IoError(std::string("fcntl: ") + std::strerror(errno));
}

}  // namespace detail

class StationServer {
 public:
  StationServer(const ScenarioConfig& cfg, ServerOptions opts) : opts_(std::move(opts)) {
    opts_.validate();
    session_ = create_session(cfg, opts_.seed, SessionMode::Interactive);
    if (!opts_.capture_path.empty()) session_->set_capture(std::make_shared<link::CaptureWriter>(opts_.capture_path));
    const double tick_wall = session_->dt() / opts_.time_scale;
    snapshot_every_ = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::floor(1.0 / (opts_.snapshot_hz * tick_wall))));
    listen_on();
  }

  ~StationServer() { stop(); }

  StationServer(const StationServer&) = delete;
  StationServer& operator=(const StationServer&) = delete;

  std::uint16_t port() const { return port_; }
  std::int64_t ticks() const { return ticks_.load(); }
  std::int64_t snapshot_every() const { return snapshot_every_; }
  bool running() const { return running_.load(); }

  SessionInfo info() const {
    SessionInfo i;
    i.scenario = session_->config().name;
    i.force_feedback = session_->config().force_feedback;
    i.delay_s = session_->config().delay;
    i.dt_s = session_->dt();
    i.time_scale = opts_.time_scale;
    i.snapshot_hz = opts_.snapshot_hz;
    const auto& m = session_->station().hcs().config().mapping;
    i.rear_camera = m.rear_camera;
    i.front_camera = m.front_camera;
    const auto& env = session_->sim_model().env;
    i.slot_pose = env.slot_pose;
    i.hole_width = env.hole_width;
    i.insertion_depth = env.insertion_depth;
    i.sample_half_extents = env.sample_half_extents;
    return i;
  }

  /// Runs the loop on a background thread.
  void start() {
    if (thread_.joinable()) return;
    stop_ = false;
    thread_ = std::thread([this] { run(); });
  }

  void stop() {
    stop_ = true;
    if (thread_.joinable()) thread_.join();
  }

  /// Blocking loop until stop().
  void run() {
    running_ = true;
    using Clock = std::chrono::steady_clock;
    const auto period = std::chrono::duration_cast<Clock::duration>(
        std::chrono::duration<double>(session_->dt() / opts_.time_scale));
    auto next = Clock::now();
    while (!stop_) {
      const auto now = Clock::now();
      const auto wait = std::chrono::duration_cast<std::chrono::milliseconds>(next - now).count();
      poll_io(static_cast<int>(std::clamp<long long>(wait, 0, 50)));
      if (Clock::now() >= next) {
        tick();
        next += period;
        // Do not try to make up for more than a second of lost time.
        if (Clock::now() - next > std::chrono::seconds(1)) next = Clock::now();
      }
    }
    for (auto& c : clients_) flush(c);
    clients_.clear();
    running_ = false;
  }

 private:
  struct Client {
    detail::Fd fd;
    FrameReader reader;
    std::optional<Role> role;
    std::string out;
    std::optional<std::string> pending_snapshot;
    bool closing = false;  // close once `out` is flushed
    bool dead = false;
  };

  struct Pending {
    std::string verb;
    Command command;
  };

  void listen_on() {
    detail::Fd fd(::socket(AF_INET, SOCK_STREAM, 0));
    if (!fd) throw IoError(std::string("socket: ") + std::strerror(errno));
    const int one = 1;
    ::setsockopt(fd.get(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(opts_.port);
    if (::inet_pton(AF_INET, opts_.bind_address.c_str(), &addr.sin_addr) != 1)
      throw BadConfig("server: bad bind address '" + opts_.bind_address + "'");
    if (::bind(fd.get(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0) {
      if (errno == EADDRINUSE) throw EndpointBusy("server: port " + std::to_string(opts_.port) + " is in use");
      throw IoError(std::string("bind: ") + std::strerror(errno));
    }
    if (::listen(fd.get(), 16) < 0) throw IoError(std::string("listen: ") + std::strerror(errno));
    socklen_t len = sizeof addr;
    ::getsockname(fd.get(), reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    detail::set_nonblocking(fd.get());
    listen_ = std::move(fd);
  }

  void poll_io(int timeout_ms) {
    std::vector<pollfd> fds;
    fds.push_back({listen_.get(), POLLIN, 0});
    for (auto& c : clients_) fds.push_back({c.fd.get(), static_cast<short>(POLLIN | (c.out.empty() ? 0 : POLLOUT)), 0});
    if (::poll(fds.data(), fds.size(), timeout_ms) < 0) {
      if (errno == EINTR) return;
      throw IoError(std::string("poll: ") + std::strerror(errno));
    }
    if (fds[0].revents & POLLIN) accept_all();
    std::size_t i = 1;
    for (auto& c : clients_) {
      if (i >= fds.size()) break;
      const short ev = fds[i++].revents;
      if (ev & (POLLIN | POLLHUP | POLLERR)) read_from(c);
      if (!c.dead && (ev & POLLOUT)) flush(c);
    }
    clients_.remove_if([this](const Client& c) {
      if (c.dead && controller_ == &c) controller_ = nullptr;
      return c.dead;
    });
  }

  void accept_all() {
    for (;;) {
      const int fd = ::accept(listen_.get(), nullptr, nullptr);
      if (fd < 0) return;
      detail::set_nonblocking(fd);
      const int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
      clients_.push_back(Client{detail::Fd(fd), {}, {}, {}, {}, false, false});
    }
  }

  void read_from(Client& c) {
    char buf[65536];
    for (;;) {
      const ssize_t n = ::recv(c.fd.get(), buf, sizeof buf, 0);
      if (n > 0) {
        c.reader.feed(std::string_view(buf, static_cast<std::size_t>(n)));
        continue;
      }
      if (n == 0 || (errno != EAGAIN && errno != EWOULDBLOCK && errno != EINTR)) c.dead = true;
      break;
    }
    try {
      while (!c.closing) {
        auto j = c.reader.next();
        if (!j) break;
        handle(c, *j);
      }
    } catch (const MalformedFrame& e) {
      send_to(c, encode_frame(error_message("MalformedFrame", e.what())));
      c.closing = true;
    }
    if (c.closing) {
      flush(c);
      c.dead = true;
    }
  }

  void handle(Client& c, const Json& j) {
    ClientMessage m;
    try {
      m = parse_client_message(j);
    } catch (const VersionMismatch& e) {
      send_to(c, encode_frame(error_message("VersionMismatch", e.what())));
      c.closing = true;
      return;
    } catch (const BadConfig& e) {
      send_to(c, encode_frame(error_message("BadMessage", e.what())));
      return;
    }
    if (const auto* h = std::get_if<Hello>(&m)) {
      if (c.role) {
        send_to(c, encode_frame(error_message("BadMessage", "hello already received")));
        return;
      }
      if (h->role == Role::Controller) {
        if (controller_) {
          send_to(c, encode_frame(error_message("EndpointBusy", "a controlling client is already connected")));
          c.closing = true;
          return;
        }
        controller_ = &c;
      }
      c.role = h->role;
      send_to(c, encode_frame(welcome_message(h->role, info())));
      send_to(c, encode_frame(snapshot_message(session_->snapshot(), session_->view())));
      return;
    }
    if (!c.role) {
      send_to(c, encode_frame(error_message("BadMessage", "expected hello first")));
      c.closing = true;
      return;
    }
    const std::string verb = verb_of(m);
    if (*c.role != Role::Controller) {
      send_to(c, encode_frame(reply_message(verb, {false, "NotController: view-only client"})));
      return;
    }
    // Stylus inputs are latest-wins within a tick; everything else queues in order.
    if (const auto* d = std::get_if<StylusDelta>(&m)) {
      hcs::StylusState s = current_stylus();
      s.pose.position += d->delta;
      if (d->button) s.button = *d->button;
      queue_stylus(verb, s);
      return;
    }
    const auto& cmd = std::get<Command>(m);
    if (const auto* s = std::get_if<StylusInput>(&cmd)) {
      queue_stylus(verb, s->stylus);
      return;
    }
    pending_.push_back({verb, cmd});
  }

  hcs::StylusState current_stylus() const {
    for (auto it = pending_.rbegin(); it != pending_.rend(); ++it)
      if (const auto* s = std::get_if<StylusInput>(&it->command)) return s->stylus;
    return session_->view().stylus;
  }

  void queue_stylus(const std::string& verb, const hcs::StylusState& s) {
    for (auto& p : pending_)
      if (std::holds_alternative<StylusInput>(p.command)) {
        p.command = StylusInput{s};
        return;
      }
    pending_.push_back({verb, StylusInput{s}});
  }

  void tick() {
    std::vector<Pending> batch;
    batch.swap(pending_);
    session_->step([&](const StationView&) {
      std::vector<Command> cmds;
      for (const auto& p : batch) cmds.push_back(p.command);
      return cmds;
    });
    const auto& replies = session_->last_replies();
    if (controller_) {
      for (std::size_t i = 0; i < batch.size() && i < replies.size(); ++i) {
        // Stylus inputs are acknowledged only when they fail.
        if (std::holds_alternative<StylusInput>(batch[i].command) && replies[i].ok) continue;
        send_to(*controller_, encode_frame(reply_message(batch[i].verb, replies[i])));
      }
    }
    ticks_ = session_->tick_count();
    if (session_->tick_count() % snapshot_every_ == 0) broadcast_snapshot();
    for (auto& c : clients_) flush(c);
  }

  void broadcast_snapshot() {
    bool any = false;
    for (const auto& c : clients_) any = any || c.role.has_value();
    if (!any) return;
    const std::string frame = encode_frame(snapshot_message(session_->snapshot(), session_->view()));
    for (auto& c : clients_) {
      if (!c.role || c.dead) continue;
      if (c.out.empty()) c.out += frame;
      else c.pending_snapshot = frame;
    }
  }

  void send_to(Client& c, const std::string& frame) {
    if (c.dead) return;
    c.out += frame;
  }

  void flush(Client& c) {
    while (!c.dead) {
      if (c.out.empty()) {
        if (!c.pending_snapshot) return;
        c.out = std::move(*c.pending_snapshot);
        c.pending_snapshot.reset();
      }
      const ssize_t n = ::send(c.fd.get(), c.out.data(), c.out.size(), MSG_NOSIGNAL | MSG_DONTWAIT);
      if (n > 0) {
        c.out.erase(0, static_cast<std::size_t>(n));
        continue;
      }
      if (n < 0 && (errno == EAGAIN || errno == EWOULDBLOCK || errno == EINTR)) return;
      c.dead = true;
    }
  }

  ServerOptions opts_;
  std::unique_ptr<Session> session_;
  detail::Fd listen_;
  std::uint16_t port_ = 0;
  std::int64_t snapshot_every_ = 1;
  std::list<Client> clients_;  // stable addresses: controller_ points into it
  Client* controller_ = nullptr;
  std::vector<Pending> pending_;
  std::thread thread_;
  std::atomic<bool> stop_{false};
  std::atomic<bool> running_{false};
  std::atomic<std::int64_t> ticks_{0};
};

// ---------------------------------------------------------------------------
// Blocking client, used by tests and tools.

class StationClient {
 public:
  StationClient(const std::string& host, std::uint16_t port) {
    detail::Fd fd(::socket(AF_INET, SOCK_STREAM, 0));
    if (!fd) throw IoError(std::string("socket: ") + std::strerror(errno));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) throw BadConfig("client: bad host '" + host + "'");
    if (::connect(fd.get(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0)
      throw IoError(std::string("connect: ") + std::strerror(errno));
    const int one = 1;
    ::setsockopt(fd.get(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    fd_ = std::move(fd);
  }

  void send(const Json& j) {
    const std::string f = encode_frame(j);
    std::size_t off = 0;
    while (off < f.size()) {
      const ssize_t n = ::send(fd_.get(), f.data() + off, f.size() - off, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw IoError(std::string("send: ") + std::strerror(errno));
      }
      off += static_cast<std::size_t>(n);
    }
  }

  void send(const ClientMessage& m) { send(client_message_to_json(m)); }

  /// Next message, or nothing after `timeout_s` or when the server closed.
  std::optional<Json> receive(double timeout_s) {
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(timeout_s);
    for (;;) {
      if (auto j = reader_.next()) return j;
      if (closed_) return std::nullopt;
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) return std::nullopt;
      pollfd p{fd_.get(), POLLIN, 0};
      const int r = ::poll(&p, 1, static_cast<int>(left.count()));
      if (r < 0 && errno != EINTR) throw IoError(std::string("poll: ") + std::strerror(errno));
      if (r <= 0) continue;
      char buf[65536];
      const ssize_t n = ::recv(fd_.get(), buf, sizeof buf, 0);
      if (n > 0) reader_.feed(std::string_view(buf, static_cast<std::size_t>(n)));
      else if (n == 0 || (errno != EINTR && errno != EAGAIN)) closed_ = true;
    }
  }

  bool closed() const { return closed_; }

 private:
  detail::Fd fd_;
  FrameReader reader_;
  bool closed_ = false;
};

}  // namespace isru::station
