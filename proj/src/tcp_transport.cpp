#include "spinn/tcp_transport.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <sys/time.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "spinn/error.hpp"

namespace spinn {
namespace {

[[noreturn]] void sys_fail(const std::string& what) {
  throw Error(ErrorCategory::kTransport, fmt::format("{}: {}", what, std::strerror(errno)));
}

bool write_all(int fd, const std::uint8_t* data, std::size_t n) {
  while (n > 0) {
    const ssize_t w = ::send(fd, data, n, MSG_NOSIGNAL);
    if (w < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    data += w;
    n -= static_cast<std::size_t>(w);
  }
  return true;
}

enum class ReadStatus { kOk, kClosed, kTimeout };

ReadStatus read_all(int fd, std::uint8_t* data, std::size_t n) {
  while (n > 0) {
    const ssize_t r = ::recv(fd, data, n, 0);
    if (r == 0) return ReadStatus::kClosed;
    if (r < 0) {
      if (errno == EINTR) continue;
      if (errno == EAGAIN || errno == EWOULDBLOCK) return ReadStatus::kTimeout;
      return ReadStatus::kClosed;
    }
    data += r;
    n -= static_cast<std::size_t>(r);
  }
  return ReadStatus::kOk;
}

void set_nodelay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

}  // namespace

struct TcpServer::Connection {
  int fd = -1;
  std::mutex write_mu;
  std::atomic<bool> open{true};

  bool write(const std::vector<std::uint8_t>& bytes) {
    std::lock_guard<std::mutex> lock(write_mu);
    return open.load() && write_all(fd, bytes.data(), bytes.size());
  }
  void reset() {
    if (open.exchange(false)) ::shutdown(fd, SHUT_RDWR);
  }
};

TcpServer::TcpServer(ServerCore& core, std::uint16_t port, std::string bind_address)
    : core_(&core), bind_address_(std::move(bind_address)), port_(port) {}

TcpServer::~TcpServer() { stop(); }

void TcpServer::start() {
  if (running_) return;
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) sys_fail("socket");
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port_);
  if (::inet_pton(AF_INET, bind_address_.c_str(), &addr.sin_addr) != 1) {
    ::close(listen_fd_);
    listen_fd_ = -1;
    throw Error(ErrorCategory::kUsage, "bad bind address: " + bind_address_);
  }
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0 ||
      ::listen(listen_fd_, 16) < 0) {
    const int saved = errno;
    ::close(listen_fd_);
    listen_fd_ = -1;
    errno = saved;
    sys_fail(fmt::format("bind {}:{}", bind_address_, port_));
  }
  socklen_t len = sizeof(addr);
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  running_ = true;
  worker_ = std::thread([this] { work_loop(); });
  accept_thread_ = std::thread([this] { accept_loop(); });
}

void TcpServer::stop() {
  if (!running_.exchange(false)) return;
  ::shutdown(listen_fd_, SHUT_RDWR);
  ::close(listen_fd_);
  listen_fd_ = -1;
  if (accept_thread_.joinable()) accept_thread_.join();
  {
    std::lock_guard<std::mutex> lock(conns_mu_);
    for (auto& c : conns_) c->reset();
  }
  for (auto& t : readers_) {
    if (t.joinable()) t.join();
  }
  readers_.clear();
  {
    std::lock_guard<std::mutex> lock(conns_mu_);
    for (auto& c : conns_) ::close(c->fd);
    conns_.clear();
  }
  queue_cv_.notify_all();
  if (worker_.joinable()) worker_.join();
  queue_.clear();
}

void TcpServer::pause() {
  std::lock_guard<std::mutex> lock(queue_mu_);
  paused_ = true;
}

void TcpServer::resume() {
  {
    std::lock_guard<std::mutex> lock(queue_mu_);
    paused_ = false;
  }
  queue_cv_.notify_all();
}

std::size_t TcpServer::queued() const {
  std::lock_guard<std::mutex> lock(queue_mu_);
  return queue_.size();
}

void TcpServer::accept_loop() {
  while (running_) {
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (errno == EINTR) continue;
      break;
    }
    set_nodelay(fd);
    auto conn = std::make_shared<Connection>();
    conn->fd = fd;
    std::lock_guard<std::mutex> lock(conns_mu_);
    conns_.push_back(conn);
    readers_.emplace_back([this, conn] { read_loop(conn); });
  }
}

void TcpServer::read_loop(std::shared_ptr<Connection> conn) {
  std::vector<std::uint8_t> head(kHeaderBytes);
  std::vector<std::uint8_t> payload;
  while (running_ && conn->open) {
    if (read_all(conn->fd, head.data(), head.size()) != ReadStatus::kOk) break;
    try {
      const FrameHeader h = decode_header(head);
      if (h.payload_len > kMaxPayloadBytes) {
        throw Error(ErrorCategory::kIntegrity,
                    fmt::format("payload of {} bytes exceeds the limit", h.payload_len));
      }
      payload.resize(h.payload_len);
      if (read_all(conn->fd, payload.data(), payload.size()) != ReadStatus::kOk) break;
      switch (h.type) {
        case MessageType::kOffload: {
          Job job{conn, decode_offload(h.request_id, payload)};
          {
            std::lock_guard<std::mutex> lock(queue_mu_);
            queue_.push_back(std::move(job));
          }
          queue_cv_.notify_one();
          break;
        }
        case MessageType::kCancel: {
          // A cancel for a still-queued request removes it from the queue.
          bool removed = false;
          {
            std::lock_guard<std::mutex> lock(queue_mu_);
            for (auto it = queue_.begin(); it != queue_.end(); ++it) {
              if (it->request.request_id == h.request_id) {
                queue_.erase(it);
                removed = true;
                break;
              }
            }
          }
          core_->cancel(h.request_id);
          if (removed) spdlog::debug("request {:#x} cancelled before start", h.request_id);
          break;
        }
        case MessageType::kProbe:
          conn->write(encode_control(MessageType::kProbeAck, h.request_id));
          break;
        default:
          throw Error(ErrorCategory::kIntegrity,
                      fmt::format("unexpected message type {}", static_cast<int>(h.type)));
      }
    } catch (const Error& e) {
      ++malformed_;
      spdlog::error("resetting connection: {}", e.what());
      break;
    }
  }
  conn->reset();
}

void TcpServer::work_loop() {
  while (true) {
    Job job;
    {
      std::unique_lock<std::mutex> lock(queue_mu_);
      queue_cv_.wait(lock, [this] { return !running_ || (!paused_ && !queue_.empty()); });
      if (!running_) return;
      job = std::move(queue_.front());
      queue_.pop_front();
    }
    try {
      const auto reply = core_->handle(job.request);
      if (reply) job.conn->write(encode_result(*reply));
    } catch (const Error& e) {
      ++malformed_;
      spdlog::error("resetting connection: {}", e.what());
      job.conn->reset();
    }
  }
}

TcpClientTransport::TcpClientTransport(const std::string& host, std::uint16_t port,
                                       double timeout_s) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string service = std::to_string(port);
  if (const int rc = ::getaddrinfo(host.c_str(), service.c_str(), &hints, &res); rc != 0) {
    throw Error(ErrorCategory::kTransport,
                fmt::format("resolve {}: {}", host, ::gai_strerror(rc)));
  }
  for (addrinfo* p = res; p != nullptr; p = p->ai_next) {
    fd_ = ::socket(p->ai_family, p->ai_socktype, p->ai_protocol);
    if (fd_ < 0) continue;
    if (::connect(fd_, p->ai_addr, p->ai_addrlen) == 0) break;
    ::close(fd_);
    fd_ = -1;
  }
  ::freeaddrinfo(res);
  if (fd_ < 0) sys_fail(fmt::format("connect {}:{}", host, port));
  set_nodelay(fd_);
  timeval tv{};
  tv.tv_sec = static_cast<time_t>(timeout_s);
  tv.tv_usec = static_cast<suseconds_t>((timeout_s - static_cast<double>(tv.tv_sec)) * 1e6);
  ::setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
}

TcpClientTransport::~TcpClientTransport() {
  if (fd_ >= 0) ::close(fd_);
}

void TcpClientTransport::send_bytes(const std::vector<std::uint8_t>& bytes) {
  if (!write_all(fd_, bytes.data(), bytes.size())) sys_fail("send");
}

std::optional<std::pair<FrameHeader, std::vector<std::uint8_t>>>
TcpClientTransport::read_frame() {
  std::vector<std::uint8_t> head(kHeaderBytes);
  ReadStatus st = read_all(fd_, head.data(), head.size());
  if (st == ReadStatus::kTimeout) return std::nullopt;
  if (st == ReadStatus::kClosed) {
    throw Error(ErrorCategory::kTransport, "connection closed by server");
  }
  const FrameHeader h = decode_header(head);
  if (h.payload_len > kMaxPayloadBytes) {
    throw Error(ErrorCategory::kIntegrity, "oversized reply");
  }
  std::vector<std::uint8_t> payload(h.payload_len);
  st = read_all(fd_, payload.data(), payload.size());
  if (st != ReadStatus::kOk) {
    throw Error(ErrorCategory::kTransport, "connection lost mid-frame");
  }
  return std::make_pair(h, std::move(payload));
}

void TcpClientTransport::send_offload(const OffloadRequest& request) {
  const auto wire = encode_offload(request);
  send_bytes(wire);
  counters_.bytes_up += wire.size();
  ++counters_.offloads;
}

void TcpClientTransport::send_cancel(std::uint64_t request_id) {
  const auto wire = encode_control(MessageType::kCancel, request_id);
  send_bytes(wire);
  counters_.bytes_up += wire.size();
  ++counters_.cancels;
}

std::optional<ResultMessage> TcpClientTransport::await_result(std::uint64_t request_id) {
  while (true) {
    auto frame = read_frame();
    if (!frame) return std::nullopt;
    const auto& [h, payload] = *frame;
    counters_.bytes_down += kHeaderBytes + payload.size();
    if (h.type != MessageType::kResult) continue;
    ++counters_.results;
    if (h.request_id != request_id) {
      spdlog::debug("dropping stale result {:#x}", h.request_id);
      continue;
    }
    return decode_result(h.request_id, payload);
  }
}

std::optional<ResultMessage> TcpClientTransport::offload(const OffloadRequest& request,
                                                         bool drop) {
  if (drop) {
    counters_.bytes_up += encode_offload(request).size();
    ++counters_.offloads;
    ++counters_.dropped;
    return std::nullopt;
  }
  send_offload(request);
  return await_result(request.request_id);
}

void TcpClientTransport::cancel(std::uint64_t request_id, double /*server_elapsed_ms*/) {
  // Over a real link the server measures elapsed time itself.
  send_cancel(request_id);
}

bool TcpClientTransport::probe(bool drop) {
  const auto wire = encode_control(MessageType::kProbe, 0);
  counters_.bytes_up += wire.size();
  ++counters_.probes;
  if (drop) {
    ++counters_.dropped;
    return false;
  }
  send_bytes(wire);
  while (true) {
    auto frame = read_frame();
    if (!frame) return false;
    counters_.bytes_down += kHeaderBytes + frame->second.size();
    if (frame->first.type == MessageType::kProbeAck) return true;
    if (frame->first.type == MessageType::kResult) ++counters_.results;
  }
}

}  // namespace spinn
