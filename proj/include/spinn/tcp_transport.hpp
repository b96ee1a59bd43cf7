#ifndef SPINN_TCP_TRANSPORT_HPP_
#define SPINN_TCP_TRANSPORT_HPP_

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "spinn/transport.hpp"

namespace spinn {

// Offload server over TCP. One reader thread per connection; offloads are
// queued to a worker thread so that a cancel can overtake a request that has
// not started yet. Replies are written by the worker.
class TcpServer {
 public:
  explicit TcpServer(ServerCore& core, std::uint16_t port = 0,
                     std::string bind_address = "127.0.0.1");
  ~TcpServer();
  TcpServer(const TcpServer&) = delete;
  TcpServer& operator=(const TcpServer&) = delete;

  void start();
  void stop();
  std::uint16_t port() const { return port_; }

  // Holds the worker before it starts the next queued request.
  void pause();
  void resume();

  std::uint64_t malformed_frames() const { return malformed_.load(); }
  std::size_t queued() const;

 private:
  struct Connection;
  struct Job {
    std::shared_ptr<Connection> conn;
    OffloadRequest request;
  };

  void accept_loop();
  void read_loop(std::shared_ptr<Connection> conn);
  void work_loop();

  ServerCore* core_;
  std::string bind_address_;
  std::uint16_t port_;
  int listen_fd_ = -1;
  std::atomic<bool> running_{false};
  std::atomic<std::uint64_t> malformed_{0};
  std::thread accept_thread_;
  std::thread worker_;
  std::mutex conns_mu_;
  std::vector<std::shared_ptr<Connection>> conns_;
  std::vector<std::thread> readers_;
  mutable std::mutex queue_mu_;
  std::condition_variable queue_cv_;
  std::deque<Job> queue_;
  bool paused_ = false;
};

class TcpClientTransport : public ClientTransport {
 public:
  TcpClientTransport(const std::string& host, std::uint16_t port, double timeout_s = 10.0);
  ~TcpClientTransport() override;
  TcpClientTransport(const TcpClientTransport&) = delete;
  TcpClientTransport& operator=(const TcpClientTransport&) = delete;

  std::optional<ResultMessage> offload(const OffloadRequest& request, bool drop) override;
  void cancel(std::uint64_t request_id, double server_elapsed_ms) override;
  bool probe(bool drop) override;
  TransportCounters counters() const override { return counters_; }

  void send_offload(const OffloadRequest& request);
  void send_cancel(std::uint64_t request_id);
  // Reads until the result for `request_id` arrives, dropping replies to
  // other (stale) requests. Nothing on timeout.
  std::optional<ResultMessage> await_result(std::uint64_t request_id);

 private:
  void send_bytes(const std::vector<std::uint8_t>& bytes);
  // Next frame, or nothing on timeout.
  std::optional<std::pair<FrameHeader, std::vector<std::uint8_t>>> read_frame();

  int fd_ = -1;
  TransportCounters counters_;
};

}  // namespace spinn

#endif  // SPINN_TCP_TRANSPORT_HPP_
