#ifndef SPINN_TRANSPORT_HPP_
#define SPINN_TRANSPORT_HPP_

#include <cstdint>
#include <deque>
#include <map>
#include <mutex>
#include <optional>
#include <set>

#include "spinn/bundle.hpp"
#include "spinn/protocol.hpp"
#include "spinn/timeline.hpp"

namespace spinn {

// Server side of an offload. Stands in for executing layers split+1.. by
// reading the recorded confidences of the sample named in the request id,
// and accounts the profiled compute time scaled by the current slowdown.
// Thread-safe.
class ServerCore {
 public:
  ServerCore(const Bundle& bundle, ExecPolicy policy, double slowdown = 1.0,
             bool verify_payloads = true);

  void set_slowdown(double slowdown);
  double slowdown() const;

  // Returns the reply, or nothing when a cancel for this request arrived
  // before it started. Throws kIntegrity on a malformed request.
  std::optional<ResultMessage> handle(const OffloadRequest& request);

  // A cancel for a request that has not started suppresses it entirely. For
  // a finished request, `elapsed_ms` (simulated time from request start to
  // cancel arrival) caps the compute accounted to it.
  void cancel(std::uint64_t request_id, std::optional<double> elapsed_ms = std::nullopt);

  double accounted_ms(std::uint64_t request_id) const;
  double total_accounted_ms() const;
  std::uint64_t handled() const;
  std::uint64_t cancels_seen() const;

 private:
  void verify(const OffloadRequest& request, const SplitPoint& split) const;

  const Bundle* bundle_;
  CostModel model_;
  bool verify_;
  mutable std::mutex mu_;
  double slowdown_;
  std::map<std::uint64_t, double> accounted_;
  std::deque<std::uint64_t> accounted_order_;
  std::set<std::uint64_t> pending_cancel_;
  std::deque<std::uint64_t> pending_order_;
  double total_ms_ = 0.0;
  std::uint64_t handled_ = 0;
  std::uint64_t cancels_ = 0;
};

struct TransportCounters {
  std::uint64_t bytes_up = 0;
  std::uint64_t bytes_down = 0;
  std::uint64_t offloads = 0;
  std::uint64_t results = 0;
  std::uint64_t cancels = 0;
  std::uint64_t probes = 0;
  std::uint64_t dropped = 0;
};

class ClientTransport {
 public:
  virtual ~ClientTransport() = default;

  // Sends the request and waits for its result. With `drop` set the message
  // is lost in transit: its bytes count as sent but nothing reaches the
  // server. Returns nothing when no result comes back.
  virtual std::optional<ResultMessage> offload(const OffloadRequest& request,
                                               bool drop) = 0;
  // `server_elapsed_ms` is the simulated time the server had spent on the
  // request when the cancel reached it.
  virtual void cancel(std::uint64_t request_id, double server_elapsed_ms) = 0;
  virtual bool probe(bool drop) = 0;
  virtual TransportCounters counters() const = 0;
};

// In-process transport: messages go through the same encoder and decoder as
// the socket transport, then straight into a ServerCore.
class SimTransport : public ClientTransport {
 public:
  explicit SimTransport(ServerCore& server) : server_(&server) {}

  std::optional<ResultMessage> offload(const OffloadRequest& request, bool drop) override;
  void cancel(std::uint64_t request_id, double server_elapsed_ms) override;
  bool probe(bool drop) override;
  TransportCounters counters() const override { return counters_; }

 private:
  ServerCore* server_;
  TransportCounters counters_;
};

}  // namespace spinn

#endif  // SPINN_TRANSPORT_HPP_
