#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "spinn/error.hpp"
#include "spinn/transport.hpp"

namespace spinn {
namespace {

// Bookkeeping for cancels and per-request accounting is bounded; old entries
// are forgotten first.
constexpr std::size_t kTrackedRequests = 1 << 16;

[[noreturn]] void bad_request(const std::string& message) {
  throw Error(ErrorCategory::kIntegrity, "offload request: " + message);
}

}  // namespace

ServerCore::ServerCore(const Bundle& bundle, ExecPolicy policy, double slowdown,
                       bool verify_payloads)
    : bundle_(&bundle), model_(bundle, policy), verify_(verify_payloads),
      slowdown_(slowdown) {}

void ServerCore::set_slowdown(double slowdown) {
  std::lock_guard<std::mutex> lock(mu_);
  slowdown_ = slowdown;
}

double ServerCore::slowdown() const {
  std::lock_guard<std::mutex> lock(mu_);
  return slowdown_;
}

void ServerCore::verify(const OffloadRequest& request, const SplitPoint& split) const {
  // Payloads travel in cut order (ascending producer), so tags are compared
  // position by position; two tensors may share a first consumer.
  const std::vector<CutTensor> cut = cut_tensors(bundle_->graph(), split.layer_id);
  const auto& payloads = *request.payloads;
  std::vector<LayerId> expected;
  for (const CutTensor& c : cut) expected.push_back(c.first_consumer);
  std::vector<LayerId> got;
  for (const TaggedPayload& p : payloads) got.push_back(p.consumer);
  if (got != expected) {
    bad_request(fmt::format("payloads for consumers [{}] do not cover the cut [{}]",
                            fmt::join(got, ","), fmt::join(expected, ",")));
  }
  for (std::size_t i = 0; i < cut.size(); ++i) {
    const ActivationTensor t = unpack(payloads[i].payload);
    const std::uint64_t want = (cut[i].bytes + 3) / 4;
    if (t.values.size() != want) {
      bad_request(fmt::format("payload for layer {} has {} elements, expected {}",
                              payloads[i].consumer, t.values.size(), want));
    }
  }
}

std::optional<ResultMessage> ServerCore::handle(const OffloadRequest& request) {
  const auto& splits = bundle_->splits();
  if (request.split_id >= splits.size()) bad_request("unknown split id");
  const SplitPoint& split = splits[request.split_id];
  if (split.kind == SplitKind::kNone) bad_request("split NONE cannot be offloaded");
  const std::uint32_t key = sample_key_of(request.request_id);
  if (key >= bundle_->exits().samples.size()) bad_request("unknown sample key");
  if (!request.payloads) bad_request("missing payloads");
  {
    std::lock_guard<std::mutex> lock(mu_);
    if (pending_cancel_.erase(request.request_id) > 0) {
      accounted_[request.request_id] = 0.0;
      accounted_order_.push_back(request.request_id);
      return std::nullopt;
    }
  }
  if (verify_) verify(request, split);

  const SampleTrace& trace = bundle_->exits().samples[key];
  const double thr = static_cast<double>(request.thr_conf);
  const LayerId s = split.layer_id;
  std::optional<ExitId> first;
  std::optional<ExitId> best;
  ExitId last = 0;
  for (const ExitId e : model_.active_exits()) {
    if (bundle_->exit_layer(e) <= s) continue;
    last = e;
    if (!best || trace.confidence[e] > trace.confidence[*best]) best = e;
    if (trace.confidence[e] > thr) {
      first = e;
      break;
    }
  }
  if (!best) bad_request("split lies past the last exit");
  const ExitId stop = first ? *first : last;
  const ExitId chosen = first ? *first : *best;

  double compute_ms = 0.0;
  {
    std::lock_guard<std::mutex> lock(mu_);
    compute_ms = model_.server_ms(s, stop, slowdown_);
    accounted_[request.request_id] = compute_ms;
    accounted_order_.push_back(request.request_id);
    while (accounted_order_.size() > kTrackedRequests) {
      accounted_.erase(accounted_order_.front());
      accounted_order_.pop_front();
    }
    total_ms_ += compute_ms;
    ++handled_;
  }
  ResultMessage reply;
  reply.request_id = request.request_id;
  reply.exit_id = chosen;
  reply.prediction = trace.correct[chosen] ? 0u : chosen + 1;
  reply.confidence = static_cast<float>(trace.confidence[chosen]);
  reply.server_us = static_cast<std::uint64_t>(std::llround(compute_ms * 1000.0));
  return reply;
}

void ServerCore::cancel(std::uint64_t request_id, std::optional<double> elapsed_ms) {
  std::lock_guard<std::mutex> lock(mu_);
  ++cancels_;
  const auto it = accounted_.find(request_id);
  if (it == accounted_.end()) {
    if (pending_cancel_.insert(request_id).second) pending_order_.push_back(request_id);
    while (pending_order_.size() > kTrackedRequests) {
      pending_cancel_.erase(pending_order_.front());
      pending_order_.pop_front();
    }
    return;
  }
  if (elapsed_ms) {
    const double capped = std::clamp(*elapsed_ms, 0.0, it->second);
    total_ms_ -= it->second - capped;
    it->second = capped;
  }
}

double ServerCore::accounted_ms(std::uint64_t request_id) const {
  std::lock_guard<std::mutex> lock(mu_);
  const auto it = accounted_.find(request_id);
  return it == accounted_.end() ? 0.0 : it->second;
}

double ServerCore::total_accounted_ms() const {
  std::lock_guard<std::mutex> lock(mu_);
  return total_ms_;
}

std::uint64_t ServerCore::handled() const {
  std::lock_guard<std::mutex> lock(mu_);
  return handled_;
}

std::uint64_t ServerCore::cancels_seen() const {
  std::lock_guard<std::mutex> lock(mu_);
  return cancels_;
}

}  // namespace spinn
