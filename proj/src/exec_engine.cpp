#include "spinn/exec_engine.hpp"

#include <cmath>
#include <limits>

#include "spinn/error.hpp"
#include "spinn/runtime_profiler.hpp"

namespace spinn {
namespace {

std::uint64_t mix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

std::string_view to_string(FailurePolicy policy) {
  return policy == FailurePolicy::kFallbackLocal ? "fallback_local" : "retransmit_backoff";
}

std::string_view to_string(Origin origin) {
  return origin == Origin::kLocal ? "local" : "remote";
}

std::string_view to_string(Phase phase) {
  switch (phase) {
    case Phase::kExitedLocally: return "exited_locally";
    case Phase::kRemoteCompleted: return "remote_completed";
    case Phase::kCancelled: return "cancelled";
    case Phase::kFailed: return "failed";
  }
  return "?";
}

ExecEngine::ExecEngine(const Bundle& bundle, const std::vector<SplitTransfer>& transfers,
                       ActivationSource& source, ClientTransport& transport,
                       EngineOptions options)
    : bundle_(&bundle), transfers_(&transfers), source_(&source), transport_(&transport),
      options_(options), model_(bundle, options.policy) {
  if (transfers.size() != bundle.splits().size()) {
    throw Error(ErrorCategory::kValidation, "transfer table does not match split count");
  }
  if (options.p_fail < 0.0 || options.p_fail > 1.0) {
    throw Error(ErrorCategory::kValidation, "p_fail must lie in [0, 1]");
  }
  if (options.r_max < 0) throw Error(ErrorCategory::kValidation, "r_max must be >= 0");
}

int ExecEngine::draw_failures(std::mt19937_64& rng, double p_fail, int max_attempts) {
  std::bernoulli_distribution fail(p_fail);
  int k = 0;
  while (k < max_attempts && fail(rng)) ++k;
  return k;
}

double ExecEngine::backoff_wait_ms(int k, double initial_ms) {
  return initial_ms * std::ldexp(1.0, k - 1);
}

InferenceRecord ExecEngine::run_inference(std::size_t sample_index, const Configuration& cfg,
                                          const Conditions& estimate,
                                          const RatioTracker& ratios,
                                          const Conditions& actual) {
  const auto& samples = bundle_->exits().samples;
  if (sample_index >= samples.size()) {
    throw Error(ErrorCategory::kValidation, "sample index out of range");
  }
  const SplitPoint& split = bundle_->splits().at(cfg.split_index);
  const double thr = bundle_->thresholds().at(cfg.thr_index);
  const SampleTrace& trace = samples[sample_index];
  const LayerId s = split.layer_id;
  const ExitId stop = model_.stop_exit(trace, thr);

  InferenceRecord rec;
  rec.sample_index = sample_index;
  rec.sample_id = static_cast<std::uint32_t>(sample_index);
  rec.config = cfg;
  rec.split_layer = s;
  rec.thr_conf = thr;
  rec.request_id = make_request_id(++seq_, static_cast<std::uint32_t>(sample_index));

  const auto finish_local = [&](ExitId exit, Phase phase) {
    rec.exit_id = exit;
    rec.origin = Origin::kLocal;
    rec.phase = phase;
    rec.correct = rec.timing.result_valid && trace.correct[exit] != 0;
  };

  if (!model_.offloads(s, stop)) {
    rec.timing = model_.time_local(stop, actual.device_sf);
    finish_local(model_.decide(trace, thr), Phase::kExitedLocally);
    return rec;
  }

  const SplitTransfer& transfer = transfers_->at(cfg.split_index);
  const SplitPlan plan = plan_split(transfer, ratios.estimate(cfg.split_index), estimate);
  rec.compressed = plan.compress;
  const auto next = options_.policy.fallback ? model_.next_exit_after(s) : std::nullopt;
  const LayerId fallback_layer = next ? bundle_->exit_layer(*next) : s;

  LinkPlan link;
  link.device_sf = actual.device_sf;
  link.server_sf = actual.server_sf;
  link.latency_ms = actual.latency_ms;
  link.bandwidth_mbps = actual.bandwidth_mbps;
  link.pack_ms =
      plan.compress ? estimate_pack_ms(transfer.raw_tensor_bytes, actual.pack_bytes_per_ms)
                    : 0.0;
  link.downlink_bytes = static_cast<double>(kResultWireBytes);

  // Local result once the offload is known to have failed or was never made.
  const auto fallback = [&](double detect_ms, bool attempted) {
    rec.timing = model_.time_fallback(s, stop, link, detect_ms, attempted);
    if (!rec.timing.result_valid) {
      rec.exit_id = stop;
      rec.origin = Origin::kLocal;
      rec.phase = Phase::kFailed;
      rec.correct = false;
      return;
    }
    finish_local(model_.decide_up_to(trace, thr, fallback_layer),
                 next && stop == *next ? Phase::kExitedLocally : Phase::kFailed);
  };

  // Without a local fallback there is nothing to do but try the server.
  if (!estimate.server_available && options_.policy.fallback) {
    fallback(0.0, false);
    return rec;
  }

  OffloadRequest request;
  request.request_id = rec.request_id;
  request.split_id = static_cast<std::uint16_t>(cfg.split_index);
  request.thr_conf = static_cast<float>(thr);
  request.payloads =
      source_->payloads(s, source_->variant_of(sample_index), plan.compress);
  const std::uint64_t wire = offload_wire_bytes(*request.payloads);
  link.uplink_bytes = static_cast<double>(wire);
  const double up_ms = payload_ms(static_cast<double>(wire), actual.bandwidth_mbps);

  // A dead link fails at connect time; without a local fallback the sample
  // never completes.
  if (!std::isfinite(up_ms)) {
    fallback(model_.device_to_layer_ms(s, actual.device_sf) + link.pack_ms, false);
    if (!rec.timing.result_valid) rec.timing.latency_ms = std::numeric_limits<double>::infinity();
    return rec;
  }

  double detect_cost = actual.latency_ms + up_ms;
  if (options_.detection == FailureDetection::kTimeout) {
    const double est_up = payload_ms(plan.uplink_bytes, estimate.bandwidth_mbps);
    const double est_down = payload_ms(link.downlink_bytes, estimate.bandwidth_mbps);
    const double est_server =
        model_.server_ms(s, model_.active_exits().back(), estimate.server_sf);
    detect_cost = 2.0 * (2.0 * estimate.latency_ms + est_up + est_down + est_server);
  }

  const int max_failures =
      options_.failure == FailurePolicy::kRetransmitBackoff ? options_.r_max + 1 : 1;
  std::mt19937_64 rng(mix(options_.seed ^ mix(rec.request_id)));
  const double p = actual.server_available ? options_.p_fail : 1.0;
  const int failures = draw_failures(rng, p, max_failures);

  const TransportCounters before = transport_->counters();
  const auto settle_bytes = [&] {
    const TransportCounters after = transport_->counters();
    rec.bytes_up = after.bytes_up - before.bytes_up;
    rec.bytes_down = after.bytes_down - before.bytes_down;
  };

  // Each failed attempt costs its detection time and, before a retry, a
  // backoff wait.
  double delay = 0.0;
  for (int k = 1; k <= failures; ++k) {
    transport_->offload(request, true);
    ++rec.attempts;
    delay += detect_cost;
    if (k < max_failures) delay += backoff_wait_ms(k, options_.backoff_initial_ms);
  }
  link.failed_uplink_ms = failures * up_ms;

  if (failures == max_failures) {
    const double t_send = model_.device_to_layer_ms(s, actual.device_sf) + link.pack_ms;
    fallback(t_send + delay, true);
    settle_bytes();
    return rec;
  }

  link.send_delay_ms = delay;
  const auto reply = transport_->offload(request, false);
  ++rec.attempts;
  rec.timing = model_.time_offload(s, stop, link);
  if (rec.timing.cancel_sent) {
    transport_->cancel(rec.request_id, rec.timing.server_ms);
    settle_bytes();
    finish_local(model_.decide_up_to(trace, thr, fallback_layer), Phase::kCancelled);
    return rec;
  }
  if (!reply) {
    throw Error(ErrorCategory::kTransport,
                "no result for request " + std::to_string(rec.request_id));
  }
  settle_bytes();
  if (reply->server_us) rec.server_reported_ms = static_cast<double>(*reply->server_us) / 1000.0;

  // Combine with the exits already evaluated on the device: the reply only
  // covers exits past the split.
  ExitId chosen = reply->exit_id;
  bool remote = true;
  if (!(trace.confidence[chosen] > thr)) {
    for (const ExitId e : model_.active_exits()) {
      if (bundle_->exit_layer(e) > s) break;
      if (trace.confidence[e] > trace.confidence[chosen] ||
          (trace.confidence[e] == trace.confidence[chosen] && e < chosen)) {
        chosen = e;
        remote = false;
      }
    }
  }
  rec.exit_id = chosen;
  rec.origin = remote ? Origin::kRemote : Origin::kLocal;
  rec.phase = Phase::kRemoteCompleted;
  rec.correct = remote ? reply->prediction == 0 : trace.correct[chosen] != 0;
  return rec;
}

}  // namespace spinn
