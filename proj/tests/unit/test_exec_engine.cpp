#include <gtest/gtest.h>

#include <memory>

#include "spinn/exec_engine.hpp"
#include "test_util.hpp"

namespace spinn {
namespace {

struct Rig {
  explicit Rig(Bundle b, EngineOptions o = {})
      : bundle(std::move(b)),
        source(bundle.graph(), 3, 1),
        transfers(measure_split_transfers(bundle, source)),
        server(bundle, o.policy),
        transport(server),
        engine(bundle, transfers, source, transport, o) {}

  Bundle bundle;
  ActivationSource source;
  std::vector<SplitTransfer> transfers;
  ServerCore server;
  SimTransport transport;
  ExecEngine engine;
};

SampleTrace sample(std::vector<double> conf, std::vector<std::uint8_t> correct) {
  SampleTrace t;
  t.confidence = std::move(conf);
  t.correct = std::move(correct);
  return t;
}

Conditions link(double bw, double lat) {
  Conditions c;
  c.bandwidth_mbps = bw;
  c.latency_ms = lat;
  c.allow_compression = false;
  return c;
}

// Splits of the chain: 0 INPUT, k after layer k, last NONE.
TEST(Engine, LocalExitSendsNothing) {
  Rig r(testing::chain_bundle(4, 1.0, 0.1, {2, 4}, {sample({0.9, 0.2}, {1, 0})}));
  const InferenceRecord rec =
      r.engine.run_inference(0, {3, 0}, link(8, 5), RatioTracker(), link(8, 5));
  EXPECT_EQ(rec.exit_id, 0u);
  EXPECT_EQ(rec.origin, Origin::kLocal);
  EXPECT_EQ(rec.phase, Phase::kExitedLocally);
  EXPECT_TRUE(rec.correct);
  EXPECT_EQ(rec.bytes_up + rec.bytes_down, 0u);
  EXPECT_EQ(rec.attempts, 0u);
  EXPECT_DOUBLE_EQ(rec.timing.latency_ms, 2.0);
}

TEST(Engine, RemoteResult) {
  Rig r(testing::chain_bundle(4, 1.0, 0.1, {2, 4}, {sample({0.2, 0.9}, {0, 1})}));
  const InferenceRecord rec =
      r.engine.run_inference(0, {1, 0}, link(8, 5), RatioTracker(), link(8, 5));
  EXPECT_EQ(rec.exit_id, 1u);
  EXPECT_EQ(rec.origin, Origin::kRemote);
  EXPECT_EQ(rec.phase, Phase::kRemoteCompleted);
  EXPECT_TRUE(rec.correct);
  EXPECT_EQ(rec.bytes_down, kResultWireBytes);
  EXPECT_EQ(rec.bytes_up, offload_wire_bytes(*r.source.payloads(1, 0, false)));
  ASSERT_TRUE(rec.server_reported_ms);
  EXPECT_DOUBLE_EQ(*rec.server_reported_ms, 0.3);
  EXPECT_EQ(rec.attempts, 1u);
}

TEST(Engine, LocalExitBeatsRemoteWhenMoreConfident) {
  // Nothing crosses; exit 0 (on the device) is the most confident.
  Rig r(testing::chain_bundle(6, 1.0, 0.1, {1, 6}, {sample({0.45, 0.3}, {1, 0})}));
  const InferenceRecord rec =
      r.engine.run_inference(0, {2, 0}, link(100, 1), RatioTracker(), link(100, 1));
  EXPECT_EQ(rec.exit_id, 0u);
  EXPECT_EQ(rec.origin, Origin::kLocal);
  EXPECT_EQ(rec.phase, Phase::kRemoteCompleted);
  EXPECT_TRUE(rec.correct);
}

TEST(Engine, CertainFailureFallsBackToArgmax) {
  EngineOptions o;
  o.p_fail = 1.0;
  Rig r(testing::chain_bundle(4, 1.0, 0.1, {2, 4}, {sample({0.3, 0.2}, {1, 0})}), o);
  const InferenceRecord rec =
      r.engine.run_inference(0, {1, 0}, link(8, 5), RatioTracker(), link(8, 5));
  EXPECT_EQ(rec.exit_id, 0u);
  EXPECT_EQ(rec.phase, Phase::kFailed);
  EXPECT_TRUE(rec.correct);
  EXPECT_EQ(rec.attempts, 1u);
  EXPECT_EQ(rec.bytes_down, 0u);
  EXPECT_GT(rec.bytes_up, 0u);
  EXPECT_EQ(r.server.handled(), 0u);
  // Detected when the upload would have arrived: 1 + 5 + upload.
  const double up = payload_ms(static_cast<double>(rec.bytes_up), 8.0);
  EXPECT_DOUBLE_EQ(rec.timing.latency_ms, std::max(2.0, 1.0 + 5.0 + up));
}

TEST(Engine, RetransmitExhaustsRetries) {
  EngineOptions o;
  o.p_fail = 1.0;
  o.failure = FailurePolicy::kRetransmitBackoff;
  o.r_max = 3;
  Rig r(testing::chain_bundle(4, 1.0, 0.1, {2, 4}, {sample({0.3, 0.2}, {1, 0})}), o);
  const InferenceRecord rec =
      r.engine.run_inference(0, {1, 0}, link(8, 5), RatioTracker(), link(8, 5));
  EXPECT_EQ(rec.attempts, 4u);
  EXPECT_EQ(rec.phase, Phase::kFailed);
  const double up = payload_ms(static_cast<double>(rec.bytes_up) / 4.0, 8.0);
  EXPECT_NEAR(rec.timing.latency_ms, 1.0 + 4 * (5.0 + up) + 20.0 + 40.0 + 80.0, 1e-9);
}

TEST(Engine, KnownOutageSkipsTheSend) {
  Rig r(testing::chain_bundle(4, 1.0, 0.1, {2, 4}, {sample({0.3, 0.2}, {1, 0})}));
  Conditions down = link(8, 5);
  down.server_available = false;
  const InferenceRecord rec = r.engine.run_inference(0, {1, 0}, down, RatioTracker(), down);
  EXPECT_EQ(rec.attempts, 0u);
  EXPECT_EQ(rec.bytes_up, 0u);
  EXPECT_DOUBLE_EQ(rec.timing.latency_ms, 2.0);
}

TEST(Engine, CancelCapsAccountedServerTime) {
  Rig r(testing::chain_bundle(4, 1.0, 2.0, {2, 4}, {sample({0.9, 0.2}, {1, 0})}));
  Conditions c = link(1e6, 0.25);
  const InferenceRecord rec = r.engine.run_inference(0, {1, 0}, c, RatioTracker(), c);
  EXPECT_EQ(rec.phase, Phase::kCancelled);
  EXPECT_EQ(rec.exit_id, 0u);
  // Server starts at 1.25 + upload; the cancel lands at 2.25.
  const double up = payload_ms(static_cast<double>(rec.bytes_up - kHeaderBytes), 1e6);
  EXPECT_NEAR(rec.timing.server_ms, 1.0 - up, 1e-6);
  EXPECT_DOUBLE_EQ(r.server.accounted_ms(rec.request_id), rec.timing.server_ms);
  EXPECT_DOUBLE_EQ(r.server.total_accounted_ms(), rec.timing.server_ms);
}

TEST(Engine, CancelAtFinalExitReturnsArgmax) {
  // Split after layer 3: the device reaches the final exit before the reply
  // and nothing crosses, so the most confident exit (0) is returned.
  Rig r(testing::chain_bundle(4, 1.0, 5.0, {2, 4}, {sample({0.45, 0.3}, {1, 0})}));
  const Conditions c = link(100, 2);
  const InferenceRecord rec = r.engine.run_inference(0, {3, 0}, c, RatioTracker(), c);
  EXPECT_EQ(rec.phase, Phase::kCancelled);
  EXPECT_EQ(rec.exit_id, 0u);
  EXPECT_TRUE(rec.correct);
}

TEST(Engine, BackoffWaitSeries) {
  EXPECT_EQ(ExecEngine::backoff_wait_ms(1, 20.0), 20.0);
  EXPECT_EQ(ExecEngine::backoff_wait_ms(4, 20.0), 160.0);
  std::mt19937_64 rng(1);
  EXPECT_EQ(ExecEngine::draw_failures(rng, 0.0, 5), 0);
  EXPECT_EQ(ExecEngine::draw_failures(rng, 1.0, 5), 5);
}

// Total backoff wait per inference, recovered from the timeline by removing
// the per-attempt detection cost (latency 0, so it is the upload time).
double backoff_added(const InferenceRecord& rec, const ExecEngine& engine, double up_ms,
                     const Conditions& c) {
  const double t_split = engine.model().device_to_layer_ms(rec.split_layer, c.device_sf);
  if (rec.phase == Phase::kFailed) {
    return rec.timing.latency_ms - t_split - rec.attempts * up_ms;
  }
  return rec.timing.t_server_start_ms - t_split - rec.attempts * up_ms;
}

double closed_form_backoff(double p, int r_max) {
  double sum = 0.0;
  for (int k = 1; k <= r_max; ++k) sum += std::pow(2.0 * p, k);
  return 10.0 * sum;
}

TEST(Engine, BackoffMeanMatchesClosedForm) {
  for (double p : {0.25, 0.5}) {
    EngineOptions o;
    o.p_fail = p;
    o.failure = FailurePolicy::kRetransmitBackoff;
    o.r_max = 10;
    o.seed = 99;
    // Tiny device cost keeps the fallback exit ahead of any detection time.
    Rig r(testing::chain_bundle(4, 1e-6, 0.1, {2, 4}, {sample({0.3, 0.2}, {1, 0})}), o);
    const Conditions c = link(1000, 0);
    const double up = payload_ms(
        static_cast<double>(offload_wire_bytes(*r.source.payloads(1, 0, false))), 1000);
    const int trials = 100000;
    double sum = 0.0;
    for (int i = 0; i < trials; ++i) {
      sum += backoff_added(r.engine.run_inference(0, {1, 0}, c, RatioTracker(), c), r.engine,
                           up, c);
    }
    const double want = closed_form_backoff(p, 10);
    EXPECT_NEAR(sum / trials, want, 0.1 * want) << "p=" << p;
  }
}

TEST(Engine, ExitDistributionMatchesProfile) {
  const auto b = testing::synth_bundle(2000);
  Rig r(*b);
  const Conditions c = link(50, 10);
  for (std::uint32_t ti = 0; ti < r.bundle.thresholds().size(); ++ti) {
    for (std::uint32_t si : {0u, 10u, 40u}) {
      std::vector<std::uint64_t> counts(r.bundle.num_exits(), 0);
      std::uint64_t correct = 0;
      for (std::size_t i = 0; i < r.bundle.exits().samples.size(); ++i) {
        const InferenceRecord rec = r.engine.run_inference(i, {si, ti}, c, RatioTracker(), c);
        ++counts[rec.exit_id];
        correct += rec.correct;
      }
      const double thr = r.bundle.thresholds()[ti];
      EXPECT_EQ(counts, exit_cdf(r.bundle.exits(), thr).counts) << "thr " << thr;
      EXPECT_EQ(static_cast<double>(correct) /
                    static_cast<double>(r.bundle.exits().samples.size()),
                expected_accuracy(r.bundle.exits(), thr));
    }
  }
}

TEST(Engine, FailureMixtureLaw) {
  const auto b = testing::synth_bundle(4000);
  const std::uint32_t split = 30;
  const std::uint32_t ti = 2;
  const double thr = b->thresholds()[ti];
  const LayerId s = b->splits()[split].layer_id;
  const CostModel model(*b, {});
  const ExitId next = *model.next_exit_after(s);
  const double n = static_cast<double>(b->summary().total);
  const double acc_ok = static_cast<double>(b->summary().per_threshold[ti].correct) / n;
  const double acc_fb =
      static_cast<double>(b->summary().per_threshold[ti].truncated_correct[next]) / n;
  for (double p : {0.1, 0.25, 0.5}) {
    EngineOptions o;
    o.p_fail = p;
    o.seed = 5;
    Rig r(*b, o);
    const Conditions c = link(50, 10);
    std::uint64_t correct = 0;
    for (std::size_t i = 0; i < b->exits().samples.size(); ++i) {
      correct += r.engine.run_inference(i, {split, ti}, c, RatioTracker(), c).correct;
    }
    EXPECT_NEAR(static_cast<double>(correct) / n, (1 - p) * acc_ok + p * acc_fb, 0.015)
        << "p=" << p;
  }
}

}  // namespace
}  // namespace spinn
