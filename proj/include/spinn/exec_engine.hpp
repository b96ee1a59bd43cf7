#ifndef SPINN_EXEC_ENGINE_HPP_
#define SPINN_EXEC_ENGINE_HPP_

#include <cstdint>
#include <random>
#include <string_view>

#include "spinn/activation_source.hpp"
#include "spinn/bundle.hpp"
#include "spinn/comms_opt.hpp"
#include "spinn/scheduler.hpp"
#include "spinn/timeline.hpp"
#include "spinn/transport.hpp"

namespace spinn {

enum class FailurePolicy { kFallbackLocal, kRetransmitBackoff };
enum class FailureDetection {
  kConnectionLoss,  // noticed when the upload would have arrived
  kTimeout,         // 2x the estimated round trip plus server time
};

std::string_view to_string(FailurePolicy policy);

struct EngineOptions {
  ExecPolicy policy;
  FailurePolicy failure = FailurePolicy::kFallbackLocal;
  FailureDetection detection = FailureDetection::kConnectionLoss;
  double p_fail = 0.0;
  int r_max = 10;
  double backoff_initial_ms = 20.0;
  std::uint64_t seed = 1;
};

struct Configuration {
  std::uint32_t split_index = 0;
  std::uint32_t thr_index = 0;
  bool operator==(const Configuration&) const = default;
};

enum class Origin { kLocal, kRemote };
enum class Phase { kExitedLocally, kRemoteCompleted, kCancelled, kFailed };

std::string_view to_string(Origin origin);
std::string_view to_string(Phase phase);

// What actually happened to one sample.
struct InferenceRecord {
  std::size_t sample_index = 0;
  std::uint32_t sample_id = 0;
  Configuration config;
  LayerId split_layer = 0;
  double thr_conf = 0.0;
  std::uint64_t request_id = 0;
  ExitId exit_id = 0;
  Origin origin = Origin::kLocal;
  Phase phase = Phase::kExitedLocally;
  bool correct = false;
  bool compressed = false;
  std::uint32_t attempts = 0;  // offload sends, including failed ones
  SampleTiming timing;
  std::uint64_t bytes_up = 0;
  std::uint64_t bytes_down = 0;
  std::optional<double> server_reported_ms;
};

class ExecEngine {
 public:
  ExecEngine(const Bundle& bundle, const std::vector<SplitTransfer>& transfers,
             ActivationSource& source, ClientTransport& transport, EngineOptions options);

  const CostModel& model() const { return model_; }
  const EngineOptions& options() const { return options_; }

  // `estimate` is what the client believes (it picks compression and the
  // timeout from it); `actual` drives the timeline.
  InferenceRecord run_inference(std::size_t sample_index, const Configuration& cfg,
                                const Conditions& estimate, const RatioTracker& ratios,
                                const Conditions& actual);

  // Consecutive failed attempts before the first success; equals
  // `max_attempts` when every attempt fails.
  static int draw_failures(std::mt19937_64& rng, double p_fail, int max_attempts);
  // Wait after the k-th failure (k >= 1).
  static double backoff_wait_ms(int k, double initial_ms);

 private:
  const Bundle* bundle_;
  const std::vector<SplitTransfer>* transfers_;
  ActivationSource* source_;
  ClientTransport* transport_;
  EngineOptions options_;
  CostModel model_;
  std::uint64_t seq_ = 0;
};

}  // namespace spinn

#endif  // SPINN_EXEC_ENGINE_HPP_
