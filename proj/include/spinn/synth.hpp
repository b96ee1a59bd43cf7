#ifndef SPINN_SYNTH_HPP_
#define SPINN_SYNTH_HPP_

#include <cstdint>
#include <filesystem>
#include <vector>

#include "spinn/bundle.hpp"
#include "spinn/network_trace.hpp"

namespace spinn {

// Generators for synthetic inputs: a CIFAR-style residual network, platform
// profiles derived from FLOP counts, an exit trace and a bandwidth trace.
struct SynthOptions {
  std::uint64_t seed = 7;
  std::size_t samples = 10000;
  int blocks_per_stage = 9;  // 9 gives the 56-layer variant
  // Device throughput and fixed per-layer cost; the server is `server_speedup`
  // times faster on both.
  double device_mflop_per_ms = 10.0;
  double device_layer_overhead_ms = 0.02;
  double server_speedup = 10.0;
  double device_head_ms = 0.3;
  // Accuracy per exit, final exit last; must match the number of exits.
  std::vector<double> exit_accuracy = {0.55, 0.68, 0.78, 0.85, 0.89, 0.915, 0.93};
  // Beta concentration of the confidence draws.
  double concentration = 8.0;
};

Backbone resnet_backbone(int blocks_per_stage);
LayerGraph synthetic_graph(const SynthOptions& opts);
PlatformProfile synthetic_platform(const LayerGraph& graph, std::string platform_id,
                                   double mflop_per_ms, double layer_overhead_ms,
                                   double head_ms);
// Correctness is nested (a sample correct at one exit stays correct at every
// later one) and confidences come from a Beta law whose mean grows with depth
// and is higher for correct predictions.
ExitProfile synthetic_exit_trace(const LayerGraph& graph, const SynthOptions& opts);
Bundle synthetic_bundle(const SynthOptions& opts);

struct SynthTraceOptions {
  std::uint64_t seed = 11;
  std::size_t rows = 600;
  double step_s = 1.0;
  NetworkType type = NetworkType::k4g;
  // Bandwidth holds a level for a geometric number of rows, with
  // multiplicative jitter; levels are log-uniform in [min, max].
  double min_mbps = 5.0;
  double max_mbps = 60.0;
  double mean_hold_rows = 12.0;
  double jitter = 0.03;
  double latency_ms = 50.0;
  double latency_jitter_ms = 0.0;
};

NetworkTrace synthetic_network_trace(const SynthTraceOptions& opts);

}  // namespace spinn

#endif  // SPINN_SYNTH_HPP_
