#include "spinn/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>

#include "spinn/error.hpp"

namespace spinn {
namespace {

std::uint64_t conv_flops(int cin, int cout, int hw) {
  return 2ull * 9ull * static_cast<std::uint64_t>(cin) * static_cast<std::uint64_t>(cout) *
         static_cast<std::uint64_t>(hw) * static_cast<std::uint64_t>(hw);
}

double beta_draw(std::mt19937_64& rng, double mean, double concentration) {
  std::gamma_distribution<double> ga(mean * concentration, 1.0);
  std::gamma_distribution<double> gb((1.0 - mean) * concentration, 1.0);
  const double a = ga(rng);
  const double b = gb(rng);
  return a + b > 0.0 ? a / (a + b) : mean;
}

}  // namespace

Backbone resnet_backbone(int blocks_per_stage) {
  if (blocks_per_stage < 1) {
    throw Error(ErrorCategory::kValidation, "blocks_per_stage must be >= 1");
  }
  Backbone b;
  b.name = fmt::format("resnet{}_cifar", 6 * blocks_per_stage + 2);
  b.input_bytes = 3 * 32 * 32 * 4;
  auto add = [&](std::string name, LayerKind kind, std::uint64_t flops, std::uint64_t bytes,
                 std::vector<LayerId> deps) {
    Layer l;
    l.id = static_cast<LayerId>(b.layers.size() + 1);
    l.name = std::move(name);
    l.kind = kind;
    l.flops = flops;
    l.out_bytes = bytes;
    l.deps = std::move(deps);
    b.layers.push_back(std::move(l));
    return b.layers.back().id;
  };
  int ch = 16;
  int hw = 32;
  LayerId prev = add("conv1", LayerKind::kConv, conv_flops(3, ch, hw),
                     static_cast<std::uint64_t>(ch * hw * hw) * 4, {kInputLayer});
  prev = add("relu1", LayerKind::kRelu, static_cast<std::uint64_t>(ch * hw * hw),
             static_cast<std::uint64_t>(ch * hw * hw) * 4, {prev});
  for (int stage = 0; stage < 3; ++stage) {
    for (int blk = 0; blk < blocks_per_stage; ++blk) {
      const bool down = stage > 0 && blk == 0;
      const int cin = ch;
      const int cout = down ? ch * 2 : ch;
      const int out_hw = down ? hw / 2 : hw;
      const auto bytes = static_cast<std::uint64_t>(cout * out_hw * out_hw) * 4;
      const auto elems = bytes / 4;
      const std::string tag = fmt::format("s{}b{}", stage + 1, blk + 1);
      const LayerId block_in = prev;
      LayerId x = add(tag + "_conv1", LayerKind::kConv, conv_flops(cin, cout, out_hw), bytes,
                      {block_in});
      x = add(tag + "_relu1", LayerKind::kRelu, elems, bytes, {x});
      x = add(tag + "_conv2", LayerKind::kConv, conv_flops(cout, cout, out_hw), bytes, {x});
      x = add(tag + "_add", LayerKind::kAdd, elems, bytes, {x, block_in});
      prev = add(tag + "_relu2", LayerKind::kRelu, elems, bytes, {x});
      ch = cout;
      hw = out_hw;
    }
  }
  prev = add("avgpool", LayerKind::kPool, static_cast<std::uint64_t>(ch * hw * hw),
             static_cast<std::uint64_t>(ch) * 4, {prev});
  add("fc", LayerKind::kFc, 2ull * static_cast<std::uint64_t>(ch) * 10, 10 * 4, {prev});
  return b;
}

LayerGraph synthetic_graph(const SynthOptions& opts) {
  const double head_srv = opts.device_head_ms / opts.server_speedup;
  return place_exits(resnet_backbone(opts.blocks_per_stage), kDefaultExitFractions,
                     {opts.device_head_ms, head_srv});
}

PlatformProfile synthetic_platform(const LayerGraph& graph, std::string platform_id,
                                   double mflop_per_ms, double layer_overhead_ms,
                                   double head_ms) {
  PlatformProfile p;
  p.platform_id = std::move(platform_id);
  for (const Layer& l : graph.layers()) {
    p.layer_ms[l.id] = static_cast<double>(l.flops) / (mflop_per_ms * 1e6) + layer_overhead_ms;
  }
  for (const ExitPoint& e : graph.exits()) p.exit_ms[e.exit_id] = head_ms;
  return p;
}

ExitProfile synthetic_exit_trace(const LayerGraph& graph, const SynthOptions& opts) {
  const std::size_t n_exits = graph.num_exits();
  if (opts.exit_accuracy.size() != n_exits) {
    throw Error(ErrorCategory::kValidation,
                fmt::format("{} accuracy targets for {} exits", opts.exit_accuracy.size(),
                            n_exits));
  }
  for (std::size_t e = 1; e < n_exits; ++e) {
    if (opts.exit_accuracy[e] < opts.exit_accuracy[e - 1]) {
      throw Error(ErrorCategory::kValidation, "accuracy targets must not decrease");
    }
  }
  ExitProfile out;
  out.graph_name = graph.name();
  out.threshold_grid.assign(std::begin(kDefaultThresholdGrid), std::end(kDefaultThresholdGrid));
  out.generator = fmt::format(
      "synthetic seed={} samples={} concentration={} accuracy=[{}] "
      "conf=0.1+0.9*Beta(mean,k) mean_correct=0.55+0.40*d mean_wrong=0.35+0.20*d",
      opts.seed, opts.samples, opts.concentration, fmt::join(opts.exit_accuracy, ";"));
  std::mt19937_64 rng(opts.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  out.samples.reserve(opts.samples);
  for (std::size_t i = 0; i < opts.samples; ++i) {
    SampleTrace s;
    s.sample_id = static_cast<std::uint32_t>(i);
    // Lower difficulty means the sample is solved by earlier exits.
    const double difficulty = unit(rng);
    for (std::size_t e = 0; e < n_exits; ++e) {
      const double depth = n_exits == 1 ? 1.0 : static_cast<double>(e) / (n_exits - 1);
      const bool correct = difficulty < opts.exit_accuracy[e];
      const double mean = correct ? 0.55 + 0.40 * depth : 0.35 + 0.20 * depth;
      const double conf = 0.1 + 0.9 * beta_draw(rng, mean, opts.concentration);
      s.confidence.push_back(std::clamp(conf, 0.1, 1.0));
      s.correct.push_back(correct ? 1 : 0);
    }
    out.samples.push_back(std::move(s));
  }
  return out;
}

Bundle synthetic_bundle(const SynthOptions& opts) {
  LayerGraph graph = synthetic_graph(opts);
  PlatformProfile device = synthetic_platform(graph, "device", opts.device_mflop_per_ms,
                                              opts.device_layer_overhead_ms,
                                              opts.device_head_ms);
  PlatformProfile server = synthetic_platform(
      graph, "server", opts.device_mflop_per_ms * opts.server_speedup,
      opts.device_layer_overhead_ms / opts.server_speedup,
      opts.device_head_ms / opts.server_speedup);
  ExitProfile exits = synthetic_exit_trace(graph, opts);
  return Bundle(std::move(graph), std::move(device), std::move(server), std::move(exits));
}

NetworkTrace synthetic_network_trace(const SynthTraceOptions& opts) {
  if (opts.rows == 0 || !(opts.min_mbps > 0.0) || !(opts.max_mbps >= opts.min_mbps) ||
      !(opts.mean_hold_rows >= 1.0) || !(opts.step_s > 0.0)) {
    throw Error(ErrorCategory::kValidation, "bad network trace options");
  }
  std::mt19937_64 rng(opts.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::geometric_distribution<int> hold(1.0 / opts.mean_hold_rows);
  const double log_lo = std::log(opts.min_mbps);
  const double log_hi = std::log(opts.max_mbps);
  std::vector<TraceRow> rows;
  rows.reserve(opts.rows);
  double level = 0.0;
  int left = 0;
  for (std::size_t i = 0; i < opts.rows; ++i) {
    if (left <= 0) {
      level = std::exp(log_lo + (log_hi - log_lo) * unit(rng));
      left = 1 + hold(rng);
    }
    --left;
    const double bw = std::max(0.1, level * (1.0 + opts.jitter * noise(rng)));
    const double lat = std::max(1.0, opts.latency_ms + opts.latency_jitter_ms * noise(rng));
    TraceRow r;
    r.t_s = static_cast<double>(i) * opts.step_s;
    r.bandwidth_mbps = std::round(bw * 100.0) / 100.0;
    r.latency_ms = std::round(lat * 100.0) / 100.0;
    r.type = opts.type;
    rows.push_back(r);
  }
  return NetworkTrace(std::move(rows));
}

}  // namespace spinn
