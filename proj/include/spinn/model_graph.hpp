#ifndef SPINN_MODEL_GRAPH_HPP_
#define SPINN_MODEL_GRAPH_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace spinn {

// Layers are numbered in trace (execution) order starting at 1. Id 0 names
// the network input so that dependency lists can refer to it.
using LayerId = std::uint32_t;
using ExitId = std::uint32_t;

inline constexpr LayerId kInputLayer = 0;

enum class LayerKind { kConv, kRelu, kPool, kFc, kAdd, kConcat, kOther };

std::string_view to_string(LayerKind kind);
std::optional<LayerKind> parse_layer_kind(std::string_view text);

struct Layer {
  LayerId id = 0;
  std::string name;
  LayerKind kind = LayerKind::kOther;
  std::uint64_t flops = 0;
  // Output size at 32-bit precision.
  std::uint64_t out_bytes = 0;
  std::vector<LayerId> deps;
  // Fraction of exact zeros in the output; only used to synthesize
  // activation payloads. Unset means "derive from kind".
  std::optional<double> sparsity;
};

struct ExitPoint {
  ExitId exit_id = 0;
  LayerId layer_id = 0;
  double flop_fraction = 0.0;  // derived on construction
  double dev_overhead_ms = 0.0;
  double srv_overhead_ms = 0.0;
};

// Per-exit classifier-head cost used when exits are placed automatically.
struct ExitHeadCost {
  double dev_ms = 0.0;
  double srv_ms = 0.0;
};

// Immutable validated layer graph. Construction checks every structural
// invariant and throws spinn::Error(kValidation) naming the offending
// layer or exit.
class LayerGraph {
 public:
  LayerGraph(std::string name, std::uint64_t input_bytes,
             std::vector<Layer> layers, std::vector<ExitPoint> exits);

  const std::string& name() const { return name_; }
  std::uint64_t input_bytes() const { return input_bytes_; }
  std::size_t num_layers() const { return layers_.size(); }
  std::size_t num_exits() const { return exits_.size(); }
  const std::vector<Layer>& layers() const { return layers_; }
  const std::vector<ExitPoint>& exits() const { return exits_; }
  const Layer& layer(LayerId id) const { return layers_.at(id - 1); }
  const ExitPoint& exit(ExitId id) const { return exits_.at(id); }
  std::uint64_t total_flops() const { return total_flops_; }

  // Cumulative backbone FLOPs of layers 1..id (0 for the input).
  std::uint64_t cumulative_flops(LayerId id) const { return cum_flops_.at(id); }

  // Layers consuming the output of `producer` (0 = network input), ascending.
  const std::vector<LayerId>& consumers(LayerId producer) const {
    return consumers_.at(producer);
  }

  // Bytes of the tensor produced by `producer` (0 = network input).
  std::uint64_t tensor_bytes(LayerId producer) const;

 private:
  std::string name_;
  std::uint64_t input_bytes_;
  std::vector<Layer> layers_;
  std::vector<ExitPoint> exits_;
  std::vector<std::vector<LayerId>> consumers_;
  std::vector<std::uint64_t> cum_flops_;
  std::uint64_t total_flops_ = 0;
};

enum class SplitKind { kInput, kLayer, kNone };

struct SplitPoint {
  std::uint32_t split_id = 0;
  SplitKind kind = SplitKind::kLayer;
  // Last layer executed on the device: 0 for INPUT, num_layers for NONE.
  LayerId layer_id = 0;
  // Bytes crossing the cut at 32-bit precision.
  std::uint64_t transfer_bytes = 0;
};

std::string split_label(const SplitPoint& split);

// A tensor that has to be shipped when the graph is cut after some layer.
struct CutTensor {
  LayerId producer = 0;        // 0 = network input
  LayerId first_consumer = 0;  // earliest consumer beyond the cut
  std::uint64_t bytes = 0;
};

// Tensors produced at or before `split_layer` that are consumed after it.
// Each tensor appears once even when several later layers read it.
std::vector<CutTensor> cut_tensors(const LayerGraph& graph, LayerId split_layer);

// INPUT, one split per ReLU layer in trace order, then NONE. split_id is the
// position in the returned list.
std::vector<SplitPoint> enumerate_splits(const LayerGraph& graph);

inline constexpr double kDefaultExitFractions[] = {0.15, 0.30, 0.45,
                                                   0.60, 0.75, 0.90};

// Layers without classifier heads, the input of exit placement.
struct Backbone {
  std::string name;
  std::uint64_t input_bytes = 0;
  std::vector<Layer> layers;
};

Backbone backbone_of(const LayerGraph& graph);

// Re-attaches exits by cumulative backbone FLOPs: each fraction f lands on
// the earliest layer whose cumulative FLOPs reach f * total. Fractions that
// land on an already used layer are dropped, and a final exit is appended on
// the last layer when none lands there.
LayerGraph place_exits(const Backbone& backbone, std::span<const double> fractions,
                       ExitHeadCost head = {});
LayerGraph place_exits(const LayerGraph& graph, std::span<const double> fractions,
                       ExitHeadCost head = {});

LayerGraph parse_graph(std::string_view text);
LayerGraph load_graph(const std::filesystem::path& path);
std::string graph_to_text(const LayerGraph& graph);
void save_graph(const LayerGraph& graph, const std::filesystem::path& path);

}  // namespace spinn

#endif  // SPINN_MODEL_GRAPH_HPP_
