#ifndef SPINN_ACTIVATION_SOURCE_HPP_
#define SPINN_ACTIVATION_SOURCE_HPP_

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <tuple>
#include <vector>

#include "spinn/bundle.hpp"
#include "spinn/comms_opt.hpp"
#include "spinn/pack_pipeline.hpp"

namespace spinn {

// A packed cut tensor labelled with the layer that consumes it first on the
// server side.
struct TaggedPayload {
  LayerId consumer = 0;
  PackedPayload payload;
};

using PayloadSet = std::shared_ptr<const std::vector<TaggedPayload>>;

// Stands in for real intermediate tensors: deterministic synthetic
// activations per (producer layer, variant), with ReLU outputs as sparse as
// the graph declares. Packed sets are cached; safe to share across threads.
class ActivationSource {
 public:
  ActivationSource(const LayerGraph& graph, std::uint64_t seed,
                   std::uint32_t variants = 1);

  std::uint32_t variants() const { return variants_; }
  std::uint32_t variant_of(std::size_t sample_index) const {
    return static_cast<std::uint32_t>(sample_index % variants_);
  }

  ActivationTensor tensor(LayerId producer, std::uint32_t variant) const;
  PayloadSet payloads(LayerId split_layer, std::uint32_t variant, bool compressed);

 private:
  const LayerGraph* graph_;
  std::uint64_t seed_;
  std::uint32_t variants_;
  std::mutex mu_;
  std::map<std::tuple<LayerId, std::uint32_t, bool>, PayloadSet> cache_;
  PackPipeline pipeline_;
};

// Sparsity used for synthetic activations of `layer`.
double synthetic_sparsity(const Layer& layer);

// Wire sizes of a split's OFFLOAD message with raw and packed payloads,
// measured on variant 0.
struct SplitTransfer {
  std::uint64_t raw_tensor_bytes = 0;  // cut tensors at 32-bit precision
  std::uint64_t raw_wire_bytes = 0;
  std::uint64_t packed_wire_bytes = 0;
  double ratio() const {
    return packed_wire_bytes == 0
               ? 1.0
               : static_cast<double>(raw_wire_bytes) / static_cast<double>(packed_wire_bytes);
  }
};

std::vector<SplitTransfer> measure_split_transfers(const Bundle& bundle,
                                                   ActivationSource& source);

}  // namespace spinn

#endif  // SPINN_ACTIVATION_SOURCE_HPP_
