#include "spinn/activation_source.hpp"

#include <cmath>
#include <random>

#include "spinn/protocol.hpp"

namespace spinn {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

double synthetic_sparsity(const Layer& layer) {
  if (layer.sparsity) return *layer.sparsity;
  switch (layer.kind) {
    case LayerKind::kRelu: return 0.6;
    case LayerKind::kPool: return 0.4;
    default: return 0.0;
  }
}

ActivationSource::ActivationSource(const LayerGraph& graph, std::uint64_t seed,
                                   std::uint32_t variants)
    : graph_(&graph), seed_(seed), variants_(variants == 0 ? 1 : variants) {}

ActivationTensor ActivationSource::tensor(LayerId producer, std::uint32_t variant) const {
  const std::uint64_t bytes = graph_->tensor_bytes(producer);
  const std::size_t n = static_cast<std::size_t>((bytes + 3) / 4);
  ActivationTensor t;
  t.dims = {static_cast<std::uint32_t>(n)};
  t.values.resize(n);
  std::mt19937_64 rng(splitmix64(seed_ ^ (std::uint64_t{producer} << 32) ^ variant));
  if (producer == kInputLayer) {
    // 8-bit image channels scaled to [0, 1].
    std::uniform_int_distribution<int> pixel(0, 255);
    for (float& v : t.values) v = static_cast<float>(pixel(rng)) / 255.0f;
    return t;
  }
  const Layer& layer = graph_->layer(producer);
  const double sparsity = synthetic_sparsity(layer);
  std::bernoulli_distribution zero(sparsity);
  if (layer.kind == LayerKind::kRelu || layer.kind == LayerKind::kPool) {
    std::exponential_distribution<float> magnitude(1.0f);
    for (float& v : t.values) v = zero(rng) ? 0.0f : magnitude(rng);
  } else {
    std::normal_distribution<float> value(0.0f, 1.0f);
    for (float& v : t.values) v = zero(rng) ? 0.0f : value(rng);
  }
  return t;
}

PayloadSet ActivationSource::payloads(LayerId split_layer, std::uint32_t variant,
                                      bool compressed) {
  const auto key = std::make_tuple(split_layer, variant % variants_, compressed);
  {
    std::lock_guard<std::mutex> lock(mu_);
    const auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
  }
  auto set = std::make_shared<std::vector<TaggedPayload>>();
  const std::vector<CutTensor> cut = cut_tensors(*graph_, split_layer);
  if (compressed) {
    std::vector<ActivationTensor> tensors;
    for (const CutTensor& c : cut) tensors.push_back(tensor(c.producer, variant));
    std::vector<PackedPayload> packed = pipeline_.pack_all(std::move(tensors));
    for (std::size_t i = 0; i < cut.size(); ++i) {
      set->push_back({cut[i].first_consumer, std::move(packed[i])});
    }
  } else {
    for (const CutTensor& c : cut) {
      set->push_back({c.first_consumer, pack(tensor(c.producer, variant), false)});
    }
  }
  std::lock_guard<std::mutex> lock(mu_);
  return cache_.emplace(key, std::move(set)).first->second;
}

std::vector<SplitTransfer> measure_split_transfers(const Bundle& bundle,
                                                   ActivationSource& source) {
  std::vector<SplitTransfer> out;
  for (const SplitPoint& split : bundle.splits()) {
    SplitTransfer t;
    t.raw_tensor_bytes = split.transfer_bytes;
    if (split.kind != SplitKind::kNone) {
      t.raw_wire_bytes = offload_wire_bytes(*source.payloads(split.layer_id, 0, false));
      t.packed_wire_bytes = offload_wire_bytes(*source.payloads(split.layer_id, 0, true));
    }
    out.push_back(t);
  }
  return out;
}

}  // namespace spinn
