#include "spinn/model_graph.hpp"

#include <algorithm>
#include <set>

#include <fmt/format.h>

#include "io_util.hpp"
#include "json.hpp"
#include "spinn/error.hpp"

namespace spinn {
namespace {

using nlohmann::json;

[[noreturn]] void reject(const std::string& message) {
  throw Error(ErrorCategory::kValidation, message);
}

constexpr std::pair<LayerKind, std::string_view> kKindNames[] = {
    {LayerKind::kConv, "conv"},     {LayerKind::kRelu, "relu"},
    {LayerKind::kPool, "pool"},     {LayerKind::kFc, "fc"},
    {LayerKind::kAdd, "add"},       {LayerKind::kConcat, "concat"},
    {LayerKind::kOther, "other"},
};

template <typename T>
T required(const json& object, const char* key, const std::string& where) {
  const auto it = object.find(key);
  if (it == object.end()) {
    throw Error(ErrorCategory::kParse, where + ": missing key '" + key + "'");
  }
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCategory::kParse,
                where + ": bad value for '" + key + "': " + e.what());
  }
}

}  // namespace

std::string_view to_string(LayerKind kind) {
  for (const auto& [k, name] : kKindNames) {
    if (k == kind) return name;
  }
  return "other";
}

std::optional<LayerKind> parse_layer_kind(std::string_view text) {
  for (const auto& [k, name] : kKindNames) {
    if (name == text) return k;
  }
  return std::nullopt;
}

LayerGraph::LayerGraph(std::string name, std::uint64_t input_bytes,
                       std::vector<Layer> layers, std::vector<ExitPoint> exits)
    : name_(std::move(name)),
      input_bytes_(input_bytes),
      layers_(std::move(layers)),
      exits_(std::move(exits)) {
  if (layers_.empty()) reject("graph has no layers");
  if (input_bytes_ == 0) reject("input_bytes must be positive");

  const std::size_t n = layers_.size();
  consumers_.assign(n + 1, {});
  cum_flops_.assign(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) {
    Layer& layer = layers_[i];
    const LayerId expected = static_cast<LayerId>(i + 1);
    if (layer.id != expected) {
      reject(fmt::format("layer '{}' has id {}, expected {} (ids must be consecutive "
                         "from 1)",
                         layer.name, layer.id, expected));
    }
    if (layer.deps.empty()) layer.deps.push_back(kInputLayer);
    std::set<LayerId> seen;
    for (LayerId dep : layer.deps) {
      if (dep >= layer.id) {
        reject(fmt::format("layer {} ('{}') depends on layer {}: dependencies must "
                           "precede the layer in trace order (cycle or forward edge)",
                           layer.id, layer.name, dep));
      }
      if (!seen.insert(dep).second) {
        reject(fmt::format("layer {} ('{}') lists dependency {} twice", layer.id,
                           layer.name, dep));
      }
      consumers_[dep].push_back(layer.id);
    }
    if (layer.sparsity && (*layer.sparsity < 0.0 || *layer.sparsity > 1.0)) {
      reject(fmt::format("layer {} sparsity {} outside [0,1]", layer.id, *layer.sparsity));
    }
    cum_flops_[i + 1] = cum_flops_[i] + layer.flops;
  }
  total_flops_ = cum_flops_[n];
  if (total_flops_ == 0) reject("graph has zero total FLOPs");

  for (std::size_t i = 0; i < n; ++i) {
    const Layer& layer = layers_[i];
    const bool has_consumers = !consumers_[layer.id].empty();
    if (!has_consumers && layer.id != n) {
      reject(fmt::format("layer {} ('{}') has no consumers; the graph must have a "
                         "single sink at layer {}",
                         layer.id, layer.name, n));
    }
    if (has_consumers && layer.out_bytes == 0) {
      reject(fmt::format("layer {} ('{}') has out_bytes = 0 but feeds later layers",
                         layer.id, layer.name));
    }
  }

  if (exits_.empty()) reject("graph has no exits");
  for (std::size_t e = 0; e < exits_.size(); ++e) {
    ExitPoint& exit = exits_[e];
    if (exit.exit_id != e) {
      reject(fmt::format("exit at position {} has exit_id {}", e, exit.exit_id));
    }
    if (exit.layer_id < 1 || exit.layer_id > n) {
      reject(fmt::format("exit {} attaches to unknown layer {}", e, exit.layer_id));
    }
    if (e > 0 && exit.layer_id <= exits_[e - 1].layer_id) {
      reject(fmt::format("non-monotone exits: exit {} (layer {}) does not follow exit "
                         "{} (layer {})",
                         e, exit.layer_id, e - 1, exits_[e - 1].layer_id));
    }
    if (exit.dev_overhead_ms < 0.0 || exit.srv_overhead_ms < 0.0) {
      reject(fmt::format("exit {} has a negative head overhead", e));
    }
    exit.flop_fraction = static_cast<double>(cum_flops_[exit.layer_id]) /
                         static_cast<double>(total_flops_);
    if (exit.flop_fraction <= 0.0) {
      reject(fmt::format("exit {} at layer {} has zero FLOP fraction", e, exit.layer_id));
    }
    if (e > 0 && exit.flop_fraction <= exits_[e - 1].flop_fraction) {
      reject(fmt::format("non-monotone exits: exit {} FLOP fraction {} does not exceed "
                         "exit {}",
                         e, exit.flop_fraction, e - 1));
    }
  }
  if (exits_.back().layer_id != n) {
    reject(fmt::format("final exit {} attaches to layer {}, not the last layer {}",
                       exits_.size() - 1, exits_.back().layer_id, n));
  }
}

std::uint64_t LayerGraph::tensor_bytes(LayerId producer) const {
  return producer == kInputLayer ? input_bytes_ : layer(producer).out_bytes;
}

std::string split_label(const SplitPoint& split) {
  switch (split.kind) {
    case SplitKind::kInput: return "INPUT";
    case SplitKind::kNone: return "NONE";
    case SplitKind::kLayer: return fmt::format("after-{}", split.layer_id);
  }
  return "?";
}

std::vector<CutTensor> cut_tensors(const LayerGraph& graph, LayerId split_layer) {
  std::vector<CutTensor> cut;
  for (LayerId producer = 0; producer <= split_layer; ++producer) {
    const auto& consumers = graph.consumers(producer);
    const auto it = std::upper_bound(consumers.begin(), consumers.end(), split_layer);
    if (it != consumers.end()) {
      cut.push_back({producer, *it, graph.tensor_bytes(producer)});
    }
  }
  return cut;
}

std::vector<SplitPoint> enumerate_splits(const LayerGraph& graph) {
  const auto transfer = [&](LayerId at) {
    std::uint64_t bytes = 0;
    for (const CutTensor& t : cut_tensors(graph, at)) bytes += t.bytes;
    return bytes;
  };
  std::vector<SplitPoint> splits;
  splits.push_back({0, SplitKind::kInput, kInputLayer, transfer(kInputLayer)});
  for (const Layer& layer : graph.layers()) {
    if (layer.kind == LayerKind::kRelu) {
      splits.push_back({static_cast<std::uint32_t>(splits.size()), SplitKind::kLayer,
                        layer.id, transfer(layer.id)});
    }
  }
  splits.push_back({static_cast<std::uint32_t>(splits.size()), SplitKind::kNone,
                    static_cast<LayerId>(graph.num_layers()), 0});
  return splits;
}

Backbone backbone_of(const LayerGraph& graph) {
  return {graph.name(), graph.input_bytes(), graph.layers()};
}

LayerGraph place_exits(const Backbone& backbone, std::span<const double> fractions,
                       ExitHeadCost head) {
  if (backbone.layers.empty()) reject("cannot place exits on an empty graph");
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    if (!(fractions[i] > 0.0 && fractions[i] <= 1.0)) {
      reject(fmt::format("exit fraction {} outside (0,1]", fractions[i]));
    }
    if (i > 0 && fractions[i] <= fractions[i - 1]) {
      reject("exit fractions must be strictly increasing");
    }
  }
  const auto n = static_cast<LayerId>(backbone.layers.size());
  std::vector<std::uint64_t> cum(n + 1, 0);
  for (LayerId i = 1; i <= n; ++i) cum[i] = cum[i - 1] + backbone.layers[i - 1].flops;
  const double total = static_cast<double>(cum[n]);
  // Relative slack absorbs binary rounding of f * total (0.3 * 10 etc.).
  constexpr double kSlack = 1e-12;

  std::vector<ExitPoint> exits;
  LayerId layer = 1;
  for (double f : fractions) {
    const double target = f * total * (1.0 - kSlack);
    while (layer < n && static_cast<double>(cum[layer]) < target) ++layer;
    if (!exits.empty() && exits.back().layer_id == layer) continue;
    exits.push_back({static_cast<ExitId>(exits.size()), layer, 0.0, head.dev_ms,
                     head.srv_ms});
  }
  if (exits.empty() || exits.back().layer_id != n) {
    exits.push_back({static_cast<ExitId>(exits.size()), n, 0.0, head.dev_ms, head.srv_ms});
  }
  return LayerGraph(backbone.name, backbone.input_bytes, backbone.layers, std::move(exits));
}

LayerGraph place_exits(const LayerGraph& graph, std::span<const double> fractions,
                       ExitHeadCost head) {
  return place_exits(backbone_of(graph), fractions, head);
}

LayerGraph parse_graph(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw Error(ErrorCategory::kParse, std::string("graph file: ") + e.what());
  }
  if (!doc.is_object()) throw Error(ErrorCategory::kParse, "graph file: not an object");

  const std::string name = doc.value("name", std::string("graph"));
  const auto input_bytes = required<std::uint64_t>(doc, "input_bytes", "graph");
  const auto layer_docs = required<std::vector<json>>(doc, "layers", "graph");
  const auto exit_docs = required<std::vector<json>>(doc, "exits", "graph");

  std::vector<Layer> layers;
  layers.reserve(layer_docs.size());
  for (std::size_t i = 0; i < layer_docs.size(); ++i) {
    const json& ld = layer_docs[i];
    const std::string where = fmt::format("layers[{}]", i);
    Layer layer;
    layer.id = required<LayerId>(ld, "id", where);
    layer.name = ld.value("name", fmt::format("layer{}", layer.id));
    const auto kind_text = required<std::string>(ld, "kind", where);
    const auto kind = parse_layer_kind(kind_text);
    if (!kind) {
      throw Error(ErrorCategory::kParse, where + ": unknown kind '" + kind_text + "'");
    }
    layer.kind = *kind;
    layer.flops = required<std::uint64_t>(ld, "flops", where);
    layer.out_bytes = required<std::uint64_t>(ld, "out_bytes", where);
    layer.deps = ld.value("deps", std::vector<LayerId>{});
    if (ld.contains("sparsity")) layer.sparsity = ld.at("sparsity").get<double>();
    layers.push_back(std::move(layer));
  }

  std::vector<ExitPoint> exits;
  for (std::size_t i = 0; i < exit_docs.size(); ++i) {
    const json& ed = exit_docs[i];
    const std::string where = fmt::format("exits[{}]", i);
    ExitPoint exit;
    exit.exit_id = required<ExitId>(ed, "exit_id", where);
    exit.layer_id = required<LayerId>(ed, "layer_id", where);
    exit.dev_overhead_ms = ed.value("dev_overhead_ms", 0.0);
    exit.srv_overhead_ms = ed.value("srv_overhead_ms", 0.0);
    exits.push_back(exit);
  }
  return LayerGraph(name, input_bytes, std::move(layers), std::move(exits));
}

LayerGraph load_graph(const std::filesystem::path& path) {
  return parse_graph(detail::read_text_file(path));
}

std::string graph_to_text(const LayerGraph& graph) {
  json doc;
  doc["name"] = graph.name();
  doc["input_bytes"] = graph.input_bytes();
  json layers = json::array();
  for (const Layer& layer : graph.layers()) {
    json ld = {{"id", layer.id},
               {"name", layer.name},
               {"kind", std::string(to_string(layer.kind))},
               {"flops", layer.flops},
               {"out_bytes", layer.out_bytes},
               {"deps", layer.deps}};
    if (layer.sparsity) ld["sparsity"] = *layer.sparsity;
    layers.push_back(std::move(ld));
  }
  doc["layers"] = std::move(layers);
  json exits = json::array();
  for (const ExitPoint& exit : graph.exits()) {
    exits.push_back({{"exit_id", exit.exit_id},
                     {"layer_id", exit.layer_id},
                     {"dev_overhead_ms", exit.dev_overhead_ms},
                     {"srv_overhead_ms", exit.srv_overhead_ms}});
  }
  doc["exits"] = std::move(exits);
  return doc.dump(1) + "\n";
}

void save_graph(const LayerGraph& graph, const std::filesystem::path& path) {
  detail::write_text_file(path, graph_to_text(graph));
}

}  // namespace spinn
