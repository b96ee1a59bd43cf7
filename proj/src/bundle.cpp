#include "spinn/bundle.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "io_util.hpp"
#include "json.hpp"
#include "spinn/error.hpp"

namespace spinn {

double canonical_threshold(double thr) {
  return static_cast<double>(static_cast<float>(thr));
}

Bundle::Bundle(LayerGraph graph, PlatformProfile device, PlatformProfile server,
               ExitProfile exits)
    : graph_(std::move(graph)),
      device_(std::move(device)),
      server_(std::move(server)),
      exits_(std::move(exits)) {
  device_.validate_against(graph_);
  server_.validate_against(graph_);
  for (double& t : exits_.threshold_grid) t = canonical_threshold(t);
  exits_.validate(graph_.num_exits());
  if (!exits_.graph_name.empty() && exits_.graph_name != graph_.name()) {
    throw Error(ErrorCategory::kValidation,
                fmt::format("exit trace is for graph '{}', bundle graph is '{}'",
                            exits_.graph_name, graph_.name()));
  }
  summary_ = summarize(exits_);
  splits_ = enumerate_splits(graph_);
  const std::size_t n = graph_.num_layers();
  device_layer_ms_.assign(n + 1, 0.0);
  server_layer_ms_.assign(n + 1, 0.0);
  for (LayerId id = 1; id <= n; ++id) {
    device_layer_ms_[id] = device_.layer_ms.at(id);
    server_layer_ms_[id] = server_.layer_ms.at(id);
  }
  for (ExitId e = 0; e < graph_.num_exits(); ++e) {
    device_exit_ms_.push_back(device_.exit_ms.at(e));
    server_exit_ms_.push_back(server_.exit_ms.at(e));
  }
}

std::size_t Bundle::threshold_index(double thr) const {
  const double c = canonical_threshold(thr);
  const auto& grid = thresholds();
  const auto it = std::find(grid.begin(), grid.end(), c);
  if (it == grid.end()) {
    throw Error(ErrorCategory::kValidation,
                fmt::format("threshold {} is not in the profile's grid", thr));
  }
  return static_cast<std::size_t>(it - grid.begin());
}

BundlePaths read_manifest(const std::filesystem::path& manifest) {
  nlohmann::json doc;
  const std::string text = detail::read_text_file(manifest);
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCategory::kParse, manifest.string() + ": " + e.what());
  }
  const std::filesystem::path base = manifest.parent_path();
  const auto path_of = [&](const char* key) {
    if (!doc.contains(key) || !doc[key].is_string()) {
      throw Error(ErrorCategory::kParse,
                  fmt::format("{}: missing string '{}'", manifest.string(), key));
    }
    return base / doc[key].get<std::string>();
  };
  return {path_of("graph"), path_of("device_profile"), path_of("server_profile"),
          path_of("exit_trace")};
}

Bundle load_bundle(const std::filesystem::path& manifest) {
  const BundlePaths p = read_manifest(manifest);
  return Bundle(load_graph(p.graph), load_platform_profile(p.device_profile),
                load_platform_profile(p.server_profile), load_exit_profile(p.exit_trace));
}

void save_bundle(const Bundle& bundle, const std::filesystem::path& dir) {
  save_graph(bundle.graph(), dir / "graph.json");
  save_platform_profile(bundle.device(), dir / "device.prof");
  save_platform_profile(bundle.server(), dir / "server.prof");
  save_exit_profile(bundle.exits(), dir / "exits.csv");
  const nlohmann::json manifest = {{"graph", "graph.json"},
                                   {"device_profile", "device.prof"},
                                   {"server_profile", "server.prof"},
                                   {"exit_trace", "exits.csv"}};
  detail::write_text_file(dir / "bundle.json", manifest.dump(2) + "\n");
}

}  // namespace spinn
