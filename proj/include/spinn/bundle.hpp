#ifndef SPINN_BUNDLE_HPP_
#define SPINN_BUNDLE_HPP_

#include <filesystem>
#include <vector>

#include "spinn/model_graph.hpp"
#include "spinn/profiles.hpp"

namespace spinn {

// A graph with its device profile, server profile and exit trace, checked to
// agree with each other. Thresholds are rounded to float precision on bind
// because the wire protocol carries them as 32-bit floats; client and server
// must compare confidences against the same value.
class Bundle {
 public:
  Bundle(LayerGraph graph, PlatformProfile device, PlatformProfile server,
         ExitProfile exits);

  const LayerGraph& graph() const { return graph_; }
  const PlatformProfile& device() const { return device_; }
  const PlatformProfile& server() const { return server_; }
  const ExitProfile& exits() const { return exits_; }
  const ProfileSummary& summary() const { return summary_; }
  const std::vector<SplitPoint>& splits() const { return splits_; }
  const std::vector<double>& thresholds() const { return exits_.threshold_grid; }

  std::size_t num_exits() const { return graph_.num_exits(); }
  LayerId exit_layer(ExitId e) const { return graph_.exit(e).layer_id; }
  // Indexed by layer id; entry 0 is zero.
  const std::vector<double>& device_layer_ms() const { return device_layer_ms_; }
  const std::vector<double>& server_layer_ms() const { return server_layer_ms_; }
  double device_exit_ms(ExitId e) const { return device_exit_ms_.at(e); }
  double server_exit_ms(ExitId e) const { return server_exit_ms_.at(e); }

  // Position of `thr` in the threshold grid; throws kValidation if absent.
  std::size_t threshold_index(double thr) const;

 private:
  LayerGraph graph_;
  PlatformProfile device_;
  PlatformProfile server_;
  ExitProfile exits_;
  ProfileSummary summary_;
  std::vector<SplitPoint> splits_;
  std::vector<double> device_layer_ms_;
  std::vector<double> server_layer_ms_;
  std::vector<double> device_exit_ms_;
  std::vector<double> server_exit_ms_;
};

double canonical_threshold(double thr);

struct BundlePaths {
  std::filesystem::path graph;
  std::filesystem::path device_profile;
  std::filesystem::path server_profile;
  std::filesystem::path exit_trace;
};

// Manifest: {"graph": ..., "device_profile": ..., "server_profile": ...,
// "exit_trace": ...}, paths relative to the manifest's directory.
BundlePaths read_manifest(const std::filesystem::path& manifest);
Bundle load_bundle(const std::filesystem::path& manifest);
void save_bundle(const Bundle& bundle, const std::filesystem::path& dir);

}  // namespace spinn

#endif  // SPINN_BUNDLE_HPP_
