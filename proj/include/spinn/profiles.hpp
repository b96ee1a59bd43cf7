#ifndef SPINN_PROFILES_HPP_
#define SPINN_PROFILES_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "spinn/model_graph.hpp"

namespace spinn {

// Offline per-layer and per-exit-head latencies on one platform.
struct PlatformProfile {
  std::string platform_id;
  std::map<LayerId, double> layer_ms;
  std::map<ExitId, double> exit_ms;

  // Throws kValidation unless every layer and exit of `graph` is covered
  // with a non-negative latency.
  void validate_against(const LayerGraph& graph) const;
};

// Recorded top-1 confidence and correctness of one sample at every exit.
struct SampleTrace {
  std::uint32_t sample_id = 0;
  std::vector<double> confidence;    // indexed by exit id
  std::vector<std::uint8_t> correct;  // 0/1, indexed by exit id

  std::size_t num_exits() const { return confidence.size(); }
};

inline constexpr double kDefaultThresholdGrid[] = {0.5, 0.6, 0.7, 0.8, 0.9, 1.0};

struct ExitProfile {
  std::string graph_name;
  std::vector<SampleTrace> samples;
  std::vector<double> threshold_grid;
  // Free-form generator parameters, kept for reproducibility.
  std::string generator;

  std::size_t num_exits() const {
    return samples.empty() ? 0 : samples.front().num_exits();
  }
  // Throws kValidation on an empty profile, a malformed grid or a sample
  // whose record count differs from `num_exits`.
  void validate(std::size_t num_exits) const;
};

// Exit taken under threshold `thr_conf`: the first exit whose confidence
// strictly exceeds it, otherwise the most confident exit (lowest id on ties).
ExitId exit_of_sample(const SampleTrace& trace, double thr_conf);

// Most confident exit among ids [0, last]; lowest id on ties.
ExitId most_confident_exit(const SampleTrace& trace, ExitId last);

// First exit whose confidence exceeds `thr_conf`, or num_exits() if none.
ExitId first_crossing(const SampleTrace& trace, double thr_conf);

// Exit decision when only exits [0, last] have been evaluated.
ExitId truncated_exit(const SampleTrace& trace, double thr_conf, ExitId last);

// Exit-rate distribution as integer counts so that the probabilities sum to
// one exactly.
struct ExitDistribution {
  std::vector<std::uint64_t> counts;
  std::uint64_t total = 0;

  double probability(ExitId e) const {
    return static_cast<double>(counts.at(e)) / static_cast<double>(total);
  }
  std::vector<double> probabilities() const;
  // Fraction of samples exiting at or before `e`.
  double cumulative(ExitId e) const;
};

ExitDistribution exit_cdf(const ExitProfile& profile, double thr_conf);
double expected_accuracy(const ExitProfile& profile, double thr_conf);

std::vector<double> softmax(std::span<const double> logits);

// Counts the scheduler needs for one threshold, all derived from the same
// per-sample decisions as exit_of_sample.
struct ThresholdStats {
  double thr_conf = 0.0;
  std::uint64_t total = 0;
  std::vector<std::uint64_t> exit_counts;  // exit_of_sample
  // Exit at which execution can stop: the first crossing, or the final exit
  // when nothing crosses (every exit must then be evaluated).
  std::vector<std::uint64_t> stop_counts;
  std::uint64_t correct = 0;
  // truncated_correct[k]: correct decisions when only exits 0..k run.
  std::vector<std::uint64_t> truncated_correct;
};

struct ProfileSummary {
  std::vector<ThresholdStats> per_threshold;  // parallel to threshold_grid
  std::vector<std::uint64_t> correct_at_exit;  // threshold independent
  std::uint64_t total = 0;
};

ProfileSummary summarize(const ExitProfile& profile);

ExitProfile parse_exit_profile(std::string_view text);
ExitProfile load_exit_profile(const std::filesystem::path& path);
std::string exit_profile_to_text(const ExitProfile& profile);
void save_exit_profile(const ExitProfile& profile, const std::filesystem::path& path);

PlatformProfile parse_platform_profile(std::string_view text);
PlatformProfile load_platform_profile(const std::filesystem::path& path);
std::string platform_profile_to_text(const PlatformProfile& profile);
void save_platform_profile(const PlatformProfile& profile,
                           const std::filesystem::path& path);

}  // namespace spinn

#endif  // SPINN_PROFILES_HPP_
