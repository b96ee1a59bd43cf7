#include "spinn/profiles.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "io_util.hpp"
#include "spinn/error.hpp"

namespace spinn {
namespace {

[[noreturn]] void reject(const std::string& message) {
  throw Error(ErrorCategory::kValidation, message);
}

[[noreturn]] void parse_fail(std::size_t line_no, const std::string& message) {
  throw Error(ErrorCategory::kParse, fmt::format("line {}: {}", line_no, message));
}

// "# key: value" header lines.
bool header_field(std::string_view line, std::string_view key, std::string* value) {
  line.remove_prefix(1);
  line = detail::trim(line);
  if (line.substr(0, key.size()) != key) return false;
  line.remove_prefix(key.size());
  if (line.empty() || line.front() != ':') return false;
  line.remove_prefix(1);
  *value = std::string(detail::trim(line));
  return true;
}

std::vector<std::string_view> lines_of(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    out.push_back(line);
    start = end + 1;
  }
  return out;
}

}  // namespace

void PlatformProfile::validate_against(const LayerGraph& graph) const {
  for (const Layer& layer : graph.layers()) {
    const auto it = layer_ms.find(layer.id);
    if (it == layer_ms.end()) {
      reject(fmt::format("platform '{}' has no latency for layer {}", platform_id,
                         layer.id));
    }
    if (!(it->second >= 0.0) || !std::isfinite(it->second)) {
      reject(fmt::format("platform '{}': bad latency for layer {}", platform_id,
                         layer.id));
    }
  }
  for (const ExitPoint& exit : graph.exits()) {
    const auto it = exit_ms.find(exit.exit_id);
    if (it == exit_ms.end()) {
      reject(fmt::format("platform '{}' has no latency for exit {}", platform_id,
                         exit.exit_id));
    }
    if (!(it->second >= 0.0) || !std::isfinite(it->second)) {
      reject(fmt::format("platform '{}': bad latency for exit {}", platform_id,
                         exit.exit_id));
    }
  }
}

void ExitProfile::validate(std::size_t expected_exits) const {
  if (samples.empty()) reject("exit profile has no samples");
  if (threshold_grid.empty()) reject("threshold grid is empty");
  for (std::size_t i = 0; i < threshold_grid.size(); ++i) {
    const double t = threshold_grid[i];
    if (!(t >= 0.0 && t <= 1.0)) reject(fmt::format("threshold {} outside [0,1]", t));
    if (i > 0 && !(t > threshold_grid[i - 1])) {
      reject("threshold grid must be strictly increasing");
    }
  }
  for (const SampleTrace& s : samples) {
    if (s.confidence.size() != expected_exits || s.correct.size() != expected_exits) {
      reject(fmt::format("sample {} has {} exit records, expected {}", s.sample_id,
                         s.confidence.size(), expected_exits));
    }
    for (std::size_t e = 0; e < expected_exits; ++e) {
      if (!(s.confidence[e] >= 0.0 && s.confidence[e] <= 1.0)) {
        reject(fmt::format("sample {} exit {}: confidence {} outside [0,1]",
                           s.sample_id, e, s.confidence[e]));
      }
      if (s.correct[e] > 1) {
        reject(fmt::format("sample {} exit {}: correct must be 0 or 1", s.sample_id, e));
      }
    }
  }
}

ExitId most_confident_exit(const SampleTrace& trace, ExitId last) {
  ExitId best = 0;
  for (ExitId e = 1; e <= last && e < trace.num_exits(); ++e) {
    if (trace.confidence[e] > trace.confidence[best]) best = e;
  }
  return best;
}

ExitId first_crossing(const SampleTrace& trace, double thr_conf) {
  const auto n = static_cast<ExitId>(trace.num_exits());
  for (ExitId e = 0; e < n; ++e) {
    if (trace.confidence[e] > thr_conf) return e;
  }
  return n;
}

ExitId truncated_exit(const SampleTrace& trace, double thr_conf, ExitId last) {
  const ExitId first = first_crossing(trace, thr_conf);
  if (first <= last) return first;
  return most_confident_exit(trace, last);
}

ExitId exit_of_sample(const SampleTrace& trace, double thr_conf) {
  return truncated_exit(trace, thr_conf, static_cast<ExitId>(trace.num_exits() - 1));
}

std::vector<double> ExitDistribution::probabilities() const {
  std::vector<double> q(counts.size());
  for (std::size_t e = 0; e < counts.size(); ++e) {
    q[e] = static_cast<double>(counts[e]) / static_cast<double>(total);
  }
  return q;
}

double ExitDistribution::cumulative(ExitId e) const {
  std::uint64_t sum = 0;
  for (ExitId i = 0; i <= e && i < counts.size(); ++i) sum += counts[i];
  return static_cast<double>(sum) / static_cast<double>(total);
}

ExitDistribution exit_cdf(const ExitProfile& profile, double thr_conf) {
  if (profile.samples.empty()) reject("exit profile has no samples");
  ExitDistribution dist;
  dist.counts.assign(profile.num_exits(), 0);
  for (const SampleTrace& s : profile.samples) ++dist.counts[exit_of_sample(s, thr_conf)];
  dist.total = profile.samples.size();
  return dist;
}

double expected_accuracy(const ExitProfile& profile, double thr_conf) {
  if (profile.samples.empty()) reject("exit profile has no samples");
  std::uint64_t correct = 0;
  for (const SampleTrace& s : profile.samples) {
    correct += s.correct[exit_of_sample(s, thr_conf)];
  }
  return static_cast<double>(correct) / static_cast<double>(profile.samples.size());
}

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) throw Error(ErrorCategory::kValidation, "softmax of empty vector");
  const double peak = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (!std::isfinite(logits[i])) {
      throw Error(ErrorCategory::kValidation, "softmax of non-finite input");
    }
    out[i] = std::exp(logits[i] - peak);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

ProfileSummary summarize(const ExitProfile& profile) {
  if (profile.samples.empty()) reject("exit profile has no samples");
  const std::size_t num_exits = profile.num_exits();
  ProfileSummary summary;
  summary.total = profile.samples.size();
  summary.correct_at_exit.assign(num_exits, 0);
  for (const SampleTrace& s : profile.samples) {
    for (std::size_t e = 0; e < num_exits; ++e) summary.correct_at_exit[e] += s.correct[e];
  }
  for (const double thr : profile.threshold_grid) {
    ThresholdStats stats;
    stats.thr_conf = thr;
    stats.total = summary.total;
    stats.exit_counts.assign(num_exits, 0);
    stats.stop_counts.assign(num_exits, 0);
    stats.truncated_correct.assign(num_exits, 0);
    for (const SampleTrace& s : profile.samples) {
      const ExitId chosen = exit_of_sample(s, thr);
      ++stats.exit_counts[chosen];
      stats.correct += s.correct[chosen];
      const ExitId first = first_crossing(s, thr);
      ++stats.stop_counts[std::min<std::size_t>(first, num_exits - 1)];
      // Running argmax gives the truncated decision for every prefix in one pass.
      ExitId best = 0;
      for (ExitId k = 0; k < num_exits; ++k) {
        if (s.confidence[k] > s.confidence[best]) best = k;
        const ExitId pick = first <= k ? first : best;
        stats.truncated_correct[k] += s.correct[pick];
      }
    }
    summary.per_threshold.push_back(std::move(stats));
  }
  return summary;
}

ExitProfile parse_exit_profile(std::string_view text) {
  ExitProfile profile;
  std::size_t declared_exits = 0;
  bool saw_column_header = false;
  std::size_t line_no = 0;
  for (std::string_view raw : lines_of(text)) {
    ++line_no;
    const std::string_view line = detail::trim(raw);
    if (line.empty()) continue;
    if (line.front() == '#') {
      std::string value;
      if (header_field(line, "graph", &value)) {
        profile.graph_name = value;
      } else if (header_field(line, "exits", &value)) {
        declared_exits = static_cast<std::size_t>(detail::parse_int(value, "exit count"));
      } else if (header_field(line, "thresholds", &value)) {
        for (const std::string& f : detail::split_fields(value, ',')) {
          profile.threshold_grid.push_back(detail::parse_double(f, "threshold"));
        }
      } else if (header_field(line, "generator", &value)) {
        profile.generator = value;
      }
      continue;
    }
    const std::vector<std::string> fields = detail::split_fields(line, ',');
    if (!saw_column_header && fields.size() == 4 && fields[0] == "sample_id") {
      saw_column_header = true;
      continue;
    }
    if (fields.size() != 4) parse_fail(line_no, "expected 4 fields");
    if (declared_exits == 0) parse_fail(line_no, "record before '# exits:' header");
    const long long sample_id = detail::parse_int(fields[0], "sample_id");
    const long long exit_id = detail::parse_int(fields[1], "exit_id");
    const double confidence = detail::parse_double(fields[2], "confidence");
    const long long correct = detail::parse_int(fields[3], "correct");
    if (sample_id < 0 || exit_id < 0) parse_fail(line_no, "negative id");
    if (correct != 0 && correct != 1) parse_fail(line_no, "correct must be 0 or 1");

    if (profile.samples.empty() ||
        profile.samples.back().sample_id != static_cast<std::uint32_t>(sample_id)) {
      for (const SampleTrace& s : profile.samples) {
        if (s.sample_id == static_cast<std::uint32_t>(sample_id)) {
          parse_fail(line_no, fmt::format("records of sample {} are not contiguous",
                                          sample_id));
        }
      }
      SampleTrace trace;
      trace.sample_id = static_cast<std::uint32_t>(sample_id);
      profile.samples.push_back(std::move(trace));
    }
    SampleTrace& trace = profile.samples.back();
    if (static_cast<std::size_t>(exit_id) != trace.confidence.size()) {
      parse_fail(line_no, fmt::format("sample {}: expected exit {}, got {}", sample_id,
                                      trace.confidence.size(), exit_id));
    }
    trace.confidence.push_back(confidence);
    trace.correct.push_back(static_cast<std::uint8_t>(correct));
  }
  if (profile.threshold_grid.empty()) {
    profile.threshold_grid.assign(std::begin(kDefaultThresholdGrid),
                                  std::end(kDefaultThresholdGrid));
  }
  profile.validate(declared_exits);
  return profile;
}

ExitProfile load_exit_profile(const std::filesystem::path& path) {
  return parse_exit_profile(detail::read_text_file(path));
}

std::string exit_profile_to_text(const ExitProfile& profile) {
  std::string out = "# spinn exit trace v1\n";
  out += fmt::format("# graph: {}\n", profile.graph_name);
  out += fmt::format("# exits: {}\n", profile.num_exits());
  out += fmt::format("# thresholds: {}\n", fmt::join(profile.threshold_grid, ","));
  if (!profile.generator.empty()) out += fmt::format("# generator: {}\n", profile.generator);
  out += "sample_id,exit_id,confidence,correct\n";
  for (const SampleTrace& s : profile.samples) {
    for (std::size_t e = 0; e < s.num_exits(); ++e) {
      out += fmt::format("{},{},{},{}\n", s.sample_id, e, s.confidence[e],
                         static_cast<int>(s.correct[e]));
    }
  }
  return out;
}

void save_exit_profile(const ExitProfile& profile, const std::filesystem::path& path) {
  detail::write_text_file(path, exit_profile_to_text(profile));
}

PlatformProfile parse_platform_profile(std::string_view text) {
  PlatformProfile profile;
  std::size_t line_no = 0;
  for (std::string_view raw : lines_of(text)) {
    ++line_no;
    const std::string_view line = detail::trim(raw);
    if (line.empty()) continue;
    if (line.front() == '#') {
      std::string value;
      if (header_field(line, "platform", &value)) profile.platform_id = value;
      continue;
    }
    const std::vector<std::string> fields = detail::split_fields(line, ',');
    if (fields.size() != 2) parse_fail(line_no, "expected 'key, mean_ms'");
    const double ms = detail::parse_double(fields[1], "mean_ms");
    if (!(ms >= 0.0) || !std::isfinite(ms)) parse_fail(line_no, "latency must be >= 0");
    const std::string& key = fields[0];
    if (key.rfind("exit:", 0) == 0) {
      const long long id = detail::parse_int(std::string_view(key).substr(5), "exit id");
      if (id < 0) parse_fail(line_no, "negative exit id");
      if (!profile.exit_ms.emplace(static_cast<ExitId>(id), ms).second) {
        parse_fail(line_no, fmt::format("duplicate exit {}", id));
      }
    } else {
      const long long id = detail::parse_int(key, "layer id");
      if (id <= 0) parse_fail(line_no, "layer ids start at 1");
      if (!profile.layer_ms.emplace(static_cast<LayerId>(id), ms).second) {
        parse_fail(line_no, fmt::format("duplicate layer {}", id));
      }
    }
  }
  return profile;
}

PlatformProfile load_platform_profile(const std::filesystem::path& path) {
  return parse_platform_profile(detail::read_text_file(path));
}

std::string platform_profile_to_text(const PlatformProfile& profile) {
  std::string out = fmt::format("# platform: {}\n", profile.platform_id);
  for (const auto& [id, ms] : profile.layer_ms) out += fmt::format("{}, {}\n", id, ms);
  for (const auto& [id, ms] : profile.exit_ms) out += fmt::format("exit:{}, {}\n", id, ms);
  return out;
}

void save_platform_profile(const PlatformProfile& profile,
                           const std::filesystem::path& path) {
  detail::write_text_file(path, platform_profile_to_text(profile));
}

}  // namespace spinn
