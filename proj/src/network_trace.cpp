#include "spinn/network_trace.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "io_util.hpp"
#include "spinn/error.hpp"

namespace spinn {

NetworkTrace::NetworkTrace(std::vector<TraceRow> rows) : rows_(std::move(rows)) {
  if (rows_.empty()) throw Error(ErrorCategory::kValidation, "network trace is empty");
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    const TraceRow& r = rows_[i];
    if (!std::isfinite(r.t_s) || (i > 0 && !(r.t_s > rows_[i - 1].t_s))) {
      throw Error(ErrorCategory::kValidation,
                  fmt::format("network trace row {}: time must strictly increase", i));
    }
    if (!(r.bandwidth_mbps > 0.0) || !std::isfinite(r.bandwidth_mbps)) {
      throw Error(ErrorCategory::kValidation,
                  fmt::format("network trace row {}: bandwidth must be positive", i));
    }
    if (!(r.latency_ms >= 0.0) || !std::isfinite(r.latency_ms)) {
      throw Error(ErrorCategory::kValidation,
                  fmt::format("network trace row {}: latency must be >= 0", i));
    }
  }
}

std::size_t NetworkTrace::index_at(double t_s) const {
  const auto it = std::upper_bound(rows_.begin(), rows_.end(), t_s,
                                   [](double t, const TraceRow& r) { return t < r.t_s; });
  return it == rows_.begin() ? 0 : static_cast<std::size_t>(it - rows_.begin()) - 1;
}

std::size_t NetworkTrace::bandwidth_changes() const {
  std::size_t n = 0;
  for (std::size_t i = 1; i < rows_.size(); ++i) {
    if (rows_[i].bandwidth_mbps != rows_[i - 1].bandwidth_mbps) ++n;
  }
  return n;
}

NetworkTrace parse_network_trace(std::string_view text) {
  std::vector<TraceRow> rows;
  std::size_t line_no = 0;
  bool header = false;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = detail::trim(text.substr(start, end - start));
    start = end + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const auto f = detail::split_fields(line, ',');
    if (!header) {
      if (f.size() != 4 || f[0] != "t_s" || f[1] != "bandwidth_mbps" ||
          f[2] != "latency_ms" || f[3] != "network_type") {
        throw Error(ErrorCategory::kParse,
                    "network trace header must be t_s,bandwidth_mbps,latency_ms,network_type");
      }
      header = true;
      continue;
    }
    if (f.size() != 4) {
      throw Error(ErrorCategory::kParse, fmt::format("line {}: expected 4 fields", line_no));
    }
    TraceRow r;
    r.t_s = detail::parse_double(f[0], "t_s");
    r.bandwidth_mbps = detail::parse_double(f[1], "bandwidth_mbps");
    r.latency_ms = detail::parse_double(f[2], "latency_ms");
    const auto type = parse_network_type(f[3]);
    if (!type) {
      throw Error(ErrorCategory::kParse,
                  fmt::format("line {}: unknown network type '{}'", line_no, f[3]));
    }
    r.type = *type;
    rows.push_back(r);
  }
  return NetworkTrace(std::move(rows));
}

NetworkTrace load_network_trace(const std::filesystem::path& path) {
  return parse_network_trace(detail::read_text_file(path));
}

std::string network_trace_to_text(const NetworkTrace& trace) {
  std::string out = "t_s,bandwidth_mbps,latency_ms,network_type\n";
  for (const TraceRow& r : trace.rows()) {
    out += fmt::format("{},{},{},{}\n", r.t_s, r.bandwidth_mbps, r.latency_ms,
                       to_string(r.type));
  }
  return out;
}

}  // namespace spinn
