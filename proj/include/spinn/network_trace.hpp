#ifndef SPINN_NETWORK_TRACE_HPP_
#define SPINN_NETWORK_TRACE_HPP_

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "spinn/runtime_profiler.hpp"

namespace spinn {

struct TraceRow {
  double t_s = 0.0;
  double bandwidth_mbps = 0.0;
  double latency_ms = 0.0;
  NetworkType type = NetworkType::kWifi;
};

// Piecewise-constant link conditions: row i holds from t_s[i] until the next
// row. Times strictly increase and bandwidth is positive.
class NetworkTrace {
 public:
  NetworkTrace() = default;
  explicit NetworkTrace(std::vector<TraceRow> rows);

  const std::vector<TraceRow>& rows() const { return rows_; }
  bool empty() const { return rows_.empty(); }
  // Row in force at `t_s`; the first row also covers earlier times.
  std::size_t index_at(double t_s) const;
  const TraceRow& at(double t_s) const { return rows_[index_at(t_s)]; }
  // Number of consecutive rows whose bandwidth differs.
  std::size_t bandwidth_changes() const;

 private:
  std::vector<TraceRow> rows_;
};

// CSV with header "t_s,bandwidth_mbps,latency_ms,network_type".
NetworkTrace parse_network_trace(std::string_view text);
NetworkTrace load_network_trace(const std::filesystem::path& path);
std::string network_trace_to_text(const NetworkTrace& trace);

}  // namespace spinn

#endif  // SPINN_NETWORK_TRACE_HPP_
