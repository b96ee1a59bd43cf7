#include "spinn/report.hpp"

#include <system_error>

#include <fmt/format.h>

#include "io_util.hpp"
#include "spinn/error.hpp"

namespace spinn {
namespace {

constexpr const char* kSampleHeader =
    "t_start_ms,sample_id,request_id,split_index,split_layer,thr_conf,exit_id,origin,"
    "phase,correct,result_valid,compressed,attempts,latency_ms,device_ms,network_ms,"
    "server_ms,bytes_up,bytes_down\n";

constexpr const char* kAggregateFields =
    "samples,throughput_ips,mean_latency_ms,accuracy,mean_server_ms,mean_device_ms,"
    "mean_network_ms,bytes_up,bytes_down,offloaded,remote,cancelled,failed,invocations";

std::string num(double v) { return fmt::format("{:.6f}", v); }

std::string aggregate_fields(const Aggregates& a) {
  return fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{}", a.samples,
                     num(a.throughput_ips), num(a.mean_latency_ms), num(a.accuracy),
                     num(a.mean_server_ms), num(a.mean_device_ms), num(a.mean_network_ms),
                     a.bytes_up, a.bytes_down, a.offloaded, a.remote, a.cancelled, a.failed,
                     a.invocations);
}

std::string aggregate_object(const Aggregates& a, const std::string& indent) {
  return fmt::format(
      "{{\n"
      "{0}  \"samples\": {1},\n"
      "{0}  \"throughput_ips\": {2},\n"
      "{0}  \"mean_latency_ms\": {3},\n"
      "{0}  \"accuracy\": {4},\n"
      "{0}  \"mean_server_ms\": {5},\n"
      "{0}  \"mean_device_ms\": {6},\n"
      "{0}  \"mean_network_ms\": {7},\n"
      "{0}  \"bytes_up\": {8},\n"
      "{0}  \"bytes_down\": {9},\n"
      "{0}  \"offloaded\": {10},\n"
      "{0}  \"remote\": {11},\n"
      "{0}  \"cancelled\": {12},\n"
      "{0}  \"failed\": {13},\n"
      "{0}  \"invocations\": {14}\n"
      "{0}}}",
      indent, a.samples, num(a.throughput_ips), num(a.mean_latency_ms), num(a.accuracy),
      num(a.mean_server_ms), num(a.mean_device_ms), num(a.mean_network_ms), a.bytes_up,
      a.bytes_down, a.offloaded, a.remote, a.cancelled, a.failed, a.invocations);
}

std::string json_str(std::string_view s) {
  std::string out = "\"";
  for (const char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) {
    throw Error(ErrorCategory::kIo,
                fmt::format("cannot create {}: {}", dir.string(), ec.message()));
  }
}

}  // namespace

std::string samples_csv(const RunReport& report) {
  std::string out = kSampleHeader;
  for (const SampleRow& row : report.rows) {
    const InferenceRecord& r = row.record;
    out += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                       num(row.t_start_ms), r.sample_id, r.request_id, r.config.split_index,
                       r.split_layer, num(r.thr_conf),
                       r.exit_id, to_string(r.origin), to_string(r.phase), r.correct ? 1 : 0,
                       r.timing.result_valid ? 1 : 0, r.compressed ? 1 : 0, r.attempts,
                       num(r.timing.latency_ms), num(r.timing.device_ms),
                       num(r.timing.network_ms), num(r.timing.server_ms), r.bytes_up,
                       r.bytes_down);
  }
  return out;
}

std::string invocations_csv(const RunReport& report) {
  std::string out = "t_s,before_sample,split_index,thr_index,satisfied,relaxed\n";
  for (const Invocation& inv : report.invocations) {
    out += fmt::format("{},{},{},{},{},{}\n", num(inv.t_s), inv.before_sample,
                       inv.config.split_index, inv.config.thr_index, inv.satisfied,
                       inv.relaxed);
  }
  return out;
}

std::string aggregates_csv(const std::vector<RunReport>& reports) {
  std::string out = fmt::format("scenario,system,{}\n", kAggregateFields);
  for (const RunReport& r : reports) {
    out += fmt::format("{},{},{}\n", r.scenario, to_string(r.system),
                       aggregate_fields(r.totals));
  }
  return out;
}

std::string report_json(const RunReport& report) {
  std::string out = "{\n";
  out += fmt::format("  \"scenario\": {},\n", json_str(report.scenario));
  out += fmt::format("  \"system\": {},\n", json_str(to_string(report.system)));
  out += "  \"aggregates\": " + aggregate_object(report.totals, "  ") + ",\n";
  out += "  \"invocations\": [";
  for (std::size_t i = 0; i < report.invocations.size(); ++i) {
    const Invocation& inv = report.invocations[i];
    out += fmt::format(
        "{}\n    {{\"t_s\": {}, \"before_sample\": {}, \"split_index\": {}, "
        "\"thr_index\": {}, \"satisfied\": {}, \"relaxed\": {}}}",
        i == 0 ? "" : ",", num(inv.t_s), inv.before_sample, inv.config.split_index,
        inv.config.thr_index, inv.satisfied, inv.relaxed);
  }
  out += report.invocations.empty() ? "],\n" : "\n  ],\n";
  out += "  \"samples\": [";
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    const InferenceRecord& r = report.rows[i].record;
    out += fmt::format(
        "{}\n    {{\"t_start_ms\": {}, \"sample_id\": {}, \"split_index\": {}, "
        "\"thr_index\": {}, \"exit_id\": {}, \"origin\": {}, \"phase\": {}, "
        "\"correct\": {}, \"latency_ms\": {}, \"device_ms\": {}, \"network_ms\": {}, "
        "\"server_ms\": {}, \"bytes_up\": {}, \"bytes_down\": {}}}",
        i == 0 ? "" : ",", num(report.rows[i].t_start_ms), r.sample_id, r.config.split_index,
        r.config.thr_index, r.exit_id, json_str(to_string(r.origin)),
        json_str(to_string(r.phase)), r.correct ? "true" : "false", num(r.timing.latency_ms),
        num(r.timing.device_ms), num(r.timing.network_ms), num(r.timing.server_ms),
        r.bytes_up, r.bytes_down);
  }
  out += report.rows.empty() ? "]\n" : "\n  ]\n";
  out += "}\n";
  return out;
}

std::string sweep_csv(SweepVariable variable, const std::vector<SweepCell>& cells) {
  std::string out = fmt::format("variable,value,system,{}\n", kAggregateFields);
  for (const SweepCell& c : cells) {
    out += fmt::format("{},{},{},{}\n", to_string(variable), num(c.value), to_string(c.system),
                       aggregate_fields(c.totals));
  }
  return out;
}

std::string sweep_json(SweepVariable variable, const std::vector<SweepCell>& cells) {
  std::string out = fmt::format("{{\n  \"variable\": {},\n  \"cells\": [", json_str(to_string(variable)));
  for (std::size_t i = 0; i < cells.size(); ++i) {
    out += fmt::format("{}\n    {{\"value\": {}, \"system\": {}, \"aggregates\": {}}}",
                       i == 0 ? "" : ",", num(cells[i].value),
                       json_str(to_string(cells[i].system)),
                       aggregate_object(cells[i].totals, "    "));
  }
  out += cells.empty() ? "]\n}\n" : "\n  ]\n}\n";
  return out;
}

std::vector<std::filesystem::path> emit_report(const RunReport& report,
                                               const std::filesystem::path& dir,
                                               ReportFormat format) {
  ensure_dir(dir);
  std::vector<std::filesystem::path> written;
  const auto put = [&](const char* name, const std::string& text) {
    detail::write_text_file(dir / name, text);
    written.push_back(dir / name);
  };
  if (format == ReportFormat::kJson) {
    put("report.json", report_json(report));
  } else {
    put("samples.csv", samples_csv(report));
    put("invocations.csv", invocations_csv(report));
    put("aggregates.csv", aggregates_csv({report}));
  }
  return written;
}

std::vector<std::filesystem::path> emit_sweep(SweepVariable variable,
                                              const std::vector<SweepCell>& cells,
                                              const std::filesystem::path& dir,
                                              ReportFormat format) {
  ensure_dir(dir);
  const char* name = format == ReportFormat::kJson ? "sweep.json" : "sweep.csv";
  detail::write_text_file(dir / name, format == ReportFormat::kJson
                                          ? sweep_json(variable, cells)
                                          : sweep_csv(variable, cells));
  return {dir / name};
}

}  // namespace spinn
