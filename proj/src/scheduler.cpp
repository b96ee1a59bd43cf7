#include "spinn/scheduler.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "io_util.hpp"
#include "json.hpp"
#include "spinn/error.hpp"
#include "spinn/protocol.hpp"

namespace spinn {
namespace {

using nlohmann::json;

constexpr std::pair<Metric, std::string_view> kMetricNames[] = {
    {Metric::kLatency, "latency_ms"},
    {Metric::kThroughput, "throughput_ips"},
    {Metric::kServerCost, "server_cost_ms"},
    {Metric::kDeviceCost, "device_cost_ms"},
    {Metric::kAccuracy, "accuracy"},
};

constexpr std::pair<CompareOp, std::string_view> kOpNames[] = {
    {CompareOp::kLe, "<="}, {CompareOp::kGe, ">="}, {CompareOp::kLt, "<"},
    {CompareOp::kGt, ">"},  {CompareOp::kEq, "="},
};

constexpr std::pair<SoftMode, std::string_view> kModeNames[] = {
    {SoftMode::kMin, "min"},
    {SoftMode::kMax, "max"},
    {SoftMode::kValue, "value"},
    {SoftMode::kMinViolation, "satisfy"},
};

[[noreturn]] void sla_error(const std::string& message) {
  throw Error(ErrorCategory::kParse, "sla: " + message);
}

Metric metric_field(const json& entry) {
  if (!entry.contains("metric") || !entry["metric"].is_string()) sla_error("missing 'metric'");
  const auto m = parse_metric(entry["metric"].get<std::string>());
  if (!m) sla_error("unknown metric '" + entry["metric"].get<std::string>() + "'");
  return *m;
}

double number_field(const json& entry, const char* key) {
  if (!entry.contains(key) || !entry[key].is_number()) {
    sla_error(fmt::format("missing number '{}'", key));
  }
  return entry[key].get<double>();
}

}  // namespace

std::string_view to_string(Metric metric) {
  for (const auto& [m, name] : kMetricNames) {
    if (m == metric) return name;
  }
  return "?";
}

std::optional<Metric> parse_metric(std::string_view text) {
  for (const auto& [m, name] : kMetricNames) {
    if (name == text) return m;
  }
  return std::nullopt;
}

std::string_view to_string(CompareOp op) {
  for (const auto& [o, name] : kOpNames) {
    if (o == op) return name;
  }
  return "?";
}

std::optional<CompareOp> parse_compare_op(std::string_view text) {
  if (text == "==") return CompareOp::kEq;
  for (const auto& [o, name] : kOpNames) {
    if (name == text) return o;
  }
  return std::nullopt;
}

bool nearly_equal(double a, double b) {
  if (a == b) return true;
  return std::fabs(a - b) <= kRelTolerance * std::max(std::fabs(a), std::fabs(b));
}

bool compare(double value, CompareOp op, double thr) {
  switch (op) {
    case CompareOp::kLe: return value <= thr;
    case CompareOp::kGe: return value >= thr;
    case CompareOp::kLt: return value < thr;
    case CompareOp::kGt: return value > thr;
    case CompareOp::kEq: return nearly_equal(value, thr);
  }
  return false;
}

SlaSpec parse_sla(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    sla_error(e.what());
  }
  SlaSpec sla;
  for (const json& entry : doc.value("hard", json::array())) {
    HardConstraint c;
    c.metric = metric_field(entry);
    if (!entry.contains("op") || !entry["op"].is_string()) sla_error("missing 'op'");
    const auto op = parse_compare_op(entry["op"].get<std::string>());
    if (!op) sla_error("unknown op '" + entry["op"].get<std::string>() + "'");
    c.op = *op;
    c.thr = number_field(entry, "thr");
    c.relative_to = entry.value("relative_to", "");
    if (!c.relative_to.empty() && c.relative_to != "final_exit" &&
        c.relative_to != "device_only") {
      sla_error("unknown relative_to '" + c.relative_to + "'");
    }
    if (c.relative_to == "final_exit" && c.metric != Metric::kAccuracy) {
      sla_error("relative_to final_exit applies to accuracy only");
    }
    sla.hard.push_back(c);
  }
  for (const json& entry : doc.value("soft", json::array())) {
    SoftTarget t;
    t.metric = metric_field(entry);
    const std::string mode = entry.value("mode", "");
    bool known = false;
    for (const auto& [m, name] : kModeNames) {
      if (name == mode) {
        t.mode = m;
        known = true;
      }
    }
    if (!known || t.mode == SoftMode::kMinViolation) sla_error("unknown mode '" + mode + "'");
    if (t.mode == SoftMode::kValue) t.value = number_field(entry, "value");
    for (const SoftTarget& prior : sla.soft) {
      if (prior.metric == t.metric) {
        sla_error(fmt::format("metric {} appears twice in soft targets", to_string(t.metric)));
      }
    }
    sla.soft.push_back(t);
  }
  return sla;
}

SlaSpec load_sla(const std::filesystem::path& path) {
  return parse_sla(detail::read_text_file(path));
}

std::string sla_to_text(const SlaSpec& sla) {
  json doc;
  doc["hard"] = json::array();
  doc["soft"] = json::array();
  for (const HardConstraint& c : sla.hard) {
    json entry = {{"metric", to_string(c.metric)}, {"op", to_string(c.op)}, {"thr", c.thr}};
    if (!c.relative_to.empty()) entry["relative_to"] = c.relative_to;
    doc["hard"].push_back(entry);
  }
  for (const SoftTarget& t : sla.soft) {
    json entry = {{"metric", to_string(t.metric)}};
    for (const auto& [m, name] : kModeNames) {
      if (m == t.mode) entry["mode"] = name;
    }
    if (t.mode == SoftMode::kValue) entry["value"] = t.value;
    if (t.mode == SoftMode::kMinViolation) {
      entry["op"] = to_string(t.op);
      entry["value"] = t.value;
    }
    doc["soft"].push_back(entry);
  }
  return doc.dump(2) + "\n";
}

SoftTarget as_soft(const HardConstraint& c) {
  return {c.metric, SoftMode::kMinViolation, c.thr, c.op};
}

double objective(const SoftTarget& target, double m) {
  switch (target.mode) {
    case SoftMode::kMin: return m;
    case SoftMode::kMax: return -m;
    case SoftMode::kValue: return std::fabs(m - target.value);
    case SoftMode::kMinViolation:
      switch (target.op) {
        case CompareOp::kLe:
        case CompareOp::kLt: return std::max(0.0, m - target.value);
        case CompareOp::kGe:
        case CompareOp::kGt: return std::max(0.0, target.value - m);
        case CompareOp::kEq: return std::fabs(m - target.value);
      }
  }
  return m;
}

double MetricVector::get(Metric m) const {
  switch (m) {
    case Metric::kLatency: return latency_ms;
    case Metric::kThroughput: return throughput_ips;
    case Metric::kServerCost: return server_cost_ms;
    case Metric::kDeviceCost: return device_cost_ms;
    case Metric::kAccuracy: return accuracy;
  }
  return 0.0;
}

MetricVector MetricTable::row(std::size_t i) const {
  return {value(Metric::kLatency, i), value(Metric::kThroughput, i),
          value(Metric::kServerCost, i), value(Metric::kDeviceCost, i),
          value(Metric::kAccuracy, i)};
}

SplitPlan plan_split(const SplitTransfer& transfer, double est_ratio, const Conditions& c) {
  SplitPlan plan;
  if (transfer.raw_wire_bytes == 0) return plan;
  plan.uplink_bytes = static_cast<double>(transfer.raw_wire_bytes);
  if (!c.allow_compression) return plan;
  const double pack_ms = estimate_pack_ms(transfer.raw_tensor_bytes, c.pack_bytes_per_ms);
  if (should_compress(transfer.raw_wire_bytes, pack_ms, est_ratio, c.bandwidth_mbps)) {
    plan.compress = true;
    plan.pack_ms = pack_ms;
    plan.uplink_bytes = static_cast<double>(transfer.raw_wire_bytes) / est_ratio;
  }
  return plan;
}

SearchSpace full_space(const Bundle& bundle) {
  SearchSpace space;
  for (std::uint32_t i = 0; i < bundle.splits().size(); ++i) space.split_indices.push_back(i);
  for (std::uint32_t t = 0; t < bundle.thresholds().size(); ++t) space.thr_indices.push_back(t);
  return space;
}

Evaluator::Evaluator(const Bundle& bundle, ExecPolicy policy,
                     std::vector<SplitTransfer> transfers)
    : model_(bundle, policy), transfers_(std::move(transfers)) {
  if (transfers_.size() != bundle.splits().size()) {
    throw Error(ErrorCategory::kValidation, "transfer table does not match split count");
  }
  const ProfileSummary& summary = bundle.summary();
  for (const ThresholdStats& stats : summary.per_threshold) {
    if (policy.mode == ExitMode::kProgressive) {
      stop_counts_.push_back(stats.stop_counts);
    } else {
      std::vector<std::uint64_t> counts(bundle.num_exits(), 0);
      counts[model_.active_exits().back()] = summary.total;
      stop_counts_.push_back(std::move(counts));
    }
  }
}

double Evaluator::accuracy(std::uint32_t thr_index, LayerId split_layer,
                           bool server_available) const {
  const ProfileSummary& summary = bundle().summary();
  const auto total = static_cast<double>(summary.total);
  const bool offloads = split_layer < model_.end_layer();
  if (model_.policy().mode != ExitMode::kProgressive) {
    if (offloads && !server_available && !model_.policy().fallback) return 0.0;
    return static_cast<double>(summary.correct_at_exit[model_.active_exits().back()]) / total;
  }
  const ThresholdStats& stats = summary.per_threshold.at(thr_index);
  if (server_available || !offloads) return static_cast<double>(stats.correct) / total;
  const auto next = model_.next_exit_after(split_layer);
  return static_cast<double>(stats.truncated_correct[*next]) / total;
}

MetricTable Evaluator::estimate(const SearchSpace& space, const Conditions& c,
                                const RatioTracker& ratios) const {
  const Bundle& b = bundle();
  const std::size_t rows = space.split_indices.size() * space.thr_indices.size();
  MetricTable table;
  table.split_index.reserve(rows);
  table.thr_index.reserve(rows);
  table.split_layer.reserve(rows);
  table.thr.reserve(rows);
  for (auto& column : table.metric) column.reserve(rows);

  const auto& active = model_.active_exits();
  const double total = static_cast<double>(b.summary().total);
  std::vector<SampleTiming> timing(b.num_exits());
  for (const std::uint32_t si : space.split_indices) {
    const SplitPoint& split = b.splits().at(si);
    const LayerId s = split.layer_id;
    const SplitPlan plan = plan_split(transfers_[si], ratios.estimate(si), c);
    LinkPlan link;
    link.device_sf = c.device_sf;
    link.server_sf = c.server_sf;
    link.latency_ms = c.latency_ms;
    link.bandwidth_mbps = c.bandwidth_mbps;
    link.pack_ms = plan.pack_ms;
    link.uplink_bytes = plan.uplink_bytes;
    link.downlink_bytes = static_cast<double>(kResultWireBytes);
    for (const ExitId e : active) {
      if (!model_.offloads(s, e)) {
        timing[e] = model_.time_local(e, c.device_sf);
      } else if (!c.server_available) {
        timing[e] = model_.time_fallback(s, e, link, 0.0, false);
      } else {
        timing[e] = model_.time_offload(s, e, link);
      }
    }
    for (const std::uint32_t ti : space.thr_indices) {
      const auto& counts = stop_counts_.at(ti);
      double lat = 0.0, dev = 0.0, net = 0.0, srv = 0.0;
      for (const ExitId e : active) {
        if (counts[e] == 0) continue;
        const double w = static_cast<double>(counts[e]);
        lat += w * timing[e].latency_ms;
        dev += w * timing[e].device_ms;
        net += w * timing[e].network_ms;
        srv += w * timing[e].server_ms;
      }
      lat /= total;
      dev /= total;
      net /= total;
      srv /= total;
      const double bottleneck = std::max({dev, net, srv});
      table.split_index.push_back(si);
      table.thr_index.push_back(ti);
      table.split_layer.push_back(s);
      table.thr.push_back(b.thresholds()[ti]);
      table.metric[static_cast<std::size_t>(Metric::kLatency)].push_back(lat);
      table.metric[static_cast<std::size_t>(Metric::kThroughput)].push_back(
          bottleneck > 0.0 ? 1000.0 / bottleneck : std::numeric_limits<double>::max());
      table.metric[static_cast<std::size_t>(Metric::kServerCost)].push_back(srv);
      table.metric[static_cast<std::size_t>(Metric::kDeviceCost)].push_back(dev);
      table.metric[static_cast<std::size_t>(Metric::kAccuracy)].push_back(
          accuracy(ti, s, c.server_available));
    }
  }
  return table;
}

MetricVector Evaluator::estimate_one(std::uint32_t split_index, std::uint32_t thr_index,
                                     const Conditions& c, const RatioTracker& ratios) const {
  const MetricTable t = estimate({{split_index}, {thr_index}}, c, ratios);
  return t.row(0);
}

FilterResult filter_feasible(const MetricTable& table,
                             std::span<const HardConstraint> constraints) {
  FilterResult out;
  out.feasible.resize(table.size());
  for (std::uint32_t i = 0; i < table.size(); ++i) out.feasible[i] = i;
  for (std::size_t k = 0; k < constraints.size(); ++k) {
    const HardConstraint& c = constraints[k];
    const auto& column = table.metric[static_cast<std::size_t>(c.metric)];
    std::vector<std::uint32_t> survivors;
    survivors.reserve(out.feasible.size());
    for (const std::uint32_t row : out.feasible) {
      if (compare(column[row], c.op, c.thr)) survivors.push_back(row);
    }
    if (survivors.empty()) {
      out.relaxed.assign(constraints.begin() + static_cast<std::ptrdiff_t>(k),
                         constraints.end());
      break;
    }
    out.feasible = std::move(survivors);
    ++out.satisfied;
  }
  if (table.size() == 0) out.feasible.clear();
  return out;
}

std::uint32_t lexicographic_select(const MetricTable& table,
                                   std::span<const std::uint32_t> feasible,
                                   std::span<const SoftTarget> soft) {
  if (feasible.empty()) {
    throw Error(ErrorCategory::kInfeasible, "no feasible configuration");
  }
  std::vector<std::uint32_t> set(feasible.begin(), feasible.end());
  std::vector<double> score(set.size());
  for (const SoftTarget& target : soft) {
    const auto& column = table.metric[static_cast<std::size_t>(target.metric)];
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < set.size(); ++i) {
      score[i] = objective(target, column[set[i]]);
      best = std::min(best, score[i]);
    }
    std::size_t kept = 0;
    for (std::size_t i = 0; i < set.size(); ++i) {
      if (score[i] <= best || nearly_equal(score[i], best)) set[kept++] = set[i];
    }
    set.resize(kept);
    score.resize(kept);
  }
  const auto& server = table.metric[static_cast<std::size_t>(Metric::kServerCost)];
  const auto better = [&](std::uint32_t a, std::uint32_t b) {
    if (!nearly_equal(server[a], server[b])) return server[a] < server[b];
    if (table.split_layer[a] != table.split_layer[b]) {
      return table.split_layer[a] > table.split_layer[b];
    }
    return table.thr[a] > table.thr[b];
  };
  std::uint32_t pick = set.front();
  for (const std::uint32_t row : set) {
    if (better(row, pick)) pick = row;
  }
  return pick;
}

SlaSpec resolve_sla(const SlaSpec& sla, const Bundle& bundle, const Conditions& c) {
  SlaSpec out = sla;
  std::optional<MetricVector> device_only;
  for (HardConstraint& h : out.hard) {
    if (h.relative_to == "final_exit") {
      const ProfileSummary& s = bundle.summary();
      h.thr += static_cast<double>(s.correct_at_exit.back()) / static_cast<double>(s.total);
    } else if (h.relative_to == "device_only") {
      if (!device_only) {
        const Evaluator plain(bundle, {ExitMode::kFinalOnly, 0, false},
                              std::vector<SplitTransfer>(bundle.splits().size()));
        device_only = plain.estimate_one(
            static_cast<std::uint32_t>(bundle.splits().size() - 1), 0, c, RatioTracker());
      }
      h.thr *= device_only->get(h.metric);
    }
    h.relative_to.clear();
  }
  return out;
}

Decision schedule(const Evaluator& evaluator, const SearchSpace& space, const Conditions& c,
                  const RatioTracker& ratios, const SlaSpec& sla) {
  const auto start = std::chrono::steady_clock::now();
  const MetricTable table = evaluator.estimate(space, c, ratios);
  FilterResult filtered = filter_feasible(table, sla.hard);
  std::vector<SoftTarget> soft;
  soft.reserve(filtered.relaxed.size() + sla.soft.size());
  for (const HardConstraint& h : filtered.relaxed) soft.push_back(as_soft(h));
  soft.insert(soft.end(), sla.soft.begin(), sla.soft.end());
  const std::uint32_t row = lexicographic_select(table, filtered.feasible, soft);
  Decision d;
  d.split_index = table.split_index[row];
  d.thr_index = table.thr_index[row];
  d.metrics = table.row(row);
  d.satisfied = filtered.satisfied;
  d.relaxed = std::move(filtered.relaxed);
  d.elapsed_us = std::chrono::duration<double, std::micro>(
                     std::chrono::steady_clock::now() - start)
                     .count();
  return d;
}

}  // namespace spinn
