#include "spinn/sim_harness.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "io_util.hpp"
#include "json.hpp"
#include "spinn/error.hpp"

namespace spinn {
namespace {

using nlohmann::json;

constexpr std::pair<SystemKind, std::string_view> kSystemNames[] = {
    {SystemKind::kSpinn, "spinn"},
    {SystemKind::kDeviceOnly, "device_only"},
    {SystemKind::kCloudOnly, "cloud_only"},
    {SystemKind::kNonprogressiveSplit, "nonprogressive_split"},
    {SystemKind::kFixedExit, "fixed_exit"},
};

constexpr std::pair<SweepVariable, std::string_view> kSweepNames[] = {
    {SweepVariable::kBandwidth, "bandwidth_mbps"},
    {SweepVariable::kSlowdown, "slowdown"},
    {SweepVariable::kPFail, "p_fail"},
    {SweepVariable::kLatency, "latency_ms"},
};

[[noreturn]] void scenario_error(const std::string& message) {
  throw Error(ErrorCategory::kParse, "scenario: " + message);
}

std::uint32_t split_of_kind(const Bundle& bundle, SplitKind kind) {
  const auto& splits = bundle.splits();
  for (std::uint32_t i = 0; i < splits.size(); ++i) {
    if (splits[i].kind == kind) return i;
  }
  throw Error(ErrorCategory::kValidation, "bundle has no split of the requested kind");
}

struct SystemSetup {
  ExecPolicy policy;
  SearchSpace space;
  SlaSpec sla;
  bool allow_compression = true;
};

SlaSpec latency_first(const Bundle& bundle, bool keep_final_accuracy) {
  (void)bundle;
  SlaSpec sla;
  if (keep_final_accuracy) {
    sla.hard.push_back({Metric::kAccuracy, CompareOp::kGe, 0.0, "final_exit"});
  }
  sla.soft.push_back({Metric::kLatency, SoftMode::kMin, 0.0, CompareOp::kLe});
  return sla;
}

SystemSetup setup_for(SystemKind kind, const Scenario& s, const Conditions& warm) {
  const Bundle& b = *s.bundle;
  SystemSetup out;
  out.policy = policy_for(kind, b, resolve_sla(s.sla, b, warm));
  SearchSpace full = full_space(b);
  switch (kind) {
    case SystemKind::kSpinn:
      out.space = full;
      out.sla = s.sla;
      break;
    case SystemKind::kDeviceOnly:
      out.space = {{split_of_kind(b, SplitKind::kNone)}, full.thr_indices};
      out.sla = s.sla;
      out.allow_compression = false;
      break;
    case SystemKind::kCloudOnly:
      out.space = {{split_of_kind(b, SplitKind::kInput)}, full.thr_indices};
      out.sla = s.sla;
      out.allow_compression = false;
      break;
    case SystemKind::kNonprogressiveSplit:
      out.space = {full.split_indices, {0}};
      out.sla = latency_first(b, true);
      out.allow_compression = false;
      break;
    case SystemKind::kFixedExit:
      out.space = {{split_of_kind(b, SplitKind::kInput)}, {0}};
      out.sla = latency_first(b, false);
      out.allow_compression = false;
      break;
  }
  return out;
}

double json_number(const json& doc, const char* key, double fallback) {
  if (!doc.contains(key)) return fallback;
  if (!doc[key].is_number()) scenario_error(fmt::format("'{}' must be a number", key));
  return doc[key].get<double>();
}

Scenario scenario_from_json(const json& doc, const std::filesystem::path& base_dir) {
  Scenario s;
  const auto path_of = [&](const char* key) {
    if (!doc[key].is_string()) scenario_error(fmt::format("'{}' must be a path", key));
    std::filesystem::path p = doc[key].get<std::string>();
    return p.is_absolute() ? p : base_dir / p;
  };
  s.name = doc.value("name", s.name);
  if (!doc.contains("bundle")) scenario_error("missing 'bundle'");
  s.bundle = std::make_shared<const Bundle>(load_bundle(path_of("bundle")));
  if (doc.contains("presets")) s.presets = load_presets(path_of("presets"));
  if (doc.contains("trace")) s.trace = load_network_trace(path_of("trace"));
  if (doc.contains("network")) {
    const json& net = doc["network"];
    if (net.contains("type")) {
      const auto t = parse_network_type(net["type"].get<std::string>());
      if (!t) scenario_error("unknown network type");
      s.network_type = *t;
      s.bandwidth_mbps = s.presets.at(*t).bandwidth_mbps;
      s.latency_ms = s.presets.at(*t).latency_ms;
    }
    s.bandwidth_mbps = json_number(net, "bandwidth_mbps", s.bandwidth_mbps);
    s.latency_ms = json_number(net, "latency_ms", s.latency_ms);
  }
  s.device_sf = json_number(doc, "device_sf", s.device_sf);
  if (doc.contains("slowdown")) {
    const json& sd = doc["slowdown"];
    s.slowdown.clear();
    if (sd.is_number()) {
      s.slowdown.push_back({0.0, sd.get<double>()});
    } else if (sd.is_array()) {
      for (const json& step : sd) {
        s.slowdown.push_back({json_number(step, "t_s", 0.0), json_number(step, "factor", 1.0)});
      }
    } else {
      scenario_error("'slowdown' must be a number or a list of {t_s, factor}");
    }
  }
  if (doc.contains("outages")) {
    for (const json& o : doc["outages"]) {
      s.outages.push_back({json_number(o, "start_s", 0.0), json_number(o, "end_s", 0.0)});
    }
  }
  s.p_fail = json_number(doc, "p_fail", s.p_fail);
  if (doc.contains("failure_policy")) {
    const std::string p = doc["failure_policy"].get<std::string>();
    if (p == "fallback_local") {
      s.failure = FailurePolicy::kFallbackLocal;
    } else if (p == "retransmit_backoff") {
      s.failure = FailurePolicy::kRetransmitBackoff;
    } else {
      scenario_error("unknown failure_policy '" + p + "'");
    }
  }
  if (doc.contains("failure_detection")) {
    const std::string d = doc["failure_detection"].get<std::string>();
    if (d == "connection_loss") {
      s.detection = FailureDetection::kConnectionLoss;
    } else if (d == "timeout") {
      s.detection = FailureDetection::kTimeout;
    } else {
      scenario_error("unknown failure_detection '" + d + "'");
    }
  }
  s.r_max = static_cast<int>(json_number(doc, "r_max", s.r_max));
  s.backoff_initial_ms = json_number(doc, "backoff_initial_ms", s.backoff_initial_ms);
  if (doc.contains("sla")) {
    s.sla = doc["sla"].is_string() ? load_sla(path_of("sla")) : parse_sla(doc["sla"].dump());
  } else {
    scenario_error("missing 'sla'");
  }
  s.samples = static_cast<std::size_t>(json_number(doc, "samples", static_cast<double>(s.samples)));
  if (doc.contains("order")) {
    const std::string order = doc["order"].get<std::string>();
    if (order != "trace" && order != "shuffled") scenario_error("order must be trace|shuffled");
    s.shuffle = order == "shuffled";
  }
  s.seed = doc.value("seed", s.seed);
  s.variants = doc.value("variants", s.variants);
  s.pack_bytes_per_ms = json_number(doc, "pack_bytes_per_ms", s.pack_bytes_per_ms);
  s.snapshot_interval_s = json_number(doc, "snapshot_interval_s", s.snapshot_interval_s);
  s.arrival_interval_ms = json_number(doc, "arrival_interval_ms", s.arrival_interval_ms);
  s.gate_backoff = doc.value("gate_backoff", s.gate_backoff);
  s.validate();
  return s;
}

json parse_json(std::string_view text) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::exception& e) {
    scenario_error(e.what());
  }
}

}  // namespace

std::string_view to_string(SystemKind kind) {
  for (const auto& [k, name] : kSystemNames) {
    if (k == kind) return name;
  }
  return "?";
}

std::optional<SystemKind> parse_system_kind(std::string_view text) {
  for (const auto& [k, name] : kSystemNames) {
    if (name == text) return k;
  }
  return std::nullopt;
}

std::string_view to_string(SweepVariable v) {
  for (const auto& [k, name] : kSweepNames) {
    if (k == v) return name;
  }
  return "?";
}

std::optional<SweepVariable> parse_sweep_variable(std::string_view text) {
  for (const auto& [k, name] : kSweepNames) {
    if (name == text) return k;
  }
  return std::nullopt;
}

void Scenario::validate() const {
  const auto fail = [](const std::string& m) {
    throw Error(ErrorCategory::kValidation, "scenario: " + m);
  };
  if (!bundle) fail("no bundle");
  if (bundle->exits().samples.empty()) fail("exit trace has no samples");
  if (!trace && !(bandwidth_mbps >= 0.0)) fail("bandwidth must be >= 0");
  if (!(latency_ms >= 0.0)) fail("latency must be >= 0");
  if (!(device_sf > 0.0)) fail("device_sf must be positive");
  if (slowdown.empty()) fail("empty slowdown schedule");
  for (std::size_t i = 0; i < slowdown.size(); ++i) {
    if (!(slowdown[i].factor > 0.0)) fail("slowdown factors must be positive");
    if (i > 0 && !(slowdown[i].t_s > slowdown[i - 1].t_s)) {
      fail("slowdown schedule times must increase");
    }
  }
  for (const Outage& o : outages) {
    if (!(o.end_s > o.start_s)) fail("outage must end after it starts");
  }
  if (p_fail < 0.0 || p_fail > 1.0) fail("p_fail must lie in [0, 1]");
  if (r_max < 0) fail("r_max must be >= 0");
  if (!(pack_bytes_per_ms > 0.0)) fail("pack_bytes_per_ms must be positive");
  if (!(snapshot_interval_s > 0.0)) fail("snapshot_interval_s must be positive");
  if (bundle->splits().size() > 0xFFFF) fail("too many splits for the wire format");
}

double Scenario::slowdown_at(double t_s) const {
  double f = slowdown.front().factor;
  for (const SlowdownStep& step : slowdown) {
    if (step.t_s <= t_s) f = step.factor;
  }
  return f;
}

bool Scenario::server_up_at(double t_s) const {
  for (const Outage& o : outages) {
    if (t_s >= o.start_s && t_s < o.end_s) return false;
  }
  return true;
}

LinkConditions Scenario::link_at(double t_s) const {
  if (trace) {
    const TraceRow& r = trace->at(t_s);
    return {r.latency_ms, r.bandwidth_mbps};
  }
  return {latency_ms, bandwidth_mbps};
}

NetworkType Scenario::network_type_at(double t_s) const {
  return trace ? trace->at(t_s).type : network_type;
}

Scenario parse_scenario(std::string_view text, const std::filesystem::path& base_dir) {
  return scenario_from_json(parse_json(text), base_dir);
}

Scenario load_scenario(const std::filesystem::path& path) {
  return parse_scenario(detail::read_text_file(path), path.parent_path());
}

double Aggregates::get(Metric m) const {
  switch (m) {
    case Metric::kLatency: return mean_latency_ms;
    case Metric::kThroughput: return throughput_ips;
    case Metric::kServerCost: return mean_server_ms;
    case Metric::kDeviceCost: return mean_device_ms;
    case Metric::kAccuracy: return accuracy;
  }
  return 0.0;
}

Aggregates aggregate(const std::vector<SampleRow>& rows, std::size_t invocations) {
  Aggregates a;
  a.samples = rows.size();
  a.invocations = invocations;
  if (rows.empty()) return a;
  double lat = 0.0, dev = 0.0, net = 0.0, srv = 0.0;
  std::size_t correct = 0;
  for (const SampleRow& row : rows) {
    const InferenceRecord& r = row.record;
    lat += r.timing.latency_ms;
    dev += r.timing.device_ms;
    net += r.timing.network_ms;
    srv += r.timing.server_ms;
    correct += r.correct ? 1 : 0;
    a.bytes_up += r.bytes_up;
    a.bytes_down += r.bytes_down;
    a.offloaded += r.attempts > 0 ? 1 : 0;
    a.remote += r.origin == Origin::kRemote ? 1 : 0;
    a.cancelled += r.phase == Phase::kCancelled ? 1 : 0;
    a.failed += r.phase == Phase::kFailed ? 1 : 0;
  }
  const double n = static_cast<double>(rows.size());
  a.mean_latency_ms = lat / n;
  a.mean_device_ms = dev / n;
  a.mean_network_ms = net / n;
  a.mean_server_ms = srv / n;
  a.accuracy = static_cast<double>(correct) / n;
  const double busiest = std::max({dev, net, srv});
  a.throughput_ips = busiest > 0.0 ? 1000.0 * n / busiest : 0.0;
  if (!std::isfinite(busiest)) a.throughput_ips = 0.0;
  return a;
}

ExecPolicy policy_for(SystemKind kind, const Bundle& bundle, const SlaSpec& resolved_sla) {
  switch (kind) {
    case SystemKind::kSpinn:
    case SystemKind::kDeviceOnly:
      return {ExitMode::kProgressive, 0, true};
    case SystemKind::kCloudOnly:
      return {ExitMode::kProgressive, 0, false};
    case SystemKind::kNonprogressiveSplit:
      return {ExitMode::kFinalOnly, 0, false};
    case SystemKind::kFixedExit:
      break;
  }
  // Earliest exit whose accuracy meets every accuracy constraint.
  const ProfileSummary& summary = bundle.summary();
  const auto last = static_cast<ExitId>(bundle.num_exits() - 1);
  for (ExitId e = 0; e < last; ++e) {
    const double acc = static_cast<double>(summary.correct_at_exit[e]) /
                       static_cast<double>(summary.total);
    bool ok = true;
    for (const HardConstraint& h : resolved_sla.hard) {
      if (h.metric == Metric::kAccuracy && !compare(acc, h.op, h.thr)) ok = false;
    }
    if (ok) return {ExitMode::kFixed, e, false};
  }
  return {ExitMode::kFixed, last, false};
}

RunReport run_scenario(const Scenario& s, SystemKind kind, const RunHooks& hooks) {
  s.validate();
  const Bundle& bundle = *s.bundle;
  RunReport report;
  report.scenario = s.name;
  report.system = kind;

  RuntimeProfilerState state;
  state.net = NetworkEstimate(s.network_type_at(0.0));
  state.device_sf = s.device_sf;
  // Warm start: one link measurement and one duplicate inference on the server.
  const LinkConditions link0 = s.link_at(0.0);
  state.net.observe(link0.latency_ms, link0.bandwidth_mbps, 0.0);
  state.server_sf = s.slowdown_at(0.0);
  state.server_available = s.server_up_at(0.0);

  const auto estimate_at = [&](double now_s, bool allow_compression) {
    const LinkConditions lc = select_or_preset(state.net, s.presets, now_s);
    Conditions c;
    c.device_sf = state.device_sf;
    c.server_sf = state.server_sf;
    c.latency_ms = lc.latency_ms;
    c.bandwidth_mbps = lc.bandwidth_mbps;
    c.server_available = state.server_available;
    c.pack_bytes_per_ms = s.pack_bytes_per_ms;
    c.allow_compression = allow_compression;
    return c;
  };

  const SystemSetup setup = setup_for(kind, s, estimate_at(0.0, true));
  ActivationSource source(bundle.graph(), s.seed, s.variants);
  const std::vector<SplitTransfer> transfers = measure_split_transfers(bundle, source);
  const Evaluator evaluator(bundle, setup.policy, transfers);
  RatioTracker ratios;
  for (std::uint32_t i = 0; i < transfers.size(); ++i) {
    if (transfers[i].packed_wire_bytes > 0) ratios.seed(i, transfers[i].ratio());
  }

  std::unique_ptr<ServerCore> own_server;
  std::unique_ptr<SimTransport> own_transport;
  ServerCore* server = hooks.server;
  ClientTransport* transport = hooks.transport;
  if (server == nullptr) {
    own_server = std::make_unique<ServerCore>(bundle, setup.policy, s.slowdown_at(0.0));
    server = own_server.get();
  }
  if (transport == nullptr) {
    own_transport = std::make_unique<SimTransport>(*server);
    transport = own_transport.get();
  }

  EngineOptions options;
  options.policy = setup.policy;
  options.failure = s.failure;
  options.detection = s.detection;
  options.p_fail = s.p_fail;
  options.r_max = s.r_max;
  options.backoff_initial_ms = s.backoff_initial_ms;
  options.seed = s.seed;
  ExecEngine engine(bundle, transfers, source, *transport, options);

  SchedulerGate gate(0.05, s.gate_backoff);
  ProbeScheduler probes;
  Configuration cfg;
  std::size_t sample_pos = 0;

  const auto invoke = [&](double t_s) {
    const Conditions c = estimate_at(t_s, setup.allow_compression);
    const SlaSpec resolved = resolve_sla(setup.sla, bundle, c);
    const Decision d = schedule(evaluator, setup.space, c, ratios, resolved);
    cfg = {d.split_index, d.thr_index};
    report.invocations.push_back(
        {t_s, sample_pos, cfg, d.satisfied, d.relaxed.size(), d.elapsed_us});
  };
  const auto snapshot = [&](double t_s, const LinkConditions& measured) {
    MetricSnapshot snap;
    snap.bandwidth_mbps = measured.bandwidth_mbps;
    snap.latency_ms = measured.latency_ms;
    snap.device_sf = state.device_sf;
    snap.server_load = state.server_sf;
    snap.server_available = state.server_available;
    if (gate.should_invoke(snap)) invoke(t_s);
  };
  // An empty run schedules nothing, so its reports stay header-only.
  if (s.samples > 0) snapshot(0.0, link0);

  // Measurement events: one per trace row, or a fixed cadence.
  std::size_t next_row = 1;
  double next_tick_s = s.snapshot_interval_s;
  const auto next_event_s = [&]() {
    if (s.trace) {
      return next_row < s.trace->rows().size() ? s.trace->rows()[next_row].t_s
                                               : std::numeric_limits<double>::infinity();
    }
    return next_tick_s;
  };
  const auto advance_event = [&]() {
    if (s.trace) {
      ++next_row;
    } else {
      next_tick_s += s.snapshot_interval_s;
    }
  };

  const std::size_t pool = bundle.exits().samples.size();
  std::vector<std::size_t> order(pool);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (s.shuffle) {
    std::mt19937_64 rng(s.seed);
    std::shuffle(order.begin(), order.end(), rng);
  }

  double t_ms = 0.0;
  for (sample_pos = 0; sample_pos < s.samples; ++sample_pos) {
    const double now_s = t_ms / 1000.0;
    // A starved link can leave the clock at infinity; stop replaying events.
    for (double te = next_event_s(); std::isfinite(now_s) && te <= now_s; te = next_event_s()) {
      if (state.net.network_type() != s.network_type_at(te)) {
        state.net.set_network_type(s.network_type_at(te));
      }
      const LinkConditions measured = s.link_at(te);
      state.net.observe(measured.latency_ms, measured.bandwidth_mbps, te);
      snapshot(te, measured);
      advance_event();
    }
    if (!state.server_available && now_s >= probes.next_probe_s()) {
      const bool answered = transport->probe(!s.server_up_at(now_s));
      if (probes.on_result(state, answered, now_s)) snapshot(now_s, s.link_at(now_s));
    }

    const std::size_t idx = order[sample_pos % pool];
    const LinkConditions link = s.link_at(now_s);
    Conditions actual;
    actual.device_sf = s.device_sf;
    actual.server_sf = s.slowdown_at(now_s);
    actual.latency_ms = link.latency_ms;
    actual.bandwidth_mbps = link.bandwidth_mbps;
    actual.server_available = s.server_up_at(now_s);
    actual.pack_bytes_per_ms = s.pack_bytes_per_ms;
    actual.allow_compression = setup.allow_compression;
    server->set_slowdown(actual.server_sf);

    const Conditions est = estimate_at(now_s, setup.allow_compression);
    InferenceRecord rec = engine.run_inference(idx, cfg, est, ratios, actual);
    report.rows.push_back({t_ms, rec});

    // Run-time profiling from what this sample revealed.
    if (rec.timing.device_ms > 0.0) {
      update_device_sf(state, rec.timing.device_ms, rec.timing.device_ms / actual.device_sf);
    }
    const LayerId split_layer = bundle.splits()[cfg.split_index].layer_id;
    if (rec.attempts > 0 && actual.server_available) {
      state.net.observe(link.latency_ms, link.bandwidth_mbps, now_s);
    }
    if (rec.server_reported_ms) {
      const SampleTrace& trace = bundle.exits().samples[idx];
      const ExitId stop =
          engine.model().stop_exit(trace, bundle.thresholds()[cfg.thr_index]);
      const double offline = engine.model().server_ms(split_layer, stop, 1.0);
      if (offline > 0.0) update_server_sf(state, *rec.server_reported_ms, offline);
    }
    if (rec.compressed && rec.attempts > 0) {
      const double sent = static_cast<double>(rec.bytes_up) / rec.attempts;
      ratios.observe(cfg.split_index,
                     static_cast<double>(transfers[cfg.split_index].raw_wire_bytes) / sent);
    }
    if (rec.attempts > 0 && !actual.server_available && state.server_available) {
      state.server_available = false;
      probes.on_result(state, false, now_s);
      snapshot(now_s, link);
    }

    const double busy = rec.timing.latency_ms;
    t_ms += s.arrival_interval_ms > 0.0 ? std::max(s.arrival_interval_ms, busy) : busy;
  }
  report.totals = aggregate(report.rows, report.invocations.size());
  report.counters = transport->counters();
  return report;
}

Scenario with_value(const Scenario& base, SweepVariable variable, double value) {
  Scenario s = base;
  switch (variable) {
    case SweepVariable::kBandwidth:
      s.trace.reset();
      s.bandwidth_mbps = value;
      break;
    case SweepVariable::kSlowdown:
      s.slowdown = {{0.0, value}};
      break;
    case SweepVariable::kPFail:
      s.p_fail = value;
      break;
    case SweepVariable::kLatency:
      s.trace.reset();
      s.latency_ms = value;
      break;
  }
  s.name = fmt::format("{}:{}={}", base.name, to_string(variable), value);
  return s;
}

SweepSpec parse_sweep(std::string_view text, const std::filesystem::path& base_dir) {
  const json doc = parse_json(text);
  SweepSpec spec;
  spec.base = scenario_from_json(doc, base_dir);
  if (!doc.contains("sweep") || !doc["sweep"].is_object()) scenario_error("missing 'sweep'");
  const json& sw = doc["sweep"];
  const auto var = parse_sweep_variable(sw.value("variable", ""));
  if (!var) scenario_error("unknown sweep variable");
  spec.variable = *var;
  if (!sw.contains("values") || !sw["values"].is_array() || sw["values"].empty()) {
    scenario_error("sweep needs a non-empty 'values' list");
  }
  for (const json& v : sw["values"]) {
    if (!v.is_number()) scenario_error("sweep values must be numbers");
    spec.values.push_back(v.get<double>());
  }
  if (sw.contains("systems")) {
    for (const json& name : sw["systems"]) {
      const auto k = parse_system_kind(name.get<std::string>());
      if (!k) scenario_error("unknown system '" + name.get<std::string>() + "'");
      spec.systems.push_back(*k);
    }
  } else {
    spec.systems.assign(std::begin(kAllSystems), std::end(kAllSystems));
  }
  return spec;
}

SweepSpec load_sweep(const std::filesystem::path& path) {
  return parse_sweep(detail::read_text_file(path), path.parent_path());
}

std::vector<SweepCell> run_sweep(const SweepSpec& spec) {
  std::vector<SweepCell> cells;
  for (const double v : spec.values) {
    const Scenario s = with_value(spec.base, spec.variable, v);
    for (const SystemKind k : spec.systems) {
      const RunReport r = run_scenario(s, k);
      spdlog::debug("{} {}: throughput {:.3f}", s.name, to_string(k), r.totals.throughput_ips);
      cells.push_back({v, k, r.totals});
    }
  }
  return cells;
}

}  // namespace spinn
