// Command-line front end: simulations, sweeps, a TCP offload server and
// client, and the synthetic data generator.

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "spinn/bundle.hpp"
#include "spinn/error.hpp"
#include "spinn/network_trace.hpp"
#include "spinn/report.hpp"
#include "spinn/sim_harness.hpp"
#include "spinn/synth.hpp"
#include "spinn/tcp_transport.hpp"

namespace fs = std::filesystem;
using namespace spinn;

namespace {

ReportFormat format_of(const std::string& name) {
  return name == "json" ? ReportFormat::kJson : ReportFormat::kCsv;
}

std::vector<SystemKind> systems_of(const std::vector<std::string>& names) {
  std::vector<SystemKind> out;
  for (const std::string& n : names) {
    if (n == "all") {
      out.assign(std::begin(kAllSystems), std::end(kAllSystems));
      return out;
    }
    const auto k = parse_system_kind(n);
    if (!k) throw Error(ErrorCategory::kUsage, "unknown system '" + n + "'");
    out.push_back(*k);
  }
  return out;
}

void print_totals(const RunReport& r) {
  const Aggregates& a = r.totals;
  fmt::print("{:<22} samples={} throughput={:.2f}/s latency={:.3f}ms accuracy={:.4f} "
             "server={:.3f}ms device={:.3f}ms invocations={}\n",
             to_string(r.system), a.samples, a.throughput_ips, a.mean_latency_ms, a.accuracy,
             a.mean_server_ms, a.mean_device_ms, a.invocations);
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCategory::kIo, fmt::format("cannot create {}: {}", dir.string(), ec.message()));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Progressive split inference: simulator, server and tools"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");

  std::string scenario_path;
  std::string out_dir = "out";
  std::string format = "csv";
  std::vector<std::string> systems{"spinn"};
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> samples;

  auto* simulate = app.add_subcommand("simulate", "Run one scenario");
  simulate->add_option("-s,--scenario", scenario_path, "Scenario file")->required();
  simulate->add_option("-o,--out", out_dir, "Output directory");
  simulate->add_option("-f,--format", format, "csv or json")
      ->check(CLI::IsMember({"csv", "json"}));
  simulate->add_option("--system", systems,
                       "spinn, device_only, cloud_only, nonprogressive_split, fixed_exit or all");
  simulate->add_option("--seed", seed, "Override the scenario seed");
  simulate->add_option("--samples", samples, "Override the sample count");

  auto* sweep = app.add_subcommand("sweep", "Run a parameter sweep");
  sweep->add_option("-s,--scenario", scenario_path, "Sweep file")->required();
  sweep->add_option("-o,--out", out_dir, "Output directory");
  sweep->add_option("-f,--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  sweep->add_option("--seed", seed, "Override the scenario seed");
  sweep->add_option("--samples", samples, "Override the sample count");

  std::string bundle_path;
  std::uint16_t port = 0;
  std::string bind = "127.0.0.1";
  std::string host = "127.0.0.1";
  double slowdown = 1.0;
  auto* serve = app.add_subcommand("serve", "Offload server over TCP");
  serve->add_option("-b,--bundle", bundle_path, "Bundle manifest")->required();
  serve->add_option("-p,--port", port, "Port (0 picks one)");
  serve->add_option("--bind", bind, "Bind address");
  serve->add_option("--slowdown", slowdown, "Server load factor")
      ->check(CLI::PositiveNumber);

  auto* client = app.add_subcommand("client", "Run a scenario against a TCP server");
  client->add_option("-s,--scenario", scenario_path, "Scenario file")->required();
  client->add_option("--host", host, "Server host");
  client->add_option("-p,--port", port, "Server port")->required();
  client->add_option("-o,--out", out_dir, "Output directory");
  client->add_option("-f,--format", format, "csv or json")
      ->check(CLI::IsMember({"csv", "json"}));
  client->add_option("--seed", seed, "Override the scenario seed");
  client->add_option("--samples", samples, "Override the sample count");

  SynthOptions synth;
  SynthTraceOptions trace_opts;
  auto* gen = app.add_subcommand("gen-profiles", "Write a synthetic bundle and bandwidth trace");
  gen->add_option("-o,--out", out_dir, "Output directory");
  gen->add_option("--seed", synth.seed, "Exit trace seed");
  gen->add_option("--samples", synth.samples, "Samples in the exit trace");
  gen->add_option("--blocks", synth.blocks_per_stage, "Residual blocks per stage");
  gen->add_option("--server-speedup", synth.server_speedup, "Server speed over the device");
  gen->add_option("--trace-seed", trace_opts.seed, "Bandwidth trace seed");
  gen->add_option("--trace-rows", trace_opts.rows, "Bandwidth trace rows");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    if (rc == 0) return 0;
    std::cerr << "error[" << category_name(ErrorCategory::kUsage) << "]\n";
    return exit_code_for(ErrorCategory::kUsage);
  }
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::warn);

  try {
    const auto load = [&] {
      Scenario s = load_scenario(scenario_path);
      if (seed) s.seed = *seed;
      if (samples) s.samples = *samples;
      return s;
    };

    if (*simulate) {
      const Scenario s = load();
      std::vector<RunReport> reports;
      for (const SystemKind k : systems_of(systems)) {
        RunReport r = run_scenario(s, k);
        print_totals(r);
        emit_report(r, fs::path(out_dir) / std::string(to_string(k)), format_of(format));
        reports.push_back(std::move(r));
      }
      ensure_dir(out_dir);
      std::FILE* f = std::fopen((fs::path(out_dir) / "aggregates.csv").c_str(), "wb");
      if (f == nullptr) throw Error(ErrorCategory::kIo, "cannot write aggregates.csv");
      const std::string text = aggregates_csv(reports);
      std::fwrite(text.data(), 1, text.size(), f);
      std::fclose(f);
      return 0;
    }

    if (*sweep) {
      SweepSpec spec = load_sweep(scenario_path);
      if (seed) spec.base.seed = *seed;
      if (samples) spec.base.samples = *samples;
      const auto cells = run_sweep(spec);
      for (const auto& path : emit_sweep(spec.variable, cells, out_dir, format_of(format))) {
        fmt::print("wrote {}\n", path.string());
      }
      return 0;
    }

    if (*serve) {
      // Block the stop signals before any thread starts so that only sigwait
      // sees them.
      sigset_t set;
      sigemptyset(&set);
      sigaddset(&set, SIGINT);
      sigaddset(&set, SIGTERM);
      pthread_sigmask(SIG_BLOCK, &set, nullptr);
      const Bundle bundle = load_bundle(bundle_path);
      ServerCore core(bundle, policy_for(SystemKind::kSpinn, bundle, {}), slowdown);
      TcpServer server(core, port, bind);
      server.start();
      fmt::print("listening on {}:{}\n", bind, server.port());
      std::fflush(stdout);
      int sig = 0;
      sigwait(&set, &sig);
      server.stop();
      fmt::print("served {} requests, {} cancels, {} malformed frames\n", core.handled(),
                 core.cancels_seen(), server.malformed_frames());
      return 0;
    }

    if (*client) {
      const Scenario s = load();
      TcpClientTransport transport(host, port);
      RunHooks hooks;
      hooks.transport = &transport;
      const RunReport r = run_scenario(s, SystemKind::kSpinn, hooks);
      print_totals(r);
      emit_report(r, out_dir, format_of(format));
      return 0;
    }

    if (*gen) {
      const fs::path dir(out_dir);
      ensure_dir(dir / "bundle");
      const Bundle bundle = synthetic_bundle(synth);
      save_bundle(bundle, dir / "bundle");
      const NetworkTrace trace = synthetic_network_trace(trace_opts);
      std::FILE* f = std::fopen((dir / "network_trace.csv").c_str(), "wb");
      if (f == nullptr) throw Error(ErrorCategory::kIo, "cannot write network_trace.csv");
      const std::string text = network_trace_to_text(trace);
      std::fwrite(text.data(), 1, text.size(), f);
      std::fclose(f);
      fmt::print("wrote {} ({} layers, {} exits, {} samples) and {} trace rows\n",
                 (dir / "bundle").string(), bundle.graph().num_layers(), bundle.num_exits(),
                 bundle.exits().samples.size(), trace.rows().size());
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error[" << category_name(e.category()) << "]: " << e.what() << "\n";
    return exit_code_for(e.category());
  } catch (const std::exception& e) {
    std::cerr << "error[internal]: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
