#include <gtest/gtest.h>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <thread>

#include "spinn/sim_harness.hpp"
#include "spinn/tcp_transport.hpp"
#include "test_util.hpp"

namespace spinn {
namespace {

template <typename Pred>
bool wait_for(Pred pred) {
  for (int i = 0; i < 500; ++i) {
    if (pred()) return true;
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
  }
  return pred();
}

Scenario scenario() {
  Scenario s;
  s.bundle = testing::synth_bundle(300);
  s.bandwidth_mbps = 100.0;
  s.latency_ms = 1.0;
  s.samples = 150;
  s.sla.soft.push_back({Metric::kLatency, SoftMode::kMin, 0.0, CompareOp::kLe});
  return s;
}

TEST(Tcp, LoopbackMatchesSimulation) {
  const Scenario s = scenario();
  const RunReport sim = run_scenario(s);
  ServerCore core(*s.bundle, policy_for(SystemKind::kSpinn, *s.bundle, s.sla));
  TcpServer server(core);
  server.start();
  TcpClientTransport client("127.0.0.1", server.port());
  const RunReport tcp = run_scenario(s, SystemKind::kSpinn, {&core, &client});
  ASSERT_EQ(sim.rows.size(), tcp.rows.size());
  std::size_t remote = 0;
  for (std::size_t i = 0; i < sim.rows.size(); ++i) {
    EXPECT_EQ(sim.rows[i].record.exit_id, tcp.rows[i].record.exit_id) << i;
    EXPECT_EQ(sim.rows[i].record.origin, tcp.rows[i].record.origin) << i;
    remote += tcp.rows[i].record.origin == Origin::kRemote;
  }
  EXPECT_GT(remote, 0u);
  EXPECT_EQ(server.malformed_frames(), 0u);
}

OffloadRequest request_for(const Bundle& b, ActivationSource& src, std::uint32_t split,
                           std::uint64_t id) {
  OffloadRequest r;
  r.request_id = id;
  r.split_id = static_cast<std::uint16_t>(split);
  r.thr_conf = 0.5f;
  r.payloads = src.payloads(b.splits()[split].layer_id, 0, true);
  return r;
}

TEST(Tcp, CancelBeforeStartAccountsNothing) {
  const auto b = testing::synth_bundle(50);
  ActivationSource src(b->graph(), 1, 1);
  ServerCore core(*b, {ExitMode::kProgressive, 0, true});
  TcpServer server(core);
  server.start();
  TcpClientTransport client("127.0.0.1", server.port(), 0.3);
  server.pause();
  const std::uint64_t id = make_request_id(1, 7);
  client.send_offload(request_for(*b, src, 5, id));
  ASSERT_TRUE(wait_for([&] { return server.queued() == 1; }));
  client.send_cancel(id);
  ASSERT_TRUE(wait_for([&] { return core.cancels_seen() == 1; }));
  server.resume();
  EXPECT_FALSE(client.await_result(id));
  EXPECT_EQ(core.accounted_ms(id), 0.0);
  EXPECT_EQ(core.handled(), 0u);
  EXPECT_EQ(core.total_accounted_ms(), 0.0);
  // The connection is still usable.
  EXPECT_TRUE(client.probe(false));
}

TEST(Tcp, MalformedFrameResetsTheConnection) {
  const auto b = testing::synth_bundle(50);
  ServerCore core(*b, {ExitMode::kProgressive, 0, true});
  TcpServer server(core);
  server.start();
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  ASSERT_GE(fd, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(server.port());
  ::inet_pton(AF_INET, "127.0.0.1", &addr.sin_addr);
  ASSERT_EQ(::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)), 0);
  const std::uint8_t junk[kHeaderBytes] = {'X', 'Y'};
  ASSERT_EQ(::send(fd, junk, sizeof(junk), 0), static_cast<ssize_t>(sizeof(junk)));
  std::uint8_t byte = 0;
  EXPECT_LE(::recv(fd, &byte, 1, 0), 0);  // closed by the server
  ::close(fd);
  EXPECT_TRUE(wait_for([&] { return server.malformed_frames() == 1; }));
  // Other clients are unaffected.
  TcpClientTransport client("127.0.0.1", server.port(), 1.0);
  EXPECT_TRUE(client.probe(false));
}

TEST(Tcp, ConnectFailureIsATransportError) {
  EXPECT_EQ(testing::category_of([] { TcpClientTransport("127.0.0.1", 1); }),
            ErrorCategory::kTransport);
}

}  // namespace
}  // namespace spinn
