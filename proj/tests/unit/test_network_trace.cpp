#include <gtest/gtest.h>

#include "spinn/network_trace.hpp"
#include "spinn/synth.hpp"
#include "test_util.hpp"

namespace spinn {
namespace {

using testing::category_of;

constexpr const char* kHeader = "t_s,bandwidth_mbps,latency_ms,network_type\n";

TEST(NetworkTrace, ParseAndLookup) {
  const NetworkTrace t =
      parse_network_trace(std::string(kHeader) + "0,10,50,4g\n1.5,10,40,4g\n3,2.5,40,3g\n");
  ASSERT_EQ(t.rows().size(), 3u);
  EXPECT_EQ(t.index_at(-1.0), 0u);
  EXPECT_EQ(t.index_at(1.49), 0u);
  EXPECT_EQ(t.index_at(1.5), 1u);
  EXPECT_EQ(t.index_at(99.0), 2u);
  EXPECT_EQ(t.at(3.0).type, NetworkType::k3g);
  EXPECT_EQ(t.bandwidth_changes(), 1u);
  EXPECT_EQ(network_trace_to_text(parse_network_trace(network_trace_to_text(t))),
            network_trace_to_text(t));
}

TEST(NetworkTrace, Rejects) {
  const std::string h = kHeader;
  EXPECT_EQ(category_of([&] { parse_network_trace("t,b,l,n\n0,1,1,4g\n"); }),
            ErrorCategory::kParse);
  EXPECT_EQ(category_of([&] { parse_network_trace(h + "0,1,1,4g\n0,1,1,4g\n"); }),
            ErrorCategory::kValidation);
  EXPECT_EQ(category_of([&] { parse_network_trace(h + "0,0,1,4g\n"); }),
            ErrorCategory::kValidation);
  EXPECT_EQ(category_of([&] { parse_network_trace(h + "0,1,1,6g\n"); }), ErrorCategory::kParse);
  EXPECT_EQ(category_of([&] { parse_network_trace(h + "0,x,1,4g\n"); }), ErrorCategory::kParse);
}

TEST(NetworkTrace, SyntheticTraceIsVolatileAndSeeded) {
  SynthTraceOptions o;
  const NetworkTrace a = synthetic_network_trace(o);
  EXPECT_EQ(a.rows().size(), o.rows);
  EXPECT_GT(a.bandwidth_changes(), o.rows * 9 / 10);  // jitter moves almost every row
  for (const TraceRow& r : a.rows()) {
    EXPECT_GT(r.bandwidth_mbps, 0.0);
  }
  EXPECT_EQ(network_trace_to_text(a), network_trace_to_text(synthetic_network_trace(o)));
  o.seed = 12;
  EXPECT_NE(network_trace_to_text(a), network_trace_to_text(synthetic_network_trace(o)));
}

}  // namespace
}  // namespace spinn
