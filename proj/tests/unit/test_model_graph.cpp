#include <gtest/gtest.h>

#include <set>

#include "spinn/error.hpp"
#include "spinn/model_graph.hpp"
#include "test_util.hpp"

namespace spinn {
namespace {

using testing::category_of;

Layer make_layer(LayerId id, LayerKind kind, std::uint64_t flops, std::uint64_t out,
                 std::vector<LayerId> deps) {
  Layer l;
  l.id = id;
  l.name = "L" + std::to_string(id);
  l.kind = kind;
  l.flops = flops;
  l.out_bytes = out;
  l.deps = std::move(deps);
  return l;
}

Backbone equal_chain(int n) {
  Backbone b{"chain", 100, {}};
  for (int i = 1; i <= n; ++i) {
    b.layers.push_back(make_layer(static_cast<LayerId>(i), LayerKind::kConv, 100, 40,
                                  {static_cast<LayerId>(i - 1)}));
  }
  return b;
}

TEST(PlaceExits, EqualFlopChain) {
  const double fractions[] = {0.15, 0.30};
  const LayerGraph g = place_exits(equal_chain(10), fractions);
  ASSERT_EQ(g.num_exits(), 3u);
  EXPECT_EQ(g.exit(0).layer_id, 2u);
  EXPECT_EQ(g.exit(1).layer_id, 3u);
  EXPECT_EQ(g.exit(2).layer_id, 10u);
  EXPECT_DOUBLE_EQ(g.exit(0).flop_fraction, 0.2);
}

TEST(PlaceExits, CollidingFractionsAreDropped) {
  const double fractions[] = {0.05, 0.06, 1.0};
  const LayerGraph g = place_exits(equal_chain(10), fractions);
  ASSERT_EQ(g.num_exits(), 2u);
  EXPECT_EQ(g.exit(0).layer_id, 1u);
  EXPECT_EQ(g.exit(1).layer_id, 10u);
}

TEST(PlaceExits, MatchesCumulativeSumOracle) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = testing::uniform_int(rng, 2, 60);
    Backbone b{"r", 64, {}};
    for (int i = 1; i <= n; ++i) {
      b.layers.push_back(make_layer(static_cast<LayerId>(i), LayerKind::kConv,
                                    static_cast<std::uint64_t>(testing::uniform_int(rng, 1, 100000)),
                                    8, {static_cast<LayerId>(i - 1)}));
    }
    std::set<int> twentieths;
    const int k = testing::uniform_int(rng, 1, 6);
    while (static_cast<int>(twentieths.size()) < k) twentieths.insert(testing::uniform_int(rng, 1, 19));
    std::vector<double> fractions;
    for (int t : twentieths) fractions.push_back(t / 20.0);

    // Exact integer comparison: 20 * cum >= t * total.
    std::vector<std::uint64_t> cum(n + 1, 0);
    for (int i = 1; i <= n; ++i) cum[i] = cum[i - 1] + b.layers[i - 1].flops;
    std::vector<LayerId> expected;
    for (int t : twentieths) {
      LayerId l = 1;
      while (l < static_cast<LayerId>(n) && 20 * cum[l] < static_cast<std::uint64_t>(t) * cum[n]) ++l;
      if (expected.empty() || expected.back() != l) expected.push_back(l);
    }
    if (expected.back() != static_cast<LayerId>(n)) expected.push_back(static_cast<LayerId>(n));

    const LayerGraph g = place_exits(b, fractions);
    std::vector<LayerId> got;
    for (const ExitPoint& x : g.exits()) got.push_back(x.layer_id);
    ASSERT_EQ(got, expected) << "trial " << trial;
  }
}

TEST(PlaceExits, RejectsBadFractions) {
  const double unordered[] = {0.5, 0.4};
  EXPECT_EQ(category_of([&] { place_exits(equal_chain(4), unordered); }),
            ErrorCategory::kValidation);
  const double zero[] = {0.0};
  EXPECT_EQ(category_of([&] { place_exits(equal_chain(4), zero); }),
            ErrorCategory::kValidation);
}

// 1 conv, 2 relu, 3 conv, 4 add(2,3), 5 relu, 6 fc
LayerGraph residual_graph() {
  std::vector<Layer> layers = {
      make_layer(1, LayerKind::kConv, 10, 400, {0}),
      make_layer(2, LayerKind::kRelu, 1, 400, {1}),
      make_layer(3, LayerKind::kConv, 10, 400, {2}),
      make_layer(4, LayerKind::kAdd, 1, 400, {2, 3}),
      make_layer(5, LayerKind::kRelu, 1, 400, {4}),
      make_layer(6, LayerKind::kFc, 5, 40, {5}),
  };
  std::vector<ExitPoint> exits = {{0, 3, 0, 0, 0}, {1, 6, 0, 0, 0}};
  return LayerGraph("res", 1000, std::move(layers), std::move(exits));
}

TEST(Splits, OrderAndTransfer) {
  const LayerGraph g = residual_graph();
  const auto splits = enumerate_splits(g);
  ASSERT_EQ(splits.size(), 4u);
  EXPECT_EQ(splits[0].kind, SplitKind::kInput);
  EXPECT_EQ(splits[0].transfer_bytes, 1000u);
  EXPECT_EQ(splits[1].layer_id, 2u);
  EXPECT_EQ(splits[1].transfer_bytes, 400u);
  EXPECT_EQ(splits[2].layer_id, 5u);
  EXPECT_EQ(splits[3].kind, SplitKind::kNone);
  EXPECT_EQ(splits[3].transfer_bytes, 0u);
  for (std::size_t i = 0; i < splits.size(); ++i) EXPECT_EQ(splits[i].split_id, i);
  EXPECT_EQ(split_label(splits[1]), "after-2");
}

TEST(Splits, ResidualCutCarriesBothTensors) {
  const LayerGraph g = residual_graph();
  const auto cut = cut_tensors(g, 3);
  ASSERT_EQ(cut.size(), 2u);
  EXPECT_EQ(cut[0].producer, 2u);
  EXPECT_EQ(cut[0].first_consumer, 4u);
  EXPECT_EQ(cut[1].producer, 3u);
  EXPECT_EQ(cut[1].first_consumer, 4u);
}

TEST(Splits, CutMatchesEdgeScan) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const LayerGraph g = testing::random_graph(rng, {});
    for (LayerId s = 0; s <= g.num_layers(); ++s) {
      std::set<LayerId> producers;
      for (const Layer& l : g.layers()) {
        if (l.id <= s) continue;
        for (LayerId d : l.deps) {
          if (d <= s) producers.insert(d);
        }
      }
      const auto cut = cut_tensors(g, s);
      std::set<LayerId> got;
      for (const CutTensor& t : cut) got.insert(t.producer);
      EXPECT_EQ(got, producers);
      EXPECT_EQ(got.size(), cut.size());
    }
  }
}

TEST(GraphJson, RoundTrip) {
  std::mt19937_64 rng(3);
  const LayerGraph g = testing::random_graph(rng, {});
  const std::string text = graph_to_text(g);
  const LayerGraph back = parse_graph(text);
  EXPECT_EQ(graph_to_text(back), text);
  EXPECT_EQ(back.num_layers(), g.num_layers());
  EXPECT_EQ(back.total_flops(), g.total_flops());
}

TEST(GraphValidation, StructuralErrors) {
  const auto build = [](std::vector<Layer> layers, std::vector<ExitPoint> exits) {
    return [layers, exits] { LayerGraph("g", 10, layers, exits); };
  };
  const Layer a = make_layer(1, LayerKind::kConv, 1, 4, {0});
  const Layer b = make_layer(2, LayerKind::kRelu, 1, 4, {1});
  const std::vector<ExitPoint> last = {{0, 2, 0, 0, 0}};
  // Forward edge.
  EXPECT_EQ(category_of(build({make_layer(1, LayerKind::kConv, 1, 4, {2}), b}, last)),
            ErrorCategory::kValidation);
  // Duplicate dependency.
  EXPECT_EQ(category_of(build({a, make_layer(2, LayerKind::kRelu, 1, 4, {1, 1})}, last)),
            ErrorCategory::kValidation);
  // Dangling layer.
  EXPECT_EQ(category_of(build({a, make_layer(2, LayerKind::kRelu, 1, 4, {0})}, last)),
            ErrorCategory::kValidation);
  // Final exit not on the last layer.
  EXPECT_EQ(category_of(build({a, b}, {{0, 1, 0, 0, 0}})), ErrorCategory::kValidation);
  // Non-monotone exits.
  EXPECT_EQ(category_of(build({a, b}, {{0, 2, 0, 0, 0}, {1, 2, 0, 0, 0}})),
            ErrorCategory::kValidation);
  // Zero FLOP prefix.
  EXPECT_EQ(category_of(build({make_layer(1, LayerKind::kConv, 0, 4, {0}), b},
                              {{0, 1, 0, 0, 0}, {1, 2, 0, 0, 0}})),
            ErrorCategory::kValidation);
  EXPECT_EQ(category_of([] { parse_graph("{\"layers\": []}"); }), ErrorCategory::kParse);
  EXPECT_EQ(category_of([] { parse_graph("not json"); }), ErrorCategory::kParse);
}

}  // namespace
}  // namespace spinn
