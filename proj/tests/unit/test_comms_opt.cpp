#include <gtest/gtest.h>

#include <cmath>

#include "spinn/comms_opt.hpp"
#include "spinn/pack_pipeline.hpp"
#include "test_util.hpp"

namespace spinn {
namespace {

using testing::category_of;

std::vector<float> random_values(std::mt19937_64& rng, std::size_t n, double sparsity) {
  const double span = testing::log_uniform(rng, 1e-6, 1e6);
  const double shift = testing::uniform(rng, -1.0, 1.0) * span;
  std::vector<float> v(n);
  for (float& x : v) {
    x = testing::uniform(rng, 0.0, 1.0) < sparsity
            ? 0.0f
            : static_cast<float>(shift + testing::uniform(rng, -span, span));
  }
  return v;
}

double max_error(std::span<const float> x, const Quantized& q) {
  const auto back = dequantize(q.codes, q.quant_min, q.quant_scale);
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    worst = std::max(worst, std::fabs(double{back[i]} - double{x[i]}));
  }
  return worst;
}

TEST(Quantize, ErrorWithinHalfStep) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    const auto x = random_values(rng, static_cast<std::size_t>(testing::uniform_int(rng, 2, 3000)),
                                 testing::uniform(rng, 0.0, 0.9));
    const Quantized q = quantize(x);
    ASSERT_LE(max_error(x, q), double{q.quant_scale} / 2.0) << "trial " << trial;
  }
}

TEST(Quantize, ConstantTensor) {
  const std::vector<float> x(50, 3.25f);
  const Quantized q = quantize(x);
  EXPECT_EQ(q.quant_min, 3.25f);
  EXPECT_EQ(q.quant_scale, 0.0f);
  for (auto c : q.codes) EXPECT_EQ(c, 0);
  for (float v : dequantize(q.codes, q.quant_min, q.quant_scale)) EXPECT_EQ(v, 3.25f);
}

TEST(Quantize, SymmetricUnitRange) {
  const std::vector<float> x = {-1.0f, 0.0f, 1.0f};
  const Quantized q = quantize(x);
  EXPECT_EQ(q.codes, (std::vector<std::uint8_t>{0, 127, 255}));
  EXPECT_EQ(q.quant_min, -1.0f);
  EXPECT_LE(max_error(x, q), double{q.quant_scale} / 2.0);
}

TEST(Quantize, RejectsNonFinite) {
  const std::vector<float> x = {1.0f, std::nanf("")};
  EXPECT_EQ(category_of([&] { quantize(x); }), ErrorCategory::kValidation);
}

TEST(Shuffle, InverseForEveryElementSize) {
  std::mt19937_64 rng(12);
  for (std::size_t elem = 1; elem <= 9; ++elem) {
    std::vector<std::uint8_t> in(static_cast<std::size_t>(testing::uniform_int(rng, 0, 10000)));
    for (auto& b : in) b = static_cast<std::uint8_t>(rng());
    std::vector<std::uint8_t> mid(in.size()), back(in.size());
    byte_shuffle(in, elem, mid);
    byte_unshuffle(mid, elem, back);
    EXPECT_EQ(back, in);
  }
}

TEST(Shuffle, GroupsBytePlanes) {
  const std::vector<std::uint8_t> in = {1, 2, 3, 4, 5, 6};
  std::vector<std::uint8_t> out(6);
  byte_shuffle(in, 2, out);
  EXPECT_EQ(out, (std::vector<std::uint8_t>{1, 3, 5, 2, 4, 6}));
}

TEST(Compress, RoundTripRandomAndStructured) {
  std::mt19937_64 rng(13);
  std::vector<std::vector<std::uint8_t>> buffers;
  buffers.emplace_back();
  buffers.emplace_back(1, 0x7f);
  buffers.emplace_back(100000, 0);
  std::vector<std::uint8_t> ramp(70000);
  for (std::size_t i = 0; i < ramp.size(); ++i) ramp[i] = static_cast<std::uint8_t>(i);
  buffers.push_back(ramp);
  for (int i = 0; i < 20; ++i) {
    std::vector<std::uint8_t> r(static_cast<std::size_t>(testing::uniform_int(rng, 1, 50000)));
    for (auto& b : r) b = static_cast<std::uint8_t>(rng());
    buffers.push_back(std::move(r));
  }
  for (const auto& b : buffers) {
    for (std::size_t elem : {1u, 4u}) {
      EXPECT_EQ(decompress(compress(b, elem)), b);
    }
  }
}

TEST(Compress, DetectsCorruption) {
  std::vector<std::uint8_t> data(5000, 3);
  auto frame = compress(data);
  auto truncated = frame;
  truncated.pop_back();
  EXPECT_EQ(category_of([&] { decompress(truncated); }), ErrorCategory::kIntegrity);
  auto flipped = frame;
  flipped.back() ^= 0xff;
  EXPECT_EQ(category_of([&] { decompress(flipped); }), ErrorCategory::kIntegrity);
}

ActivationTensor tensor_of(std::vector<float> v) {
  ActivationTensor t;
  t.dims = {static_cast<std::uint32_t>(v.size())};
  t.values = std::move(v);
  return t;
}

TEST(Pack, SparseTensorCompressesAtLeastTwice) {
  std::mt19937_64 rng(14);
  const std::size_t n = 256 * 1024;  // one byte per code
  std::vector<float> v(n, 0.0f);
  for (float& x : v) {
    if (testing::uniform(rng, 0.0, 1.0) >= 0.8) x = static_cast<float>(testing::uniform(rng, 0.0, 6.0));
  }
  const PackedPayload p = pack(tensor_of(v));
  ASSERT_EQ(p.codec, Codec::kShuffledLossless);
  EXPECT_GE(static_cast<double>(n) / static_cast<double>(p.data.size()), 2.0);
}

TEST(Pack, StoreEscapeOnlyAddsFrameHeader) {
  std::mt19937_64 rng(15);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = static_cast<std::size_t>(testing::uniform_int(rng, 1, 20000));
    std::vector<float> v(n);
    for (float& x : v) x = static_cast<float>(testing::uniform(rng, -1.0, 1.0));
    const PackedPayload p = pack(tensor_of(v));
    EXPECT_LE(p.data.size(), n);
    // magic, version, codec, rank, one dim, min, scale, raw_len
    EXPECT_LE(frame_size(p), n + 2 + 1 + 1 + 1 + 4 + 4 + 4 + 4);
    if (p.codec == Codec::kNone) EXPECT_EQ(p.data.size(), n);
  }
}

TEST(Pack, UnpackMatchesDequantizedCodes) {
  std::mt19937_64 rng(16);
  ActivationTensor t;
  t.dims = {3, 7, 11};
  t.values = random_values(rng, 3 * 7 * 11, 0.5);
  const Quantized q = quantize(t.values);
  const ActivationTensor back = unpack(pack(t));
  EXPECT_EQ(back.dims, t.dims);
  EXPECT_EQ(back.values, dequantize(q.codes, q.quant_min, q.quant_scale));
  const ActivationTensor raw = unpack(pack(t, false));
  EXPECT_EQ(raw.values, t.values);
}

TEST(Frame, EncodeDecodeSequence) {
  std::mt19937_64 rng(17);
  std::vector<PackedPayload> payloads;
  std::vector<std::uint8_t> wire;
  for (int i = 0; i < 5; ++i) {
    ActivationTensor t = tensor_of(random_values(rng, 1000, i * 0.2));
    payloads.push_back(pack(t, i != 2));
    append_frame(payloads.back(), wire);
  }
  std::size_t offset = 0;
  for (const PackedPayload& expect : payloads) {
    std::size_t used = 0;
    const PackedPayload got = decode_frame(std::span(wire).subspan(offset), &used);
    EXPECT_EQ(used, frame_size(expect));
    EXPECT_EQ(got.codec, expect.codec);
    EXPECT_EQ(got.data, expect.data);
    EXPECT_EQ(got.dims, expect.dims);
    offset += used;
  }
  EXPECT_EQ(offset, wire.size());
  wire[0] = 0;
  EXPECT_EQ(category_of([&] { decode_frame(wire, nullptr); }), ErrorCategory::kIntegrity);
}

TEST(ShouldCompress, BreakEven) {
  // 10 Mbit/s: 10000 bytes take 8 ms raw; ratio 2 saves 4 ms.
  EXPECT_TRUE(should_compress(10000, 3.9, 2.0, 10.0));
  EXPECT_FALSE(should_compress(10000, 4.0, 2.0, 10.0));
  EXPECT_FALSE(should_compress(10000, 0.0, 1.0, 10.0));
  EXPECT_FALSE(should_compress(10000, 0.0, 0.0, 10.0));
  EXPECT_TRUE(should_compress(10000, 100.0, 2.0, 0.0));
  EXPECT_DOUBLE_EQ(estimate_pack_ms(50000, 25000.0), 2.0);
  EXPECT_EQ(category_of([] { estimate_pack_ms(1, 0.0); }), ErrorCategory::kValidation);
}

TEST(RatioTracker, SeedsThenSmooths) {
  RatioTracker r(0.25);
  EXPECT_EQ(r.estimate(3), 1.0);
  r.observe(3, 4.0);
  EXPECT_EQ(r.estimate(3), 4.0);
  r.observe(3, 8.0);
  EXPECT_DOUBLE_EQ(r.estimate(3), 5.0);
  r.seed(3, 2.0);
  EXPECT_EQ(r.estimate(3), 2.0);
}

TEST(PackPipeline, PreservesOrderAndMatchesPack) {
  std::mt19937_64 rng(18);
  std::vector<ActivationTensor> tensors;
  for (int i = 0; i < 25; ++i) {
    tensors.push_back(tensor_of(random_values(rng, static_cast<std::size_t>(testing::uniform_int(rng, 1, 4000)), 0.6)));
  }
  PackPipeline pipeline(2);
  const auto out = pipeline.pack_all(tensors);
  ASSERT_EQ(out.size(), tensors.size());
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const PackedPayload direct = pack(tensors[i]);
    EXPECT_EQ(out[i].data, direct.data);
    EXPECT_EQ(out[i].codec, direct.codec);
  }
}

TEST(BoundedQueue, CloseDrainsThenStops) {
  BoundedQueue<int> q(2);
  EXPECT_TRUE(q.push(1));
  EXPECT_TRUE(q.push(2));
  q.close();
  EXPECT_FALSE(q.push(3));
  EXPECT_EQ(q.pop(), 1);
  EXPECT_EQ(q.pop(), 2);
  EXPECT_FALSE(q.pop().has_value());
}

}  // namespace
}  // namespace spinn
