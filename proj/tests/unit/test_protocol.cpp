#include <gtest/gtest.h>

#include "spinn/protocol.hpp"
#include "test_util.hpp"

namespace spinn {
namespace {

using testing::category_of;

TEST(Wire, HeaderLayout) {
  std::vector<std::uint8_t> out;
  append_header(out, {MessageType::kCancel, 0x0102030405060708ull, 0x0a0b0c0d});
  const std::vector<std::uint8_t> want = {0x53, 0x50, 1, 3, 1, 2, 3, 4, 5, 6, 7, 8,
                                          0x0a, 0x0b, 0x0c, 0x0d};
  EXPECT_EQ(out, want);
  const FrameHeader h = decode_header(out);
  EXPECT_EQ(h.type, MessageType::kCancel);
  EXPECT_EQ(h.request_id, 0x0102030405060708ull);
  EXPECT_EQ(h.payload_len, 0x0a0b0c0du);
}

TEST(Wire, HeaderRejects) {
  std::vector<std::uint8_t> h = encode_control(MessageType::kProbe, 9);
  ASSERT_EQ(h.size(), kHeaderBytes);
  auto bad = h;
  bad[0] = 0;
  EXPECT_EQ(category_of([&] { decode_header(bad); }), ErrorCategory::kIntegrity);
  bad = h;
  bad[2] = 2;
  EXPECT_EQ(category_of([&] { decode_header(bad); }), ErrorCategory::kIntegrity);
  bad = h;
  bad[3] = 9;
  EXPECT_EQ(category_of([&] { decode_header(bad); }), ErrorCategory::kIntegrity);
  bad = h;
  bad[12] = 0xff;
  EXPECT_EQ(category_of([&] { decode_header(bad); }), ErrorCategory::kIntegrity);
  EXPECT_EQ(category_of([&] { decode_header(std::span(h).first(10)); }),
            ErrorCategory::kIntegrity);
}

TEST(Wire, ResultIsThirtyThreeBytes) {
  ResultMessage r;
  r.request_id = make_request_id(7, 1234);
  r.exit_id = 3;
  r.prediction = 0;
  r.confidence = 0.75f;
  r.server_us = 4321;
  const auto bytes = encode_result(r);
  ASSERT_EQ(bytes.size(), 33u);
  const ResultMessage back = decode_result(r.request_id, std::span(bytes).subspan(kHeaderBytes));
  EXPECT_EQ(back.exit_id, 3u);
  EXPECT_EQ(back.confidence, 0.75f);
  EXPECT_EQ(back.server_us, std::optional<std::uint64_t>(4321));
  r.server_us.reset();
  const auto none = encode_result(r);
  EXPECT_FALSE(decode_result(r.request_id, std::span(none).subspan(kHeaderBytes)).server_us);
}

TEST(Wire, RequestIdCarriesSampleKey) {
  const std::uint64_t id = make_request_id(99, 0xabcdef);
  EXPECT_EQ(sample_key_of(id), 0xabcdefu);
  EXPECT_EQ(id >> kSampleKeyBits, 99u);
}

TEST(Wire, OffloadRoundTrip) {
  auto set = std::make_shared<std::vector<TaggedPayload>>();
  for (int i = 0; i < 3; ++i) {
    ActivationTensor t;
    t.dims = {2, static_cast<std::uint32_t>(10 + i)};
    for (std::size_t k = 0; k < t.element_count(); ++k) t.values.push_back(k % 3 ? 0.0f : k * 0.5f);
    set->push_back({static_cast<LayerId>(5 + i), pack(t, i != 1)});
  }
  OffloadRequest r{make_request_id(1, 2), 4, 0.8f, set};
  const auto bytes = encode_offload(r);
  EXPECT_EQ(bytes.size(), offload_wire_bytes(*set));
  const FrameHeader h = decode_header(bytes);
  EXPECT_EQ(h.type, MessageType::kOffload);
  EXPECT_EQ(h.payload_len + kHeaderBytes, bytes.size());
  const OffloadRequest back = decode_offload(h.request_id, std::span(bytes).subspan(kHeaderBytes));
  EXPECT_EQ(back.split_id, 4);
  EXPECT_EQ(back.thr_conf, 0.8f);
  ASSERT_EQ(back.payloads->size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ((*back.payloads)[i].consumer, (*set)[i].consumer);
    EXPECT_EQ((*back.payloads)[i].payload.data, (*set)[i].payload.data);
  }
  auto trailing = std::vector<std::uint8_t>(bytes.begin() + kHeaderBytes, bytes.end());
  trailing.push_back(0);
  EXPECT_EQ(category_of([&] { decode_offload(1, trailing); }), ErrorCategory::kIntegrity);
  trailing.resize(trailing.size() - 5);
  EXPECT_EQ(category_of([&] { decode_offload(1, trailing); }), ErrorCategory::kIntegrity);
}

}  // namespace
}  // namespace spinn
