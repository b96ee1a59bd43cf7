#include "spinn/protocol.hpp"

#include <fmt/format.h>

#include "byte_io.hpp"
#include "spinn/error.hpp"

namespace spinn {

FrameHeader decode_header(std::span<const std::uint8_t> bytes) {
  detail::ByteReader in(bytes, ErrorCategory::kIntegrity);
  if (in.u8() != kWireMagic0 || in.u8() != kWireMagic1) {
    throw Error(ErrorCategory::kIntegrity, "bad frame magic");
  }
  const std::uint8_t version = in.u8();
  if (version != kWireVersion) {
    throw Error(ErrorCategory::kIntegrity, fmt::format("unsupported version {}", version));
  }
  const std::uint8_t type = in.u8();
  if (type < 1 || type > 5) {
    throw Error(ErrorCategory::kIntegrity, fmt::format("unknown message type {}", type));
  }
  FrameHeader h;
  h.type = static_cast<MessageType>(type);
  h.request_id = in.u64();
  h.payload_len = in.u32();
  if (h.payload_len > kMaxPayloadBytes) {
    throw Error(ErrorCategory::kIntegrity, "payload length exceeds limit");
  }
  return h;
}

void append_header(std::vector<std::uint8_t>& out, const FrameHeader& header) {
  detail::put_u8(out, kWireMagic0);
  detail::put_u8(out, kWireMagic1);
  detail::put_u8(out, kWireVersion);
  detail::put_u8(out, static_cast<std::uint8_t>(header.type));
  detail::put_u64(out, header.request_id);
  detail::put_u32(out, header.payload_len);
}

std::size_t offload_wire_bytes(const std::vector<TaggedPayload>& payloads) {
  std::size_t n = kHeaderBytes + 2 + 4 + 1;
  for (const TaggedPayload& p : payloads) n += 4 + frame_size(p.payload);
  return n;
}

std::vector<std::uint8_t> encode_offload(const OffloadRequest& request) {
  const auto& payloads = *request.payloads;
  if (payloads.size() > 255) {
    throw Error(ErrorCategory::kValidation, "too many payloads for one request");
  }
  const std::size_t total = offload_wire_bytes(payloads);
  std::vector<std::uint8_t> out;
  out.reserve(total);
  append_header(out, {MessageType::kOffload, request.request_id,
                      static_cast<std::uint32_t>(total - kHeaderBytes)});
  detail::put_u16(out, request.split_id);
  detail::put_f32(out, request.thr_conf);
  detail::put_u8(out, static_cast<std::uint8_t>(payloads.size()));
  for (const TaggedPayload& p : payloads) {
    detail::put_u32(out, p.consumer);
    append_frame(p.payload, out);
  }
  return out;
}

OffloadRequest decode_offload(std::uint64_t request_id,
                              std::span<const std::uint8_t> payload) {
  detail::ByteReader in(payload, ErrorCategory::kIntegrity);
  OffloadRequest r;
  r.request_id = request_id;
  r.split_id = in.u16();
  r.thr_conf = in.f32();
  const std::uint8_t count = in.u8();
  auto set = std::make_shared<std::vector<TaggedPayload>>();
  set->reserve(count);
  for (std::uint8_t i = 0; i < count; ++i) {
    TaggedPayload p;
    p.consumer = in.u32();
    std::size_t used = 0;
    p.payload = decode_frame(payload.subspan(in.position()), &used);
    in.take(used);
    set->push_back(std::move(p));
  }
  if (in.remaining() != 0) {
    throw Error(ErrorCategory::kIntegrity, "trailing bytes after offload payloads");
  }
  r.payloads = std::move(set);
  return r;
}

std::vector<std::uint8_t> encode_result(const ResultMessage& result) {
  if (result.exit_id > 255) throw Error(ErrorCategory::kValidation, "exit id exceeds 255");
  std::vector<std::uint8_t> out;
  out.reserve(kResultWireBytes);
  append_header(out, {MessageType::kResult, result.request_id,
                      static_cast<std::uint32_t>(kResultPayloadBytes)});
  detail::put_u8(out, static_cast<std::uint8_t>(result.exit_id));
  detail::put_u32(out, result.prediction);
  detail::put_f32(out, result.confidence);
  detail::put_u64(out, result.server_us.value_or(kNoServerTime));
  return out;
}

ResultMessage decode_result(std::uint64_t request_id, std::span<const std::uint8_t> payload) {
  if (payload.size() != kResultPayloadBytes) {
    throw Error(ErrorCategory::kIntegrity, "result payload has wrong length");
  }
  detail::ByteReader in(payload, ErrorCategory::kIntegrity);
  ResultMessage r;
  r.request_id = request_id;
  r.exit_id = in.u8();
  r.prediction = in.u32();
  r.confidence = in.f32();
  const std::uint64_t us = in.u64();
  if (us != kNoServerTime) r.server_us = us;
  return r;
}

std::vector<std::uint8_t> encode_control(MessageType type, std::uint64_t request_id) {
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderBytes);
  append_header(out, {type, request_id, 0});
  return out;
}

}  // namespace spinn
