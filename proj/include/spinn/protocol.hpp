#ifndef SPINN_PROTOCOL_HPP_
#define SPINN_PROTOCOL_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "spinn/activation_source.hpp"

namespace spinn {

enum class MessageType : std::uint8_t {
  kOffload = 1,
  kResult = 2,
  kCancel = 3,
  kProbe = 4,
  kProbeAck = 5,
};

inline constexpr std::uint8_t kWireMagic0 = 0x53;  // 'S'
inline constexpr std::uint8_t kWireMagic1 = 0x50;  // 'P'
inline constexpr std::uint8_t kWireVersion = 1;
inline constexpr std::size_t kHeaderBytes = 16;
inline constexpr std::size_t kResultPayloadBytes = 17;
inline constexpr std::size_t kResultWireBytes = kHeaderBytes + kResultPayloadBytes;
inline constexpr std::uint64_t kNoServerTime = ~std::uint64_t{0};
// Upper bound on an accepted payload; larger frames are treated as corrupt.
inline constexpr std::uint32_t kMaxPayloadBytes = 256u << 20;

struct FrameHeader {
  MessageType type = MessageType::kProbe;
  std::uint64_t request_id = 0;
  std::uint32_t payload_len = 0;
};

// Request ids carry a per-client sequence number in the high 40 bits and the
// sample's trace index in the low 24 bits, which the server uses to look up
// the recorded confidences standing in for real computation.
inline constexpr int kSampleKeyBits = 24;
inline std::uint64_t make_request_id(std::uint64_t seq, std::uint32_t sample_key) {
  return (seq << kSampleKeyBits) | (sample_key & ((1u << kSampleKeyBits) - 1));
}
inline std::uint32_t sample_key_of(std::uint64_t request_id) {
  return static_cast<std::uint32_t>(request_id & ((1u << kSampleKeyBits) - 1));
}

struct OffloadRequest {
  std::uint64_t request_id = 0;
  std::uint16_t split_id = 0;
  float thr_conf = 0.0f;
  PayloadSet payloads;
};

struct ResultMessage {
  std::uint64_t request_id = 0;
  ExitId exit_id = 0;
  std::uint32_t prediction = 0;
  float confidence = 0.0f;
  std::optional<std::uint64_t> server_us;
};

// Throws kIntegrity on bad magic, version or type.
FrameHeader decode_header(std::span<const std::uint8_t> bytes);
void append_header(std::vector<std::uint8_t>& out, const FrameHeader& header);

std::size_t offload_wire_bytes(const std::vector<TaggedPayload>& payloads);
std::vector<std::uint8_t> encode_offload(const OffloadRequest& request);
OffloadRequest decode_offload(std::uint64_t request_id,
                              std::span<const std::uint8_t> payload);

std::vector<std::uint8_t> encode_result(const ResultMessage& result);
ResultMessage decode_result(std::uint64_t request_id, std::span<const std::uint8_t> payload);

// Header-only messages: CANCEL, PROBE, PROBE_ACK.
std::vector<std::uint8_t> encode_control(MessageType type, std::uint64_t request_id);

}  // namespace spinn

#endif  // SPINN_PROTOCOL_HPP_
