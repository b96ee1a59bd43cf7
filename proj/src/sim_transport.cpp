#include "spinn/transport.hpp"

namespace spinn {

std::optional<ResultMessage> SimTransport::offload(const OffloadRequest& request, bool drop) {
  const std::vector<std::uint8_t> wire = encode_offload(request);
  counters_.bytes_up += wire.size();
  ++counters_.offloads;
  if (drop) {
    ++counters_.dropped;
    return std::nullopt;
  }
  const std::span<const std::uint8_t> bytes(wire);
  const FrameHeader header = decode_header(bytes.first(kHeaderBytes));
  const OffloadRequest received =
      decode_offload(header.request_id, bytes.subspan(kHeaderBytes, header.payload_len));
  const auto reply = server_->handle(received);
  if (!reply) return std::nullopt;
  const std::vector<std::uint8_t> back = encode_result(*reply);
  counters_.bytes_down += back.size();
  ++counters_.results;
  const std::span<const std::uint8_t> reply_bytes(back);
  const FrameHeader reply_header = decode_header(reply_bytes.first(kHeaderBytes));
  return decode_result(reply_header.request_id, reply_bytes.subspan(kHeaderBytes));
}

void SimTransport::cancel(std::uint64_t request_id, double server_elapsed_ms) {
  counters_.bytes_up += encode_control(MessageType::kCancel, request_id).size();
  ++counters_.cancels;
  server_->cancel(request_id, server_elapsed_ms);
}

bool SimTransport::probe(bool drop) {
  counters_.bytes_up += kHeaderBytes;
  ++counters_.probes;
  if (drop) {
    ++counters_.dropped;
    return false;
  }
  counters_.bytes_down += kHeaderBytes;
  return true;
}

}  // namespace spinn
