#ifndef SPINN_COMMS_OPT_HPP_
#define SPINN_COMMS_OPT_HPP_

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

namespace spinn {

struct ActivationTensor {
  std::vector<std::uint32_t> dims;
  std::vector<float> values;

  std::size_t element_count() const;
  double sparsity() const;  // fraction of exact zeros
};

struct Quantized {
  std::vector<std::uint8_t> codes;
  float quant_min = 0.0f;
  float quant_scale = 0.0f;
};

// 8-bit affine quantization on a grid snapped to a power-of-two step: the
// offset is rounded down and the scale up to multiples of that step so that
// every grid point quant_min + q * quant_scale is an exact float. Each value
// maps to its nearest grid point (ties to the even code), which bounds the
// round-trip error by quant_scale / 2 with no rounding slack. quant_scale is
// the smallest such step covering [min, max] in 255 increments.
Quantized quantize(std::span<const float> values);
std::vector<float> dequantize(std::span<const std::uint8_t> codes, float quant_min,
                              float quant_scale);

// Self-framing lossless container: byte-shuffle with the given element size
// over 4096-byte blocks, then deflate. Layout: raw_len u32, comp_len u32,
// elem_size u8, stream (big-endian).
inline constexpr std::size_t kShuffleBlock = 4096;
inline constexpr std::size_t kCompressHeader = 9;

std::vector<std::uint8_t> compress(std::span<const std::uint8_t> bytes,
                                   std::size_t elem_size = 1);
// Throws kIntegrity on a corrupt or truncated frame.
std::vector<std::uint8_t> decompress(std::span<const std::uint8_t> frame);

void byte_shuffle(std::span<const std::uint8_t> in, std::size_t elem_size,
                  std::span<std::uint8_t> out);
void byte_unshuffle(std::span<const std::uint8_t> in, std::size_t elem_size,
                    std::span<std::uint8_t> out);

enum class Codec : std::uint8_t {
  kNone = 0,              // 8-bit codes stored as-is
  kShuffledLossless = 1,  // 8-bit codes through compress()
  kRawF32 = 2,            // unquantized big-endian float32
};

struct PackedPayload {
  std::vector<std::uint32_t> dims;
  float quant_min = 0.0f;
  float quant_scale = 0.0f;
  Codec codec = Codec::kNone;
  std::uint32_t raw_len = 0;
  std::vector<std::uint8_t> data;
};

// Quantize then compress, escaping to kNone when compression does not shrink
// the codes. With `quantize_and_compress` false the tensor goes out as kRawF32.
PackedPayload pack(const ActivationTensor& tensor, bool quantize_and_compress = true);
// Second stage of pack(): compress already quantized codes.
PackedPayload pack_quantized(std::vector<std::uint32_t> dims, Quantized q);
ActivationTensor unpack(const PackedPayload& payload);

inline constexpr std::uint8_t kFrameMagic0 = 0xC0;
inline constexpr std::uint8_t kFrameMagic1 = 0xC0;
inline constexpr std::uint8_t kFrameVersion = 1;

std::size_t frame_size(const PackedPayload& payload);
void append_frame(const PackedPayload& payload, std::vector<std::uint8_t>& out);
std::vector<std::uint8_t> encode_frame(const PackedPayload& payload);
// Decodes one frame from the front of `bytes`; `consumed` receives its length.
PackedPayload decode_frame(std::span<const std::uint8_t> bytes, std::size_t* consumed);

// Compression pays off when its cost plus the shrunken payload's transfer
// beats sending the raw payload. The link latency appears on both sides and
// cancels.
bool should_compress(std::uint64_t raw_bytes, double est_pack_ms, double est_ratio,
                     double bandwidth_mbps);

// Pack cost from a calibrated throughput figure.
double estimate_pack_ms(std::uint64_t raw_bytes, double pack_bytes_per_ms);

// Times pack() on a synthetic tensor of `bytes` bytes; returns bytes per ms.
double calibrate_pack_throughput(std::size_t bytes, int repetitions = 3);

// Per-split compression-ratio estimate, smoothed by an exponentially weighted
// moving average.
class RatioTracker {
 public:
  explicit RatioTracker(double alpha = 0.25) : alpha_(alpha) {}

  void seed(std::uint32_t split_id, double ratio) { ratio_[split_id] = ratio; }
  void observe(std::uint32_t split_id, double ratio);
  // 1.0 (no gain) for splits never seen.
  double estimate(std::uint32_t split_id) const;

 private:
  double alpha_;
  std::map<std::uint32_t, double> ratio_;
};

}  // namespace spinn

#endif  // SPINN_COMMS_OPT_HPP_
