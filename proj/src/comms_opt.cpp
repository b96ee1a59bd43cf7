#include "spinn/comms_opt.hpp"

#include <zlib.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <random>

#include <fmt/format.h>

#include "byte_io.hpp"
#include "spinn/error.hpp"

namespace spinn {
namespace {

[[noreturn]] void corrupt(const std::string& message) {
  throw Error(ErrorCategory::kIntegrity, message);
}

std::uint8_t nearest_code(double x, double qmin, double scale) {
  const double t = std::floor((x - qmin) / scale);
  const long long k0 = static_cast<long long>(std::clamp(t, -1.0, 256.0));
  long long best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  for (long long k = k0 - 1; k <= k0 + 2; ++k) {
    if (k < 0 || k > 255) continue;
    const double d = std::fabs(x - (qmin + static_cast<double>(k) * scale));
    if (d < best_d || (d == best_d && (k % 2 == 0))) {
      best = k;
      best_d = d;
    }
  }
  return static_cast<std::uint8_t>(best);
}

}  // namespace

std::size_t ActivationTensor::element_count() const {
  std::size_t n = 1;
  for (std::uint32_t d : dims) n *= d;
  return n;
}

double ActivationTensor::sparsity() const {
  if (values.empty()) return 0.0;
  const auto zeros = std::count(values.begin(), values.end(), 0.0f);
  return static_cast<double>(zeros) / static_cast<double>(values.size());
}

Quantized quantize(std::span<const float> values) {
  Quantized out;
  out.codes.assign(values.size(), 0);
  if (values.empty()) return out;
  float lo = values[0];
  float hi = values[0];
  for (float v : values) {
    if (!std::isfinite(v)) throw Error(ErrorCategory::kValidation, "non-finite activation");
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (lo == hi) {
    out.quant_min = lo;
    return out;
  }
  // Step g is the float spacing one binade above 2 * max|x|, so every multiple
  // of g up to the grid's far end is representable.
  const double max_abs = std::max(std::fabs(double{lo}), std::fabs(double{hi}));
  int exp = 0;
  std::frexp(4.0 * max_abs, &exp);
  const double g = std::max(std::ldexp(1.0, exp - 24),
                            double{std::numeric_limits<float>::denorm_min()});
  const double qmin = std::floor(lo / g) * g;
  double m = std::ceil((hi - qmin) / 255.0 / g);
  while (qmin + 255.0 * m * g < hi) m += 1.0;
  while (m > 1.0 && qmin + 255.0 * (m - 1.0) * g >= hi) m -= 1.0;
  const double scale = m * g;
  out.quant_min = static_cast<float>(qmin);
  out.quant_scale = static_cast<float>(scale);
  for (std::size_t i = 0; i < values.size(); ++i) {
    out.codes[i] = nearest_code(values[i], qmin, scale);
  }
  return out;
}

std::vector<float> dequantize(std::span<const std::uint8_t> codes, float quant_min,
                              float quant_scale) {
  std::vector<float> out(codes.size());
  for (std::size_t i = 0; i < codes.size(); ++i) {
    out[i] = quant_min + static_cast<float>(codes[i]) * quant_scale;
  }
  return out;
}

void byte_shuffle(std::span<const std::uint8_t> in, std::size_t elem_size,
                  std::span<std::uint8_t> out) {
  if (elem_size <= 1) {
    std::copy(in.begin(), in.end(), out.begin());
    return;
  }
  const std::size_t block = kShuffleBlock - kShuffleBlock % elem_size;
  for (std::size_t base = 0; base < in.size(); base += block) {
    const std::size_t len = std::min(block, in.size() - base);
    const std::size_t n = len / elem_size;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < elem_size; ++j) {
        out[base + j * n + i] = in[base + i * elem_size + j];
      }
    }
    for (std::size_t t = n * elem_size; t < len; ++t) out[base + t] = in[base + t];
  }
}

void byte_unshuffle(std::span<const std::uint8_t> in, std::size_t elem_size,
                    std::span<std::uint8_t> out) {
  if (elem_size <= 1) {
    std::copy(in.begin(), in.end(), out.begin());
    return;
  }
  const std::size_t block = kShuffleBlock - kShuffleBlock % elem_size;
  for (std::size_t base = 0; base < in.size(); base += block) {
    const std::size_t len = std::min(block, in.size() - base);
    const std::size_t n = len / elem_size;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < elem_size; ++j) {
        out[base + i * elem_size + j] = in[base + j * n + i];
      }
    }
    for (std::size_t t = n * elem_size; t < len; ++t) out[base + t] = in[base + t];
  }
}

std::vector<std::uint8_t> compress(std::span<const std::uint8_t> bytes,
                                   std::size_t elem_size) {
  if (elem_size == 0 || elem_size > 255) {
    throw Error(ErrorCategory::kValidation, "element size must be in [1,255]");
  }
  if (bytes.size() > std::numeric_limits<std::uint32_t>::max()) {
    throw Error(ErrorCategory::kValidation, "buffer too large for frame");
  }
  std::vector<std::uint8_t> shuffled(bytes.size());
  byte_shuffle(bytes, elem_size, shuffled);
  uLongf bound = compressBound(static_cast<uLong>(bytes.size()));
  std::vector<std::uint8_t> out;
  out.reserve(kCompressHeader + bound);
  detail::put_u32(out, static_cast<std::uint32_t>(bytes.size()));
  detail::put_u32(out, 0);
  detail::put_u8(out, static_cast<std::uint8_t>(elem_size));
  out.resize(kCompressHeader + bound);
  const int rc = compress2(out.data() + kCompressHeader, &bound, shuffled.data(),
                           static_cast<uLong>(shuffled.size()), Z_DEFAULT_COMPRESSION);
  if (rc != Z_OK) throw Error(ErrorCategory::kIo, fmt::format("deflate failed ({})", rc));
  out.resize(kCompressHeader + bound);
  const auto comp_len = static_cast<std::uint32_t>(bound);
  for (int i = 0; i < 4; ++i) {
    out[4 + i] = static_cast<std::uint8_t>(comp_len >> (24 - 8 * i));
  }
  return out;
}

std::vector<std::uint8_t> decompress(std::span<const std::uint8_t> frame) {
  detail::ByteReader in(frame, ErrorCategory::kIntegrity);
  const std::uint32_t raw_len = in.u32();
  const std::uint32_t comp_len = in.u32();
  const std::uint8_t elem_size = in.u8();
  if (elem_size == 0) corrupt("compressed frame: zero element size");
  if (comp_len != in.remaining()) {
    corrupt(fmt::format("compressed frame: length {} but {} bytes follow", comp_len,
                        in.remaining()));
  }
  const auto stream = in.take(comp_len);
  std::vector<std::uint8_t> shuffled(raw_len);
  uLongf out_len = raw_len;
  // uncompress() rejects a null destination even for empty output.
  std::uint8_t scratch = 0;
  const int rc = uncompress(raw_len ? shuffled.data() : &scratch, &out_len, stream.data(),
                            static_cast<uLong>(stream.size()));
  if (rc != Z_OK || out_len != raw_len) {
    corrupt(fmt::format("compressed frame failed integrity check (zlib {})", rc));
  }
  std::vector<std::uint8_t> out(raw_len);
  byte_unshuffle(shuffled, elem_size, out);
  return out;
}

PackedPayload pack(const ActivationTensor& tensor, bool quantize_and_compress) {
  if (tensor.values.size() != tensor.element_count()) {
    throw Error(ErrorCategory::kValidation, "tensor dims do not match value count");
  }
  PackedPayload p;
  p.dims = tensor.dims;
  if (!quantize_and_compress) {
    p.codec = Codec::kRawF32;
    p.raw_len = static_cast<std::uint32_t>(tensor.values.size() * 4);
    p.data.reserve(p.raw_len);
    for (float v : tensor.values) detail::put_f32(p.data, v);
    return p;
  }
  return pack_quantized(tensor.dims, quantize(tensor.values));
}

PackedPayload pack_quantized(std::vector<std::uint32_t> dims, Quantized q) {
  PackedPayload p;
  p.dims = std::move(dims);
  p.quant_min = q.quant_min;
  p.quant_scale = q.quant_scale;
  p.raw_len = static_cast<std::uint32_t>(q.codes.size());
  std::vector<std::uint8_t> packed = compress(q.codes, 1);
  if (packed.size() < q.codes.size()) {
    p.codec = Codec::kShuffledLossless;
    p.data = std::move(packed);
  } else {
    p.codec = Codec::kNone;
    p.data = std::move(q.codes);
  }
  return p;
}

ActivationTensor unpack(const PackedPayload& payload) {
  ActivationTensor t;
  t.dims = payload.dims;
  const std::size_t n = t.element_count();
  switch (payload.codec) {
    case Codec::kRawF32: {
      if (payload.data.size() != n * 4) corrupt("raw payload length does not match dims");
      detail::ByteReader in(payload.data, ErrorCategory::kIntegrity);
      t.values.resize(n);
      for (float& v : t.values) v = in.f32();
      return t;
    }
    case Codec::kNone:
      if (payload.data.size() != n) corrupt("code payload length does not match dims");
      t.values = dequantize(payload.data, payload.quant_min, payload.quant_scale);
      return t;
    case Codec::kShuffledLossless: {
      const std::vector<std::uint8_t> codes = decompress(payload.data);
      if (codes.size() != n) corrupt("decompressed length does not match dims");
      t.values = dequantize(codes, payload.quant_min, payload.quant_scale);
      return t;
    }
  }
  corrupt("unknown codec");
}

std::size_t frame_size(const PackedPayload& payload) {
  return 2 + 1 + 1 + 1 + 4 * payload.dims.size() + 4 + 4 + 4 + payload.data.size();
}

void append_frame(const PackedPayload& payload, std::vector<std::uint8_t>& out) {
  if (payload.dims.size() > 255) throw Error(ErrorCategory::kValidation, "rank > 255");
  detail::put_u8(out, kFrameMagic0);
  detail::put_u8(out, kFrameMagic1);
  detail::put_u8(out, kFrameVersion);
  detail::put_u8(out, static_cast<std::uint8_t>(payload.codec));
  detail::put_u8(out, static_cast<std::uint8_t>(payload.dims.size()));
  for (std::uint32_t d : payload.dims) detail::put_u32(out, d);
  detail::put_f32(out, payload.quant_min);
  detail::put_f32(out, payload.quant_scale);
  detail::put_u32(out, payload.raw_len);
  out.insert(out.end(), payload.data.begin(), payload.data.end());
}

std::vector<std::uint8_t> encode_frame(const PackedPayload& payload) {
  std::vector<std::uint8_t> out;
  out.reserve(frame_size(payload));
  append_frame(payload, out);
  return out;
}

PackedPayload decode_frame(std::span<const std::uint8_t> bytes, std::size_t* consumed) {
  detail::ByteReader in(bytes, ErrorCategory::kIntegrity);
  if (in.u8() != kFrameMagic0 || in.u8() != kFrameMagic1) corrupt("bad packed-frame magic");
  if (in.u8() != kFrameVersion) corrupt("unsupported packed-frame version");
  PackedPayload p;
  const std::uint8_t codec = in.u8();
  if (codec > static_cast<std::uint8_t>(Codec::kRawF32)) {
    corrupt(fmt::format("unknown codec {}", codec));
  }
  p.codec = static_cast<Codec>(codec);
  const std::uint8_t rank = in.u8();
  std::uint64_t n = 1;
  for (std::uint8_t i = 0; i < rank; ++i) {
    p.dims.push_back(in.u32());
    n *= p.dims.back();
  }
  p.quant_min = in.f32();
  p.quant_scale = in.f32();
  p.raw_len = in.u32();
  const std::uint64_t expected_raw = p.codec == Codec::kRawF32 ? 4 * n : n;
  if (p.raw_len != expected_raw) corrupt("raw_len does not match dims");
  std::size_t data_len = p.raw_len;
  if (p.codec == Codec::kShuffledLossless) {
    detail::ByteReader peek(bytes.subspan(in.position()), ErrorCategory::kIntegrity);
    peek.u32();
    data_len = kCompressHeader + peek.u32();
  }
  const auto data = in.take(data_len);
  p.data.assign(data.begin(), data.end());
  if (consumed != nullptr) *consumed = in.position();
  return p;
}

bool should_compress(std::uint64_t raw_bytes, double est_pack_ms, double est_ratio,
                     double bandwidth_mbps) {
  if (!(est_ratio > 0.0)) return false;
  if (!(bandwidth_mbps > 0.0)) return est_ratio > 1.0;
  const double raw_ms = 8.0 * static_cast<double>(raw_bytes) / (bandwidth_mbps * 1000.0);
  return est_pack_ms + raw_ms / est_ratio < raw_ms;
}

double estimate_pack_ms(std::uint64_t raw_bytes, double pack_bytes_per_ms) {
  if (!(pack_bytes_per_ms > 0.0)) {
    throw Error(ErrorCategory::kValidation, "pack throughput must be positive");
  }
  return static_cast<double>(raw_bytes) / pack_bytes_per_ms;
}

double calibrate_pack_throughput(std::size_t bytes, int repetitions) {
  ActivationTensor t;
  const std::size_t n = std::max<std::size_t>(bytes / 4, 1);
  t.dims = {static_cast<std::uint32_t>(n)};
  t.values.resize(n);
  std::mt19937 rng(7);
  std::uniform_real_distribution<float> value(0.0f, 4.0f);
  std::bernoulli_distribution zero(0.5);
  for (float& v : t.values) v = zero(rng) ? 0.0f : value(rng);
  double best_ms = std::numeric_limits<double>::infinity();
  for (int r = 0; r < std::max(repetitions, 1); ++r) {
    const auto start = std::chrono::steady_clock::now();
    const PackedPayload p = pack(t, true);
    const auto stop = std::chrono::steady_clock::now();
    if (p.data.empty() && n > 0) continue;
    best_ms = std::min(best_ms,
                       std::chrono::duration<double, std::milli>(stop - start).count());
  }
  return static_cast<double>(n * 4) / std::max(best_ms, 1e-6);
}

void RatioTracker::observe(std::uint32_t split_id, double ratio) {
  const auto it = ratio_.find(split_id);
  if (it == ratio_.end()) {
    ratio_[split_id] = ratio;
  } else {
    it->second = alpha_ * ratio + (1.0 - alpha_) * it->second;
  }
}

double RatioTracker::estimate(std::uint32_t split_id) const {
  const auto it = ratio_.find(split_id);
  return it == ratio_.end() ? 1.0 : it->second;
}

}  // namespace spinn
