#include "spinn/pack_pipeline.hpp"

#include "spinn/error.hpp"

namespace spinn {

PackPipeline::PackPipeline(std::size_t queue_capacity)
    : raw_(queue_capacity), coded_(queue_capacity) {
  quantizer_ = std::thread([this] {
    while (auto job = raw_.pop()) {
      try {
        if (job->tensor.values.size() != job->tensor.element_count()) {
          throw Error(ErrorCategory::kValidation, "tensor dims do not match value count");
        }
        Coded next{std::move(job->tensor.dims), quantize(job->tensor.values),
                   std::move(job->done)};
        if (!coded_.push(std::move(next))) break;
      } catch (...) {
        job->done.set_exception(std::current_exception());
      }
    }
    coded_.close();
  });
  compressor_ = std::thread([this] {
    while (auto job = coded_.pop()) {
      try {
        job->done.set_value(pack_quantized(std::move(job->dims), std::move(job->q)));
      } catch (...) {
        job->done.set_exception(std::current_exception());
      }
    }
  });
}

PackPipeline::~PackPipeline() {
  raw_.close();
  if (quantizer_.joinable()) quantizer_.join();
  if (compressor_.joinable()) compressor_.join();
}

std::future<PackedPayload> PackPipeline::submit(ActivationTensor tensor) {
  Raw job{std::move(tensor), {}};
  std::future<PackedPayload> out = job.done.get_future();
  if (!raw_.push(std::move(job))) {
    throw Error(ErrorCategory::kValidation, "pack pipeline is shut down");
  }
  return out;
}

std::vector<PackedPayload> PackPipeline::pack_all(std::vector<ActivationTensor> tensors) {
  std::vector<std::future<PackedPayload>> pending;
  pending.reserve(tensors.size());
  for (auto& t : tensors) pending.push_back(submit(std::move(t)));
  std::vector<PackedPayload> out;
  out.reserve(pending.size());
  for (auto& f : pending) out.push_back(f.get());
  return out;
}

}  // namespace spinn
