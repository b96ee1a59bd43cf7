#ifndef SPINN_PACK_PIPELINE_HPP_
#define SPINN_PACK_PIPELINE_HPP_

#include <condition_variable>
#include <cstddef>
#include <deque>
#include <future>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include "spinn/comms_opt.hpp"

namespace spinn {

// Blocking FIFO with a fixed capacity. close() wakes all waiters; pop()
// then drains what is left and returns nothing once empty.
template <typename T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(capacity == 0 ? 1 : capacity) {}

  // False if the queue was closed.
  bool push(T item) {
    std::unique_lock<std::mutex> lock(mu_);
    not_full_.wait(lock, [&] { return closed_ || items_.size() < capacity_; });
    if (closed_) return false;
    items_.push_back(std::move(item));
    not_empty_.notify_one();
    return true;
  }

  std::optional<T> pop() {
    std::unique_lock<std::mutex> lock(mu_);
    not_empty_.wait(lock, [&] { return closed_ || !items_.empty(); });
    if (items_.empty()) return std::nullopt;
    T item = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return item;
  }

  void close() {
    std::lock_guard<std::mutex> lock(mu_);
    closed_ = true;
    not_empty_.notify_all();
    not_full_.notify_all();
  }

  std::size_t size() const {
    std::lock_guard<std::mutex> lock(mu_);
    return items_.size();
  }
  std::size_t capacity() const { return capacity_; }

 private:
  std::size_t capacity_;
  mutable std::mutex mu_;
  std::condition_variable not_empty_;
  std::condition_variable not_full_;
  std::deque<T> items_;
  bool closed_ = false;
};

// pack() split over two threads: one quantizes, the other compresses, so
// consecutive tensors overlap. Results come back in submission order.
class PackPipeline {
 public:
  explicit PackPipeline(std::size_t queue_capacity = 4);
  ~PackPipeline();
  PackPipeline(const PackPipeline&) = delete;
  PackPipeline& operator=(const PackPipeline&) = delete;

  std::future<PackedPayload> submit(ActivationTensor tensor);
  std::vector<PackedPayload> pack_all(std::vector<ActivationTensor> tensors);

 private:
  struct Raw {
    ActivationTensor tensor;
    std::promise<PackedPayload> done;
  };
  struct Coded {
    std::vector<std::uint32_t> dims;
    Quantized q;
    std::promise<PackedPayload> done;
  };

  BoundedQueue<Raw> raw_;
  BoundedQueue<Coded> coded_;
  std::thread quantizer_;
  std::thread compressor_;
};

}  // namespace spinn

#endif  // SPINN_PACK_PIPELINE_HPP_
