#pragma once

#include <cstddef>
#include <vector>

#include "ganilla/rng.hpp"
#include "ganilla/tensor.hpp"

namespace ganilla {

/// History of generated images fed to the discriminators.
///
/// While below capacity each fresh image is stored and returned as is. Once
/// full, each fresh image is, with probability 1/2, swapped with a uniformly
/// chosen stored one (the stored one is returned), otherwise returned as is.
template <typename T>
class ImagePool {
 public:
  explicit ImagePool(std::size_t capacity = 50) : capacity_(capacity) {}

  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t size() const noexcept { return images_.size(); }
  const std::vector<Tensor<T>>& images() const noexcept { return images_; }
  std::vector<Tensor<T>>& images() noexcept { return images_; }

  /// `fresh` is [N,3,H,W]; the result has the same shape.
  Tensor<T> query(const Tensor<T>& fresh, Engine& rng) {
    if (capacity_ == 0) return fresh;
    std::vector<Tensor<T>> out;
    out.reserve(fresh.dim(0));
    for (std::size_t n = 0; n < fresh.dim(0); ++n) {
      Tensor<T> img = slice_batch(fresh, n);
      if (images_.size() < capacity_) {
        images_.push_back(img);
        out.push_back(std::move(img));
      } else if (uniform01(rng) > 0.5) {
        const std::size_t k = uniform_index(rng, images_.size());
        out.push_back(std::move(images_[k]));
        images_[k] = std::move(img);
      } else {
        out.push_back(std::move(img));
      }
    }
    return stack_batch<T>(out);
  }

 private:
  std::size_t capacity_;
  std::vector<Tensor<T>> images_;
};

template <typename T>
Tensor<T> image_pool_query(ImagePool<T>& pool, const Tensor<T>& fresh, Engine& rng) {
  return pool.query(fresh, rng);
}

}  // namespace ganilla
