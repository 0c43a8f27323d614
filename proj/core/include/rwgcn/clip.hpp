#pragma once

#include <cstddef>

#include "rwgcn/tensor.hpp"

namespace rwgcn {

/// One action sample: data is [M persons, C channels, T frames, V joints].
struct ClipTensor {
  Tensor data;
  double fps = 30.0;

  std::size_t persons() const { return data.dim(0); }
  std::size_t channels() const { return data.dim(1); }
  std::size_t frames() const { return data.dim(2); }
  std::size_t joints() const { return data.dim(3); }

  double& at(std::size_t m, std::size_t c, std::size_t t, std::size_t v) {
    return data[((m * channels() + c) * frames() + t) * joints() + v];
  }
  double at(std::size_t m, std::size_t c, std::size_t t, std::size_t v) const {
    return data[((m * channels() + c) * frames() + t) * joints() + v];
  }
};

/// Validates rank 4. Throws DimensionError.
void check_clip(const ClipTensor& clip);

}  // namespace rwgcn
