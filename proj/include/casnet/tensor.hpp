// Copyright 2026 The CaSNet-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "casnet/error.hpp"

namespace casnet {

/// Real channels x frames x bins tensor, stored frame-major ([t][c][f]) so
/// that a single frame (channels x bins) is one contiguous block. Every
/// feature map in the pipeline uses this layout.
class Tensor3 {
 public:
  Tensor3() = default;
  Tensor3(std::size_t channels, std::size_t frames, std::size_t bins, float fill = 0.0f)
      : c_(channels), t_(frames), f_(bins), data_(channels * frames * bins, fill) {}

  std::size_t channels() const { return c_; }
  std::size_t frames() const { return t_; }
  std::size_t bins() const { return f_; }
  std::size_t frame_size() const { return c_ * f_; }
  bool empty() const { return data_.empty(); }

  float& operator()(std::size_t c, std::size_t t, std::size_t f) { return data_[(t * c_ + c) * f_ + f]; }
  float operator()(std::size_t c, std::size_t t, std::size_t f) const {
    return data_[(t * c_ + c) * f_ + f];
  }

  std::span<float> frame(std::size_t t) { return {data_.data() + t * frame_size(), frame_size()}; }
  std::span<const float> frame(std::size_t t) const {
    return {data_.data() + t * frame_size(), frame_size()};
  }

  std::vector<float>& data() { return data_; }
  const std::vector<float>& data() const { return data_; }

  bool same_shape(const Tensor3& o) const { return c_ == o.c_ && t_ == o.t_ && f_ == o.f_; }

  std::string shape_str() const {
    return std::to_string(c_) + "x" + std::to_string(t_) + "x" + std::to_string(f_);
  }

  bool all_finite() const {
    for (float v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  friend bool operator==(const Tensor3&, const Tensor3&) = default;

 private:
  std::size_t c_ = 0, t_ = 0, f_ = 0;
  std::vector<float> data_;
};

/// Dense row-major rows x cols matrix used for time-frequency grids
/// (frames x bins) and small linear-algebra blocks.
template <class T>
class Grid {
 public:
  Grid() = default;
  Grid(std::size_t rows, std::size_t cols, T fill = T{}) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<T> data_;
};

inline float max_abs_diff(const Tensor3& a, const Tensor3& b) {
  CASNET_CHECK(a.same_shape(b), ShapeError, "tensor shape mismatch: " + a.shape_str() + " vs " + b.shape_str());
  float m = 0.0f;
  for (std::size_t i = 0; i < a.data().size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

}  // namespace casnet
