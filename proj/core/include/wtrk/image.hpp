#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace wtrk {

/// T x H x W stack of per-frame values, row-major.
template <typename T>
struct FrameStack {
  int frames = 0;
  int height = 0;
  int width = 0;
  std::vector<T> values;

  FrameStack() = default;
  FrameStack(int t, int h, int w, T fill = T{})
      : frames(t), height(h), width(w),
        values(static_cast<std::size_t>(t) * h * w, fill) {}

  std::size_t index(int t, int y, int x) const {
    return (static_cast<std::size_t>(t) * height + y) * width + x;
  }
  T& at(int t, int y, int x) { return values[index(t, y, x)]; }
  const T& at(int t, int y, int x) const { return values[index(t, y, x)]; }

  std::span<const T> frame(int t) const {
    return {values.data() + static_cast<std::size_t>(t) * height * width,
            static_cast<std::size_t>(height) * width};
  }
  std::span<T> frame(int t) {
    return {values.data() + static_cast<std::size_t>(t) * height * width,
            static_cast<std::size_t>(height) * width};
  }
};

using DepthStack = FrameStack<float>;
using MaskStack = FrameStack<std::uint8_t>;

/// Bilinear sample of one depth frame at a subpixel position; coordinates are
/// clamped to the pixel-centre grid.
double sample_bilinear(std::span<const float> frame, int height, int width, double x, double y);

}  // namespace wtrk
