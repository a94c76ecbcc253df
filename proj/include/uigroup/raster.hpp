#pragma once

#include <vector>

#include "uigroup/prototype.hpp"

namespace uigroup {

// Fixed 3x64x64 element image, values in [0, 1], channel-major layout
// (index = c*64*64 + y*64 + x).
struct Image64 {
  static constexpr int kChannels = 3;
  static constexpr int kSide = 64;
  static constexpr int kPixels = kSide * kSide;
  static constexpr int kFloats = kChannels * kPixels;

  std::vector<float> data;

  Image64() : data(kFloats, 1.0f) {}

  float& at(int c, int y, int x) { return data[c * kPixels + y * kSide + x]; }
  float at(int c, int y, int x) const { return data[c * kPixels + y * kSide + x]; }
};

// Draw a leaf element centered on a white background, aspect-preserving
// scaled into the 64x64 canvas (2px margin on the long side). The fill color
// is the node color alpha-composited over white, mid-gray when absent.
// Containers cannot be drawn and raise ShapeError; a zero-area frame yields
// the plain background.
Image64 rasterize_element(const UINode& node);

}  // namespace uigroup
