#include "uigroup/raster.hpp"

#include <algorithm>
#include <cmath>

namespace uigroup {

namespace {

struct Fill {
  float r, g, b;
};

Fill fill_color(const UINode& node) {
  double r = 0.5, g = 0.5, b = 0.5, a = 1.0;
  if (node.color) {
    r = node.color->r / 255.0;
    g = node.color->g / 255.0;
    b = node.color->b / 255.0;
    a = node.color->a / 255.0;
  }
  // Composite over the white background.
  return Fill{static_cast<float>(a * r + (1.0 - a)),
              static_cast<float>(a * g + (1.0 - a)),
              static_cast<float>(a * b + (1.0 - a))};
}

}  // namespace

Image64 rasterize_element(const UINode& node) {
  if (!node.is_leaf() || node.cls == NodeClass::kGroup)
    throw ShapeError("cannot rasterize container node '" + node.uuid + "'");

  Image64 img;
  const double w = node.frame.w, h = node.frame.h;
  if (!(w > 0.0) || !(h > 0.0)) return img;  // degenerate: background only

  constexpr double kBox = 60.0;  // drawable side, leaves a margin
  const double scale = kBox / std::max(w, h);
  const double dw = w * scale, dh = h * scale;
  const double x0 = (Image64::kSide - dw) / 2.0, y0 = (Image64::kSide - dh) / 2.0;
  const double cx = x0 + dw / 2.0, cy = y0 + dh / 2.0;

  const Fill fill = fill_color(node);

  // Text is drawn as filled bars spanning the box width.
  const int bar_count = std::max(1, static_cast<int>(std::lround(dh / 18.0)));
  const double bar_period = dh / bar_count;
  const double bar_height = 0.6 * bar_period;

  for (int y = 0; y < Image64::kSide; ++y) {
    for (int x = 0; x < Image64::kSide; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      if (px < x0 || px >= x0 + dw || py < y0 || py >= y0 + dh) continue;

      bool inside = false;
      switch (node.cls) {
        case NodeClass::kOval: {
          const double nx = (px - cx) / (dw / 2.0), ny = (py - cy) / (dh / 2.0);
          inside = nx * nx + ny * ny <= 1.0;
          break;
        }
        case NodeClass::kPath: {
          // Diamond with vertices at the box edge midpoints.
          const double nx = std::abs(px - cx) / (dw / 2.0),
                       ny = std::abs(py - cy) / (dh / 2.0);
          inside = nx + ny <= 1.0;
          break;
        }
        case NodeClass::kText:
          inside = std::fmod(py - y0, bar_period) < bar_height;
          break;
        case NodeClass::kBitmap: {
          // Checker texture so bitmaps read differently from flat fills.
          const int cxi = static_cast<int>((px - x0) / 8.0),
                    cyi = static_cast<int>((py - y0) / 8.0);
          inside = (cxi + cyi) % 2 == 0;
          break;
        }
        default:
          inside = true;  // rectangle, symbol, unk: solid box
      }
      if (!inside) continue;
      img.at(0, y, x) = fill.r;
      img.at(1, y, x) = fill.g;
      img.at(2, y, x) = fill.b;
    }
  }
  return img;
}

}  // namespace uigroup
