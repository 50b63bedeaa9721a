#pragma once

#include <algorithm>
#include <string>

namespace cforge {

/// Axis-aligned rectangle in pixel coordinates; [x, x+w) x [y, y+h).
struct Box {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  int right() const { return x + w; }
  int bottom() const { return y + h; }
  long long area() const { return static_cast<long long>(w) * h; }
  bool empty() const { return w <= 0 || h <= 0; }

  bool contains(const Box& o, int tolerance = 0) const {
    return o.x >= x - tolerance && o.y >= y - tolerance &&
           o.right() <= right() + tolerance && o.bottom() <= bottom() + tolerance;
  }

  friend bool operator==(const Box&, const Box&) = default;
};

inline Box intersect(const Box& a, const Box& b) {
  const int x0 = std::max(a.x, b.x);
  const int y0 = std::max(a.y, b.y);
  const int x1 = std::min(a.right(), b.right());
  const int y1 = std::min(a.bottom(), b.bottom());
  if (x1 <= x0 || y1 <= y0) return {};
  return {x0, y0, x1 - x0, y1 - y0};
}

inline Box hull(const Box& a, const Box& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  const int x0 = std::min(a.x, b.x);
  const int y0 = std::min(a.y, b.y);
  const int x1 = std::max(a.right(), b.right());
  const int y1 = std::max(a.bottom(), b.bottom());
  return {x0, y0, x1 - x0, y1 - y0};
}

inline Box shrink(const Box& b, int by) {
  Box r{b.x + by, b.y + by, b.w - 2 * by, b.h - 2 * by};
  if (r.w < 0) r.w = 0;
  if (r.h < 0) r.h = 0;
  return r;
}

inline double iou(const Box& a, const Box& b) {
  const long long inter = intersect(a, b).area();
  const long long uni = a.area() + b.area() - inter;
  return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

/// True when the two boxes overlap by more than `tolerance` pixels on both axes.
inline bool overlaps(const Box& a, const Box& b, int tolerance) {
  const int ox = std::min(a.right(), b.right()) - std::max(a.x, b.x);
  const int oy = std::min(a.bottom(), b.bottom()) - std::max(a.y, b.y);
  return ox > tolerance && oy > tolerance;
}

inline std::string to_string(const Box& b) {
  return "[" + std::to_string(b.x) + "," + std::to_string(b.y) + "," + std::to_string(b.w) +
         "," + std::to_string(b.h) + "]";
}

}  // namespace cforge
