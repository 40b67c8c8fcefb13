#pragma once

#include <array>
#include <cmath>
#include <vector>

#include <Eigen/Core>

#include "m3dvg/error.hpp"

namespace m3dvg::geometry {

/// Axis-aligned image box in pixels.
struct Box2D {
  double x_min = 0, y_min = 0, x_max = 0, y_max = 0;

  double area() const { return (x_max - x_min) * (y_max - y_min); }
};

void validate(const Box2D& b);

/// Oriented 3D box in camera coordinates: y points down, z is depth. The
/// center is the geometric center, dims are (w, h, l) in meters and yaw
/// rotates about the vertical axis.
template <typename Scalar>
struct Box3D {
  Eigen::Matrix<Scalar, 3, 1> center = Eigen::Matrix<Scalar, 3, 1>::Zero();
  Eigen::Matrix<Scalar, 3, 1> dims = Eigen::Matrix<Scalar, 3, 1>::Ones();
  Scalar yaw = Scalar(0);

  Scalar width() const { return dims(0); }
  Scalar height() const { return dims(1); }
  Scalar length() const { return dims(2); }
  Scalar volume() const { return dims(0) * dims(1) * dims(2); }
};

using Box3d = Box3D<double>;

/// Wraps an angle into (-pi, pi].
double normalize_yaw(double yaw);

/// Plain value of a scalar, stripping any derivative part.
inline double value_of(double x) { return x; }

template <typename T>
  requires requires(const T& x) { x.value(); }
double value_of(const T& x) {
  return value_of(x.value());
}

template <typename Scalar>
void validate(const Box3D<Scalar>& b) {
  for (int i = 0; i < 3; ++i) {
    const double d = value_of(b.dims(i));
    if (!(d > 0.0) || !std::isfinite(d))
      throw Error(ErrorKind::DegenerateBox, "3D box dimensions must be positive and finite");
    if (!std::isfinite(value_of(b.center(i))))
      throw Error(ErrorKind::DegenerateBox, "3D box center must be finite");
  }
  if (!std::isfinite(value_of(b.yaw))) throw Error(ErrorKind::DegenerateBox, "3D box yaw must be finite");
}

template <typename Scalar>
using Point2 = Eigen::Matrix<Scalar, 2, 1>;

template <typename Scalar>
using Polygon = std::vector<Point2<Scalar>>;

namespace detail {

template <typename Scalar>
Scalar cross(const Point2<Scalar>& a, const Point2<Scalar>& b) {
  return a(0) * b(1) - a(1) * b(0);
}

template <typename Scalar>
Scalar min_of(const Scalar& a, const Scalar& b) {
  return b < a ? b : a;
}

template <typename Scalar>
Scalar max_of(const Scalar& a, const Scalar& b) {
  return a < b ? b : a;
}

}  // namespace detail

/// Collinearity tolerance used by the clipper.
inline constexpr double kClipEpsilon = 1e-12;

/// Bird's-eye footprint (x, z) of a box, counter-clockwise.
template <typename Scalar>
Polygon<Scalar> bev_corners(const Box3D<Scalar>& b) {
  using std::cos;
  using std::sin;
  const Scalar c = cos(b.yaw);
  const Scalar s = sin(b.yaw);
  const Scalar hl = b.length() / Scalar(2);
  const Scalar hw = b.width() / Scalar(2);
  const std::array<std::array<int, 2>, 4> signs = {{{1, -1}, {1, 1}, {-1, 1}, {-1, -1}}};
  Polygon<Scalar> out;
  out.reserve(4);
  for (const auto& sg : signs) {
    const Scalar lx = Scalar(sg[0]) * hl;
    const Scalar lz = Scalar(sg[1]) * hw;
    out.emplace_back(b.center(0) + c * lx + s * lz, b.center(2) - s * lx + c * lz);
  }
  return out;
}

/// Shoelace area; positive for counter-clockwise polygons.
template <typename Scalar>
Scalar polygon_area(const Polygon<Scalar>& poly) {
  Scalar twice(0);
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) twice += detail::cross(poly[i], poly[(i + 1) % n]);
  return twice / Scalar(2);
}

/// Sutherland-Hodgman clip of convex `subject` by convex `clip`, both
/// counter-clockwise. Returns the intersection polygon (possibly empty).
template <typename Scalar>
Polygon<Scalar> clip_convex(const Polygon<Scalar>& subject, const Polygon<Scalar>& clip) {
  Polygon<Scalar> out = subject;
  const std::size_t m = clip.size();
  for (std::size_t e = 0; e < m && !out.empty(); ++e) {
    const Point2<Scalar>& a = clip[e];
    const Point2<Scalar> edge = clip[(e + 1) % m] - a;
    const Polygon<Scalar> in = std::move(out);
    out.clear();
    auto side = [&](const Point2<Scalar>& p) { return detail::cross<Scalar>(edge, p - a); };
    for (std::size_t i = 0; i < in.size(); ++i) {
      const Point2<Scalar>& prev = in[(i + in.size() - 1) % in.size()];
      const Point2<Scalar>& cur = in[i];
      const Scalar sp = side(prev);
      const Scalar sc = side(cur);
      const bool prev_in = !(sp < Scalar(-kClipEpsilon));
      const bool cur_in = !(sc < Scalar(-kClipEpsilon));
      if (cur_in != prev_in) out.push_back(prev + (cur - prev) * (sp / (sp - sc)));
      if (cur_in) out.push_back(cur);
    }
  }
  return out;
}

/// Area of the intersection of the two boxes' bird's-eye footprints.
template <typename Scalar>
Scalar bev_intersection_area(const Box3D<Scalar>& a, const Box3D<Scalar>& b) {
  const Polygon<Scalar> inter = clip_convex(bev_corners(a), bev_corners(b));
  if (inter.size() < 3) return Scalar(0);
  const Scalar area = polygon_area(inter);
  return area > Scalar(0) ? area : Scalar(0);
}

/// Volume of the intersection of two oriented boxes.
template <typename Scalar>
Scalar intersection_volume(const Box3D<Scalar>& a, const Box3D<Scalar>& b) {
  const Scalar top = detail::min_of<Scalar>(a.center(1) + a.height() / Scalar(2),
                                            b.center(1) + b.height() / Scalar(2));
  const Scalar bottom = detail::max_of<Scalar>(a.center(1) - a.height() / Scalar(2),
                                               b.center(1) - b.height() / Scalar(2));
  const Scalar overlap = top - bottom;
  if (!(overlap > Scalar(0))) return Scalar(0);
  return bev_intersection_area(a, b) * overlap;
}

/// Oriented 3D intersection-over-union in [0, 1].
template <typename Scalar>
Scalar iou3d(const Box3D<Scalar>& a, const Box3D<Scalar>& b) {
  validate(a);
  validate(b);
  const Scalar inter = intersection_volume(a, b);
  const Scalar uni = a.volume() + b.volume() - inter;
  const Scalar iou = inter / uni;
  if (iou > Scalar(1)) return Scalar(1);
  return iou;
}

/// IoU of two image boxes; 0 when the union has no area.
double iou2d(const Box2D& a, const Box2D& b);

/// Generalized IoU: IoU - (hull - union) / hull.
double giou(const Box2D& a, const Box2D& b);

}  // namespace m3dvg::geometry
