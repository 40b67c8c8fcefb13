#include "m3dvg/geometry.hpp"

#include <algorithm>
#include <numbers>

namespace m3dvg::geometry {

void validate(const Box2D& b) {
  if (!std::isfinite(b.x_min) || !std::isfinite(b.y_min) || !std::isfinite(b.x_max) ||
      !std::isfinite(b.y_max))
    throw Error(ErrorKind::DegenerateBox, "2D box has non-finite coordinates");
  if (b.x_min > b.x_max || b.y_min > b.y_max)
    throw Error(ErrorKind::DegenerateBox, "2D box has min > max");
}

double normalize_yaw(double yaw) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double a = std::fmod(yaw, two_pi);
  if (a <= -std::numbers::pi) a += two_pi;
  if (a > std::numbers::pi) a -= two_pi;
  return a;
}

double iou2d(const Box2D& a, const Box2D& b) {
  validate(a);
  validate(b);
  const double iw = std::max(0.0, std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min));
  const double ih = std::max(0.0, std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min));
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

double giou(const Box2D& a, const Box2D& b) {
  const double iou = iou2d(a, b);
  const double iw = std::max(0.0, std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min));
  const double ih = std::max(0.0, std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min));
  const double uni = a.area() + b.area() - iw * ih;
  const double hull = (std::max(a.x_max, b.x_max) - std::min(a.x_min, b.x_min)) *
                      (std::max(a.y_max, b.y_max) - std::min(a.y_min, b.y_min));
  if (!(hull > 0.0)) return iou;
  return iou - (hull - uni) / hull;
}

}  // namespace m3dvg::geometry
