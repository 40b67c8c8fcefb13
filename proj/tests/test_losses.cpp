#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "m3dvg/error.hpp"
#include "m3dvg/geometry.hpp"
#include "m3dvg/losses.hpp"
#include "oracles.hpp"

using namespace m3dvg;
using namespace m3dvg::losses;
using geometry::iou3d;

namespace {

Box3d box(double x, double y, double z, double w, double h, double l, double yaw) {
  Box3d b;
  b.center = {x, y, z};
  b.dims = {w, h, l};
  b.yaw = yaw;
  return b;
}

Box3d rigid(const Box3d& b, double angle, const Eigen::Vector3d& shift) {
  // Rotation about the vertical axis, matching the yaw convention of the footprint.
  const double c = std::cos(angle), s = std::sin(angle);
  Box3d out = b;
  out.center.x() = c * b.center.x() + s * b.center.z();
  out.center.z() = -s * b.center.x() + c * b.center.z();
  out.center += shift;
  out.yaw = geometry::normalize_yaw(b.yaw + angle);
  return out;
}

}  // namespace

TEST(Focal, Examples) {
  const std::vector<double> half = {0.5, 0.5};
  EXPECT_NEAR(focal_loss(half, 0, 1.0, 0.0), std::log(2.0), 1e-15);
  EXPECT_DOUBLE_EQ(focal_term(1.0, 0.7, 3.0), 0.0);
  EXPECT_NEAR(focal_term(0.9), 0.25 * 0.01 * -std::log(0.9), 1e-18);
  EXPECT_NEAR(focal_term(0.9), 2.634e-4, 1e-7);
}

TEST(Focal, MonotoneInTargetProbability) {
  double prev = focal_term(1e-6);
  for (int i = 1; i <= 1000; ++i) {
    const double cur = focal_term(1e-6 + (1.0 - 1e-6) * i / 1000.0);
    EXPECT_LT(cur, prev);
    prev = cur;
  }
}

TEST(Focal, InvalidDistributions) {
  auto kind = [](const std::vector<double>& p, std::size_t t) {
    try {
      focal_loss(p, t);
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::InvalidArgument;
  };
  EXPECT_EQ(kind({0.5, 0.6}, 0), ErrorKind::InvalidProbability);
  EXPECT_EQ(kind({0.0, 1.0}, 0), ErrorKind::InvalidProbability);
  EXPECT_EQ(kind({-0.5, 1.5}, 1), ErrorKind::InvalidProbability);
  EXPECT_THROW(focal_loss(std::vector<double>{0.5, 0.5}, 2), Error);
}

TEST(DepthMapFocal, MatchesPerPixelSum) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  Eigen::MatrixXd p(6, 5);
  std::vector<std::size_t> targets(6);
  double sum = 0.0;
  for (Eigen::Index r = 0; r < 6; ++r) {
    for (Eigen::Index c = 0; c < 5; ++c) p(r, c) = u(rng);
    p.row(r) /= p.row(r).sum();
    targets[static_cast<std::size_t>(r)] = static_cast<std::size_t>(r % 5);
    const double pt = p(r, r % 5);
    sum += -0.25 * (1 - pt) * (1 - pt) * std::log(pt);
  }
  EXPECT_NEAR(depth_map_focal(p, targets), sum / 6.0, 1e-15);

  const Eigen::MatrixXd one = p.topRows(1);
  const std::vector<std::size_t> t0 = {0};
  EXPECT_NEAR(depth_map_focal(one, t0), focal_term(one(0, 0)), 1e-15);

  Eigen::MatrixXd confident = Eigen::MatrixXd::Identity(4, 4);
  const std::vector<std::size_t> diag = {0, 1, 2, 3};
  EXPECT_EQ(depth_map_focal(confident, diag), 0.0);
}

TEST(L1, Examples) {
  const std::vector<double> zero = {0, 0}, target = {1, 3};
  EXPECT_DOUBLE_EQ(l1_loss(zero, zero), 0.0);
  EXPECT_DOUBLE_EQ(l1_loss(zero, target), 2.0);
  EXPECT_THROW(l1_loss(zero, std::vector<double>{1.0}), Error);

  std::mt19937_64 rng(5);
  std::normal_distribution<double> n;
  std::vector<double> a(37), b(37);
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = n(rng);
    b[i] = n(rng);
    sum += std::abs(a[i] - b[i]);
  }
  EXPECT_NEAR(l1_loss(a, b), sum / 37.0, 1e-14);
}

TEST(Giou, HandCases) {
  const Box2D a{0, 0, 2, 2};
  EXPECT_NEAR(giou_loss(a, a), 0.0, 1e-12);
  EXPECT_NEAR(giou_loss(Box2D{0, 0, 1, 1}, Box2D{1, 0, 2, 1}), 1.0, 1e-12);
  EXPECT_NEAR(giou_loss(a, Box2D{1, 1, 3, 3}), 1.0 + 5.0 / 63.0, 1e-12);
  EXPECT_NEAR(geometry::giou(a, Box2D{1, 1, 3, 3}), 1.0 / 7.0 - 2.0 / 9.0, 1e-12);
}

TEST(Giou, ContainmentAndRange) {
  const Box2D outer{0, 0, 4, 3}, inner{1, 1, 2, 2};
  EXPECT_NEAR(giou_loss(outer, inner), 1.0 - geometry::iou2d(outer, inner), 1e-12);
  EXPECT_NEAR(giou_loss(outer, inner), 1.0 - 1.0 / 12.0, 1e-12);

  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0, 10);
  for (int i = 0; i < 2000; ++i) {
    const double x0 = u(rng), y0 = u(rng), x1 = u(rng), y1 = u(rng);
    const double x2 = u(rng), y2 = u(rng), x3 = u(rng), y3 = u(rng);
    const Box2D p{std::min(x0, x1), std::min(y0, y1), std::max(x0, x1) + 0.01, std::max(y0, y1) + 0.01};
    const Box2D q{std::min(x2, x3), std::min(y2, y3), std::max(x2, x3) + 0.01, std::max(y2, y3) + 0.01};
    const double l = giou_loss(p, q);
    EXPECT_GE(l, 0.0);
    EXPECT_LT(l, 2.0);
    EXPECT_NEAR(l, giou_loss(q, p), 1e-12);
  }
  EXPECT_THROW(giou_loss(Box2D{1, 0, 0, 1}, outer), Error);
}

TEST(Iou3d, SimpleCases) {
  const Box3d a = box(1, 0.5, 20, 1.6, 1.5, 3.9, 0.4);
  EXPECT_NEAR(iou3d(a, a), 1.0, 1e-12);
  Box3d flipped = a;
  flipped.yaw = geometry::normalize_yaw(a.yaw + std::numbers::pi);
  EXPECT_NEAR(iou3d(a, flipped), 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(iou3d(a, box(30, 0.5, 20, 1.6, 1.5, 3.9, 0.4)), 0.0);
  EXPECT_DOUBLE_EQ(iou3d_loss(a, box(1, 9.5, 20, 1.6, 1.5, 3.9, 0.4)), 1.0);

  // Axis-aligned overlap: half the length and half the height.
  const Box3d b = box(0, 0, 0, 2, 2, 2, 0);
  const Box3d c = box(1, 1, 0, 2, 2, 2, 0);
  EXPECT_NEAR(iou3d(b, c), 2.0 / 14.0, 1e-12);
  // A 45 degree turn of a unit square inside a larger one.
  const Box3d big = box(0, 0, 0, 4, 1, 4, 0);
  const Box3d small = box(0, 0, 0, 1, 1, 1, std::numbers::pi / 4);
  EXPECT_NEAR(iou3d(big, small), 1.0 / 16.0, 1e-12);

  EXPECT_THROW(iou3d(a, box(0, 0, 0, 0, 1, 1, 0)), Error);
}

TEST(Iou3d, MatchesPointSampling) {
  std::mt19937_64 rng(21);
  for (int i = 0; i < 20; ++i) {
    const Box3d a = oracle::random_box(rng);
    const Box3d b = oracle::nearby_box(a, rng);
    const double mc = oracle::monte_carlo_iou(a, b, 200000, 100 + static_cast<std::uint64_t>(i));
    EXPECT_NEAR(iou3d(a, b), mc, 0.02) << i;
    EXPECT_NEAR(iou3d_loss(a, b), 1.0 - iou3d(a, b), 1e-15);
  }
}

TEST(Iou3d, SymmetryAndRigidMotion) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int i = 0; i < 500; ++i) {
    const Box3d a = oracle::random_box(rng);
    const Box3d b = oracle::nearby_box(a, rng);
    const double v = iou3d(a, b);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
    EXPECT_NEAR(v, iou3d(b, a), 1e-9);
    const double angle = std::numbers::pi * u(rng);
    const Eigen::Vector3d shift(5 * u(rng), u(rng), 5 * u(rng));
    EXPECT_NEAR(v, iou3d(rigid(a, angle, shift), rigid(b, angle, shift)), 1e-9);
  }
}

TEST(Size3d, IgnoresCenterOffset) {
  const Box3d target = box(0, 0, 20, 1.6, 1.5, 3.9, 0.3);
  Box3d pred = target;
  pred.center += Eigen::Vector3d(2, 1, -3);
  EXPECT_NEAR(size3d_loss(pred, target), 0.0, 1e-12);
  pred.dims(2) = 3.9 / 2;
  EXPECT_NEAR(size3d_loss(pred, target), 0.5, 1e-12);
}

TEST(MultiBin, Examples) {
  const std::vector<double> uniform(12, 0.3), residuals(12, 0.0);
  EXPECT_NEAR(multibin_loss(uniform, residuals, {4, 0.0}), std::log(12.0), 1e-12);

  std::vector<double> sharp(12, -1e3);
  sharp[4] = 1e3;
  std::vector<double> off = residuals;
  off[4] = 0.15;
  EXPECT_NEAR(multibin_loss(sharp, off, {4, 0.15}), 0.0, 1e-12);
  EXPECT_NEAR(multibin_loss(sharp, off, {4, 0.05}), 0.1, 1e-12);
  EXPECT_THROW(multibin_loss(sharp, std::vector<double>(11, 0.0), {4, 0.0}), Error);
}

TEST(MultiBin, OrientationRoundTrip) {
  const double width = 2 * std::numbers::pi / 12;
  for (int i = -2000; i <= 2000; ++i) {
    const double yaw = geometry::normalize_yaw(i * 0.00157);
    const OrientationTarget t = encode_orientation(yaw);
    EXPECT_LT(t.bin, 12u);
    EXPECT_LE(std::abs(t.residual), width / 2 + 1e-12);
    EXPECT_NEAR(decode_orientation(t), yaw, 1e-12);
  }
  EXPECT_EQ(encode_orientation(0.0).bin, 0u);
  EXPECT_EQ(encode_orientation(std::numbers::pi).bin, 6u);
  EXPECT_EQ(encode_orientation(-std::numbers::pi / 2).bin, 9u);
}

TEST(Laplacian, Examples) {
  EXPECT_NEAR(laplacian_depth_loss(10, std::log(std::sqrt(2.0)), 11), 1.0 + std::log(std::sqrt(2.0)), 1e-12);
  EXPECT_NEAR(laplacian_depth_loss(10, 1.7, 11), 1.7 + std::sqrt(2.0) * std::exp(-1.7), 1e-12);
  EXPECT_DOUBLE_EQ(laplacian_depth_loss(7, -0.3, 7), -0.3);
  EXPECT_THROW(laplacian_depth_loss(std::nan(""), 0, 1), Error);
}

TEST(Laplacian, ScanFindsTheAnalyticMinimum) {
  for (double e : {0.2, 1.0, 3.5}) {
    double best_s = 0.0, best = INFINITY;
    for (int k = 0; k <= 400000; ++k) {
      const double s = -5.0 + k * 1e-5 * 2.5;
      const double v = laplacian_depth_loss(0.0, s, e);
      if (v < best) {
        best = v;
        best_s = s;
      }
    }
    EXPECT_NEAR(best_s, std::log(std::sqrt(2.0) * e), 2e-4) << e;
  }
}

TEST(Aggregates, WeightsAndSuperposition) {
  const LossParts ones{1, 1, 1, 1, 0, 0, 0, 0};
  EXPECT_DOUBLE_EQ(loss_2d(ones), 19.0);
  EXPECT_DOUBLE_EQ(loss_overall(LossParts{}), 0.0);
  EXPECT_DOUBLE_EQ(loss_3d(LossParts{}), 0.0);

  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0, 3);
  for (int i = 0; i < 100; ++i) {
    const LossParts p{u(rng), u(rng), u(rng), u(rng), u(rng), u(rng), u(rng), u(rng)};
    const double l2 = 2 * p.cls + 5 * p.lrtb + 2 * p.giou + 10 * p.xy3d;
    const double l3 = p.size3d + p.orien + p.depth;
    EXPECT_NEAR(loss_2d(p), l2, 1e-12);
    EXPECT_NEAR(loss_3d(p), l3, 1e-12);
    EXPECT_NEAR(loss_overall(p), l2 + l3 + p.dmap, 1e-12);

    const LossParts q{u(rng), u(rng), u(rng), u(rng), u(rng), u(rng), u(rng), u(rng)};
    const LossParts sum{p.cls + q.cls,     p.lrtb + q.lrtb,   p.giou + q.giou,   p.xy3d + q.xy3d,
                        p.size3d + q.size3d, p.orien + q.orien, p.depth + q.depth, p.dmap + q.dmap};
    EXPECT_NEAR(loss_overall(sum), loss_overall(p) + loss_overall(q), 1e-12);
  }
  EXPECT_THROW(LossWeights({-1, 5, 2, 10}).validate(), Error);
  EXPECT_THROW(loss_overall(LossParts{NAN, 0, 0, 0, 0, 0, 0, 0}), Error);
}
