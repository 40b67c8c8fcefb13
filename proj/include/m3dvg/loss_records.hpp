#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "m3dvg/losses.hpp"

namespace m3dvg::losses {

/// One prediction/target record. Every term is optional; a missing term
/// contributes zero to the aggregates and is reported as null.
struct LossRecord {
  struct Classification {
    std::vector<double> probabilities;
    std::size_t target = 0;
  };
  struct Vectors {
    std::vector<double> pred;
    std::vector<double> target;
  };
  struct Boxes2D {
    Box2D pred;
    Box2D target;
  };
  struct Boxes3D {
    Box3d pred;
    Box3d target;
  };
  struct Orientation {
    std::vector<double> bin_logits;
    std::vector<double> residuals;
    double yaw = 0.0;  // ground truth
  };
  struct Depth {
    double pred = 0.0;
    double log_scale = 0.0;
    double target = 0.0;
  };
  struct DepthMap {
    Eigen::MatrixXd probabilities;  // pixels x bins
    std::vector<std::size_t> targets;
  };

  std::string id;
  std::optional<Classification> cls;
  std::optional<Vectors> lrtb;
  std::optional<Boxes2D> box2d;
  std::optional<Vectors> xy3d;
  std::optional<Boxes3D> box3d;
  std::optional<Orientation> orientation;
  std::optional<Depth> depth;
  std::optional<DepthMap> dmap;
};

/// Schema (all terms optional):
///   {"id": s,
///    "cls": {"probs": [...], "target": k},
///    "lrtb": {"pred": [...], "target": [...]},
///    "box2d": {"pred": [x0, y0, x1, y1], "target": [...]},
///    "xy3d": {"pred": [...], "target": [...]},
///    "box3d": {"pred": box, "target": box},
///    "orientation": {"logits": [...], "residuals": [...], "yaw": r},
///    "depth": {"pred": d, "log_scale": s, "target": d*},
///    "dmap": {"probs": [[...], ...], "targets": [...]}}
/// with box = {"center": [x, y, z], "dims": [w, h, l], "yaw": r}.
LossRecord parse_loss_record(std::string_view line);

struct RecordLosses {
  std::string id;
  LossParts parts;
  std::vector<bool> present;  // per LossParts field, declaration order
  double l2d = 0.0;
  double l3d = 0.0;
  double overall = 0.0;
};

RecordLosses evaluate(const LossRecord& r, const LossWeights& w = {}, std::size_t orientation_bins = kDefaultOrientationBins);

/// Per-record rows and the mean of every component over records.
std::string loss_report_json(const std::vector<RecordLosses>& rows);

}  // namespace m3dvg::losses
