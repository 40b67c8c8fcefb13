#include "m3dvg/loss_records.hpp"

#include <array>

#include "json_util.hpp"

namespace m3dvg::losses {

namespace {

using m3dvg::detail::box2d_from;
using m3dvg::detail::box3d_from;
using m3dvg::detail::field;
using m3dvg::detail::json;
using m3dvg::detail::number_field;
using m3dvg::detail::numbers_field;

constexpr std::array<const char*, 8> kPartNames = {"cls", "lrtb", "giou", "xy3d", "size3d", "orien", "depth", "dmap"};

std::size_t index_field(const json& j, const char* key) {
  const json& v = field(j, key);
  if (!v.is_number_unsigned()) throw Error(ErrorKind::FormatError, std::string("\"") + key + "\" must be a non-negative integer");
  return v.get<std::size_t>();
}

LossRecord::Vectors vectors(const json& j) {
  return {numbers_field(j, "pred"), numbers_field(j, "target")};
}

std::array<double, 8> as_array(const LossParts& p) {
  return {p.cls, p.lrtb, p.giou, p.xy3d, p.size3d, p.orien, p.depth, p.dmap};
}

}  // namespace

LossRecord parse_loss_record(std::string_view line) {
  const json j = m3dvg::detail::parse_json(line);
  if (!j.is_object()) throw Error(ErrorKind::FormatError, "record is not an object");
  const json& id = field(j, "id");
  if (!id.is_string()) throw Error(ErrorKind::FormatError, "\"id\" must be a string");
  LossRecord r;
  r.id = id.get<std::string>();
  try {
    if (j.contains("cls")) {
      const json& c = j["cls"];
      r.cls = LossRecord::Classification{numbers_field(c, "probs"), index_field(c, "target")};
    }
    if (j.contains("lrtb")) r.lrtb = vectors(j["lrtb"]);
    if (j.contains("xy3d")) r.xy3d = vectors(j["xy3d"]);
    if (j.contains("box2d")) {
      const json& b = j["box2d"];
      r.box2d = LossRecord::Boxes2D{box2d_from(field(b, "pred"), "pred"), box2d_from(field(b, "target"), "target")};
    }
    if (j.contains("box3d")) {
      const json& b = j["box3d"];
      r.box3d = LossRecord::Boxes3D{box3d_from(field(b, "pred"), "pred"), box3d_from(field(b, "target"), "target")};
    }
    if (j.contains("orientation")) {
      const json& o = j["orientation"];
      r.orientation = LossRecord::Orientation{numbers_field(o, "logits"), numbers_field(o, "residuals"),
                                              number_field(o, "yaw")};
    }
    if (j.contains("depth")) {
      const json& d = j["depth"];
      r.depth = LossRecord::Depth{number_field(d, "pred"), number_field(d, "log_scale"), number_field(d, "target")};
    }
    if (j.contains("dmap")) {
      const json& d = j["dmap"];
      const json& probs = field(d, "probs");
      if (!probs.is_array() || probs.empty()) throw Error(ErrorKind::FormatError, "\"probs\" must be a non-empty array of rows");
      LossRecord::DepthMap m;
      const std::size_t bins = m3dvg::detail::numbers(probs[0], "probs").size();
      m.probabilities.resize(static_cast<Eigen::Index>(probs.size()), static_cast<Eigen::Index>(bins));
      for (std::size_t p = 0; p < probs.size(); ++p) {
        const auto row = m3dvg::detail::numbers(probs[p], "probs");
        if (row.size() != bins) throw Error(ErrorKind::ShapeMismatch, "depth-map rows differ in length");
        for (std::size_t k = 0; k < bins; ++k) m.probabilities(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(k)) = row[k];
      }
      const json& targets = field(d, "targets");
      if (!targets.is_array()) throw Error(ErrorKind::FormatError, "\"targets\" must be an array");
      for (const json& t : targets) {
        if (!t.is_number_unsigned()) throw Error(ErrorKind::FormatError, "\"targets\" must hold non-negative integers");
        m.targets.push_back(t.get<std::size_t>());
      }
      r.dmap = std::move(m);
    }
  } catch (const Error& e) {
    throw Error(e.kind(), "record " + r.id + ": " + e.what());
  }
  return r;
}

RecordLosses evaluate(const LossRecord& r, const LossWeights& w, std::size_t orientation_bins) {
  RecordLosses out;
  out.id = r.id;
  LossParts& p = out.parts;
  try {
    if (r.cls) p.cls = focal_loss(r.cls->probabilities, r.cls->target);
    if (r.lrtb) p.lrtb = l1_loss(r.lrtb->pred, r.lrtb->target);
    if (r.box2d) p.giou = giou_loss(r.box2d->pred, r.box2d->target);
    if (r.xy3d) p.xy3d = l1_loss(r.xy3d->pred, r.xy3d->target);
    if (r.box3d) p.size3d = size3d_loss(r.box3d->pred, r.box3d->target);
    if (r.orientation) {
      if (r.orientation->bin_logits.size() != orientation_bins)
        throw Error(ErrorKind::ShapeMismatch, "expected " + std::to_string(orientation_bins) + " orientation bins");
      p.orien = multibin_loss(r.orientation->bin_logits, r.orientation->residuals,
                              encode_orientation(r.orientation->yaw, orientation_bins));
    }
    if (r.depth) p.depth = laplacian_depth_loss(r.depth->pred, r.depth->log_scale, r.depth->target);
    if (r.dmap) p.dmap = depth_map_focal(r.dmap->probabilities, r.dmap->targets);
    out.l2d = loss_2d(p, w);
    out.l3d = loss_3d(p);
    out.overall = loss_overall(p, w);
  } catch (const Error& e) {
    throw Error(e.kind(), "record " + r.id + ": " + e.what());
  }
  out.present = {r.cls.has_value(), r.lrtb.has_value(), r.box2d.has_value(), r.xy3d.has_value(),
                 r.box3d.has_value(), r.orientation.has_value(), r.depth.has_value(), r.dmap.has_value()};
  return out;
}

std::string loss_report_json(const std::vector<RecordLosses>& rows) {
  nlohmann::ordered_json j;
  auto records = nlohmann::ordered_json::array();
  std::array<double, 8> sums{};
  std::array<std::size_t, 8> counts{};
  double sum_2d = 0.0, sum_3d = 0.0, sum_all = 0.0;
  for (const RecordLosses& r : rows) {
    nlohmann::ordered_json o;
    o["id"] = r.id;
    const auto parts = as_array(r.parts);
    for (std::size_t k = 0; k < parts.size(); ++k) {
      if (r.present[k]) {
        o[kPartNames[k]] = parts[k];
        sums[k] += parts[k];
        ++counts[k];
      } else {
        o[kPartNames[k]] = nullptr;
      }
    }
    o["loss_2d"] = r.l2d;
    o["loss_3d"] = r.l3d;
    o["loss_overall"] = r.overall;
    sum_2d += r.l2d;
    sum_3d += r.l3d;
    sum_all += r.overall;
    records.push_back(std::move(o));
  }
  nlohmann::ordered_json mean;
  for (std::size_t k = 0; k < kPartNames.size(); ++k)
    mean[kPartNames[k]] = counts[k] ? nlohmann::ordered_json(sums[k] / static_cast<double>(counts[k])) : nullptr;
  const double n = static_cast<double>(rows.size());
  mean["loss_2d"] = rows.empty() ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(sum_2d / n);
  mean["loss_3d"] = rows.empty() ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(sum_3d / n);
  mean["loss_overall"] = rows.empty() ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(sum_all / n);
  j["n_records"] = rows.size();
  j["mean"] = std::move(mean);
  j["records"] = std::move(records);
  return j.dump(2);
}

}  // namespace m3dvg::losses
