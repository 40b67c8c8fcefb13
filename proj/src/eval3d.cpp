#include "m3dvg/eval3d.hpp"

#include <algorithm>
#include <istream>
#include <thread>

#include "m3dvg/error.hpp"
#include "json_util.hpp"
#include "report_format.hpp"

namespace m3dvg::eval3d {

namespace {

using nlohmann::json;
using m3dvg::detail::number_field;
using m3dvg::detail::parse_json;

}  // namespace

void validate(const ScenarioRecord& r) {
  if (!(r.depth_m >= 0.0) || !std::isfinite(r.depth_m))
    throw Error(ErrorKind::DataError, "depth must be finite and non-negative");
  if (!(r.truncation >= 0.0 && r.truncation <= 1.0))
    throw Error(ErrorKind::DataError, "truncation must lie in [0, 1]");
  if (static_cast<int>(r.occlusion) > 2) throw Error(ErrorKind::DataError, "occlusion must be 0, 1 or 2");
  geometry::validate(r.gt);
  geometry::validate(r.pred);
}

std::string_view scenario_name(Scenario s) {
  switch (s) {
    case Scenario::overall: return "overall";
    case Scenario::unique: return "unique";
    case Scenario::multiple: return "multiple";
    case Scenario::near: return "near";
    case Scenario::medium: return "medium";
    case Scenario::far: return "far";
    case Scenario::easy: return "easy";
    case Scenario::moderate: return "moderate";
    case Scenario::hard: return "hard";
  }
  return "unknown";
}

Scenario depth_bucket(double depth_m) {
  if (depth_m < kNearLimit) return Scenario::near;
  if (depth_m < kMediumLimit) return Scenario::medium;
  return Scenario::far;
}

Scenario difficulty_bucket(Occlusion occlusion, double truncation) {
  if (occlusion == Occlusion::none && truncation < kEasyTruncation) return Scenario::easy;
  if (occlusion != Occlusion::severe && truncation < kModerateTruncation) return Scenario::moderate;
  return Scenario::hard;
}

std::array<Scenario, 4> bucket(const ScenarioRecord& r) {
  return {depth_bucket(r.depth_m), difficulty_bucket(r.occlusion, r.truncation),
          r.multiple ? Scenario::multiple : Scenario::unique, Scenario::overall};
}

double accuracy_at(std::span<const double> ious, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw Error(ErrorKind::InvalidArgument, "threshold must lie in (0, 1)");
  if (ious.empty()) throw Error(ErrorKind::EmptySet, "no records to evaluate");
  const auto hits = std::count_if(ious.begin(), ious.end(), [tau](double v) { return v >= tau; });
  return static_cast<double>(hits) / static_cast<double>(ious.size());
}

double accuracy_at(std::span<const ScenarioRecord> records, double tau) {
  if (records.empty()) throw Error(ErrorKind::EmptySet, "no records to evaluate");
  const std::vector<double> ious = record_ious(records);
  return accuracy_at(ious, tau);
}

std::vector<double> record_ious(std::span<const ScenarioRecord> records, unsigned jobs) {
  jobs = std::max(1U, jobs);
  std::vector<double> ious(records.size());
  auto work = [&](std::size_t worker) {
    for (std::size_t i = worker; i < records.size(); i += jobs)
      ious[i] = geometry::iou3d(records[i].gt, records[i].pred);
  };
  if (jobs == 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < jobs; ++w) pool.emplace_back(work, w);
  }
  return ious;
}

ScenarioReport scenario_report(std::span<const ScenarioRecord> records, std::span<const double> thresholds,
                               unsigned jobs) {
  if (records.empty()) throw Error(ErrorKind::EmptySet, "no records to evaluate");
  for (double tau : thresholds)
    if (!(tau > 0.0 && tau < 1.0)) throw Error(ErrorKind::InvalidArgument, "threshold must lie in (0, 1)");

  const std::vector<double> ious = record_ious(records, jobs);
  ScenarioReport report;
  report.thresholds.assign(thresholds.begin(), thresholds.end());
  std::vector<std::vector<std::size_t>> hits(kAllScenarios.size(),
                                             std::vector<std::size_t>(thresholds.size(), 0));
  report.rows.resize(kAllScenarios.size());
  for (std::size_t s = 0; s < kAllScenarios.size(); ++s) report.rows[s].scenario = kAllScenarios[s];

  for (std::size_t i = 0; i < records.size(); ++i) {
    for (Scenario s : bucket(records[i])) {
      const auto k = static_cast<std::size_t>(s);
      ++report.rows[k].count;
      for (std::size_t t = 0; t < thresholds.size(); ++t) hits[k][t] += ious[i] >= thresholds[t];
    }
  }
  for (std::size_t k = 0; k < report.rows.size(); ++k) {
    BucketRow& row = report.rows[k];
    row.accuracy.resize(thresholds.size());
    if (row.absent()) continue;
    for (std::size_t t = 0; t < thresholds.size(); ++t)
      row.accuracy[t] = static_cast<double>(hits[k][t]) / static_cast<double>(row.count);
  }
  return report;
}

ScenarioReport scenario_report(std::span<const ScenarioRecord> records, unsigned jobs) {
  constexpr std::array<double, 2> kDefault = {0.25, 0.5};
  return scenario_report(records, kDefault, jobs);
}

Box3d parse_box(std::string_view json_text) { return m3dvg::detail::box3d_from(parse_json(json_text), "3D"); }

std::string box_json(const Box3d& b) {
  nlohmann::ordered_json j;
  j["center"] = {b.center(0), b.center(1), b.center(2)};
  j["dims"] = {b.dims(0), b.dims(1), b.dims(2)};
  j["yaw"] = b.yaw;
  return j.dump();
}

ScenarioRecord parse_record_line(std::string_view line) {
  const json j = parse_json(line);
  if (!j.is_object()) throw Error(ErrorKind::FormatError, "record is not an object");
  ScenarioRecord r;
  const auto id = j.find("id");
  if (id == j.end() || !id->is_string()) throw Error(ErrorKind::FormatError, "record lacks a string \"id\"");
  r.id = id->get<std::string>();
  try {
    const auto gt = j.find("gt");
    const auto pred = j.find("pred");
    if (gt == j.end() || pred == j.end()) throw Error(ErrorKind::FormatError, "record needs \"gt\" and \"pred\"");
    r.gt = m3dvg::detail::box3d_from(*gt, "gt");
    r.pred = m3dvg::detail::box3d_from(*pred, "pred");
    r.depth_m = number_field(j, "depth");
    const auto occ = j.find("occlusion");
    if (occ == j.end() || !occ->is_number_integer())
      throw Error(ErrorKind::FormatError, "\"occlusion\" must be 0, 1 or 2");
    const auto level = occ->get<std::int64_t>();
    if (level < 0 || level > 2) throw Error(ErrorKind::DataError, "\"occlusion\" must be 0, 1 or 2");
    r.occlusion = static_cast<Occlusion>(level);
    r.truncation = number_field(j, "truncation");
    const auto multi = j.find("multiple");
    if (multi == j.end() || !multi->is_boolean())
      throw Error(ErrorKind::FormatError, "\"multiple\" must be a boolean");
    r.multiple = multi->get<bool>();
    validate(r);
  } catch (const Error& e) {
    throw Error(e.kind(), "record " + r.id + ": " + e.what());
  }
  return r;
}

std::vector<ScenarioRecord> read_records(std::istream& in) {
  std::vector<ScenarioRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(parse_record_line(line));
    } catch (const Error& e) {
      throw Error(e.kind(), "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::string report_json(const ScenarioReport& r) {
  nlohmann::ordered_json j;
  j["thresholds"] = r.thresholds;
  auto rows = nlohmann::ordered_json::array();
  for (const BucketRow& row : r.rows) {
    nlohmann::ordered_json o;
    o["scenario"] = scenario_name(row.scenario);
    o["count"] = row.count;
    o["absent"] = row.absent();
    auto acc = nlohmann::ordered_json::array();
    for (const auto& a : row.accuracy) acc.push_back(a ? nlohmann::ordered_json(*a) : nullptr);
    o["accuracy"] = std::move(acc);
    rows.push_back(std::move(o));
  }
  j["rows"] = std::move(rows);
  return j.dump(2);
}

std::string report_csv(const ScenarioReport& r) {
  std::string out = "scenario,count";
  for (double tau : r.thresholds) out += ",acc@" + m3dvg::detail::format_double(tau);
  out += '\n';
  for (const BucketRow& row : r.rows) {
    out += scenario_name(row.scenario);
    out += ',' + std::to_string(row.count);
    for (const auto& a : row.accuracy) {
      out += ',';
      if (a) out += m3dvg::detail::format_double(*a);
    }
    out += '\n';
  }
  return out;
}

}  // namespace m3dvg::eval3d
