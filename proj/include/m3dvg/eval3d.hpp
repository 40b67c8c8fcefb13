#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "m3dvg/geometry.hpp"

namespace m3dvg::eval3d {

using geometry::Box3d;

enum class Occlusion : std::uint8_t { none = 0, partial = 1, severe = 2 };

struct ScenarioRecord {
  std::string id;
  Box3d gt;
  Box3d pred;
  double depth_m = 0.0;
  Occlusion occlusion = Occlusion::none;
  double truncation = 0.0;
  bool multiple = false;
};

/// Throws Error{DataError} on negative depth or truncation outside [0, 1],
/// Error{DegenerateBox} on an invalid box.
void validate(const ScenarioRecord& r);

enum class Scenario : std::uint8_t { overall, unique, multiple, near, medium, far, easy, moderate, hard };

inline constexpr std::array<Scenario, 9> kAllScenarios = {
    Scenario::overall, Scenario::unique, Scenario::multiple, Scenario::near, Scenario::medium,
    Scenario::far,     Scenario::easy,   Scenario::moderate, Scenario::hard};

std::string_view scenario_name(Scenario s);

inline constexpr double kNearLimit = 15.0;
inline constexpr double kMediumLimit = 35.0;
inline constexpr double kEasyTruncation = 0.15;
inline constexpr double kModerateTruncation = 0.3;

Scenario depth_bucket(double depth_m);
Scenario difficulty_bucket(Occlusion occlusion, double truncation);

/// {depth bucket, difficulty bucket, ambiguity bucket, overall}.
std::array<Scenario, 4> bucket(const ScenarioRecord& r);

/// Fraction of IoUs at or above tau. Throws Error{EmptySet} on no input and
/// Error{InvalidArgument} unless 0 < tau < 1.
double accuracy_at(std::span<const double> ious, double tau);
double accuracy_at(std::span<const ScenarioRecord> records, double tau);

std::vector<double> record_ious(std::span<const ScenarioRecord> records, unsigned jobs = 1);

struct BucketRow {
  Scenario scenario = Scenario::overall;
  std::size_t count = 0;
  std::vector<std::optional<double>> accuracy;  // one per threshold; empty optional when count == 0

  bool absent() const { return count == 0; }
};

struct ScenarioReport {
  std::vector<double> thresholds;
  std::vector<BucketRow> rows;  // kAllScenarios order

  const BucketRow& row(Scenario s) const { return rows[static_cast<std::size_t>(s)]; }
};

ScenarioReport scenario_report(std::span<const ScenarioRecord> records,
                               std::span<const double> thresholds, unsigned jobs = 1);
ScenarioReport scenario_report(std::span<const ScenarioRecord> records, unsigned jobs = 1);

// --- record I/O --------------------------------------------------------------

/// {"center": [x, y, z], "dims": [w, h, l], "yaw": r}
Box3d parse_box(std::string_view json_text);
std::string box_json(const Box3d& b);

/// {"id", "gt", "pred", "depth", "occlusion": 0|1|2, "truncation", "multiple"}.
/// Throws Error{FormatError} or Error{DataError}.
ScenarioRecord parse_record_line(std::string_view line);

/// Reads every non-blank line. A failing record throws with its line number
/// and id in the message.
std::vector<ScenarioRecord> read_records(std::istream& in);

std::string report_json(const ScenarioReport& r);
/// scenario,count,acc@<tau>... with empty cells for absent buckets.
std::string report_csv(const ScenarioReport& r);

}  // namespace m3dvg::eval3d
