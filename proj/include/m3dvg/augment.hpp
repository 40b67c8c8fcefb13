#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "m3dvg/random.hpp"
#include "m3dvg/text3d.hpp"

namespace m3dvg::augment {

using text3d::Caption;
using text3d::DistanceDescriptor;
using text3d::LengthUnit;

enum class Plan : std::uint8_t {
  A,      // one draw per descriptor
  B,      // one draw per caption, shared by all descriptors
  Fixed,  // every descriptor to AugmentConfig::fixed_unit
};

struct AugmentConfig {
  std::vector<LengthUnit> unit_pool{LengthUnit::meter, LengthUnit::decimeter,
                                    LengthUnit::centimeter};
  Plan plan = Plan::A;
  LengthUnit fixed_unit = LengthUnit::millimeter;
  std::uint64_t seed = 0;

  /// Throws Error{InvalidArgument} on an empty pool or duplicate units.
  void validate() const;
};

struct UnitMapping {
  std::size_t index = 0;
  LengthUnit source = LengthUnit::meter;
  LengthUnit target = LengthUnit::meter;

  friend bool operator==(const UnitMapping&, const UnitMapping&) = default;
};

struct AugmentedCaption {
  std::string source_id;
  std::string text;
  std::vector<UnitMapping> mapping;
};

/// Counter-based random stream keyed by (seed, caption id, slot). Two
/// streams with the same key produce the same sequence regardless of
/// scheduling, so corpus runs are reproducible under any parallelism.
class KeyedStream {
 public:
  static constexpr std::uint64_t kCaptionSlot = ~std::uint64_t{0};

  KeyedStream(std::uint64_t seed, std::string_view caption_id, std::uint64_t slot);

  std::uint64_t next();
  /// Unbiased draw from [0, n).
  std::size_t uniform_index(std::size_t n);

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// Same physical length, new unit. The returned span still refers to the
/// source caption. Mapping to the descriptor's own unit returns it untouched.
DistanceDescriptor remap_descriptor(const DistanceDescriptor& d, LengthUnit target);

AugmentedCaption augment_plan_a(const Caption& c, const AugmentConfig& cfg);
AugmentedCaption augment_plan_b(const Caption& c, const AugmentConfig& cfg);
AugmentedCaption remap_fixed(const Caption& c, LengthUnit unit);

/// Dispatches on cfg.plan.
AugmentedCaption augment(const Caption& c, const AugmentConfig& cfg);

/// Rewrites `c` with one explicit target unit per descriptor.
AugmentedCaption apply_targets(const Caption& c, const std::vector<LengthUnit>& targets);

// --- caption corpora (JSON lines) ---------------------------------------

/// Parses {"id": string, "text": string}. Throws Error{FormatError}.
Caption parse_caption_line(std::string_view line);

/// {"id", "text", "mapping": [[idx, "meter", "centimeter"], ...]} without newline.
std::string to_json_line(const AugmentedCaption& a);

struct RecordError {
  std::size_t line = 0;  // 1-based input line
  std::string id;        // empty when the record could not be parsed
  std::string message;
};

struct CorpusStats {
  std::size_t records = 0;
  std::size_t written = 0;
  std::vector<RecordError> errors;
};

using CaptionTransform = std::function<AugmentedCaption(const Caption&)>;

/// Streams caption JSONL through `transform`, writing one line per
/// successful record in input order. Failing records are reported in the
/// returned stats and skipped. Output is identical for any `jobs`.
CorpusStats transform_corpus(std::istream& in, std::ostream& out, const CaptionTransform& transform,
                             unsigned jobs = 1);

CorpusStats augment_corpus(std::istream& in, std::ostream& out, const AugmentConfig& cfg,
                           unsigned jobs = 1);

}  // namespace m3dvg::augment
