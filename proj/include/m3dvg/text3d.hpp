#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace m3dvg::text3d {

/// Decimal length units recognised inside captions.
enum class LengthUnit : std::uint8_t { kilometer, meter, decimeter, centimeter, millimeter };

/// Micrometers per unit. Every factor is an exact power of ten.
constexpr std::uint64_t micrometers_per(LengthUnit u) {
  switch (u) {
    case LengthUnit::kilometer: return 1'000'000'000ULL;
    case LengthUnit::meter: return 1'000'000ULL;
    case LengthUnit::decimeter: return 100'000ULL;
    case LengthUnit::centimeter: return 10'000ULL;
    case LengthUnit::millimeter: return 1'000ULL;
  }
  return 0;
}

/// Number of decimal digits in micrometers_per(u).
int decimal_exponent(LengthUnit u);

/// Singular unit word, e.g. "meter".
std::string_view unit_name(LengthUnit u);

/// Accepts singular names ("meter"), plurals ("meters") and the short
/// symbols km, m, dm, cm, mm. Case-insensitive.
std::optional<LengthUnit> parse_unit(std::string_view word);

/// Exact, unit-independent physical length.
struct PhysicalLength {
  std::uint64_t micrometers = 0;

  friend constexpr bool operator==(PhysicalLength, PhysicalLength) = default;
  friend constexpr auto operator<=>(PhysicalLength, PhysicalLength) = default;
};

enum class DescriptorForm : std::uint8_t {
  spaced,            // "10 meters"
  hyphen_attribute,  // "1.8-meters-height"
};

enum class Attribute : std::uint8_t { none, depth, height, length, width };

std::string_view attribute_name(Attribute a);

struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;  // one past the last byte

  std::size_t size() const { return end - begin; }
  friend bool operator==(Span, Span) = default;
};

struct DistanceDescriptor {
  Span span;
  std::string value_text;
  LengthUnit unit = LengthUnit::meter;
  PhysicalLength length;
  DescriptorForm form = DescriptorForm::spaced;
  Attribute attribute = Attribute::none;
};

struct Caption {
  std::string id;
  std::string text;
  std::vector<DistanceDescriptor> descriptors;
};

/// Finds every distance descriptor in `text`, ordered by span start.
/// Numerals that cannot be represented exactly are skipped.
std::vector<DistanceDescriptor> scan_descriptors(std::string_view text);

/// Builds a Caption with its descriptors already scanned.
Caption make_caption(std::string id, std::string text);

/// Exact micrometer count of `value_text` expressed in `unit`.
/// Throws Error{NonRepresentable} for sub-micrometer values or overflow.
PhysicalLength to_canonical(std::string_view value_text, LengthUnit unit);

/// Decimal numeral for `length` in `unit`: trailing zeros stripped, no
/// trailing point. Throws Error{NonRenderable} past 6 fractional digits.
std::string render_value(PhysicalLength length, LengthUnit unit);

/// Full descriptor text, e.g. "1000 centimeters" or "18-decimeters-height".
/// The unit word is plural unless the value is exactly one.
std::string render(PhysicalLength length, LengthUnit unit, DescriptorForm form,
                   Attribute attribute = Attribute::none);

inline std::string render(const DistanceDescriptor& d) {
  return render(d.length, d.unit, d.form, d.attribute);
}

/// Replaces each descriptor span of `text` with the matching entry of
/// `replacements`. Bytes outside the spans are copied unchanged.
std::string splice(std::string_view text, const std::vector<DistanceDescriptor>& originals,
                   const std::vector<std::string>& replacements);

}  // namespace m3dvg::text3d
