#include "m3dvg/text3d.hpp"

#include <array>
#include <cctype>

#include "m3dvg/error.hpp"

namespace m3dvg::text3d {

namespace {

constexpr std::array<LengthUnit, 5> kAllUnits = {LengthUnit::kilometer, LengthUnit::meter,
                                                 LengthUnit::decimeter, LengthUnit::centimeter,
                                                 LengthUnit::millimeter};

constexpr int kMaxRenderedFraction = 6;

bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_alpha(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }
bool is_alnum(char c) { return is_digit(c) || is_alpha(c); }
char lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

bool iequals(std::string_view a, std::string_view b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (lower(a[i]) != lower(b[i])) return false;
  return true;
}

// A numeral may not continue another token: "v2", "1,000", "-5" and "1.2.3" never start one.
bool can_start_numeral(std::string_view text, std::size_t pos) {
  if (pos == 0) return true;
  const char prev = text[pos - 1];
  return !(is_alnum(prev) || prev == '.' || prev == ',' || prev == '-' || prev == '_');
}

std::size_t alpha_run_end(std::string_view text, std::size_t pos) {
  while (pos < text.size() && is_alpha(text[pos])) ++pos;
  return pos;
}

// Full unit words only; symbols are accepted by parse_unit() but never matched in prose.
std::optional<LengthUnit> match_unit_word(std::string_view word) {
  for (LengthUnit u : kAllUnits) {
    const std::string_view name = unit_name(u);
    if (iequals(word, name)) return u;
    if (word.size() == name.size() + 1 && lower(word.back()) == 's' &&
        iequals(word.substr(0, name.size()), name))
      return u;
  }
  return std::nullopt;
}

Attribute match_attribute(std::string_view word) {
  for (Attribute a : {Attribute::depth, Attribute::height, Attribute::length, Attribute::width})
    if (iequals(word, attribute_name(a))) return a;
  return Attribute::none;
}

std::uint64_t pow10(int e) {
  std::uint64_t r = 1;
  while (e-- > 0) r *= 10;
  return r;
}

}  // namespace

int decimal_exponent(LengthUnit u) {
  switch (u) {
    case LengthUnit::kilometer: return 9;
    case LengthUnit::meter: return 6;
    case LengthUnit::decimeter: return 5;
    case LengthUnit::centimeter: return 4;
    case LengthUnit::millimeter: return 3;
  }
  return 0;
}

std::string_view unit_name(LengthUnit u) {
  switch (u) {
    case LengthUnit::kilometer: return "kilometer";
    case LengthUnit::meter: return "meter";
    case LengthUnit::decimeter: return "decimeter";
    case LengthUnit::centimeter: return "centimeter";
    case LengthUnit::millimeter: return "millimeter";
  }
  return "";
}

std::optional<LengthUnit> parse_unit(std::string_view word) {
  static constexpr std::array<std::pair<std::string_view, LengthUnit>, 5> kSymbols = {{
      {"km", LengthUnit::kilometer},
      {"m", LengthUnit::meter},
      {"dm", LengthUnit::decimeter},
      {"cm", LengthUnit::centimeter},
      {"mm", LengthUnit::millimeter},
  }};
  for (const auto& [symbol, unit] : kSymbols)
    if (iequals(word, symbol)) return unit;
  return match_unit_word(word);
}

std::string_view attribute_name(Attribute a) {
  switch (a) {
    case Attribute::none: return "";
    case Attribute::depth: return "depth";
    case Attribute::height: return "height";
    case Attribute::length: return "length";
    case Attribute::width: return "width";
  }
  return "";
}

PhysicalLength to_canonical(std::string_view value_text, LengthUnit unit) {
  const std::size_t dot = value_text.find('.');
  const std::string_view int_part = value_text.substr(0, dot);
  std::string_view frac_part =
      dot == std::string_view::npos ? std::string_view{} : value_text.substr(dot + 1);

  auto all_digits = [](std::string_view s) {
    for (char c : s)
      if (!is_digit(c)) return false;
    return true;
  };
  if (int_part.empty() || !all_digits(int_part) || !all_digits(frac_part) ||
      (dot != std::string_view::npos && frac_part.empty()))
    throw Error(ErrorKind::InvalidArgument, "not a decimal numeral: '" + std::string(value_text) + "'");

  while (!frac_part.empty() && frac_part.back() == '0') frac_part.remove_suffix(1);

  const int exponent = decimal_exponent(unit);
  if (static_cast<int>(frac_part.size()) > exponent)
    throw Error(ErrorKind::NonRepresentable,
                std::string(value_text) + " " + std::string(unit_name(unit)) +
                    " needs sub-micrometer precision");

  const auto overflow = [&] {
    return Error(ErrorKind::NonRepresentable,
                 std::string(value_text) + " " + std::string(unit_name(unit)) + " is out of range");
  };

  std::uint64_t whole = 0;
  for (char c : int_part) {
    if (__builtin_mul_overflow(whole, 10ULL, &whole) ||
        __builtin_add_overflow(whole, static_cast<std::uint64_t>(c - '0'), &whole))
      throw overflow();
  }
  std::uint64_t frac = 0;
  for (char c : frac_part) frac = frac * 10 + static_cast<std::uint64_t>(c - '0');
  frac *= pow10(exponent - static_cast<int>(frac_part.size()));

  std::uint64_t total = 0;
  if (__builtin_mul_overflow(whole, micrometers_per(unit), &total) ||
      __builtin_add_overflow(total, frac, &total))
    throw overflow();
  return PhysicalLength{total};
}

std::string render_value(PhysicalLength length, LengthUnit unit) {
  const std::uint64_t factor = micrometers_per(unit);
  const int exponent = decimal_exponent(unit);
  std::string out = std::to_string(length.micrometers / factor);
  const std::uint64_t rem = length.micrometers % factor;
  if (rem == 0) return out;

  std::string frac = std::to_string(rem);
  frac.insert(0, static_cast<std::size_t>(exponent) - frac.size(), '0');
  while (frac.back() == '0') frac.pop_back();
  if (static_cast<int>(frac.size()) > kMaxRenderedFraction)
    throw Error(ErrorKind::NonRenderable,
                std::to_string(length.micrometers) + " um in " + std::string(unit_name(unit)) +
                    "s needs " + std::to_string(frac.size()) + " fractional digits");
  out += '.';
  out += frac;
  return out;
}

std::string render(PhysicalLength length, LengthUnit unit, DescriptorForm form, Attribute attribute) {
  std::string out = render_value(length, unit);
  out += form == DescriptorForm::spaced ? ' ' : '-';
  out += unit_name(unit);
  if (length.micrometers != micrometers_per(unit)) out += 's';
  if (form == DescriptorForm::hyphen_attribute && attribute != Attribute::none) {
    out += '-';
    out += attribute_name(attribute);
  }
  return out;
}

std::vector<DistanceDescriptor> scan_descriptors(std::string_view text) {
  std::vector<DistanceDescriptor> found;
  std::size_t i = 0;
  while (i < text.size()) {
    if (!is_digit(text[i]) || !can_start_numeral(text, i)) {
      ++i;
      continue;
    }
    const std::size_t start = i;
    std::size_t pos = i;
    while (pos < text.size() && is_digit(text[pos])) ++pos;
    if (pos + 1 < text.size() && text[pos] == '.' && is_digit(text[pos + 1])) {
      ++pos;
      while (pos < text.size() && is_digit(text[pos])) ++pos;
    }
    const std::size_t numeral_end = pos;
    i = numeral_end;

    if (pos >= text.size() || (text[pos] != ' ' && text[pos] != '-')) continue;
    const DescriptorForm form =
        text[pos] == ' ' ? DescriptorForm::spaced : DescriptorForm::hyphen_attribute;
    const std::size_t word_begin = pos + 1;
    const std::size_t word_end = alpha_run_end(text, word_begin);
    if (word_end == word_begin || (word_end < text.size() && is_digit(text[word_end]))) continue;
    const auto unit = match_unit_word(text.substr(word_begin, word_end - word_begin));
    if (!unit) continue;

    std::size_t end = word_end;
    Attribute attribute = Attribute::none;
    if (form == DescriptorForm::hyphen_attribute && end < text.size() && text[end] == '-') {
      const std::size_t attr_end = alpha_run_end(text, end + 1);
      // "1.8-meters-height2" carries no attribute; the bare hyphen form still matches.
      if (attr_end == text.size() || !is_digit(text[attr_end])) {
        attribute = match_attribute(text.substr(end + 1, attr_end - end - 1));
        if (attribute != Attribute::none) end = attr_end;
      }
    }

    DistanceDescriptor d;
    d.span = Span{start, end};
    d.value_text = std::string(text.substr(start, numeral_end - start));
    d.unit = *unit;
    d.form = form;
    d.attribute = attribute;
    try {
      d.length = to_canonical(d.value_text, d.unit);
    } catch (const Error&) {
      continue;
    }
    found.push_back(std::move(d));
    i = end;
  }
  return found;
}

Caption make_caption(std::string id, std::string text) {
  Caption c{std::move(id), std::move(text), {}};
  c.descriptors = scan_descriptors(c.text);
  return c;
}

std::string splice(std::string_view text, const std::vector<DistanceDescriptor>& originals,
                   const std::vector<std::string>& replacements) {
  if (originals.size() != replacements.size())
    throw Error(ErrorKind::InvalidArgument, "splice: descriptor and replacement counts differ");
  std::string out;
  out.reserve(text.size() + 16 * replacements.size());
  std::size_t cursor = 0;
  for (std::size_t k = 0; k < originals.size(); ++k) {
    const Span s = originals[k].span;
    if (s.begin < cursor || s.end > text.size())
      throw Error(ErrorKind::InvalidArgument, "splice: spans overlap or exceed the text");
    out.append(text.substr(cursor, s.begin - cursor));
    out += replacements[k];
    cursor = s.end;
  }
  out.append(text.substr(cursor));
  return out;
}

}  // namespace m3dvg::text3d
