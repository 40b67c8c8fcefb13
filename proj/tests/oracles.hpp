#pragma once

// Independent reference implementations used only by the tests.

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <regex>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "m3dvg/geometry.hpp"

namespace oracle {

struct Match {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::string numeral;
  std::string unit;       // singular, lowercase
  std::string attribute;  // lowercase, empty if none
  std::uint64_t micrometers = 0;
};

inline std::string lowercase(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

inline int unit_exponent(const std::string& unit) {
  if (unit == "kilometer") return 9;
  if (unit == "meter") return 6;
  if (unit == "decimeter") return 5;
  if (unit == "centimeter") return 4;
  return 3;
}

// Shifts the decimal point right by the unit exponent using string edits only.
inline std::optional<std::uint64_t> micrometers(const std::string& numeral, const std::string& unit) {
  std::string whole = numeral, frac;
  if (const auto dot = numeral.find('.'); dot != std::string::npos) {
    whole = numeral.substr(0, dot);
    frac = numeral.substr(dot + 1);
  }
  const int e = unit_exponent(unit);
  while (!frac.empty() && frac.back() == '0') frac.pop_back();
  if (static_cast<int>(frac.size()) > e) return std::nullopt;
  std::string digits = whole + frac + std::string(static_cast<std::size_t>(e) - frac.size(), '0');
  digits.erase(0, std::min(digits.find_first_not_of('0'), digits.size() - 1));
  if (digits.size() > 19) return std::nullopt;
  if (digits.size() == 19 && digits > "18446744073709551615") return std::nullopt;
  return std::stoull(digits);
}

// Regex form of the descriptor grammar with a manual left-boundary check.
inline std::vector<Match> scan(const std::string& text) {
  static const std::regex re(
      R"((\d+(?:\.\d+)?)( |-)(kilometer|meter|decimeter|centimeter|millimeter)s?(?:-(depth|height|length|width)(?![0-9]))?(?![A-Za-z0-9]))",
      std::regex::icase);
  std::vector<Match> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::smatch m;
    const auto first = text.begin() + static_cast<std::ptrdiff_t>(pos);
    if (!std::regex_search(first, text.end(), m, re)) break;
    const std::size_t begin = pos + static_cast<std::size_t>(m.position(0));
    const char prev = begin == 0 ? ' ' : text[begin - 1];
    const bool boundary = !(std::isalnum(static_cast<unsigned char>(prev)) || prev == '.' || prev == ',' ||
                            prev == '-' || prev == '_');
    // Attributes only attach to the hyphen form.
    std::size_t end = begin + static_cast<std::size_t>(m.length(0));
    std::string attribute = m[4].matched ? lowercase(m[4].str()) : "";
    if (m[2].str() == " " && m[4].matched) {
      end -= static_cast<std::size_t>(m.length(4)) + 1;
      attribute.clear();
    }
    const std::string unit = lowercase(m[3].str());
    const auto um = boundary ? micrometers(m[1].str(), unit) : std::nullopt;
    if (!boundary || !um) {
      // Skip the whole digit run, as a scanner would.
      std::size_t next = begin;
      while (next < text.size() && std::isdigit(static_cast<unsigned char>(text[next]))) ++next;
      pos = std::max(next, begin + 1);
      continue;
    }
    out.push_back({begin, end, m[1].str(), unit, attribute, *um});
    pos = end;
  }
  return out;
}

// --- 3D IoU by point sampling --------------------------------------------------

inline bool inside(const m3dvg::geometry::Box3d& b, const Eigen::Vector3d& p) {
  const Eigen::Vector3d d = p - b.center;
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  // Inverse of the rotation about the vertical axis: local = R^T d.
  const double along_length = c * d.x() - s * d.z();
  const double along_width = s * d.x() + c * d.z();
  return std::abs(along_length) <= b.length() / 2 && std::abs(along_width) <= b.width() / 2 &&
         std::abs(d.y()) <= b.height() / 2;
}

inline Eigen::Vector3d half_extent(const m3dvg::geometry::Box3d& b) {
  const double c = std::abs(std::cos(b.yaw)), s = std::abs(std::sin(b.yaw));
  return {c * b.length() / 2 + s * b.width() / 2, b.height() / 2, s * b.length() / 2 + c * b.width() / 2};
}

inline double monte_carlo_iou(const m3dvg::geometry::Box3d& a, const m3dvg::geometry::Box3d& b,
                              std::size_t samples, std::uint64_t seed) {
  const Eigen::Vector3d lo = (a.center - half_extent(a)).cwiseMin(b.center - half_extent(b));
  const Eigen::Vector3d hi = (a.center + half_extent(a)).cwiseMax(b.center + half_extent(b));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::size_t in_a = 0, in_b = 0, both = 0;
  for (std::size_t i = 0; i < samples; ++i) {
    const Eigen::Vector3d p = lo + (hi - lo).cwiseProduct(Eigen::Vector3d(u(rng), u(rng), u(rng)));
    const bool ia = inside(a, p), ib = inside(b, p);
    in_a += ia;
    in_b += ib;
    both += ia && ib;
  }
  const std::size_t uni = in_a + in_b - both;
  return uni == 0 ? 0.0 : static_cast<double>(both) / static_cast<double>(uni);
}

inline m3dvg::geometry::Box3d random_box(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  m3dvg::geometry::Box3d b;
  b.center = {-3 + 6 * u(rng), -1 + 2 * u(rng), 10 + 20 * u(rng)};
  b.dims = {0.5 + 2.5 * u(rng), 0.5 + 2.5 * u(rng), 0.5 + 4.5 * u(rng)};
  b.yaw = -M_PI + 2 * M_PI * u(rng);
  return b;
}

// A second box overlapping `a` most of the time.
inline m3dvg::geometry::Box3d nearby_box(const m3dvg::geometry::Box3d& a, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  m3dvg::geometry::Box3d b = a;
  b.center += Eigen::Vector3d(u(rng) * a.width(), u(rng) * a.height() / 2, u(rng) * a.length() / 2);
  b.dims = a.dims.cwiseProduct(Eigen::Vector3d(1 + 0.4 * u(rng), 1 + 0.4 * u(rng), 1 + 0.4 * u(rng)));
  b.yaw = m3dvg::geometry::normalize_yaw(a.yaw + 1.5 * u(rng));
  return b;
}

}  // namespace oracle
