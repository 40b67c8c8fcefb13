#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "m3dvg/embedio.hpp"
#include "m3dvg/error.hpp"

namespace m3dvg::similarity {

namespace detail {

template <typename DerivedA, typename DerivedB>
void check_shapes(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b,
                  std::span<const std::uint8_t> mask) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw Error(ErrorKind::ShapeMismatch,
                std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " vs " +
                    std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  if (static_cast<Eigen::Index>(mask.size()) != a.rows())
    throw Error(ErrorKind::ShapeMismatch, "mask length differs from token count");
}

inline Eigen::Index count_valid(std::span<const std::uint8_t> mask) {
  Eigen::Index n = 0;
  for (std::uint8_t m : mask) n += (m != 0);
  if (n == 0) throw Error(ErrorKind::DataError, "empty mask");
  return n;
}

}  // namespace detail

/// Masked Euclidean similarity: one minus the mean, over tokens whose mask
/// flag is set, of the L2 distance between corresponding rows. Padding rows
/// never enter the sum or the count. Not bounded below.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar euclidean_similarity(const Eigen::MatrixBase<DerivedA>& a,
                                               const Eigen::MatrixBase<DerivedB>& b,
                                               std::span<const std::uint8_t> mask) {
  using Scalar = typename DerivedA::Scalar;
  detail::check_shapes(a, b, mask);
  const Eigen::Index valid = detail::count_valid(mask);
  Scalar total(0);
  for (Eigen::Index t = 0; t < a.rows(); ++t)
    if (mask[t]) total += (a.row(t) - b.row(t)).norm();
  return Scalar(1) - total / Scalar(valid);
}

/// Masked cosine similarity: mean over valid tokens of the cosine between
/// corresponding rows. Throws Error{ZeroNormRow} if a valid row is zero.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar cosine_similarity(const Eigen::MatrixBase<DerivedA>& a,
                                            const Eigen::MatrixBase<DerivedB>& b,
                                            std::span<const std::uint8_t> mask) {
  using Scalar = typename DerivedA::Scalar;
  detail::check_shapes(a, b, mask);
  const Eigen::Index valid = detail::count_valid(mask);
  Scalar total(0);
  for (Eigen::Index t = 0; t < a.rows(); ++t) {
    if (!mask[t]) continue;
    const Scalar na = a.row(t).norm();
    const Scalar nb = b.row(t).norm();
    if (na == Scalar(0) || nb == Scalar(0))
      throw Error(ErrorKind::ZeroNormRow, "token " + std::to_string(t) + " has a zero-norm row");
    total += a.row(t).dot(b.row(t)) / (na * nb);
  }
  return total / Scalar(valid);
}

/// Scales each row to unit L2 norm; zero rows are left as they are.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> normalize_rows(
    const Eigen::MatrixBase<Derived>& x) {
  Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> out = x;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const auto n = out.row(r).norm();
    if (n > 0) out.row(r) /= n;
  }
  return out;
}

struct Options {
  bool normalize_rows = false;
  unsigned jobs = 1;
};

/// Bundle overloads: shapes must agree and masks must be identical.
double euclidean_similarity(const embedio::EmbeddingBundle& a, const embedio::EmbeddingBundle& b,
                            const Options& opts = {});
double cosine_similarity(const embedio::EmbeddingBundle& a, const embedio::EmbeddingBundle& b,
                         const Options& opts = {});

struct ManifestEntry {
  std::string id;
  std::filesystem::path original;
  std::filesystem::path augmented;
};

/// Paired-corpus manifest, JSONL {"id", "original", "augmented"}. Relative
/// paths resolve against `base_dir`.
std::vector<ManifestEntry> read_manifest(std::istream& in, const std::filesystem::path& base_dir);
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& manifest_path);

struct PairRecord {
  std::string id;
  std::optional<double> euclidean;
  std::optional<double> cosine;
  std::string error;  // non-empty iff the pair failed

  bool ok() const { return error.empty(); }
};

struct SimilarityReport {
  std::size_t n_pairs = 0;  // pairs that scored
  std::size_t n_failed = 0;
  std::optional<double> mean_euclidean;  // absent when n_pairs == 0
  std::optional<double> mean_cosine;
  std::vector<PairRecord> pairs;  // sorted by id
};

SimilarityReport corpus_similarity(const std::vector<ManifestEntry>& manifest, const Options& opts = {});

std::string report_json(const SimilarityReport& r);
std::string report_csv(const SimilarityReport& r);

}  // namespace m3dvg::similarity
