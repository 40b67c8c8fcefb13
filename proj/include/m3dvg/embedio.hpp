#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace m3dvg::embedio {

using FloatRows = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Per-token embeddings for one caption plus the token validity mask.
///
/// Values are held exactly as stored on disk (binary32) so that a
/// write/read cycle is bit-exact; features() widens them for the numeric core.
struct EmbeddingBundle {
  std::string caption_id;
  std::vector<std::uint8_t> mask;  // 1 = real token, 0 = padding
  FloatRows data;                  // n_tokens x dim

  Eigen::Index n_tokens() const { return data.rows(); }
  Eigen::Index dim() const { return data.cols(); }
  Eigen::Index valid_tokens() const;

  Eigen::MatrixXd features() const { return data.cast<double>(); }

  /// Bitwise comparison of every field.
  friend bool operator==(const EmbeddingBundle& a, const EmbeddingBundle& b);
};

/// Builds a bundle from binary64 features (rounded to binary32).
EmbeddingBundle make_bundle(std::string caption_id, const Eigen::MatrixXd& features,
                            std::vector<std::uint8_t> mask);

/// Throws Error{FormatError} for shape problems and Error{DataError} for
/// non-finite values or an all-padding mask.
void check_bundle(const EmbeddingBundle& b);

std::string serialize_bundle(const EmbeddingBundle& b);
EmbeddingBundle parse_bundle(std::string_view bytes);

void write_bundle(const EmbeddingBundle& b, std::ostream& sink);
EmbeddingBundle read_bundle(std::istream& source);

void save_bundle(const EmbeddingBundle& b, const std::filesystem::path& path);
EmbeddingBundle load_bundle(const std::filesystem::path& path);

/// Every violated invariant, one human-readable line each. Empty iff valid.
std::vector<std::string> validate_bundle(std::string_view bytes);
std::vector<std::string> validate_bundle(std::istream& source);

// --- parameter checkpoints ("PRM1") --------------------------------------

struct NamedTensor {
  std::string name;
  Eigen::MatrixXd value;
};

/// Magic "PRM1", u16 version, u32 tensor count, then per tensor: u16 name
/// length + name, u32 rows, u32 cols, rows*cols binary64 in row-major order.
std::string serialize_params(const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> parse_params(std::string_view bytes);

void save_params(const std::vector<NamedTensor>& tensors, const std::filesystem::path& path);
std::vector<NamedTensor> load_params(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace m3dvg::embedio
