#include "m3dvg/embedio.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <optional>

#include "m3dvg/error.hpp"

namespace m3dvg::embedio {

namespace {

constexpr std::string_view kBundleMagic = "EMB1";
constexpr std::string_view kParamsMagic = "PRM1";
constexpr std::uint16_t kVersion = 1;

template <typename UInt>
void put_le(std::string& out, UInt v) {
  for (std::size_t i = 0; i < sizeof(UInt); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

// Little-endian cursor over a byte string. Reading past the end yields
// std::nullopt and remembers which section was missing.
class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

  std::optional<std::string_view> take(std::size_t n, std::string_view section) {
    if (bytes_.size() - pos_ < n) {
      missing_ = std::string(section);
      return std::nullopt;
    }
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  template <typename UInt>
  std::optional<UInt> get(std::string_view section) {
    auto s = take(sizeof(UInt), section);
    if (!s) return std::nullopt;
    UInt v = 0;
    for (std::size_t i = 0; i < sizeof(UInt); ++i)
      v |= static_cast<UInt>(static_cast<unsigned char>((*s)[i])) << (8 * i);
    return v;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }
  const std::string& missing() const { return missing_; }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
  std::string missing_;
};

struct Issue {
  ErrorKind kind;
  std::string message;
};

// Decodes an .emb byte string, collecting every problem found. When the
// layout itself is broken decoding stops at the first FormatError.
std::optional<EmbeddingBundle> decode_bundle(std::string_view bytes, std::vector<Issue>& issues) {
  ByteReader r(bytes);
  auto truncated = [&] {
    issues.push_back({ErrorKind::FormatError, "truncated file: missing " + r.missing()});
    return std::nullopt;
  };

  auto magic = r.take(4, "magic");
  if (!magic) return truncated();
  if (*magic != kBundleMagic) {
    issues.push_back({ErrorKind::FormatError, "bad magic (expected EMB1)"});
    return std::nullopt;
  }
  auto version = r.get<std::uint16_t>("version");
  if (!version) return truncated();
  if (*version != kVersion) {
    issues.push_back({ErrorKind::FormatError, "unsupported version " + std::to_string(*version)});
    return std::nullopt;
  }
  auto id_len = r.get<std::uint16_t>("id length");
  if (!id_len) return truncated();
  auto id = r.take(*id_len, "caption id");
  if (!id) return truncated();
  auto n_tokens = r.get<std::uint32_t>("token count");
  if (!n_tokens) return truncated();
  auto dim = r.get<std::uint32_t>("dim");
  if (!dim) return truncated();
  auto mask_bytes = r.take(*n_tokens, "mask");
  if (!mask_bytes) return truncated();
  const std::uint64_t n_values = std::uint64_t{*n_tokens} * *dim;
  if (n_values > r.remaining() / 4) {
    r.take(r.remaining() + 1, "data");
    return truncated();
  }
  auto data_bytes = r.take(static_cast<std::size_t>(n_values) * 4, "data");
  if (r.remaining() != 0)
    issues.push_back({ErrorKind::FormatError,
                      std::to_string(r.remaining()) + " trailing bytes after data"});

  EmbeddingBundle b;
  b.caption_id = std::string(*id);
  b.mask.assign(mask_bytes->begin(), mask_bytes->end());
  b.data.resize(*n_tokens, *dim);
  for (std::uint64_t k = 0; k < n_values; ++k) {
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i)
      bits |= static_cast<std::uint32_t>(static_cast<unsigned char>((*data_bytes)[4 * k + i])) << (8 * i);
    b.data.data()[k] = std::bit_cast<float>(bits);
  }
  return b;
}

void collect_invariant_issues(const EmbeddingBundle& b, std::vector<Issue>& issues) {
  if (b.mask.size() != static_cast<std::size_t>(b.n_tokens()))
    issues.push_back({ErrorKind::FormatError, "mask length " + std::to_string(b.mask.size()) +
                                                  " != n_tokens " + std::to_string(b.n_tokens())});
  if (b.dim() == 0) issues.push_back({ErrorKind::FormatError, "dim is zero"});
  for (std::size_t t = 0; t < b.mask.size(); ++t)
    if (b.mask[t] > 1)
      issues.push_back({ErrorKind::FormatError, "mask[" + std::to_string(t) + "] = " +
                                                    std::to_string(b.mask[t]) + " is not 0/1"});
  if (b.valid_tokens() == 0) issues.push_back({ErrorKind::DataError, "empty mask"});
  for (Eigen::Index r = 0; r < b.data.rows(); ++r)
    for (Eigen::Index c = 0; c < b.data.cols(); ++c) {
      const float v = b.data(r, c);
      if (std::isnan(v))
        issues.push_back({ErrorKind::DataError,
                          "NaN at (" + std::to_string(r) + "," + std::to_string(c) + ")"});
      else if (std::isinf(v))
        issues.push_back({ErrorKind::DataError,
                          "Inf at (" + std::to_string(r) + "," + std::to_string(c) + ")"});
    }
}

[[noreturn]] void raise_first(const std::vector<Issue>& issues) {
  throw Error(issues.front().kind, issues.front().message);
}

std::string slurp(std::istream& in) {
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

Eigen::Index EmbeddingBundle::valid_tokens() const {
  Eigen::Index n = 0;
  for (std::uint8_t m : mask) n += (m != 0);
  return n;
}

bool operator==(const EmbeddingBundle& a, const EmbeddingBundle& b) {
  return a.caption_id == b.caption_id && a.mask == b.mask && a.data.rows() == b.data.rows() &&
         a.data.cols() == b.data.cols() &&
         std::memcmp(a.data.data(), b.data.data(), sizeof(float) * a.data.size()) == 0;
}

EmbeddingBundle make_bundle(std::string caption_id, const Eigen::MatrixXd& features,
                            std::vector<std::uint8_t> mask) {
  EmbeddingBundle b{std::move(caption_id), std::move(mask), features.cast<float>()};
  check_bundle(b);
  return b;
}

void check_bundle(const EmbeddingBundle& b) {
  std::vector<Issue> issues;
  collect_invariant_issues(b, issues);
  if (!issues.empty()) raise_first(issues);
}

std::string serialize_bundle(const EmbeddingBundle& b) {
  check_bundle(b);
  if (b.caption_id.size() > 0xFFFF)
    throw Error(ErrorKind::FormatError, "caption id longer than 65535 bytes");
  std::string out;
  out.reserve(16 + b.caption_id.size() + b.mask.size() + 4 * b.data.size());
  out += kBundleMagic;
  put_le<std::uint16_t>(out, kVersion);
  put_le<std::uint16_t>(out, static_cast<std::uint16_t>(b.caption_id.size()));
  out += b.caption_id;
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(b.n_tokens()));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(b.dim()));
  for (std::uint8_t m : b.mask) out.push_back(static_cast<char>(m));
  for (Eigen::Index k = 0; k < b.data.size(); ++k)
    put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(b.data.data()[k]));
  return out;
}

EmbeddingBundle parse_bundle(std::string_view bytes) {
  std::vector<Issue> issues;
  auto b = decode_bundle(bytes, issues);
  if (b) collect_invariant_issues(*b, issues);
  if (!issues.empty()) raise_first(issues);
  return std::move(*b);
}

void write_bundle(const EmbeddingBundle& b, std::ostream& sink) {
  const std::string bytes = serialize_bundle(b);
  sink.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!sink) throw Error(ErrorKind::FormatError, "write failed");
}

EmbeddingBundle read_bundle(std::istream& source) { return parse_bundle(slurp(source)); }

void save_bundle(const EmbeddingBundle& b, const std::filesystem::path& path) {
  write_file(path, serialize_bundle(b));
}

EmbeddingBundle load_bundle(const std::filesystem::path& path) {
  try {
    return parse_bundle(read_file(path));
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

std::vector<std::string> validate_bundle(std::string_view bytes) {
  std::vector<Issue> issues;
  auto b = decode_bundle(bytes, issues);
  if (b) collect_invariant_issues(*b, issues);
  std::vector<std::string> report;
  report.reserve(issues.size());
  for (Issue& i : issues) report.push_back(std::move(i.message));
  return report;
}

std::vector<std::string> validate_bundle(std::istream& source) { return validate_bundle(slurp(source)); }

std::string serialize_params(const std::vector<NamedTensor>& tensors) {
  std::string out;
  out += kParamsMagic;
  put_le<std::uint16_t>(out, kVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const NamedTensor& t : tensors) {
    if (t.name.size() > 0xFFFF) throw Error(ErrorKind::FormatError, "tensor name too long");
    if (!t.value.allFinite())
      throw Error(ErrorKind::DataError, "tensor " + t.name + " has non-finite entries");
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(t.name.size()));
    out += t.name;
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.value.rows()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.value.cols()));
    for (Eigen::Index r = 0; r < t.value.rows(); ++r)
      for (Eigen::Index c = 0; c < t.value.cols(); ++c)
        put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(t.value(r, c)));
  }
  return out;
}

std::vector<NamedTensor> parse_params(std::string_view bytes) {
  ByteReader r(bytes);
  auto fail = [&] { return Error(ErrorKind::FormatError, "truncated checkpoint: missing " + r.missing()); };
  auto magic = r.take(4, "magic");
  if (!magic) throw fail();
  if (*magic != kParamsMagic) throw Error(ErrorKind::FormatError, "bad magic (expected PRM1)");
  auto version = r.get<std::uint16_t>("version");
  if (!version) throw fail();
  if (*version != kVersion)
    throw Error(ErrorKind::FormatError, "unsupported version " + std::to_string(*version));
  auto count = r.get<std::uint32_t>("tensor count");
  if (!count) throw fail();

  std::vector<NamedTensor> tensors;
  for (std::uint32_t k = 0; k < *count; ++k) {
    const std::string where = "tensor " + std::to_string(k);
    auto name_len = r.get<std::uint16_t>(where + " name length");
    if (!name_len) throw fail();
    auto name = r.take(*name_len, where + " name");
    if (!name) throw fail();
    auto rows = r.get<std::uint32_t>(where + " rows");
    if (!rows) throw fail();
    auto cols = r.get<std::uint32_t>(where + " cols");
    if (!cols) throw fail();
    const std::uint64_t n = std::uint64_t{*rows} * *cols;
    if (n > r.remaining() / 8) {
      r.take(r.remaining() + 1, where + " values");
      throw fail();
    }
    NamedTensor t{std::string(*name), Eigen::MatrixXd(*rows, *cols)};
    for (std::uint32_t i = 0; i < *rows; ++i)
      for (std::uint32_t j = 0; j < *cols; ++j)
        t.value(i, j) = std::bit_cast<double>(*r.get<std::uint64_t>("values"));
    if (!t.value.allFinite())
      throw Error(ErrorKind::DataError, "tensor " + t.name + " has non-finite entries");
    tensors.push_back(std::move(t));
  }
  if (r.remaining() != 0)
    throw Error(ErrorKind::FormatError, std::to_string(r.remaining()) + " trailing bytes");
  return tensors;
}

void save_params(const std::vector<NamedTensor>& tensors, const std::filesystem::path& path) {
  write_file(path, serialize_params(tensors));
}

std::vector<NamedTensor> load_params(const std::filesystem::path& path) {
  return parse_params(read_file(path));
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::FormatError, "cannot open " + path.string());
  return slurp(in);
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::FormatError, "cannot write " + path.string());
}

}  // namespace m3dvg::embedio
