#include "m3dvg/similarity.hpp"

#include <algorithm>
#include <fstream>
#include <thread>

#include <json.hpp>

#include "report_format.hpp"

namespace m3dvg::similarity {

namespace {

void check_pair(const embedio::EmbeddingBundle& a, const embedio::EmbeddingBundle& b) {
  if (a.n_tokens() != b.n_tokens() || a.dim() != b.dim())
    throw Error(ErrorKind::ShapeMismatch,
                std::to_string(a.n_tokens()) + "x" + std::to_string(a.dim()) + " vs " +
                    std::to_string(b.n_tokens()) + "x" + std::to_string(b.dim()));
  if (a.mask != b.mask) throw Error(ErrorKind::MaskMismatch, "token masks differ");
}

Eigen::MatrixXd prepared(const embedio::EmbeddingBundle& b, const Options& opts) {
  return opts.normalize_rows ? normalize_rows(b.features()) : b.features();
}

PairRecord score_pair(const ManifestEntry& e, const Options& opts) {
  PairRecord r{e.id, std::nullopt, std::nullopt, {}};
  try {
    const auto a = embedio::load_bundle(e.original);
    const auto b = embedio::load_bundle(e.augmented);
    check_pair(a, b);
    const Eigen::MatrixXd fa = prepared(a, opts);
    const Eigen::MatrixXd fb = prepared(b, opts);
    const double se = euclidean_similarity(fa, fb, a.mask);
    const double sc = cosine_similarity(fa, fb, a.mask);
    r.euclidean = se;
    r.cosine = sc;
  } catch (const std::exception& ex) {
    r.error = ex.what();
  }
  return r;
}

}  // namespace

double euclidean_similarity(const embedio::EmbeddingBundle& a, const embedio::EmbeddingBundle& b,
                            const Options& opts) {
  check_pair(a, b);
  return euclidean_similarity(prepared(a, opts), prepared(b, opts), a.mask);
}

double cosine_similarity(const embedio::EmbeddingBundle& a, const embedio::EmbeddingBundle& b,
                         const Options& opts) {
  check_pair(a, b);
  return cosine_similarity(prepared(a, opts), prepared(b, opts), a.mask);
}

std::vector<ManifestEntry> read_manifest(std::istream& in, const std::filesystem::path& base_dir) {
  std::vector<ManifestEntry> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorKind::FormatError, "manifest line " + std::to_string(line_no) + ": " + e.what());
    }
    auto field = [&](const char* key) -> std::string {
      const auto it = j.find(key);
      if (!j.is_object() || it == j.end() || !it->is_string())
        throw Error(ErrorKind::FormatError, "manifest line " + std::to_string(line_no) +
                                                ": missing string \"" + key + "\"");
      return it->get<std::string>();
    };
    auto resolve = [&](const std::string& p) {
      std::filesystem::path path(p);
      return path.is_relative() ? base_dir / path : path;
    };
    entries.push_back(ManifestEntry{field("id"), resolve(field("original")), resolve(field("augmented"))});
  }
  return entries;
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw Error(ErrorKind::FormatError, "cannot open " + manifest_path.string());
  return read_manifest(in, manifest_path.parent_path());
}

SimilarityReport corpus_similarity(const std::vector<ManifestEntry>& manifest, const Options& opts) {
  std::vector<std::size_t> order(manifest.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return manifest[x].id < manifest[y].id; });

  SimilarityReport report;
  report.pairs.resize(order.size());
  const unsigned jobs = std::max(1U, opts.jobs);
  auto work = [&](unsigned worker) {
    for (std::size_t k = worker; k < order.size(); k += jobs)
      report.pairs[k] = score_pair(manifest[order[k]], opts);
  };
  if (jobs == 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < jobs; ++w) pool.emplace_back(work, w);
  }

  double sum_e = 0.0;
  double sum_c = 0.0;
  for (const PairRecord& p : report.pairs) {
    if (!p.ok()) {
      ++report.n_failed;
      continue;
    }
    ++report.n_pairs;
    sum_e += *p.euclidean;
    sum_c += *p.cosine;
  }
  if (report.n_pairs > 0) {
    report.mean_euclidean = sum_e / static_cast<double>(report.n_pairs);
    report.mean_cosine = sum_c / static_cast<double>(report.n_pairs);
  }
  return report;
}

std::string report_json(const SimilarityReport& r) {
  auto opt = [](const std::optional<double>& v) -> nlohmann::ordered_json {
    return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
  };
  nlohmann::ordered_json j;
  j["n_pairs"] = r.n_pairs;
  j["n_failed"] = r.n_failed;
  j["mean_euclidean"] = opt(r.mean_euclidean);
  j["mean_cosine"] = opt(r.mean_cosine);
  auto pairs = nlohmann::ordered_json::array();
  for (const PairRecord& p : r.pairs) {
    nlohmann::ordered_json row;
    row["id"] = p.id;
    row["euclidean"] = opt(p.euclidean);
    row["cosine"] = opt(p.cosine);
    if (!p.ok()) row["error"] = p.error;
    pairs.push_back(std::move(row));
  }
  j["pairs"] = std::move(pairs);
  return j.dump(2);
}

std::string report_csv(const SimilarityReport& r) {
  std::string out = "id,euclidean,cosine,error\n";
  for (const PairRecord& p : r.pairs) {
    out += m3dvg::detail::csv_field(p.id);
    out += ',';
    if (p.euclidean) out += m3dvg::detail::format_double(*p.euclidean);
    out += ',';
    if (p.cosine) out += m3dvg::detail::format_double(*p.cosine);
    out += ',';
    out += m3dvg::detail::csv_field(p.error);
    out += '\n';
  }
  return out;
}

}  // namespace m3dvg::similarity
