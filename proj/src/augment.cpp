#include "m3dvg/augment.hpp"

#include <algorithm>
#include <istream>
#include <optional>
#include <ostream>
#include <thread>

#include <json.hpp>

#include "m3dvg/error.hpp"

namespace m3dvg::augment {

namespace {

constexpr std::size_t kBatchPerWorker = 512;

struct LineResult {
  std::optional<std::string> json;
  std::optional<RecordError> error;
};

// Best-effort id of a record that failed validation.
std::string id_of(std::string_view line) {
  const auto j = nlohmann::json::parse(line, nullptr, false);
  if (j.is_object() && j.contains("id") && j["id"].is_string()) return j["id"].get<std::string>();
  return {};
}

LineResult process_line(std::string_view line, std::size_t line_no, const CaptionTransform& transform) {
  LineResult r;
  std::string id;
  try {
    const Caption c = parse_caption_line(line);
    id = c.id;
    r.json = to_json_line(transform(c));
  } catch (const std::exception& e) {
    if (id.empty()) id = id_of(line);
    r.error = RecordError{line_no, id, e.what()};
  }
  return r;
}

}  // namespace

void AugmentConfig::validate() const {
  if (unit_pool.empty()) throw Error(ErrorKind::InvalidArgument, "unit pool is empty");
  for (std::size_t i = 0; i < unit_pool.size(); ++i)
    for (std::size_t j = i + 1; j < unit_pool.size(); ++j)
      if (unit_pool[i] == unit_pool[j])
        throw Error(ErrorKind::InvalidArgument,
                    "unit pool lists " + std::string(text3d::unit_name(unit_pool[i])) + " twice");
}

KeyedStream::KeyedStream(std::uint64_t seed, std::string_view caption_id, std::uint64_t slot)
    : key_(splitmix64(seed) ^ splitmix64(fnv1a64(caption_id) ^ 0x5851F42D4C957F2DULL) ^
           splitmix64(slot * 0xD6E8FEB86659FD93ULL + 1)) {}

std::uint64_t KeyedStream::next() { return splitmix64(key_ + 0x9E3779B97F4A7C15ULL * ++counter_); }

std::size_t KeyedStream::uniform_index(std::size_t n) {
  if (n == 0) throw Error(ErrorKind::InvalidArgument, "uniform_index over an empty range");
  const std::uint64_t bound = n;
  const std::uint64_t threshold = (0 - bound) % bound;  // 2^64 mod n
  for (;;) {
    const std::uint64_t x = next();
    if (x >= threshold) return static_cast<std::size_t>(x % bound);
  }
}

DistanceDescriptor remap_descriptor(const DistanceDescriptor& d, LengthUnit target) {
  if (target == d.unit) return d;
  DistanceDescriptor out = d;
  out.value_text = text3d::render_value(d.length, target);
  out.unit = target;
  return out;
}

AugmentedCaption apply_targets(const Caption& c, const std::vector<LengthUnit>& targets) {
  if (targets.size() != c.descriptors.size())
    throw Error(ErrorKind::InvalidArgument, "one target unit per descriptor is required");
  AugmentedCaption out;
  out.source_id = c.id;
  std::vector<std::string> replacements;
  replacements.reserve(targets.size());
  for (std::size_t k = 0; k < targets.size(); ++k) {
    const DistanceDescriptor& d = c.descriptors[k];
    if (targets[k] == d.unit)
      replacements.emplace_back(c.text.substr(d.span.begin, d.span.size()));
    else
      replacements.push_back(text3d::render(remap_descriptor(d, targets[k])));
    out.mapping.push_back(UnitMapping{k, d.unit, targets[k]});
  }
  out.text = text3d::splice(c.text, c.descriptors, replacements);
  return out;
}

AugmentedCaption augment_plan_a(const Caption& c, const AugmentConfig& cfg) {
  cfg.validate();
  std::vector<LengthUnit> targets;
  targets.reserve(c.descriptors.size());
  for (std::size_t k = 0; k < c.descriptors.size(); ++k) {
    KeyedStream stream(cfg.seed, c.id, k);
    targets.push_back(cfg.unit_pool[stream.uniform_index(cfg.unit_pool.size())]);
  }
  return apply_targets(c, targets);
}

AugmentedCaption augment_plan_b(const Caption& c, const AugmentConfig& cfg) {
  cfg.validate();
  KeyedStream stream(cfg.seed, c.id, KeyedStream::kCaptionSlot);
  const LengthUnit unit = cfg.unit_pool[stream.uniform_index(cfg.unit_pool.size())];
  return apply_targets(c, std::vector<LengthUnit>(c.descriptors.size(), unit));
}

AugmentedCaption remap_fixed(const Caption& c, LengthUnit unit) {
  return apply_targets(c, std::vector<LengthUnit>(c.descriptors.size(), unit));
}

AugmentedCaption augment(const Caption& c, const AugmentConfig& cfg) {
  switch (cfg.plan) {
    case Plan::A: return augment_plan_a(c, cfg);
    case Plan::B: return augment_plan_b(c, cfg);
    case Plan::Fixed: return remap_fixed(c, cfg.fixed_unit);
  }
  throw Error(ErrorKind::InvalidArgument, "unknown plan");
}

Caption parse_caption_line(std::string_view line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::FormatError, std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error(ErrorKind::FormatError, "caption record is not an object");
  const auto id = j.find("id");
  const auto text = j.find("text");
  if (id == j.end() || !id->is_string())
    throw Error(ErrorKind::FormatError, "caption record lacks a string \"id\"");
  if (text == j.end() || !text->is_string())
    throw Error(ErrorKind::FormatError,
                "caption " + id->get<std::string>() + " lacks a string \"text\"");
  return text3d::make_caption(id->get<std::string>(), text->get<std::string>());
}

std::string to_json_line(const AugmentedCaption& a) {
  nlohmann::ordered_json j;
  j["id"] = a.source_id;
  j["text"] = a.text;
  auto mapping = nlohmann::ordered_json::array();
  for (const UnitMapping& m : a.mapping)
    mapping.push_back({m.index, text3d::unit_name(m.source), text3d::unit_name(m.target)});
  j["mapping"] = std::move(mapping);
  return j.dump();
}

CorpusStats transform_corpus(std::istream& in, std::ostream& out, const CaptionTransform& transform,
                             unsigned jobs) {
  jobs = std::max(1U, jobs);
  CorpusStats stats;
  std::vector<std::pair<std::size_t, std::string>> batch;
  std::vector<LineResult> results;
  const std::size_t batch_limit = kBatchPerWorker * jobs;

  auto flush = [&] {
    results.assign(batch.size(), LineResult{});
    auto work = [&](std::size_t worker) {
      for (std::size_t k = worker; k < batch.size(); k += jobs)
        results[k] = process_line(batch[k].second, batch[k].first, transform);
    };
    if (jobs == 1 || batch.size() < 2) {
      work(0);
    } else {
      std::vector<std::jthread> pool;
      for (unsigned w = 0; w < jobs; ++w) pool.emplace_back(work, w);
    }
    for (LineResult& r : results) {
      ++stats.records;
      if (r.json) {
        out << *r.json << '\n';
        ++stats.written;
      } else {
        stats.errors.push_back(std::move(*r.error));
      }
    }
    batch.clear();
  };

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    batch.emplace_back(line_no, std::move(line));
    if (batch.size() >= batch_limit) flush();
  }
  flush();
  return stats;
}

CorpusStats augment_corpus(std::istream& in, std::ostream& out, const AugmentConfig& cfg,
                           unsigned jobs) {
  cfg.validate();
  return transform_corpus(in, out, [&cfg](const Caption& c) { return augment(c, cfg); }, jobs);
}

}  // namespace m3dvg::augment
