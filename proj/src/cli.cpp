#include "m3dvg/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "m3dvg/augment.hpp"
#include "m3dvg/embedio.hpp"
#include "m3dvg/error.hpp"
#include "m3dvg/eval3d.hpp"
#include "m3dvg/gradcheck.hpp"
#include "m3dvg/loss_records.hpp"
#include "m3dvg/similarity.hpp"
#include "m3dvg/text3d.hpp"
#include "m3dvg/tge.hpp"

namespace m3dvg::cli {

namespace {

namespace fs = std::filesystem;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Level { error, warn, info, debug };

Level log_level() {
  const char* env = std::getenv("M3DVG_LOG");
  if (env == nullptr) return Level::warn;
  const std::string v = env;
  if (v == "error") return Level::error;
  if (v == "info") return Level::info;
  if (v == "debug") return Level::debug;
  return Level::warn;
}

class Log {
 public:
  explicit Log(std::ostream& err) : err_(err), level_(log_level()) {}

  void operator()(Level l, const std::string& msg) const {
    static constexpr const char* kNames[] = {"error", "warn", "info", "debug"};
    if (l <= level_) err_ << kNames[static_cast<int>(l)] << ": " << msg << '\n';
  }

 private:
  std::ostream& err_;
  Level level_;
};

struct RunConfig {
  std::string input = "-";
  std::string out;
  std::uint64_t seed = 0;
  unsigned jobs = 1;
  std::string format = "json";

  std::string plan = "A";
  std::vector<std::string> units{"m", "dm", "cm"};
  std::string unit;

  std::string pairs;
  bool normalize = false;

  std::string geometry, text, params, save_params;
  Eigen::Index heads = 8;

  std::vector<std::string> ops;
  std::size_t n_seeds = 50;
  double step = 1e-5;
  double tolerance = 1e-5;
  double floor = 1e-3;
  std::string reduction = "sum";

  std::vector<double> weights{2.0, 5.0, 2.0, 10.0};
  std::size_t bins = losses::kDefaultOrientationBins;

  std::vector<double> thresholds{0.25, 0.5};

  std::vector<std::string> files;
};

struct Io {
  std::istream& in;
  std::ostream& out;
  std::ostream& err;
  Log log;
};

text3d::LengthUnit unit_flag(const std::string& s) {
  const auto u = text3d::parse_unit(s);
  if (!u) throw UsageError("unknown unit '" + s + "'");
  return *u;
}

void require_distinct(const std::string& input, const std::string& output) {
  if (input.empty() || output.empty() || input == "-") return;
  std::error_code ec;
  const bool same = fs::exists(output) ? fs::equivalent(input, output, ec)
                                       : fs::weakly_canonical(input, ec) == fs::weakly_canonical(output, ec);
  if (same) throw UsageError("output path must differ from the input path");
}

void with_input(const std::string& path, Io& io, const std::function<void(std::istream&)>& fn) {
  if (path == "-") return fn(io.in);
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::DataError, "cannot open " + path);
  fn(f);
}

void with_output(const RunConfig& cfg, Io& io, const std::function<void(std::ostream&)>& fn) {
  if (cfg.out.empty()) return fn(io.out);
  std::ofstream f(cfg.out, std::ios::binary);
  if (!f) throw Error(ErrorKind::DataError, "cannot write " + cfg.out);
  fn(f);
  if (!f) throw Error(ErrorKind::DataError, "write to " + cfg.out + " failed");
}

int report_record_errors(const augment::CorpusStats& stats, Io& io, const char* what) {
  for (const auto& e : stats.errors)
    io.err << "error: line " << e.line << (e.id.empty() ? "" : ", id " + e.id) << ": " << e.message << '\n';
  io.log(Level::info, std::string(what) + ": " + std::to_string(stats.records) + " records, " +
                          std::to_string(stats.written) + " written");
  return stats.errors.empty() ? kExitOk : kExitDataError;
}

// --- subcommands -------------------------------------------------------------

int cmd_augment(const RunConfig& cfg, Io& io) {
  augment::AugmentConfig ac;
  if (cfg.plan == "A" || cfg.plan == "a")
    ac.plan = augment::Plan::A;
  else if (cfg.plan == "B" || cfg.plan == "b")
    ac.plan = augment::Plan::B;
  else
    throw UsageError("--plan must be A or B");
  ac.unit_pool.clear();
  for (const auto& u : cfg.units) ac.unit_pool.push_back(unit_flag(u));
  ac.seed = cfg.seed;
  try {
    ac.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  require_distinct(cfg.input, cfg.out);
  augment::CorpusStats stats;
  with_input(cfg.input, io, [&](std::istream& in) {
    with_output(cfg, io, [&](std::ostream& out) { stats = augment::augment_corpus(in, out, ac, cfg.jobs); });
  });
  return report_record_errors(stats, io, "augment");
}

int cmd_remap(const RunConfig& cfg, Io& io) {
  const text3d::LengthUnit target = unit_flag(cfg.unit);
  require_distinct(cfg.input, cfg.out);
  augment::CorpusStats stats;
  with_input(cfg.input, io, [&](std::istream& in) {
    with_output(cfg, io, [&](std::ostream& out) {
      stats = augment::transform_corpus(
          in, out, [target](const text3d::Caption& c) { return augment::remap_fixed(c, target); }, cfg.jobs);
    });
  });
  return report_record_errors(stats, io, "remap");
}

int cmd_scan(const RunConfig& cfg, Io& io) {
  int status = kExitOk;
  with_input(cfg.input, io, [&](std::istream& in) {
    with_output(cfg, io, [&](std::ostream& out) {
      std::string line;
      std::size_t line_no = 0;
      while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
          const text3d::Caption c = augment::parse_caption_line(line);
          nlohmann::ordered_json j;
          j["id"] = c.id;
          auto arr = nlohmann::ordered_json::array();
          for (const auto& d : c.descriptors) {
            nlohmann::ordered_json o;
            o["begin"] = d.span.begin;
            o["end"] = d.span.end;
            o["text"] = c.text.substr(d.span.begin, d.span.size());
            o["value"] = d.value_text;
            o["unit"] = text3d::unit_name(d.unit);
            o["micrometers"] = d.length.micrometers;
            o["form"] = d.form == text3d::DescriptorForm::spaced ? "spaced" : "hyphen_attribute";
            if (d.attribute == text3d::Attribute::none)
              o["attribute"] = nullptr;
            else
              o["attribute"] = text3d::attribute_name(d.attribute);
            arr.push_back(std::move(o));
          }
          j["descriptors"] = std::move(arr);
          out << j.dump() << '\n';
        } catch (const Error& e) {
          io.err << "error: line " << line_no << ": " << e.what() << '\n';
          status = kExitDataError;
        }
      }
    });
  });
  return status;
}

void require_format(const RunConfig& cfg) {
  if (cfg.format != "json" && cfg.format != "csv") throw UsageError("--format must be json or csv");
}

int cmd_similarity(const RunConfig& cfg, Io& io) {
  require_format(cfg);
  if (cfg.pairs.empty()) throw UsageError("--pairs is required");
  const auto manifest = similarity::read_manifest(fs::path(cfg.pairs));
  const auto report = similarity::corpus_similarity(manifest, {cfg.normalize, cfg.jobs});
  with_output(cfg, io, [&](std::ostream& out) {
    out << (cfg.format == "csv" ? similarity::report_csv(report) : similarity::report_json(report) + "\n");
  });
  for (const auto& p : report.pairs)
    if (!p.ok()) io.err << "error: pair " << p.id << ": " << p.error << '\n';
  io.log(Level::info, "similarity: " + std::to_string(report.n_pairs) + " pairs scored, " +
                          std::to_string(report.n_failed) + " failed");
  return report.n_failed == 0 ? kExitOk : kExitDataError;
}

Eigen::MatrixXd valid_rows(const embedio::EmbeddingBundle& b) {
  const Eigen::MatrixXd f = b.features();
  Eigen::MatrixXd out(b.valid_tokens(), f.cols());
  Eigen::Index k = 0;
  for (Eigen::Index r = 0; r < f.rows(); ++r)
    if (b.mask[static_cast<std::size_t>(r)]) out.row(k++) = f.row(r);
  return out;
}

int cmd_tge_forward(const RunConfig& cfg, Io& io) {
  if (cfg.geometry.empty() || cfg.text.empty() || cfg.out.empty())
    throw UsageError("--geometry, --text and --out are required");
  const auto geometry = embedio::load_bundle(cfg.geometry);
  const auto text = embedio::load_bundle(cfg.text);
  if (geometry.dim() != text.dim())
    throw Error(ErrorKind::ShapeMismatch, "geometry has " + std::to_string(geometry.dim()) +
                                              " channels, text has " + std::to_string(text.dim()));
  tge::TgeModel model;
  if (!cfg.params.empty()) {
    model = tge::tge_model_from_tensors(embedio::load_params(cfg.params));
  } else {
    if (cfg.heads < 1 || geometry.dim() % cfg.heads != 0)
      throw UsageError("--heads must divide the channel count " + std::to_string(geometry.dim()));
    model = tge::init_tge_model(geometry.dim(), cfg.heads, cfg.seed);
  }
  if (!cfg.save_params.empty()) embedio::save_params(tge::to_named_tensors(model), cfg.save_params);
  const Eigen::MatrixXd enhanced =
      tge::tge_forward(geometry.features(), valid_rows(text), model.projection, model.attention);
  embedio::save_bundle(embedio::make_bundle(geometry.caption_id, enhanced, geometry.mask), cfg.out);
  io.log(Level::info, "tge-forward: wrote " + std::to_string(enhanced.rows()) + "x" +
                          std::to_string(enhanced.cols()) + " to " + cfg.out);
  return kExitOk;
}

int cmd_grad_check(const RunConfig& cfg, Io& io) {
  gradcheck::Reduction reduction;
  if (cfg.reduction == "sum")
    reduction = gradcheck::Reduction::sum;
  else if (cfg.reduction == "weighted")
    reduction = gradcheck::Reduction::weighted;
  else
    throw UsageError("--reduction must be sum or weighted");
  std::vector<std::string> ops = cfg.ops;
  if (ops.empty() || (ops.size() == 1 && ops[0] == "all")) ops = gradcheck::registered_ops();
  for (const auto& op : ops)
    if (std::find(gradcheck::registered_ops().begin(), gradcheck::registered_ops().end(), op) ==
        gradcheck::registered_ops().end())
      throw UsageError("unknown op '" + op + "'");
  if (cfg.n_seeds == 0) throw UsageError("--seeds must be positive");

  const gradcheck::Options opts{cfg.step, cfg.floor};
  nlohmann::ordered_json j;
  j["step"] = cfg.step;
  j["tolerance"] = cfg.tolerance;
  j["floor"] = cfg.floor;
  j["reduction"] = cfg.reduction;
  auto rows = nlohmann::ordered_json::array();
  bool all_pass = true;
  for (const auto& op : ops) {
    double worst = 0.0;
    std::uint64_t worst_seed = cfg.seed;
    std::string worst_block;
    for (std::size_t k = 0; k < cfg.n_seeds; ++k) {
      const std::uint64_t seed = cfg.seed + k;
      const auto r = gradcheck::grad_check(op, seed, opts, reduction);
      for (const auto& b : r.blocks)
        if (b.max_rel_error > worst || worst_block.empty()) {
          worst = std::max(worst, b.max_rel_error);
          worst_seed = seed;
          worst_block = b.name;
        }
    }
    const bool pass = worst < cfg.tolerance;
    all_pass = all_pass && pass;
    rows.push_back({{"op", op},
                    {"seeds", cfg.n_seeds},
                    {"max_rel_error", worst},
                    {"worst_seed", worst_seed},
                    {"worst_block", worst_block},
                    {"pass", pass}});
    if (!pass) io.err << "error: " << op << " seed " << worst_seed << " block " << worst_block
                      << ": relative error " << worst << '\n';
  }
  j["ops"] = std::move(rows);
  j["pass"] = all_pass;
  with_output(cfg, io, [&](std::ostream& out) { out << j.dump(2) << '\n'; });
  return all_pass ? kExitOk : kExitDataError;
}

int cmd_losses(const RunConfig& cfg, Io& io) {
  if (cfg.weights.size() != 4) throw UsageError("--weights needs four values");
  losses::LossWeights w{cfg.weights[0], cfg.weights[1], cfg.weights[2], cfg.weights[3]};
  try {
    w.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  if (cfg.bins == 0) throw UsageError("--bins must be positive");
  std::vector<losses::RecordLosses> rows;
  with_input(cfg.input, io, [&](std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        rows.push_back(losses::evaluate(losses::parse_loss_record(line), w, cfg.bins));
      } catch (const Error& e) {
        throw Error(e.kind(), "line " + std::to_string(line_no) + ": " + e.what());
      }
    }
  });
  with_output(cfg, io, [&](std::ostream& out) { out << losses::loss_report_json(rows) << '\n'; });
  return kExitOk;
}

int cmd_eval(const RunConfig& cfg, Io& io) {
  require_format(cfg);
  if (cfg.thresholds.empty()) throw UsageError("--thresholds needs at least one value");
  for (double tau : cfg.thresholds)
    if (!(tau > 0.0 && tau < 1.0)) throw UsageError("thresholds must lie strictly between 0 and 1");
  std::vector<eval3d::ScenarioRecord> records;
  with_input(cfg.input, io, [&](std::istream& in) { records = eval3d::read_records(in); });
  const auto report = eval3d::scenario_report(records, cfg.thresholds, cfg.jobs);
  with_output(cfg, io, [&](std::ostream& out) {
    out << (cfg.format == "csv" ? eval3d::report_csv(report) : eval3d::report_json(report) + "\n");
  });
  return kExitOk;
}

int cmd_validate_emb(const RunConfig& cfg, Io& io) {
  if (cfg.files.empty()) throw UsageError("at least one .emb file is required");
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  bool all_ok = true;
  for (const auto& path : cfg.files) {
    std::vector<std::string> issues;
    std::ifstream f(path, std::ios::binary);
    if (!f)
      issues.push_back("cannot open file");
    else
      issues = embedio::validate_bundle(f);
    for (const auto& i : issues) io.err << "error: " << path << ": " << i << '\n';
    all_ok = all_ok && issues.empty();
    j.push_back({{"path", path}, {"valid", issues.empty()}, {"issues", issues}});
  }
  with_output(cfg, io, [&](std::ostream& out) { out << j.dump(2) << '\n'; });
  return all_ok ? kExitOk : kExitDataError;
}

// --- parser ------------------------------------------------------------------

void add_common(CLI::App* sub, RunConfig& cfg, bool jobs, bool format) {
  sub->add_option("--out,-o", cfg.out, "Output path (default: standard output)");
  if (jobs) sub->add_option("--jobs,-j", cfg.jobs, "Worker threads")->check(CLI::Range(1U, 1024U));
  if (format) sub->add_option("--format", cfg.format, "Report format: json or csv");
}

}  // namespace

int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  CLI::App app{"Unit-aware caption augmentation, embedding similarity, text-guided geometry "
               "enhancement, losses and 3D grounding evaluation",
               "m3dvg"};
  app.require_subcommand(1);

  auto* augment_cmd = app.add_subcommand("augment", "Rewrite distance units of a caption corpus");
  augment_cmd->add_option("input", cfg.input, "Caption JSONL ('-' for standard input)");
  augment_cmd->add_option("--plan", cfg.plan, "A: one draw per descriptor, B: one per caption");
  augment_cmd->add_option("--units", cfg.units, "Unit pool, comma separated")->delimiter(',')->allow_extra_args(false);
  augment_cmd->add_option("--seed", cfg.seed, "Random seed");
  add_common(augment_cmd, cfg, true, false);

  auto* remap_cmd = app.add_subcommand("remap", "Rewrite every descriptor to one unit");
  remap_cmd->add_option("input", cfg.input, "Caption JSONL ('-' for standard input)");
  remap_cmd->add_option("--unit", cfg.unit, "Target unit")->required();
  add_common(remap_cmd, cfg, true, false);

  auto* scan_cmd = app.add_subcommand("scan", "List distance descriptors per caption");
  scan_cmd->add_option("input", cfg.input, "Caption JSONL ('-' for standard input)");
  add_common(scan_cmd, cfg, false, false);

  auto* sim_cmd = app.add_subcommand("similarity", "Masked similarity of paired embedding bundles");
  sim_cmd->add_option("--pairs", cfg.pairs, "Manifest JSONL")->required();
  sim_cmd->add_flag("--normalize", cfg.normalize, "Scale rows to unit norm first");
  add_common(sim_cmd, cfg, true, true);

  auto* tge_cmd = app.add_subcommand("tge-forward", "Enhance geometry features with text features");
  tge_cmd->add_option("--geometry", cfg.geometry, "Geometry features (.emb)")->required();
  tge_cmd->add_option("--text", cfg.text, "Text features (.emb)")->required();
  tge_cmd->add_option("--params", cfg.params, "PRM1 checkpoint (default: seeded initialisation)");
  tge_cmd->add_option("--save-params", cfg.save_params, "Write the parameters used to this PRM1 file");
  tge_cmd->add_option("--heads", cfg.heads, "Attention heads for seeded initialisation");
  tge_cmd->add_option("--seed", cfg.seed, "Initialisation seed");
  add_common(tge_cmd, cfg, false, false);

  auto* grad_cmd = app.add_subcommand("grad-check", "Compare analytic and finite-difference gradients");
  grad_cmd->add_option("--op", cfg.ops, "Ops to check, comma separated, or 'all'")->delimiter(',')->allow_extra_args(false);
  grad_cmd->add_option("--seeds", cfg.n_seeds, "Random instances per op");
  grad_cmd->add_option("--seed", cfg.seed, "First seed");
  grad_cmd->add_option("--step", cfg.step, "Central-difference step");
  grad_cmd->add_option("--tolerance", cfg.tolerance, "Maximum relative error");
  grad_cmd->add_option("--floor", cfg.floor, "Relative-error denominator floor");
  grad_cmd->add_option("--reduction", cfg.reduction, "sum or weighted");
  add_common(grad_cmd, cfg, false, false);

  auto* loss_cmd = app.add_subcommand("losses", "Per-record and mean losses");
  loss_cmd->add_option("input", cfg.input, "Loss-record JSONL ('-' for standard input)");
  loss_cmd->add_option("--weights", cfg.weights, "cls,lrtb,giou,xy3d weights")->delimiter(',')->allow_extra_args(false);
  loss_cmd->add_option("--bins", cfg.bins, "Orientation bins");
  add_common(loss_cmd, cfg, false, false);

  auto* eval_cmd = app.add_subcommand("eval", "Acc@tau per scenario");
  eval_cmd->add_option("input", cfg.input, "Scenario-record JSONL ('-' for standard input)");
  eval_cmd->add_option("--thresholds", cfg.thresholds, "IoU thresholds, comma separated")->delimiter(',')->allow_extra_args(false);
  add_common(eval_cmd, cfg, true, true);

  auto* validate_cmd = app.add_subcommand("validate-emb", "Check .emb files");
  validate_cmd->add_option("files", cfg.files, "Bundle files")->required();
  add_common(validate_cmd, cfg, false, false);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n' << "run 'm3dvg --help' for usage\n";
    return kExitUsage;
  }

  Io io{in, out, err, Log(err)};
  const std::vector<std::pair<CLI::App*, int (*)(const RunConfig&, Io&)>> handlers = {
      {augment_cmd, cmd_augment}, {remap_cmd, cmd_remap}, {scan_cmd, cmd_scan},
      {sim_cmd, cmd_similarity},  {tge_cmd, cmd_tge_forward}, {grad_cmd, cmd_grad_check},
      {loss_cmd, cmd_losses},     {eval_cmd, cmd_eval},   {validate_cmd, cmd_validate_emb}};
  try {
    for (const auto& [sub, fn] : handlers)
      if (sub->parsed()) return fn(cfg, io);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitDataError;
  }
  return kExitUsage;
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cin, std::cout, std::cerr);
}

}  // namespace m3dvg::cli
