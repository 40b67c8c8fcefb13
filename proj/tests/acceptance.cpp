// Acceptance run: one PASS/FAIL line per headline requirement. Exits non-zero
// if any line fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numbers>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "m3dvg/augment.hpp"
#include "m3dvg/cli.hpp"
#include "m3dvg/embedio.hpp"
#include "m3dvg/eval3d.hpp"
#include "m3dvg/gradcheck.hpp"
#include "m3dvg/losses.hpp"
#include "m3dvg/random.hpp"
#include "m3dvg/similarity.hpp"
#include "m3dvg/text3d.hpp"
#include "m3dvg/tge.hpp"
#include "oracles.hpp"

using namespace m3dvg;
using Eigen::MatrixXd;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(bool ok, const std::string& name, const std::string& detail) {
  std::printf("%s %s: %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  failures += ok ? 0 : 1;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// --- random captions -----------------------------------------------------------

const char* const kUnitWords[] = {"kilometer", "meter", "decimeter", "centimeter", "millimeter"};
const char* const kAttributes[] = {"depth", "height", "length", "width"};

struct Planted {
  std::string text;
  std::vector<std::uint64_t> micrometers;
};

// Builds a caption with `n` descriptors whose lengths are known from the
// numeral strings alone.
Planted random_caption(std::mt19937_64& rng, int n) {
  std::uniform_int_distribution<int> unit_pick(0, 4), digits(0, 6), small(0, 9), form(0, 3), attr(0, 3);
  std::uniform_int_distribution<int> whole(0, 2000);
  Planted p;
  p.text = "the object";
  for (int k = 0; k < n; ++k) {
    const std::string unit = kUnitWords[unit_pick(rng)];
    std::string numeral = std::to_string(whole(rng));
    const int frac = std::min(digits(rng), std::min(oracle::unit_exponent(unit), 3));
    if (frac > 0) {
      numeral += '.';
      for (int d = 0; d < frac; ++d) numeral += static_cast<char>('0' + small(rng));
    }
    const auto um = oracle::micrometers(numeral, unit);
    if (!um || *um == 0) {
      --k;
      continue;
    }
    const bool plural = numeral != "1";
    std::string word = unit + (plural ? "s" : "");
    if (small(rng) == 0) word[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(word[0])));
    p.text += k == 0 ? " is " : " and ";
    if (form(rng) == 0)
      p.text += numeral + "-" + word + "-" + kAttributes[attr(rng)];
    else
      p.text += numeral + " " + word;
    p.micrometers.push_back(*um);
  }
  p.text += " away.";
  return p;
}

// --- criteria --------------------------------------------------------------------

void equidistance() {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> count(1, 4);
  std::vector<text3d::Caption> captions;
  std::vector<std::vector<std::uint64_t>> truth;
  std::size_t descriptors = 0;
  while (descriptors < 100000) {
    Planted p = random_caption(rng, count(rng));
    descriptors += p.micrometers.size();
    captions.push_back(text3d::make_caption("q" + std::to_string(captions.size()), std::move(p.text)));
    truth.push_back(std::move(p.micrometers));
  }

  std::vector<std::pair<std::string, augment::AugmentConfig>> plans;
  augment::AugmentConfig a;
  a.plan = augment::Plan::A;
  a.seed = 1;
  plans.emplace_back("A", a);
  augment::AugmentConfig b = a;
  b.plan = augment::Plan::B;
  plans.emplace_back("B", b);
  for (auto u : {text3d::LengthUnit::meter, text3d::LengthUnit::decimeter, text3d::LengthUnit::centimeter,
                 text3d::LengthUnit::millimeter}) {
    augment::AugmentConfig f;
    f.plan = augment::Plan::Fixed;
    f.fixed_unit = u;
    plans.emplace_back(std::string("fixed-") + std::string(text3d::unit_name(u)), f);
  }

  const auto t0 = Clock::now();
  std::size_t checked = 0, bad = 0;
  for (const auto& [name, cfg] : plans) {
    for (std::size_t i = 0; i < captions.size(); ++i) {
      const auto& c = captions[i];
      bool ok = c.descriptors.size() == truth[i].size();
      try {
        const auto out = augment::augment(c, cfg);
        const auto found = text3d::scan_descriptors(out.text);
        ok = ok && found.size() == truth[i].size();
        for (std::size_t k = 0; ok && k < found.size(); ++k) ok = found[k].length.micrometers == truth[i][k];
      } catch (const std::exception&) {
        ok = false;
      }
      checked += truth[i].size();
      bad += ok ? 0 : truth[i].size();
    }
  }
  const double secs = seconds_since(t0);
  report(bad == 0 && secs < 5.0, "equidistance",
         std::to_string(descriptors) + " descriptors x " + std::to_string(plans.size()) + " plans, " +
             std::to_string(bad) + " failures, " + fmt("%.2f s", secs) + " (limit 5 s)");
}

void conversion_anchor() {
  const auto c = text3d::make_caption("anchor", "10 meters");
  const auto out = augment::remap_fixed(c, text3d::LengthUnit::centimeter);
  report(out.text == "1000 centimeters", "conversion-anchor", "\"10 meters\" -> \"" + out.text + "\"");
}

void plan_granularity_and_uniformity() {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> count(2, 4);
  augment::AugmentConfig a;
  a.plan = augment::Plan::A;
  a.seed = 5;
  augment::AugmentConfig b = a;
  b.plan = augment::Plan::B;

  std::size_t mixed_a = 0, mixed_b = 0;
  std::array<std::size_t, 5> freq{};
  std::size_t draws = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto c = text3d::make_caption("cap" + std::to_string(i), random_caption(rng, count(rng)).text);
    const auto out_a = augment::augment(c, a);
    const auto out_b = augment::augment(c, b);
    std::set<text3d::LengthUnit> units_a, units_b;
    for (const auto& m : out_a.mapping) {
      units_a.insert(m.target);
      if (draws < 30000) {
        ++freq[static_cast<std::size_t>(m.target)];
        ++draws;
      }
    }
    for (const auto& m : out_b.mapping) units_b.insert(m.target);
    mixed_a += units_a.size() > 1;
    mixed_b += units_b.size() > 1;
  }
  report(mixed_a > 0 && mixed_b == 0, "plan-granularity",
         "Plan A mixed units in " + std::to_string(mixed_a) + "/10000 multi-descriptor captions; Plan B in " +
             std::to_string(mixed_b) + "/10000");

  bool ok = draws == 30000 && freq[0] == 0 && freq[4] == 0;
  std::string detail = std::to_string(draws) + " draws:";
  for (auto u : {text3d::LengthUnit::meter, text3d::LengthUnit::decimeter, text3d::LengthUnit::centimeter}) {
    const double f = static_cast<double>(freq[static_cast<std::size_t>(u)]) / static_cast<double>(draws);
    ok = ok && std::abs(f - 1.0 / 3.0) <= 0.01;
    detail += " " + std::string(text3d::unit_name(u)) + fmt("=%.4f", f);
  }
  report(ok, "unit-uniformity", detail + " (target 0.3333 +- 0.01)");
}

void similarity_metrics() {
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const Eigen::Index n = 2 + static_cast<Eigen::Index>(seed % 7);
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(n), 1);
    mask.back() = 0;
    const auto x = embedio::make_bundle("x", uniform_matrix(seed, "x", n, 16, 1.0), mask);
    const auto y = embedio::make_bundle("x", x.features(), mask);
    worst = std::max({worst, std::abs(similarity::euclidean_similarity(x, y) - 1.0),
                      std::abs(similarity::cosine_similarity(x, y) - 1.0)});
  }
  double pad = 0.0;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const MatrixXd a = uniform_matrix(seed, "a", 6, 8, 1.0), b = uniform_matrix(seed, "b", 6, 8, 1.0);
    const std::vector<std::uint8_t> mask = {1, 1, 0, 1, 0, 0};
    MatrixXd a2 = a, b2 = b;
    for (Eigen::Index r : {2, 4, 5}) {
      a2.row(r) = uniform_matrix(seed, "pa", 1, 8, 100.0);
      b2.row(r) = uniform_matrix(seed, "pb", 1, 8, 100.0);
    }
    pad = std::max({pad,
                    std::abs(similarity::euclidean_similarity(a, b, mask) -
                             similarity::euclidean_similarity(a2, b2, mask)),
                    std::abs(similarity::cosine_similarity(a, b, mask) - similarity::cosine_similarity(a2, b2, mask))});
  }
  MatrixXd a(2, 2), b(2, 2);
  a << 1, 2, 3, 4;
  b << 1, 2, 2, 4;
  const double se = similarity::euclidean_similarity(a, b, std::vector<std::uint8_t>{1, 1});
  report(worst <= 1e-12 && pad <= 1e-12 && std::abs(se - 0.5) <= 1e-12, "similarity",
         fmt("identical max |1-S| = %.1e", worst) + fmt(", padding delta %.1e", pad) + fmt(", 2x2 S_E = %.15g", se));
}

void attention_cases() {
  using namespace tge;
  double identity = 0.0;
  const MatrixXd x = uniform_matrix(3, "x", 5, 8, 1.0).cwiseAbs();
  identity = std::max(identity, (fc_project(x, identity_projection<double>(8)) - x).cwiseAbs().maxCoeff());
  const MatrixXd row = uniform_matrix(3, "row", 1, 8, 1.0);
  const MatrixXd single = mhca(x, row, identity_attention<double>(8, 2));
  for (Eigen::Index r = 0; r < single.rows(); ++r)
    identity = std::max(identity, (single.row(r) - row.row(0)).cwiseAbs().maxCoeff());
  const MatrixXd token = row.cwiseAbs();
  const MatrixXd composed =
      tge_forward(x, token, identity_projection<double>(8), identity_attention<double>(8, 4));
  for (Eigen::Index r = 0; r < composed.rows(); ++r)
    identity = std::max(identity, (composed.row(r) - token.row(0)).cwiseAbs().maxCoeff());

  MatrixXd q(1, 2), kv(2, 2);
  q << 1, 0;
  kv << 1, 0, 0, 1;
  AttentionParams<double> p = identity_attention<double>(2, 1);
  p.w_v *= 2.0;
  const MatrixXd out = mhca(q, kv, p);
  const double e = std::exp(1.0 / std::sqrt(2.0));
  const double closed = std::max(std::abs(out(0, 0) - 2.0 * e / (e + 1.0)), std::abs(out(0, 1) - 2.0 / (e + 1.0)));

  double perm = 0.0;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const auto params = init_attention(8, 2, seed);
    const MatrixXd qs = uniform_matrix(seed, "q", 4, 8, 1.0), kvs = uniform_matrix(seed, "kv", 7, 8, 1.0);
    std::vector<int> order(7);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), std::mt19937_64(seed));
    MatrixXd shuffled(7, 8);
    for (int r = 0; r < 7; ++r) shuffled.row(r) = kvs.row(order[static_cast<std::size_t>(r)]);
    perm = std::max(perm, (mhca(qs, kvs, params) - mhca(qs, shuffled, params)).cwiseAbs().maxCoeff());
  }
  report(identity <= 1e-12 && closed <= 1e-9 && perm <= 1e-12, "attention",
         fmt("identity cases %.1e", identity) + fmt(", 1-head example %.1e", closed) +
             fmt(" (output %.4f", out(0, 0)) + fmt(", %.4f)", out(0, 1)) + fmt(", kv permutation %.1e", perm));
}

void gradient_suite() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string worst_op;
  std::size_t runs = 0;
  bool threw = false;
  for (const auto& op : gradcheck::registered_ops()) {
    for (auto red : {gradcheck::Reduction::sum, gradcheck::Reduction::weighted}) {
      for (std::uint64_t seed = 1; seed <= 50; ++seed) {
        try {
          const double e = gradcheck::grad_check(op, seed, {}, red).max_rel_error();
          if (e > worst) {
            worst = e;
            worst_op = op + " seed " + std::to_string(seed);
          }
        } catch (const std::exception&) {
          threw = true;
        }
        ++runs;
      }
    }
  }
  const double secs = seconds_since(t0);
  report(!threw && worst < 1e-5 && secs < 60.0, "gradient-suite",
         std::to_string(gradcheck::registered_ops().size()) + " ops, " + std::to_string(runs) +
             " checks, max relative error " + fmt("%.2e", worst) + " (" + worst_op + "), " + fmt("%.2f s", secs) +
             " (limit 60 s)");
}

geometry::Box3d rotate_scene(const geometry::Box3d& b, double angle, const Eigen::Vector3d& shift) {
  const double c = std::cos(angle), s = std::sin(angle);
  geometry::Box3d out = b;
  out.center.x() = c * b.center.x() + s * b.center.z();
  out.center.z() = -s * b.center.x() + c * b.center.z();
  out.center += shift;
  out.yaw = geometry::normalize_yaw(b.yaw + angle);
  return out;
}

void oriented_iou() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst = 0.0, asym = 0.0, rigid = 0.0;
  std::size_t overlapping = 0;
  for (int i = 0; i < 200; ++i) {
    const auto a = oracle::random_box(rng);
    const auto b = i % 4 == 3 ? oracle::random_box(rng) : oracle::nearby_box(a, rng);
    const double v = geometry::iou3d(a, b);
    overlapping += v > 0.0;
    worst = std::max(worst, std::abs(v - oracle::monte_carlo_iou(a, b, 1000000, 1000 + static_cast<std::uint64_t>(i))));
    asym = std::max(asym, std::abs(v - geometry::iou3d(b, a)));
    const double angle = std::numbers::pi * u(rng);
    const Eigen::Vector3d shift(10 * u(rng), u(rng), 10 * u(rng));
    rigid = std::max(rigid, std::abs(v - geometry::iou3d(rotate_scene(a, angle, shift), rotate_scene(b, angle, shift))));
  }
  const double secs = seconds_since(t0);
  report(worst < 0.01 && asym <= 1e-9 && rigid <= 1e-9 && secs < 120.0, "oriented-iou",
         "200 pairs (" + std::to_string(overlapping) + " overlapping), max |iou - MC| " + fmt("%.4f", worst) +
             fmt(", symmetry %.1e", asym) + fmt(", rigid motion %.1e", rigid) + fmt(", %.2f s", secs) +
             " (limit 120 s)");
}

void giou_and_aggregate() {
  using geometry::Box2D;
  const double l0 = losses::giou_loss(Box2D{0, 0, 2, 2}, Box2D{0, 0, 2, 2});
  const double l1 = losses::giou_loss(Box2D{0, 0, 1, 1}, Box2D{1, 0, 2, 1});
  const double l2 = losses::giou_loss(Box2D{0, 0, 2, 2}, Box2D{1, 1, 3, 3});
  const double err = std::max({std::abs(l0), std::abs(l1 - 1.0), std::abs(l2 - (1.0 + 5.0 / 63.0))});
  const double agg = losses::loss_2d(losses::LossParts{1, 1, 1, 1, 0, 0, 0, 0}, losses::LossWeights{});
  report(err <= 1e-12 && agg == 19.0, "giou-and-weights",
         fmt("GIoU loss cases (%.15g", l0) + fmt(", %.15g", l1) + fmt(", %.15g)", l2) +
             fmt(" max error %.1e", err) + fmt(", L_2D(1,1,1,1) = %.17g", agg));
}

void eval_protocol() {
  std::ifstream in(M3DVG_TEST_DATA "/eval_fixture.jsonl");
  const auto recs = eval3d::read_records(in);
  const std::vector<double> taus = {0.25, 0.5};
  const auto rep = eval3d::scenario_report(recs, taus, 2);

  std::array<std::array<std::size_t, 3>, 9> expected{};
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const auto& r = recs[i];
    const double iou = oracle::monte_carlo_iou(r.gt, r.pred, 1000000, 5000 + i);
    std::vector<eval3d::Scenario> labels = {eval3d::Scenario::overall,
                                            r.multiple ? eval3d::Scenario::multiple : eval3d::Scenario::unique};
    labels.push_back(r.depth_m < 15   ? eval3d::Scenario::near
                     : r.depth_m < 35 ? eval3d::Scenario::medium
                                      : eval3d::Scenario::far);
    if (r.occlusion == eval3d::Occlusion::none && r.truncation < 0.15)
      labels.push_back(eval3d::Scenario::easy);
    else if (r.occlusion != eval3d::Occlusion::severe && r.truncation < 0.3)
      labels.push_back(eval3d::Scenario::moderate);
    else
      labels.push_back(eval3d::Scenario::hard);
    for (auto s : labels) {
      auto& e = expected[static_cast<std::size_t>(s)];
      ++e[0];
      e[1] += iou >= 0.25;
      e[2] += iou >= 0.5;
    }
  }
  bool match = true;
  for (auto s : eval3d::kAllScenarios) {
    const auto& row = rep.row(s);
    const auto& e = expected[static_cast<std::size_t>(s)];
    if (row.count != e[0]) match = false;
    if (e[0] == 0) {
      match = match && row.absent() && !row.accuracy[0] && !row.accuracy[1];
      continue;
    }
    match = match && row.accuracy[0] == static_cast<double>(e[1]) / static_cast<double>(e[0]) &&
            row.accuracy[1] == static_cast<double>(e[2]) / static_cast<double>(e[0]);
  }

  std::mt19937_64 rng(31);
  bool monotone = true;
  for (int corpus = 0; corpus < 20; ++corpus) {
    std::vector<eval3d::ScenarioRecord> random_recs;
    for (int k = 0; k < 100; ++k) {
      eval3d::ScenarioRecord r;
      r.id = std::to_string(k);
      r.gt = oracle::random_box(rng);
      r.pred = oracle::nearby_box(r.gt, rng);
      r.depth_m = r.gt.center.z();
      random_recs.push_back(r);
    }
    const auto ious = eval3d::record_ious(random_recs);
    double prev = 1.0;
    for (int k = 1; k < 100; ++k) {
      const double acc = eval3d::accuracy_at(ious, k / 100.0);
      monotone = monotone && acc <= prev;
      prev = acc;
    }
  }
  const auto& overall = rep.row(eval3d::Scenario::overall);
  report(match && monotone, "eval-protocol",
         std::to_string(recs.size()) + " fixture records, buckets " + (match ? "match" : "differ from") +
             " brute force" + fmt(" (overall Acc@0.25 %.4f", *overall.accuracy[0]) +
             fmt(", Acc@0.5 %.4f)", *overall.accuracy[1]) + ", monotone in tau on 20 random corpora: " +
             (monotone ? "yes" : "no"));
}

void millimeter_remap() {
  const std::string path = M3DVG_TEST_DATA "/captions.jsonl";
  std::istringstream no_input;
  std::ostringstream out, err;
  const int code = cli::run({"remap", path, "--unit", "mm"}, no_input, out, err);

  std::ifstream in(path);
  std::istringstream produced(out.str());
  std::string src, dst;
  std::size_t lines = 0, descriptors = 0, mismatches = 0;
  while (std::getline(in, src)) {
    if (!std::getline(produced, dst)) {
      ++mismatches;
      break;
    }
    ++lines;
    const auto a = nlohmann::json::parse(src), b = nlohmann::json::parse(dst);
    const auto before = text3d::scan_descriptors(a["text"].get<std::string>());
    const auto after = text3d::scan_descriptors(b["text"].get<std::string>());
    if (a["id"] != b["id"] || before.size() != after.size()) {
      ++mismatches;
      continue;
    }
    for (std::size_t k = 0; k < before.size(); ++k) {
      ++descriptors;
      mismatches += before[k].length != after[k].length || after[k].unit != text3d::LengthUnit::millimeter;
    }
  }
  report(code == 0 && mismatches == 0 && descriptors > 0, "millimeter-remap",
         "exit " + std::to_string(code) + ", " + std::to_string(lines) + " captions, " +
             std::to_string(descriptors) + " descriptors re-parsed, " + std::to_string(mismatches) + " mismatches");
}

}  // namespace

int main() {
  const std::vector<std::function<void()>> checks = {
      equidistance,     conversion_anchor,  plan_granularity_and_uniformity, similarity_metrics, attention_cases,
      gradient_suite,   oriented_iou,       giou_and_aggregate,              eval_protocol,      millimeter_remap};
  for (const auto& check : checks) {
    try {
      check();
    } catch (const std::exception& e) {
      report(false, "exception", e.what());
    }
  }
  std::printf("%d failed\n", failures);
  return failures == 0 ? 0 : 1;
}
