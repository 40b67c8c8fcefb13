#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "m3dvg/augment.hpp"
#include "m3dvg/error.hpp"

using namespace m3dvg;
using namespace m3dvg::augment;
using text3d::LengthUnit;

namespace {

std::string strip_spans(const std::string& text) {
  std::string out;
  std::size_t cursor = 0;
  for (const auto& d : text3d::scan_descriptors(text)) {
    out += text.substr(cursor, d.span.begin - cursor);
    cursor = d.span.end;
  }
  return out + text.substr(cursor);
}

std::string corpus(int n) {
  std::ostringstream os;
  for (int i = 0; i < n; ++i)
    os << R"({"id":"c)" << i << R"(","text":"car )" << i << R"( meters ahead, )" << (i % 7) + 1
       << R"(.5-meters-width, and )" << i * 3 << " centimeters left\"}\n";
  return os.str();
}

}  // namespace

TEST(Remap, TenMetersToCentimeters) {
  const auto c = text3d::make_caption("q", "10 meters");
  EXPECT_EQ(remap_fixed(c, LengthUnit::centimeter).text, "1000 centimeters");
}

TEST(Remap, HyphenToKilometers) {
  const auto c = text3d::make_caption("q", "a 1.8-meters-height man");
  EXPECT_EQ(remap_fixed(c, LengthUnit::kilometer).text, "a 0.0018-kilometers-height man");
}

TEST(Remap, IdentityKeepsOriginalBytes) {
  const auto c = text3d::make_caption("q", "about 12.50 Meters out");
  const auto a = remap_fixed(c, LengthUnit::meter);
  EXPECT_EQ(a.text, c.text);
  ASSERT_EQ(a.mapping.size(), 1u);
  EXPECT_EQ(a.mapping[0], (UnitMapping{0, LengthUnit::meter, LengthUnit::meter}));
}

TEST(Remap, NonRenderableThrows) {
  const auto c = text3d::make_caption("q", "1.001 millimeters");
  try {
    remap_fixed(c, LengthUnit::kilometer);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonRenderable);
  }
}

TEST(Augment, PreservesLengthsAndStructure) {
  AugmentConfig cfg;
  cfg.seed = 3;
  for (Plan plan : {Plan::A, Plan::B}) {
    cfg.plan = plan;
    for (int i = 0; i < 200; ++i) {
      const auto c = text3d::make_caption("id" + std::to_string(i),
                                          "x " + std::to_string(i) + " meters, " + std::to_string(i % 9) +
                                              ".25-meters-depth and 40 centimeters");
      const auto a = augment::augment(c, cfg);
      const auto after = text3d::scan_descriptors(a.text);
      ASSERT_EQ(after.size(), c.descriptors.size());
      for (std::size_t k = 0; k < after.size(); ++k) {
        EXPECT_EQ(after[k].length, c.descriptors[k].length);
        EXPECT_EQ(after[k].unit, a.mapping[k].target);
        EXPECT_EQ(after[k].attribute, c.descriptors[k].attribute);
      }
      EXPECT_EQ(strip_spans(a.text), strip_spans(c.text));
    }
  }
}

TEST(Augment, PlanBSharesOneUnitPerCaption) {
  AugmentConfig cfg;
  cfg.plan = Plan::B;
  std::set<LengthUnit> seen;
  for (int i = 0; i < 300; ++i) {
    const auto a = augment::augment(text3d::make_caption(std::to_string(i), "1 meters 2 meters 3 meters"), cfg);
    for (const auto& m : a.mapping) EXPECT_EQ(m.target, a.mapping[0].target);
    seen.insert(a.mapping[0].target);
  }
  EXPECT_EQ(seen.size(), 3u);
}

TEST(Augment, PlanAMixesUnitsWithinCaptions) {
  AugmentConfig cfg;
  int mixed = 0;
  for (int i = 0; i < 100; ++i) {
    const auto a = augment::augment(text3d::make_caption(std::to_string(i), "1 meters 2 meters 3 meters"), cfg);
    std::set<LengthUnit> units;
    for (const auto& m : a.mapping) units.insert(m.target);
    mixed += units.size() > 1;
  }
  EXPECT_GT(mixed, 50);
}

TEST(Augment, KeyedStreamIsAPureFunctionOfItsKey) {
  KeyedStream a(7, "cap", 2), b(7, "cap", 2), c(7, "cap", 3), d(8, "cap", 2);
  const auto x = a.next();
  EXPECT_EQ(x, b.next());
  EXPECT_NE(x, c.next());
  EXPECT_NE(x, d.next());
  EXPECT_THROW(a.uniform_index(0), Error);
}

TEST(Augment, ConfigValidation) {
  AugmentConfig cfg;
  cfg.unit_pool = {};
  EXPECT_THROW(cfg.validate(), Error);
  cfg.unit_pool = {LengthUnit::meter, LengthUnit::meter};
  EXPECT_THROW(cfg.validate(), Error);
}

TEST(Corpus, EmptyInputGivesEmptyOutput) {
  std::istringstream in("");
  std::ostringstream out;
  const auto stats = augment_corpus(in, out, {});
  EXPECT_EQ(out.str(), "");
  EXPECT_EQ(stats.records, 0u);
}

TEST(Corpus, DeterministicAndIndependentOfJobs) {
  const std::string input = corpus(3000);
  AugmentConfig cfg;
  cfg.seed = 11;
  std::string outputs[3];
  const unsigned jobs[3] = {1, 1, 4};
  for (int k = 0; k < 3; ++k) {
    std::istringstream in(input);
    std::ostringstream out;
    const auto stats = augment_corpus(in, out, cfg, jobs[k]);
    EXPECT_EQ(stats.written, 3000u);
    outputs[k] = out.str();
  }
  EXPECT_EQ(outputs[0], outputs[1]);
  EXPECT_EQ(outputs[0], outputs[2]);
  cfg.seed = 12;
  std::istringstream in(input);
  std::ostringstream out;
  augment_corpus(in, out, cfg);
  EXPECT_NE(out.str(), outputs[0]);
}

TEST(Corpus, BadRecordsAreReportedAndSkipped) {
  std::istringstream in("{\"id\":\"a\",\"text\":\"1 meters\"}\nnope\n\n{\"id\":\"b\"}\n{\"id\":\"c\",\"text\":\"2 meters\"}\n");
  std::ostringstream out;
  const auto stats = augment_corpus(in, out, {}, 2);
  EXPECT_EQ(stats.records, 4u);
  EXPECT_EQ(stats.written, 2u);
  ASSERT_EQ(stats.errors.size(), 2u);
  EXPECT_EQ(stats.errors[0].line, 2u);
  EXPECT_EQ(stats.errors[1].line, 4u);
  EXPECT_EQ(stats.errors[1].id, "b");
  std::istringstream lines(out.str());
  std::string first;
  std::getline(lines, first);
  EXPECT_EQ(first.rfind("{\"id\":\"a\"", 0), 0u);
}

TEST(Corpus, JsonLineShape) {
  const auto a = remap_fixed(text3d::make_caption("q", "10 meters"), LengthUnit::centimeter);
  EXPECT_EQ(to_json_line(a), R"({"id":"q","text":"1000 centimeters","mapping":[[0,"meter","centimeter"]]})");
}
