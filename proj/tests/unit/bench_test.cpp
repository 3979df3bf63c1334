#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "tree.hpp"
#include "yolo/bench.hpp"

namespace yolo {
namespace {

TEST(BenchMath, Median) {
  EXPECT_EQ(median_of({3, 1, 2}), 2);
  EXPECT_EQ(median_of({4, 1, 3, 2}), 2.5);
  EXPECT_EQ(median_of({7}), 7);
}

TEST(BenchMath, CoefficientOfVariation) {
  EXPECT_EQ(coefficient_of_variation({5, 5, 5}), 0);
  // mean 5, sample stddev sqrt(((3)^2 + 0 + 3^2) / 2) = 3
  EXPECT_NEAR(coefficient_of_variation({2, 5, 8}), 0.6, 1e-12);
}

TEST(BenchMath, FitLine) {
  auto exact = fit_line({1, 2, 3, 4}, {3, 5, 7, 9});
  EXPECT_NEAR(exact.slope, 2, 1e-12);
  EXPECT_NEAR(exact.intercept, 1, 1e-12);
  EXPECT_NEAR(exact.r2, 1, 1e-12);
  // y = {1, 3, 2}: slope 0.5, intercept 1.5, SSres 1.5, SStot 2
  auto noisy = fit_line({0, 1, 2}, {1, 3, 2});
  EXPECT_NEAR(noisy.slope, 0.5, 1e-12);
  EXPECT_NEAR(noisy.intercept, 1.5, 1e-12);
  EXPECT_NEAR(noisy.r2, 0.25, 1e-12);
}

BenchConfig tiny(const test::TempDir& dir) {
  BenchConfig c;
  c.workdir = dir.path();
  c.reps = 2;
  c.io_file_size = 1 << 20;
  c.io_cold = false;
  c.meta_iterations = 20;
  c.snap_counts = {1, 4};
  c.snap_samples = 10;
  c.snap_untouched = 20;
  c.commit_records = {100, 200, 400};
  c.commit_snapshots = {1, 2};
  return c;
}

TEST(Bench, IoSuiteProducesRatios) {
  test::TempDir dir;
  auto r = bench_io(tiny(dir));
  ASSERT_TRUE(r.skipped.empty()) << r.skipped;
  EXPECT_TRUE(r.base_intact);
  EXPECT_EQ(r.rows.size(), 2u * 4 * 2);
  EXPECT_GT(r.metric("min-ratio"), 0);
  EXPECT_GT(r.median("seq-read/4096", "null"), 0);
}

TEST(Bench, MetaSuite) {
  test::TempDir dir;
  auto r = bench_meta(tiny(dir));
  EXPECT_TRUE(r.base_intact);
  EXPECT_EQ(r.rows.size(), 2u * 3 * 6);
  EXPECT_GT(r.median("create", "staged"), 0);
}

TEST(Bench, SnapSuite) {
  test::TempDir dir;
  auto r = bench_snap(tiny(dir));
  EXPECT_TRUE(r.base_intact);
  EXPECT_GT(r.metric("ratio:create"), 0);
  EXPECT_GT(r.metric("ratio:read-untouched"), 0);
  EXPECT_GT(r.median("create", "4"), 0);
}

TEST(Bench, CommitSuiteJournalsRequestedRecords) {
  test::TempDir dir;
  auto r = bench_commit(tiny(dir));
  EXPECT_TRUE(r.base_intact);
  EXPECT_TRUE(r.notes.empty()) << r.notes.front();
  EXPECT_EQ(r.rows.size(), 2u * (3 + 2));
  EXPECT_GE(r.metric("records-r2"), 0);
  EXPECT_LE(r.metric("records-r2"), 1);

  std::ostringstream csv;
  write_csv(csv, {r});
  auto text = csv.str();
  EXPECT_EQ(text.rfind("suite,param,location,rep,value,unit\n", 0), 0u);
  EXPECT_NE(text.find("commit,records,100,0,"), std::string::npos);
  EXPECT_NE(render_summary(r).find("== commit =="), std::string::npos);
}

}  // namespace
}  // namespace yolo
