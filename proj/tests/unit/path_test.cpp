#include <gtest/gtest.h>

#include "yolo/path.hpp"

namespace yolo {
namespace {

TEST(Path, NormalizeDropsSlashesAndDots) {
  EXPECT_EQ(normalize_path("/"), "");
  EXPECT_EQ(normalize_path(""), "");
  EXPECT_EQ(normalize_path("/a//b/./c/"), "a/b/c");
  EXPECT_EQ(normalize_path("./x"), "x");
}

TEST(Path, NormalizeRejectsDotDot) {
  EXPECT_THROW(normalize_path("a/../b"), InvalidPath);
  EXPECT_THROW(normalize_path(".."), InvalidPath);
}

TEST(Path, NormalizedForm) {
  EXPECT_TRUE(is_normalized(""));
  EXPECT_TRUE(is_normalized("a/b"));
  EXPECT_FALSE(is_normalized("/a"));
  EXPECT_FALSE(is_normalized("a/"));
  EXPECT_FALSE(is_normalized("a//b"));
  EXPECT_FALSE(is_normalized("a/./b"));
  EXPECT_THROW(require_normalized("a/../b"), InvalidPath);
}

TEST(Path, SplitJoinParent) {
  auto parts = split_path("a/bb/c");
  ASSERT_EQ(parts.size(), 3u);
  EXPECT_EQ(parts[1], "bb");
  EXPECT_TRUE(split_path("").empty());
  EXPECT_EQ(join_path("", "x"), "x");
  EXPECT_EQ(join_path("a/b", "x"), "a/b/x");
  EXPECT_EQ(parent_path("a/b/c"), "a/b");
  EXPECT_EQ(parent_path("a"), "");
  EXPECT_EQ(base_name("a/b/c"), "c");
  EXPECT_EQ(base_name("c"), "c");
}

TEST(Path, WithinAndRebase) {
  EXPECT_TRUE(is_within("a/b", "a"));
  EXPECT_TRUE(is_within("a", "a"));
  EXPECT_TRUE(is_within("a", ""));
  EXPECT_FALSE(is_within("ab", "a"));
  EXPECT_FALSE(is_within("a", "a/b"));
  EXPECT_EQ(rebase_path("d1/x", "d1", "d3/d2"), "d3/d2/x");
  EXPECT_EQ(rebase_path("d1", "d1", "d3/d2"), "d3/d2");
}

}  // namespace
}  // namespace yolo
