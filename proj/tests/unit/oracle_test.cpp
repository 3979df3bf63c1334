#include <gtest/gtest.h>

#include "harness.hpp"

namespace yolo::test {
namespace {

TEST(Oracle, SeededSequencesMatchModel) {
  MountedSession mount;
  for (std::uint64_t seed = 1; seed <= 200; ++seed) {
    auto out = run_oracle_sequence(mount, seed);
    ASSERT_EQ(out.equivalence, "");
    ASSERT_EQ(out.abort, "");
  }
}

}  // namespace
}  // namespace yolo::test
