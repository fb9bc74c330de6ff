#pragma once

#include <string>
#include <vector>

namespace qlm {

struct SelfTestResult {
  int passed = 0;
  int failed = 0;
  std::vector<std::string> lines;
};

/// Compact oracle checks over every module, runnable from the CLI without
/// the test suite.
SelfTestResult run_selftest();

}  // namespace qlm
