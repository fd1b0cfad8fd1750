#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace attnmask {

struct GradSuiteOptions {
  int seeds = 20;
  double tolerance = 1e-3;
  double eps = 1e-4;
  std::uint64_t base_seed = 1000;
  // Per parameter tensor, a random subset of this many elements is checked.
  std::size_t param_elements = 12;
  // Elements whose eps and eps / 2 differences disagree straddle a ReLU or max
  // kink and are skipped; the entry fails if more than this fraction is skipped.
  double max_skipped_fraction = 0.01;
};

struct GradSuiteEntry {
  std::string module;  // attention, backbone, roialign or losses
  std::string name;
  int seeds = 0;
  std::size_t checks = 0;
  std::size_t skipped = 0;
  double max_rel_error = 0.0;
  std::uint64_t worst_seed = 0;
  bool passed = false;
};

// module: all, attention, backbone, roialign or losses.
std::vector<GradSuiteEntry> run_gradient_suite(const std::string& module,
                                               const GradSuiteOptions& options = {});

}  // namespace attnmask
