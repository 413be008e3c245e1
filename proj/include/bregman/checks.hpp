#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace bregman {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

// Runtime self-test battery: GBF calculus identities, the concavity-number
// grid certificate for every built-in rule, quantile-threshold brute force,
// simplex vs. vertex enumeration, finite-difference gradient checks, and CSV
// byte determinism. quick trims the instance counts for interactive use.
std::vector<CheckResult> check_invariants(bool quick = false, std::uint64_t seed = 7);

}  // namespace bregman
