#pragma once

#include <string>
#include <vector>

namespace prefopt::verify {

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;  // worst error, counterexample, etc.
};

// Runs the built-in oracle suite: closed-form partials against central
// finite differences, gradient-ratio identities, monotonicity sweeps, the
// ratio-factor sign law, the equivalence limit, and a model-level gradient
// check. Pure and deterministic.
std::vector<CheckResult> run_all();

bool all_passed(const std::vector<CheckResult>& results);

}  // namespace prefopt::verify
