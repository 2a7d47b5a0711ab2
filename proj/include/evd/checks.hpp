#pragma once

#include <string>
#include <vector>

#include "evd/config.hpp"

namespace evd {

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

/// Runs the module invariant/property battery (round trips, gate laws,
/// solver exactness, CFG identities, zero-impact init, gradient checks,
/// loss identities, pseudo-target properties, gate-off equivalence) plus
/// validation of the supplied config. Returns one result per check.
std::vector<CheckResult> run_check(const RunConfig& cfg);

}  // namespace evd
