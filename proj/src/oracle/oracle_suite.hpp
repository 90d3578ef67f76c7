#pragma once

#include <cstdint>
#include <string>
#include <vector>

// Runs every derived-oracle comparison: optimized kernels against the serial
// double-precision reference on seeded inputs. Used by the `oracle` CLI
// subcommand and by the acceptance suite.

namespace fsskit::oracle {

struct SuiteResult {
    std::string name;
    std::size_t cases = 0;
    double max_abs_diff = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

struct Options {
    std::uint64_t seed = 42;
    // Perturbs one kernel output inside the elementwise suite; exists so the
    // failure path of the oracle command can be exercised end to end.
    bool inject_fault = false;
};

std::vector<SuiteResult> run_all(const Options& opts);

}  // namespace fsskit::oracle
