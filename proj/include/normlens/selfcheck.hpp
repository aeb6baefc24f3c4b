#pragma once

// Named invariant checks behind the `selfcheck` CLI command. Every check is a
// small, self-contained experiment; the suite passes iff all of them do.

#include <cstdint>
#include <string>
#include <vector>

#include "normlens/model.hpp"

namespace normlens {

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

struct SelfcheckOptions {
    std::uint64_t seed = 0;
    // Epsilon used by the norm-law check; the CLI exposes it as a debug knob
    // so a corrupted value (e.g. 1.0) demonstrably fails the check.
    double norm_law_epsilon = 1e-5;
};

std::vector<CheckResult> run_selfcheck(const SelfcheckOptions& options);

// Central-difference gradient check: builds a model from `cfg`, samples
// `n_params` parameters and returns the worst relative disagreement between
// analytic and finite-difference gradients (step 1e-3).
double gradient_check_max_rel_err(const ModelConfig& cfg, int n_params, std::uint64_t seed,
                                  int window_len);

} // namespace normlens
