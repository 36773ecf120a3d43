#pragma once

#include <string>
#include <vector>

#include "stablekit/model.hpp"

namespace stablekit {

struct ConditionResult {
    std::string name;
    bool pass = false;
    double fitted_constant = 0.0;
    std::string note;
};

/// Sample-based evidence for the standing assumptions.  A pass is evidence,
/// not proof; every report carries the evidence_only flag.
struct ValidationReport {
    std::vector<ConditionResult> conditions;
    bool evidence_only = true;
    std::string model_name;

    bool all_pass() const;
    const ConditionResult& get(const std::string& name) const;
    std::string to_json() const;
};

/// Default sample grid: 33^d points in [-4,4]^d.
std::vector<Vec> default_sample_grid(int d);

/// Checks M0-M2, N0-N1, B0-B1 and the continuity conditions on the sampled
/// points.  Fitted constants are reported; M2/B1 additionally require the
/// fitted constant to be stable (factor <= 4) between the two finest pair scales.
ValidationReport validate_model(const ModelSpec& model, const NumericalParams& params,
                                const std::vector<Vec>& sample_grid);

} // namespace stablekit
