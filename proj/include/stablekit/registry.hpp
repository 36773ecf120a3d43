#pragma once

#include <map>
#include <string>
#include <vector>

#include "stablekit/model.hpp"

namespace stablekit {

/// Builtin model template: parameter schema plus a generator.
struct ModelTemplate {
    std::string name;
    std::string anchor;  // short description of the worked example it realizes
    struct Param {
        std::string name;
        double def, lo, hi;
    };
    std::vector<Param> params;
};

/// Registered names: const-cauchy, const-alpha, var-alpha-1d, resetting,
/// rotation-sde, truncated-noise.
std::vector<ModelTemplate> list_models();

/// Instantiate a builtin by name.  Throws on unknown names or out-of-range
/// parameter overrides.
ModelSpec get_model(const std::string& name,
                    const std::map<std::string, double>& overrides = {});

/// JSON array of {name, parameters, paper_anchor}.
std::string list_models_json();

} // namespace stablekit
