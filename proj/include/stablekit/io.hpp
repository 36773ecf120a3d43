#pragma once

#include <string>

#include "stablekit/model.hpp"

namespace stablekit {

/// Load a model from a JSON document (see README for the schema).
/// Error messages carry the JSON path of the offending field.
ModelSpec load_model_json(const std::string& path);
ModelSpec parse_model_json(const std::string& text);

/// Canonical serialization (also the basis of the provenance hash).
std::string model_to_json(const ModelSpec& model);

/// FNV-1a over the canonical serialization.
std::string model_hash(const ModelSpec& model);

} // namespace stablekit
