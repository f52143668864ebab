#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "biomm/bmmn.hpp"
#include "biomm/gradcheck.hpp"

namespace biomm {

/// Names accepted by run_gradcheck_suite, per-op checks first, then the
/// end-to-end graphs.
std::vector<std::string> gradcheck_case_names();

/// Runs every case, or only `only` when non-empty (unknown name is a usage
/// error).
std::vector<GradcheckResult> run_gradcheck_suite(const std::string& only = "", std::uint64_t seed = 7);

/// Small widths that keep central differences over all parameters cheap.
ModelConfig toy_model_config(FusionVariant variant);
/// Random sample matching `toy_model_config`.
SyncedSample toy_sample(const ModelConfig& cfg, std::uint64_t seed);

}  // namespace biomm
