#pragma once

#include <ostream>

#include "rdn/eval.hpp"
#include "rdn/pipeline.hpp"
#include "rdn/run_config.hpp"

namespace rdn {

/// Parameters for the configured model kind. Throws ValidationError when a
/// loaded container disagrees with the pipeline configuration.
ModelParams build_model(const RunConfig& config);

/// Scenario proposals and ground-truth tracks.
void cmd_synth(const RunConfig& config, std::ostream& log);

/// Streaming inference over the proposal file; writes detections, the
/// parameter container and, when linking is enabled, retained weights.
void cmd_infer(const RunConfig& config, std::ostream& log);

/// Tubes per class and the rescored detection file.
void cmd_link(const RunConfig& config, std::ostream& log);

/// Per-class AP and mAP of a detection file against the ground truth.
EvalReport cmd_eval(const RunConfig& config, std::ostream& log,
                    const std::filesystem::path& detections = {});

/// Returns true when every seed stays below the configured tolerance.
bool cmd_gradcheck(const RunConfig& config, std::ostream& log);

/// Full command line; returns 0 on success, 1 on validation errors or a
/// failed gradient check, 2 on I/O errors.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace rdn
