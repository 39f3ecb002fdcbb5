#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include <json.hpp>

#include "rdn/core.hpp"
#include "rdn/linking.hpp"
#include "rdn/synth.hpp"
#include "rdn/weight_table.hpp"

namespace rdn {

// All files are JSON Lines. An optional first line {"header": {...}} carries
// provenance and is skipped by every reader. Malformed records raise
// ValidationError with "path:line:" context; unreadable files raise IoError.

struct ProposalWriteOptions {
  /// When set, features go to this little-endian f64 side-car file and each
  /// record carries "feature_offset" (bytes) and "feature_dim" instead.
  std::optional<std::filesystem::path> sidecar;
};

/// {frame, id, box:[x1,y1,x2,y2], objectness, feature:[...]} per proposal.
void write_proposals(const std::filesystem::path& path,
                     const std::vector<std::vector<Proposal>>& frames,
                     const nlohmann::json& header, const ProposalWriteOptions& options = {});

/// Frames are indexed 0..max_frame (or header.num_frames when larger); frames
/// without records are empty. Side-car features resolve relative to the
/// header's "feature_file" or the given override.
std::vector<std::vector<Proposal>> read_proposals(
    const std::filesystem::path& path, std::optional<std::size_t> expected_dim = std::nullopt,
    const std::optional<std::filesystem::path>& sidecar = std::nullopt);

/// {frame, class, score, box, source_proposal_id}
void write_detections(const std::filesystem::path& path,
                      const std::vector<std::vector<Detection>>& detections,
                      const nlohmann::json& header);
std::vector<std::vector<Detection>> read_detections(const std::filesystem::path& path);

/// {frame, ref_id, support_id, w_bar}
void write_weights(const std::filesystem::path& path, const RelationWeightTable& table,
                   const nlohmann::json& header);
RelationWeightTable read_weights(const std::filesystem::path& path);

/// {class, tube_id, frames, boxes, scores_before, scores_after, path_score}
void write_tubes(const std::filesystem::path& path, const std::vector<Tube>& tubes,
                 const nlohmann::json& header);

/// {track_id, class, frames, boxes}
void write_ground_truth(const std::filesystem::path& path,
                        const std::vector<GroundTruthTrack>& tracks, const nlohmann::json& header);
std::vector<GroundTruthTrack> read_ground_truth(const std::filesystem::path& path);

nlohmann::json box_to_json(const BoxGeometry& box);

}  // namespace rdn
