#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "rdn/core.hpp"
#include "rdn/weight_table.hpp"

namespace rdn {

/// Upper bound applied to rescored confidences; rescoring can push them above 1.
inline constexpr double kMaxRescoredScore = 2.0;

/// (score_a + score_b + overlap) · exp(w_bar).
double linking_score(double score_a, double score_b, double overlap, double w_bar);

/// Same for two detections; b must sit in the frame right after a.
double linking_score(const Detection& a, const Detection& b, double w_bar);

/// Stored ω̄ for the pair as seen from the reference frame, or 0 if absent.
double mean_relation_weight(std::int64_t frame, ProposalId ref_id, ProposalId support_id,
                            const RelationWeightTable& retained);

/// Candidates and edge scores for one class.
struct LinkGraph {
  int class_id = 0;
  std::vector<std::int64_t> frames;                 // ascending, each with >= 1 candidate
  std::vector<std::vector<Detection>> candidates;   // per frame, ascending source_proposal_id
  std::vector<Matrix> edges;  // edges[k]: frames[k] -> frames[k+1]; empty unless consecutive
};

/// Without a weight table every ω̄ is 0 (relation-free linking).
LinkGraph build_link_graph(const std::vector<std::vector<Detection>>& detections, int class_id,
                           const RelationWeightTable* weights);

struct Tube {
  int class_id = 0;
  std::vector<Detection> detections;  // one per consecutive frame
  double path_score = 0.0;            // mean edge score: Σ S / number of frames
  bool rescored = false;
  std::vector<double> scores_before;  // filled by rescore_tube
  double boost = 0.0;
};

/// Best single-box-per-frame path over a maximal run of consecutive frames.
/// Ties resolve to the lexicographically smallest source_proposal_id sequence,
/// then to the earliest run.
std::optional<Tube> optimal_path(const LinkGraph& graph);

struct TubeOptions {
  std::size_t max_tubes = 100;
  double min_path_score = 0.0;
};

/// Repeated optimal_path with removal of the linked detections.
std::vector<Tube> extract_tubes(const std::vector<std::vector<Detection>>& detections,
                                int class_id, const RelationWeightTable* weights,
                                const TubeOptions& options = {});

/// Adds the mean of the top ceil(n/2) scores to every detection of the tube.
/// Throws ValidationError on an empty or already rescored tube.
Tube rescore_tube(Tube tube);

}  // namespace rdn
