#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "rdn/core.hpp"
#include "rdn/distill.hpp"
#include "rdn/pipeline.hpp"

namespace rdn {

/// An object moving with constant velocity (pixels per frame).
struct ObjectMotion {
  int class_id = 1;
  BoxGeometry start{0.0, 0.0, 1.0, 1.0};
  double vx = 0.0;
  double vy = 0.0;

  BoxGeometry at(std::int64_t frame) const;
};

struct ScenarioSpec {
  std::uint64_t seed = 7;
  std::size_t num_frames = 30;
  std::size_t num_classes = 3;
  double image_width = 640.0;
  double image_height = 480.0;
  std::size_t d_model = 16;
  std::vector<ObjectMotion> objects;
  double sigma_ref = 0.0;          // feature noise seen when a frame is the reference
  double sigma_sup = 0.0;          // feature noise seen when a frame supports others
  std::size_t jitter_per_object = 2;
  double jitter_fraction = 0.05;   // max center shift / size change, relative to the box
  std::size_t distractors_per_frame = 4;
  double separation = 4.0;         // δ: minimum distance between class centroids

  /// Throws ValidationError naming the offending object or field.
  void validate() const;

  /// 30 frames, three objects of classes 1..3 on disjoint tracks, no noise.
  static ScenarioSpec desk_default();
};

struct GroundTruthTrack {
  int track_id = 0;
  int class_id = 0;
  std::vector<std::int64_t> frames;
  std::vector<BoxGeometry> boxes;
};

struct ProposalLabel {
  int class_id = 0;    // 0 for distractors
  int track_id = -1;   // -1 for distractors
  bool exact_box = false;
};

struct Scenario {
  std::vector<std::vector<Proposal>> frames;           // support view (sigma_sup)
  std::vector<std::vector<Proposal>> reference_views;  // same proposals, sigma_ref features
  std::vector<GroundTruthTrack> tracks;
  std::map<ProposalId, ProposalLabel> labels;
  Matrix centroids;  // (C+1) x d_model, row 0 is background
};

/// Orthogonal rows of norm δ, so pairwise distances are δ·√2.
Matrix class_centroids(const ScenarioSpec& spec);

Scenario generate_scenario(const ScenarioSpec& spec);

/// Nearest-centroid classifier: logit_c = β(⟨f, μ_c⟩ - |μ_c|²/2), zero regression.
DetectionHeadParams oracle_head(const ScenarioSpec& spec);

struct DistillParams {
  BasicStageParams basic;
  AdvancedStageParams advanced;
};

/// Relation modules that average similar supportive features: W_Q = W_K =
/// sqrt(similarity_scale)·[I; 0], stacked W_V = 0.5·I, W_G = 0 (uniform
/// geometry bias), identity transforms.
DistillParams averaging_attention_params(const RelationDims& dims, std::size_t num_basic,
                                         double r_percent, double similarity_scale = 2.0);

/// Same shapes with every value projection zero and identity transforms.
DistillParams zero_value_params(std::uint64_t seed, const RelationDims& dims,
                                std::size_t num_basic, double r_percent);

struct DenoisingReport {
  double raw_distance = 0.0;        // mean |f_ref - μ| over object reference proposals
  double augmented_distance = 0.0;  // mean |out/gain - μ|
  double gain = 1.0;                // fitted on the noiseless twin scenario
  std::size_t samples = 0;

  double reduction() const { return 1.0 - augmented_distance / raw_distance; }
};

/// Runs distillation on every frame (reference view against buffered
/// support views) and compares refined features with the true centroids.
DenoisingReport measure_denoising(const ScenarioSpec& spec, const DistillParams& params,
                                  const PipelineConfig& config);

}  // namespace rdn
