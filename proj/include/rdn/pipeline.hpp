#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <vector>

#include "rdn/core.hpp"
#include "rdn/distill.hpp"
#include "rdn/weight_table.hpp"

namespace rdn {

struct PipelineConfig {
  std::size_t temporal_range = 18;     // T: support frames span [t-T, t+T]
  std::size_t top_k = 75;              // K: per-frame supportive sample
  double r_percent = 20.0;             // advanced pool share of the supportive pool
  std::size_t num_refs = 300;          // N: reference proposals per frame
  std::size_t num_classes = 30;        // C foreground classes; class 0 is background
  double nms_threshold = 0.5;
  double score_threshold = 0.05;
  DistillMode mode = DistillMode::full;
  bool retain_weights = false;

  void validate() const;
  bool operator==(const PipelineConfig&) const = default;
};

/// Classification (d_model -> C+1, softmax) and class-specific box
/// regression (d_model -> 4C) affine maps.
struct DetectionHeadParams {
  std::size_t d_model = 0;
  std::size_t num_classes = 0;
  Matrix cls_weight;               // d_model x (C+1)
  std::vector<double> cls_bias;    // C+1
  Matrix reg_weight;               // d_model x 4C
  std::vector<double> reg_bias;    // 4C

  void validate() const;
  bool operator==(const DetectionHeadParams&) const = default;

  /// |rows| x (C+1) probabilities, each row summing to one.
  Matrix class_probabilities(const Matrix& features) const;
  /// |rows| x 4C deltas (dx, dy, dw, dh) per foreground class 1..C.
  Matrix box_deltas(const Matrix& features) const;
};

DetectionHeadParams init_head(std::uint64_t seed, std::size_t d_model, std::size_t num_classes);

struct ModelParams {
  BasicStageParams basic;
  AdvancedStageParams advanced;
  DetectionHeadParams head;

  void validate() const;
  bool operator==(const ModelParams&) const = default;
};

/// Applies (dx, dy, dw, dh) in the usual center/log-size parameterization.
BoxGeometry decode_box(const BoxGeometry& anchor, double dx, double dy, double dw, double dh);

struct BufferedFrame {
  std::vector<Proposal> proposals;  // R_t
  std::vector<Proposal> sampled;    // top-K of R_t
};

/// Sliding window of at most 2T+1 consecutive frames.
class FrameBuffer {
 public:
  explicit FrameBuffer(std::size_t temporal_range) : temporal_range_(temporal_range) {}

  std::size_t capacity() const { return 2 * temporal_range_ + 1; }
  std::size_t size() const { return frames_.size(); }
  bool contains(std::int64_t frame) const { return frames_.contains(frame); }
  const BufferedFrame& at(std::int64_t frame) const;
  std::optional<std::int64_t> last_frame() const { return last_; }
  std::optional<std::int64_t> first_frame() const;

  /// Stores one frame; index must follow the previous one.
  void push(std::int64_t frame, BufferedFrame entry);

 private:
  std::size_t temporal_range_;
  std::map<std::int64_t, BufferedFrame> frames_;
  std::optional<std::int64_t> last_;
};

void ingest_frame(std::int64_t frame, std::vector<Proposal> proposals, FrameBuffer& buffer,
                  const PipelineConfig& config);

struct Pools {
  ProposalBatch refs;
  ProposalBatch support;
};

/// R^r = top-N of frame t; R^s = union of buffered top-K sets over
/// [t-T, t+T] in ascending frame order, clipped to frames present.
Pools assemble_pools(std::int64_t frame, const FrameBuffer& buffer, const PipelineConfig& config);

struct FrameResult {
  std::vector<Detection> detections;
  RelationWeightTable weights;  // filled only when config.retain_weights
};

/// Detections for one frame from already-assembled pools.
FrameResult detect_pools(std::int64_t frame, const Pools& pools, const ModelParams& model,
                         const PipelineConfig& config);

FrameResult detect_frame(std::int64_t frame, const FrameBuffer& buffer, const ModelParams& model,
                         const PipelineConfig& config);

struct VideoResult {
  std::vector<std::vector<Detection>> detections;  // indexed by frame
  RelationWeightTable weights;
};

/// Called after each frame is processed with the buffer as it was used.
using FrameObserver = std::function<void(std::int64_t frame, const FrameBuffer& buffer)>;

/// Streaming inference: frames[t] holds the proposals of frame t.
VideoResult run_video(const std::vector<std::vector<Proposal>>& frames, const ModelParams& model,
                      const PipelineConfig& config, const FrameObserver& observer = {});

}  // namespace rdn
