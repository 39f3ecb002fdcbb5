#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "rdn/matrix.hpp"

namespace rdn {

using ProposalId = std::int64_t;

/// Axis-aligned box in corner form. Degenerate boxes cannot be constructed.
class BoxGeometry {
 public:
  /// Throws ValidationError unless x2 > x1, y2 > y1 and all coordinates are finite.
  BoxGeometry(double x1, double y1, double x2, double y2);

  static BoxGeometry from_center(double cx, double cy, double w, double h);

  double x1() const { return x1_; }
  double y1() const { return y1_; }
  double x2() const { return x2_; }
  double y2() const { return y2_; }

  double width() const { return x2_ - x1_; }
  double height() const { return y2_ - y1_; }
  double cx() const { return 0.5 * (x1_ + x2_); }
  double cy() const { return 0.5 * (y1_ + y2_); }
  double area() const { return width() * height(); }

  bool operator==(const BoxGeometry&) const = default;

 private:
  double x1_, y1_, x2_, y2_;
};

struct Proposal {
  ProposalId id = 0;
  std::int64_t frame_index = 0;
  BoxGeometry box{0.0, 0.0, 1.0, 1.0};
  std::vector<double> feature;
  double objectness = 0.0;
};

struct Detection {
  std::int64_t frame_index = 0;
  int class_id = 0;
  double score = 0.0;
  BoxGeometry box{0.0, 0.0, 1.0, 1.0};
  ProposalId source_proposal_id = 0;

  bool operator==(const Detection&) const = default;
};

/// Proposals laid out for relation reasoning: one feature row per proposal,
/// with geometry and identity kept alongside. Features may be refined by a
/// relation pass while boxes, ids and objectness stay untouched.
struct ProposalBatch {
  std::vector<ProposalId> ids;
  std::vector<BoxGeometry> boxes;
  std::vector<double> objectness;
  Matrix features;

  std::size_t size() const { return ids.size(); }
  bool empty() const { return ids.empty(); }

  /// Throws ValidationError if feature lengths disagree.
  static ProposalBatch from_proposals(std::span<const Proposal> proposals);
  /// Rows in the given order.
  ProposalBatch select(std::span<const std::size_t> rows) const;
};

/// Intersection over union in continuous coordinates.
double iou(const BoxGeometry& a, const BoxGeometry& b);

/// Greedy suppression for detections of one frame and one class. Output is
/// ordered by descending score, ties by lower source_proposal_id.
std::vector<Detection> nms(std::span<const Detection> dets, double iou_threshold);

/// Highest-objectness proposals first, ties by lower id.
std::vector<Proposal> sample_top_k(std::span<const Proposal> proposals, std::size_t k);

/// ceil(|pool| * r_percent / 100) proposals by the same ordering as sample_top_k.
std::vector<Proposal> sample_top_ratio(std::span<const Proposal> pool, double r_percent);

/// Count selected by sample_top_ratio for a pool of the given size.
std::size_t top_ratio_count(std::size_t pool_size, double r_percent);

/// Row indices of a batch ordered by descending objectness, ties by lower id.
std::vector<std::size_t> objectness_order(const ProposalBatch& batch);

}  // namespace rdn
