#pragma once

#include <vector>

#include "rdn/core.hpp"
#include "rdn/synth.hpp"

namespace rdn {

struct ClassAp {
  int class_id = 0;
  double ap = 0.0;
  std::size_t num_ground_truth = 0;
  std::size_t num_detections = 0;
};

struct EvalReport {
  std::vector<ClassAp> per_class;  // classes 1..C that have ground truth
  double mean_ap = 0.0;
};

/// All-point interpolated AP from recall/precision sequences in ranking order.
double average_precision(const std::vector<double>& recall, const std::vector<double>& precision);

/// Detections ranked by score (ties: frame, then proposal id) are matched
/// greedily to the unmatched ground-truth box of highest IoU in the same
/// frame and class. Throws ValidationError for classes outside 1..num_classes.
EvalReport evaluate_detections(const std::vector<Detection>& detections,
                               const std::vector<GroundTruthTrack>& ground_truth,
                               std::size_t num_classes, double iou_threshold = 0.5);

}  // namespace rdn
