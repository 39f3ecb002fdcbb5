#include "rdn/eval.hpp"

#include <algorithm>
#include <map>
#include <string>

#include "rdn/error.hpp"

namespace rdn {

double average_precision(const std::vector<double>& recall, const std::vector<double>& precision) {
  std::vector<double> r{0.0};
  std::vector<double> p{0.0};
  r.insert(r.end(), recall.begin(), recall.end());
  p.insert(p.end(), precision.begin(), precision.end());
  r.push_back(1.0);
  p.push_back(0.0);
  // Precision envelope: best precision at any recall at least this high.
  for (std::size_t i = p.size() - 1; i > 0; --i) p[i - 1] = std::max(p[i - 1], p[i]);
  double ap = 0.0;
  for (std::size_t i = 1; i < r.size(); ++i) {
    if (r[i] != r[i - 1]) ap += (r[i] - r[i - 1]) * p[i];
  }
  return ap;
}

EvalReport evaluate_detections(const std::vector<Detection>& detections,
                               const std::vector<GroundTruthTrack>& ground_truth,
                               std::size_t num_classes, double iou_threshold) {
  if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) {
    throw ValidationError("eval: IoU threshold must lie in (0, 1]");
  }
  auto check_class = [&](int cls, const char* what) {
    if (cls < 1 || static_cast<std::size_t>(cls) > num_classes) {
      throw ValidationError(std::string("eval: ") + what + " class " + std::to_string(cls) +
                            " outside 1.." + std::to_string(num_classes));
    }
  };

  struct GtBox {
    BoxGeometry box;
    bool matched = false;
  };
  // (class, frame) -> boxes
  std::map<std::pair<int, std::int64_t>, std::vector<GtBox>> gt;
  std::map<int, std::size_t> gt_count;
  for (const auto& track : ground_truth) {
    check_class(track.class_id, "ground-truth");
    for (std::size_t k = 0; k < track.frames.size(); ++k) {
      gt[{track.class_id, track.frames[k]}].push_back({track.boxes[k]});
      ++gt_count[track.class_id];
    }
  }

  std::map<int, std::vector<Detection>> by_class;
  for (const auto& d : detections) {
    check_class(d.class_id, "detection");
    by_class[d.class_id].push_back(d);
  }

  EvalReport report;
  for (int cls = 1; cls <= static_cast<int>(num_classes); ++cls) {
    const auto count_it = gt_count.find(cls);
    if (count_it == gt_count.end()) continue;
    auto& dets = by_class[cls];
    std::sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.frame_index != b.frame_index) return a.frame_index < b.frame_index;
      return a.source_proposal_id < b.source_proposal_id;
    });

    std::vector<double> recall;
    std::vector<double> precision;
    std::size_t tp = 0;
    for (std::size_t k = 0; k < dets.size(); ++k) {
      const auto& d = dets[k];
      auto it = gt.find({cls, d.frame_index});
      GtBox* best = nullptr;
      double best_iou = iou_threshold;
      if (it != gt.end()) {
        for (auto& g : it->second) {
          if (g.matched) continue;
          const double o = iou(d.box, g.box);
          if (o >= best_iou) {
            best_iou = o;
            best = &g;
          }
        }
      }
      if (best) {
        best->matched = true;
        ++tp;
      }
      recall.push_back(static_cast<double>(tp) / static_cast<double>(count_it->second));
      precision.push_back(static_cast<double>(tp) / static_cast<double>(k + 1));
    }
    report.per_class.push_back(
        {cls, average_precision(recall, precision), count_it->second, dets.size()});
  }

  if (!report.per_class.empty()) {
    double sum = 0.0;
    for (const auto& c : report.per_class) sum += c.ap;
    report.mean_ap = sum / static_cast<double>(report.per_class.size());
  }
  return report;
}

}  // namespace rdn
