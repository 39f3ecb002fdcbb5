#include "rdn/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "rdn/error.hpp"

namespace rdn {

BoxGeometry::BoxGeometry(double x1, double y1, double x2, double y2)
    : x1_(x1), y1_(y1), x2_(x2), y2_(y2) {
  if (!std::isfinite(x1) || !std::isfinite(y1) || !std::isfinite(x2) || !std::isfinite(y2)) {
    throw ValidationError("box has non-finite coordinates");
  }
  if (!(x2 > x1) || !(y2 > y1)) {
    throw ValidationError("degenerate box [" + std::to_string(x1) + ", " + std::to_string(y1) +
                          ", " + std::to_string(x2) + ", " + std::to_string(y2) + "]");
  }
}

BoxGeometry BoxGeometry::from_center(double cx, double cy, double w, double h) {
  return {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
}

ProposalBatch ProposalBatch::from_proposals(std::span<const Proposal> proposals) {
  ProposalBatch batch;
  const std::size_t dim = proposals.empty() ? 0 : proposals.front().feature.size();
  batch.ids.reserve(proposals.size());
  batch.boxes.reserve(proposals.size());
  batch.objectness.reserve(proposals.size());
  batch.features = Matrix(proposals.size(), dim);
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    const auto& p = proposals[i];
    if (p.feature.size() != dim) {
      throw ValidationError("proposal " + std::to_string(p.id) + " has feature length " +
                            std::to_string(p.feature.size()) + ", expected " +
                            std::to_string(dim));
    }
    batch.ids.push_back(p.id);
    batch.boxes.push_back(p.box);
    batch.objectness.push_back(p.objectness);
    std::copy(p.feature.begin(), p.feature.end(), batch.features.row(i).begin());
  }
  return batch;
}

ProposalBatch ProposalBatch::select(std::span<const std::size_t> rows) const {
  ProposalBatch out;
  out.features = Matrix(rows.size(), features.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const std::size_t src = rows[r];
    out.ids.push_back(ids.at(src));
    out.boxes.push_back(boxes.at(src));
    out.objectness.push_back(objectness.at(src));
    std::copy_n(features.row(src).begin(), features.cols(), out.features.row(r).begin());
  }
  return out;
}

double iou(const BoxGeometry& a, const BoxGeometry& b) {
  const double iw = std::min(a.x2(), b.x2()) - std::max(a.x1(), b.x1());
  const double ih = std::min(a.y2(), b.y2()) - std::max(a.y1(), b.y1());
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  // Symmetric in a and b: area sum is commutative, so iou(a,b) == iou(b,a) bitwise.
  const double uni = a.area() + b.area() - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

namespace {

bool score_before(const Detection& a, const Detection& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.source_proposal_id < b.source_proposal_id;
}

bool objectness_before(const Proposal& a, const Proposal& b) {
  if (a.objectness != b.objectness) return a.objectness > b.objectness;
  return a.id < b.id;
}

}  // namespace

std::vector<Detection> nms(std::span<const Detection> dets, double iou_threshold) {
  if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) {
    throw ValidationError("nms threshold must lie in (0, 1]");
  }
  std::vector<Detection> sorted(dets.begin(), dets.end());
  std::sort(sorted.begin(), sorted.end(), score_before);

  std::vector<Detection> kept;
  std::vector<bool> suppressed(sorted.size(), false);
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (suppressed[i]) continue;
    kept.push_back(sorted[i]);
    for (std::size_t j = i + 1; j < sorted.size(); ++j) {
      if (!suppressed[j] && iou(sorted[i].box, sorted[j].box) > iou_threshold) {
        suppressed[j] = true;
      }
    }
  }
  return kept;
}

std::vector<Proposal> sample_top_k(std::span<const Proposal> proposals, std::size_t k) {
  std::vector<Proposal> sorted(proposals.begin(), proposals.end());
  const std::size_t n = std::min(k, sorted.size());
  std::partial_sort(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(n), sorted.end(),
                    objectness_before);
  sorted.resize(n);
  return sorted;
}

std::size_t top_ratio_count(std::size_t pool_size, double r_percent) {
  if (!(r_percent > 0.0 && r_percent <= 100.0)) {
    throw ValidationError("r_percent must lie in (0, 100], got " + std::to_string(r_percent));
  }
  if (pool_size == 0) return 0;
  const auto count =
      static_cast<std::size_t>(std::ceil(static_cast<double>(pool_size) * r_percent / 100.0));
  return std::clamp<std::size_t>(count, 1, pool_size);
}

std::vector<Proposal> sample_top_ratio(std::span<const Proposal> pool, double r_percent) {
  return sample_top_k(pool, top_ratio_count(pool.size(), r_percent));
}

std::vector<std::size_t> objectness_order(const ProposalBatch& batch) {
  std::vector<std::size_t> order(batch.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (batch.objectness[a] != batch.objectness[b]) {
      return batch.objectness[a] > batch.objectness[b];
    }
    return batch.ids[a] < batch.ids[b];
  });
  return order;
}

}  // namespace rdn
