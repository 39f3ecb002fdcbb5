#include "rdn/linking.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <set>
#include <utility>

#include "rdn/error.hpp"

namespace rdn {

double linking_score(double score_a, double score_b, double overlap, double w_bar) {
  return (score_a + score_b + overlap) * std::exp(w_bar);
}

double linking_score(const Detection& a, const Detection& b, double w_bar) {
  if (b.frame_index != a.frame_index + 1) {
    throw ValidationError("linking needs consecutive frames, got " +
                          std::to_string(a.frame_index) + " and " +
                          std::to_string(b.frame_index));
  }
  if (a.class_id != b.class_id) throw ValidationError("linking needs detections of one class");
  return linking_score(a.score, b.score, iou(a.box, b.box), w_bar);
}

double mean_relation_weight(std::int64_t frame, ProposalId ref_id, ProposalId support_id,
                            const RelationWeightTable& retained) {
  return retained.find(frame, ref_id, support_id).value_or(0.0);
}

LinkGraph build_link_graph(const std::vector<std::vector<Detection>>& detections, int class_id,
                           const RelationWeightTable* weights) {
  std::map<std::int64_t, std::vector<Detection>> by_frame;
  for (const auto& frame : detections) {
    for (const auto& d : frame) {
      if (d.class_id == class_id) by_frame[d.frame_index].push_back(d);
    }
  }
  LinkGraph graph;
  graph.class_id = class_id;
  for (auto& [frame, dets] : by_frame) {
    std::sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) {
      return a.source_proposal_id < b.source_proposal_id;
    });
    graph.frames.push_back(frame);
    graph.candidates.push_back(std::move(dets));
  }
  for (std::size_t k = 0; k + 1 < graph.frames.size(); ++k) {
    if (graph.frames[k + 1] != graph.frames[k] + 1) {
      graph.edges.emplace_back();
      continue;
    }
    const auto& from = graph.candidates[k];
    const auto& to = graph.candidates[k + 1];
    Matrix edge(from.size(), to.size());
    for (std::size_t i = 0; i < from.size(); ++i) {
      for (std::size_t j = 0; j < to.size(); ++j) {
        const double w_bar =
            weights ? mean_relation_weight(from[i].frame_index, from[i].source_proposal_id,
                                           to[j].source_proposal_id, *weights)
                    : 0.0;
        edge(i, j) = linking_score(from[i], to[j], w_bar);
      }
    }
    graph.edges.push_back(std::move(edge));
  }
  return graph;
}

namespace {

struct SegmentPath {
  std::vector<std::size_t> choice;  // candidate index per frame of the segment
  double total = 0.0;
};

std::vector<std::size_t> trace(const std::vector<std::vector<std::size_t>>& back, std::size_t step,
                               std::size_t state) {
  std::vector<std::size_t> path(step + 1);
  path[step] = state;
  for (std::size_t s = step; s > 0; --s) path[s - 1] = back[s][path[s]];
  return path;
}

/// Viterbi over frames [first, last] of the graph, summing edge scores left to right.
SegmentPath best_in_segment(const LinkGraph& g, std::size_t first, std::size_t last) {
  const std::size_t steps = last - first + 1;
  std::vector<double> value(g.candidates[first].size(), 0.0);
  std::vector<std::vector<std::size_t>> back(steps);

  for (std::size_t s = 1; s < steps; ++s) {
    const Matrix& edge = g.edges[first + s - 1];
    const std::size_t n_to = g.candidates[first + s].size();
    std::vector<double> next(n_to);
    back[s].assign(n_to, 0);
    for (std::size_t j = 0; j < n_to; ++j) {
      std::size_t best = 0;
      double best_value = value[0] + edge(0, j);
      for (std::size_t i = 1; i < value.size(); ++i) {
        const double v = value[i] + edge(i, j);
        if (v > best_value) {
          best = i;
          best_value = v;
        } else if (v == best_value) {
          // Candidates are id-sorted, so comparing index prefixes is comparing id prefixes.
          if (trace(back, s - 1, i) < trace(back, s - 1, best)) best = i;
        }
      }
      next[j] = best_value;
      back[s][j] = best;
    }
    value = std::move(next);
  }

  std::size_t best = 0;
  for (std::size_t j = 1; j < value.size(); ++j) {
    if (value[j] > value[best] ||
        (value[j] == value[best] && trace(back, steps - 1, j) < trace(back, steps - 1, best))) {
      best = j;
    }
  }
  return {trace(back, steps - 1, best), value[best]};
}

}  // namespace

std::optional<Tube> optimal_path(const LinkGraph& graph) {
  if (graph.frames.empty()) return std::nullopt;

  std::optional<Tube> best;
  std::size_t first = 0;
  while (first < graph.frames.size()) {
    std::size_t last = first;
    while (last + 1 < graph.frames.size() && graph.frames[last + 1] == graph.frames[last] + 1) {
      ++last;
    }
    const SegmentPath seg = best_in_segment(graph, first, last);
    const double length = static_cast<double>(last - first + 1);
    const double score = seg.total / length;
    if (!best || score > best->path_score) {
      Tube tube;
      tube.class_id = graph.class_id;
      tube.path_score = score;
      for (std::size_t s = 0; s < seg.choice.size(); ++s) {
        tube.detections.push_back(graph.candidates[first + s][seg.choice[s]]);
      }
      best = std::move(tube);
    }
    first = last + 1;
  }
  return best;
}

std::vector<Tube> extract_tubes(const std::vector<std::vector<Detection>>& detections,
                                int class_id, const RelationWeightTable* weights,
                                const TubeOptions& options) {
  std::vector<std::vector<Detection>> remaining;
  remaining.reserve(detections.size());
  for (const auto& frame : detections) {
    std::vector<Detection> kept;
    for (const auto& d : frame) {
      if (d.class_id == class_id) kept.push_back(d);
    }
    remaining.push_back(std::move(kept));
  }

  std::vector<Tube> tubes;
  while (tubes.size() < options.max_tubes) {
    const LinkGraph graph = build_link_graph(remaining, class_id, weights);
    auto tube = optimal_path(graph);
    if (!tube || tube->path_score < options.min_path_score) break;

    std::set<std::pair<std::int64_t, ProposalId>> used;
    for (const auto& d : tube->detections) used.insert({d.frame_index, d.source_proposal_id});
    for (auto& frame : remaining) {
      std::erase_if(frame, [&](const Detection& d) {
        return used.contains({d.frame_index, d.source_proposal_id});
      });
    }
    tubes.push_back(std::move(*tube));
  }
  return tubes;
}

Tube rescore_tube(Tube tube) {
  if (tube.detections.empty()) throw ValidationError("cannot rescore an empty tube");
  if (tube.rescored) throw ValidationError("tube has already been rescored");

  std::vector<double> sorted;
  sorted.reserve(tube.detections.size());
  for (const auto& d : tube.detections) sorted.push_back(d.score);
  tube.scores_before = sorted;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());

  const std::size_t top = (sorted.size() + 1) / 2;
  double sum = 0.0;
  for (std::size_t k = 0; k < top; ++k) sum += sorted[k];
  tube.boost = sum / static_cast<double>(top);

  for (auto& d : tube.detections) d.score = std::min(d.score + tube.boost, kMaxRescoredScore);
  tube.rescored = true;
  return tube;
}

}  // namespace rdn
