#include "rdn/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rdn/error.hpp"
#include "rdn/random.hpp"

namespace rdn {

namespace {

// Caps exp(dw) / exp(dh) the same way Faster R-CNN style decoders do.
const double kMaxLogScale = std::log(1000.0 / 16.0);

}  // namespace

void PipelineConfig::validate() const {
  if (top_k < 1) throw ValidationError("pipeline: K must be at least 1");
  if (num_refs < 1) throw ValidationError("pipeline: N_ref must be at least 1");
  if (num_classes < 1) throw ValidationError("pipeline: num_classes must be at least 1");
  if (!(r_percent > 0.0 && r_percent <= 100.0)) {
    throw ValidationError("pipeline: r_percent must lie in (0, 100]");
  }
  if (!(nms_threshold > 0.0 && nms_threshold <= 1.0)) {
    throw ValidationError("pipeline: nms_threshold must lie in (0, 1]");
  }
  if (!(score_threshold >= 0.0 && score_threshold <= 1.0)) {
    throw ValidationError("pipeline: score_threshold must lie in [0, 1]");
  }
}

void DetectionHeadParams::validate() const {
  const std::size_t n_cls = num_classes + 1;
  const std::size_t n_reg = 4 * num_classes;
  if (num_classes == 0) throw ValidationError("detection head needs at least one class");
  if (cls_weight.rows() != d_model || cls_weight.cols() != n_cls || cls_bias.size() != n_cls) {
    throw ValidationError("detection head classification map must be " +
                          std::to_string(d_model) + "x" + std::to_string(n_cls));
  }
  if (reg_weight.rows() != d_model || reg_weight.cols() != n_reg || reg_bias.size() != n_reg) {
    throw ValidationError("detection head regression map must be " + std::to_string(d_model) +
                          "x" + std::to_string(n_reg));
  }
}

Matrix DetectionHeadParams::class_probabilities(const Matrix& features) const {
  Matrix probs = matmul(features, cls_weight);
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    auto row = probs.row(i);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += cls_bias[c];
    const double peak = *std::max_element(row.begin(), row.end());
    double total = 0.0;
    for (double& v : row) {
      v = std::exp(v - peak);
      total += v;
    }
    for (double& v : row) v /= total;
  }
  return probs;
}

Matrix DetectionHeadParams::box_deltas(const Matrix& features) const {
  Matrix deltas = matmul(features, reg_weight);
  for (std::size_t i = 0; i < deltas.rows(); ++i) {
    auto row = deltas.row(i);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += reg_bias[c];
  }
  return deltas;
}

DetectionHeadParams init_head(std::uint64_t seed, std::size_t d_model, std::size_t num_classes) {
  Rng rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(d_model));
  DetectionHeadParams head{d_model,
                           num_classes,
                           Matrix(d_model, num_classes + 1),
                           std::vector<double>(num_classes + 1, 0.0),
                           Matrix(d_model, 4 * num_classes),
                           std::vector<double>(4 * num_classes, 0.0)};
  for (double& v : head.cls_weight.data()) v = rng.uniform(-bound, bound);
  for (double& v : head.reg_weight.data()) v = rng.uniform(-bound, bound) * 0.01;
  head.validate();
  return head;
}

void ModelParams::validate() const {
  basic.validate();
  advanced.validate();
  head.validate();
  const std::size_t d_model = basic.modules.front().dims.d_model;
  if (advanced.pool_module.dims.d_model != d_model || head.d_model != d_model) {
    throw ValidationError("model components disagree on d_model");
  }
}

BoxGeometry decode_box(const BoxGeometry& anchor, double dx, double dy, double dw, double dh) {
  const double w = anchor.width();
  const double h = anchor.height();
  const double cx = dx * w + anchor.cx();
  const double cy = dy * h + anchor.cy();
  const double nw = w * std::exp(std::min(dw, kMaxLogScale));
  const double nh = h * std::exp(std::min(dh, kMaxLogScale));
  return BoxGeometry::from_center(cx, cy, nw, nh);
}

const BufferedFrame& FrameBuffer::at(std::int64_t frame) const {
  auto it = frames_.find(frame);
  if (it == frames_.end()) {
    throw ValidationError("frame " + std::to_string(frame) + " is not in the proposal buffer");
  }
  return it->second;
}

std::optional<std::int64_t> FrameBuffer::first_frame() const {
  if (frames_.empty()) return std::nullopt;
  return frames_.begin()->first;
}

void FrameBuffer::push(std::int64_t frame, BufferedFrame entry) {
  if (frame < 0) throw ValidationError("frame index must be non-negative");
  if (last_ && frame != *last_ + 1) {
    throw ValidationError("frame " + std::to_string(frame) + " does not follow frame " +
                          std::to_string(*last_));
  }
  frames_.emplace(frame, std::move(entry));
  last_ = frame;
  const auto window = static_cast<std::int64_t>(capacity());
  frames_.erase(frame - window);
}

void ingest_frame(std::int64_t frame, std::vector<Proposal> proposals, FrameBuffer& buffer,
                  const PipelineConfig& config) {
  for (const auto& p : proposals) {
    if (p.frame_index != frame) {
      throw ValidationError("proposal " + std::to_string(p.id) + " belongs to frame " +
                            std::to_string(p.frame_index) + ", not " + std::to_string(frame));
    }
    if (!(p.objectness >= 0.0 && p.objectness <= 1.0)) {
      throw ValidationError("proposal " + std::to_string(p.id) + " objectness outside [0, 1]");
    }
  }
  BufferedFrame entry;
  entry.sampled = sample_top_k(proposals, config.top_k);
  entry.proposals = std::move(proposals);
  buffer.push(frame, std::move(entry));
}

Pools assemble_pools(std::int64_t frame, const FrameBuffer& buffer, const PipelineConfig& config) {
  const BufferedFrame& current = buffer.at(frame);
  const auto range = static_cast<std::int64_t>(config.temporal_range);
  std::vector<Proposal> support;
  for (std::int64_t tau = std::max<std::int64_t>(0, frame - range); tau <= frame + range; ++tau) {
    if (!buffer.contains(tau)) continue;
    const auto& sampled = buffer.at(tau).sampled;
    support.insert(support.end(), sampled.begin(), sampled.end());
  }
  Pools pools;
  pools.refs = ProposalBatch::from_proposals(sample_top_k(current.proposals, config.num_refs));
  pools.support = ProposalBatch::from_proposals(support);
  return pools;
}

FrameResult detect_pools(std::int64_t frame, const Pools& pools, const ModelParams& model,
                         const PipelineConfig& config) {
  FrameResult result;
  if (pools.refs.empty()) return result;

  const StageOutput distilled = distillation_forward(pools.refs, pools.support, model.basic,
                                                     model.advanced, config.mode);
  const Matrix probs = model.head.class_probabilities(distilled.refined.features);
  const Matrix deltas = model.head.box_deltas(distilled.refined.features);

  for (std::size_t c = 1; c <= model.head.num_classes; ++c) {
    std::vector<Detection> candidates;
    for (std::size_t i = 0; i < pools.refs.size(); ++i) {
      const double score = probs(i, c);
      if (!(score > config.score_threshold)) continue;
      const std::size_t off = 4 * (c - 1);
      candidates.push_back(Detection{
          frame, static_cast<int>(c), score,
          decode_box(pools.refs.boxes[i], deltas(i, off), deltas(i, off + 1), deltas(i, off + 2),
                     deltas(i, off + 3)),
          pools.refs.ids[i]});
    }
    auto kept = nms(candidates, config.nms_threshold);
    result.detections.insert(result.detections.end(), kept.begin(), kept.end());
  }
  if (config.retain_weights) {
    result.weights.add_frame(frame, pools.refs.ids, pools.support.ids, distilled.last_weights);
  }
  return result;
}

FrameResult detect_frame(std::int64_t frame, const FrameBuffer& buffer, const ModelParams& model,
                         const PipelineConfig& config) {
  return detect_pools(frame, assemble_pools(frame, buffer, config), model, config);
}

VideoResult run_video(const std::vector<std::vector<Proposal>>& frames, const ModelParams& model,
                      const PipelineConfig& config, const FrameObserver& observer) {
  if (frames.empty()) throw ValidationError("run_video needs at least one frame");
  config.validate();
  model.validate();
  if (model.head.num_classes != config.num_classes) {
    throw ValidationError("detection head has " + std::to_string(model.head.num_classes) +
                          " classes, config expects " + std::to_string(config.num_classes));
  }

  const auto n = static_cast<std::int64_t>(frames.size());
  const auto range = static_cast<std::int64_t>(config.temporal_range);
  FrameBuffer buffer(config.temporal_range);
  for (std::int64_t t = 0; t <= std::min(range, n - 1); ++t) {
    ingest_frame(t, frames[static_cast<std::size_t>(t)], buffer, config);
  }

  VideoResult result;
  result.detections.resize(frames.size());
  for (std::int64_t t = 0; t < n; ++t) {
    FrameResult frame = detect_frame(t, buffer, model, config);
    result.detections[static_cast<std::size_t>(t)] = std::move(frame.detections);
    result.weights.merge(frame.weights);
    if (observer) observer(t, buffer);
    const std::int64_t incoming = t + range + 1;
    if (incoming < n) {
      ingest_frame(incoming, frames[static_cast<std::size_t>(incoming)], buffer, config);
    }
  }
  return result;
}

}  // namespace rdn
