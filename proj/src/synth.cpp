#include "rdn/synth.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rdn/error.hpp"
#include "rdn/random.hpp"

namespace rdn {

namespace {

// Logit margin between the true class and any other on a noiseless feature.
constexpr double kOracleMargin = 10.0;

enum Stream : std::uint64_t { kCentroids = 0, kGeometry = 1, kSupportNoise = 2, kRefNoise = 3 };

std::vector<double> noisy(std::span<const double> centroid, double sigma, Rng& rng) {
  std::vector<double> f(centroid.begin(), centroid.end());
  for (double& v : f) v += sigma * rng.normal();
  return f;
}

}  // namespace

BoxGeometry ObjectMotion::at(std::int64_t frame) const {
  const double t = static_cast<double>(frame);
  return {start.x1() + vx * t, start.y1() + vy * t, start.x2() + vx * t, start.y2() + vy * t};
}

void ScenarioSpec::validate() const {
  if (num_frames == 0) throw ValidationError("scenario: num_frames must be positive");
  if (num_classes == 0) throw ValidationError("scenario: num_classes must be positive");
  if (!(separation > 0.0)) throw ValidationError("scenario: separation must be positive");
  if (!(image_width > 0.0 && image_height > 0.0)) {
    throw ValidationError("scenario: image extent must be positive");
  }
  if (num_classes + 1 > d_model) {
    throw ValidationError("scenario: d_model " + std::to_string(d_model) +
                          " cannot hold orthogonal centroids for " +
                          std::to_string(num_classes) + " classes plus background");
  }
  if (!(sigma_ref >= 0.0 && sigma_sup >= 0.0)) {
    throw ValidationError("scenario: noise levels must be non-negative");
  }
  if (!(jitter_fraction >= 0.0 && jitter_fraction < 0.5)) {
    throw ValidationError("scenario: jitter_fraction must lie in [0, 0.5)");
  }
  for (std::size_t k = 0; k < objects.size(); ++k) {
    const auto& obj = objects[k];
    if (obj.class_id < 1 || static_cast<std::size_t>(obj.class_id) > num_classes) {
      throw ValidationError("scenario: object " + std::to_string(k) + " has class " +
                            std::to_string(obj.class_id) + " outside 1.." +
                            std::to_string(num_classes));
    }
    for (std::size_t t = 0; t < num_frames; ++t) {
      const BoxGeometry b = obj.at(static_cast<std::int64_t>(t));
      if (b.x1() < 0.0 || b.y1() < 0.0 || b.x2() > image_width || b.y2() > image_height) {
        throw ValidationError("scenario: object " + std::to_string(k) +
                              " leaves the image at frame " + std::to_string(t));
      }
    }
  }
}

ScenarioSpec ScenarioSpec::desk_default() {
  ScenarioSpec spec;
  spec.objects = {
      {1, BoxGeometry(40.0, 40.0, 120.0, 120.0), 4.0, 2.0},
      {2, BoxGeometry(480.0, 60.0, 560.0, 140.0), -3.0, 3.0},
      {3, BoxGeometry(200.0, 340.0, 300.0, 420.0), 5.0, -1.0},
  };
  return spec;
}

Matrix class_centroids(const ScenarioSpec& spec) {
  const std::size_t n = spec.num_classes + 1;
  if (n > spec.d_model) throw ValidationError("scenario: too many classes for d_model");
  Rng rng(derive_seed(spec.seed, kCentroids));
  Matrix c(n, spec.d_model);
  for (std::size_t r = 0; r < n; ++r) {
    auto row = c.row(r);
    for (;;) {
      for (double& v : row) v = rng.normal();
      // Gram-Schmidt against the rows already accepted.
      for (std::size_t q = 0; q < r; ++q) {
        const double proj = dot(row, c.row(q)) / dot(c.row(q), c.row(q));
        for (std::size_t k = 0; k < row.size(); ++k) row[k] -= proj * c(q, k);
      }
      const double norm = std::sqrt(dot(row, row));
      if (norm > 1e-6) {
        for (double& v : row) v *= spec.separation / norm;
        break;
      }
    }
  }
  return c;
}

Scenario generate_scenario(const ScenarioSpec& spec) {
  spec.validate();
  Scenario s;
  s.centroids = class_centroids(spec);
  Rng geo(derive_seed(spec.seed, kGeometry));
  Rng sup_noise(derive_seed(spec.seed, kSupportNoise));
  Rng ref_noise(derive_seed(spec.seed, kRefNoise));

  for (std::size_t k = 0; k < spec.objects.size(); ++k) {
    GroundTruthTrack track;
    track.track_id = static_cast<int>(k);
    track.class_id = spec.objects[k].class_id;
    for (std::size_t t = 0; t < spec.num_frames; ++t) {
      track.frames.push_back(static_cast<std::int64_t>(t));
      track.boxes.push_back(spec.objects[k].at(static_cast<std::int64_t>(t)));
    }
    s.tracks.push_back(std::move(track));
  }

  ProposalId next_id = 0;
  s.frames.resize(spec.num_frames);
  s.reference_views.resize(spec.num_frames);
  for (std::size_t t = 0; t < spec.num_frames; ++t) {
    const auto frame = static_cast<std::int64_t>(t);
    auto emit = [&](const BoxGeometry& box, double objectness, int class_id, ProposalLabel label) {
      const auto centroid = s.centroids.row(static_cast<std::size_t>(class_id));
      Proposal p{next_id++, frame, box, noisy(centroid, spec.sigma_sup, sup_noise), objectness};
      Proposal r = p;
      r.feature = noisy(centroid, spec.sigma_ref, ref_noise);
      s.labels.emplace(p.id, label);
      s.frames[t].push_back(std::move(p));
      s.reference_views[t].push_back(std::move(r));
    };

    for (std::size_t k = 0; k < spec.objects.size(); ++k) {
      const auto& obj = spec.objects[k];
      const BoxGeometry truth = obj.at(frame);
      const ProposalLabel exact{obj.class_id, static_cast<int>(k), true};
      emit(truth, geo.uniform(0.7, 1.0), obj.class_id, exact);
      for (std::size_t j = 0; j < spec.jitter_per_object; ++j) {
        const double f = spec.jitter_fraction;
        const double cx = truth.cx() + geo.uniform(-f, f) * truth.width();
        const double cy = truth.cy() + geo.uniform(-f, f) * truth.height();
        const double w = truth.width() * (1.0 + geo.uniform(-f, f));
        const double h = truth.height() * (1.0 + geo.uniform(-f, f));
        emit(BoxGeometry::from_center(cx, cy, w, h), geo.uniform(0.7, 1.0), obj.class_id,
             {obj.class_id, static_cast<int>(k), false});
      }
    }
    for (std::size_t d = 0; d < spec.distractors_per_frame; ++d) {
      const double w = geo.uniform(20.0, 80.0);
      const double h = geo.uniform(20.0, 80.0);
      const double x1 = geo.uniform(0.0, spec.image_width - w);
      const double y1 = geo.uniform(0.0, spec.image_height - h);
      emit(BoxGeometry(x1, y1, x1 + w, y1 + h), geo.uniform(0.0, 0.3), 0, {0, -1, false});
    }
  }
  return s;
}

DetectionHeadParams oracle_head(const ScenarioSpec& spec) {
  spec.validate();
  const Matrix centroids = class_centroids(spec);
  const double beta = kOracleMargin / (spec.separation * spec.separation);
  const std::size_t n_cls = spec.num_classes + 1;
  DetectionHeadParams head{spec.d_model,
                           spec.num_classes,
                           Matrix(spec.d_model, n_cls),
                           std::vector<double>(n_cls, 0.0),
                           Matrix(spec.d_model, 4 * spec.num_classes),
                           std::vector<double>(4 * spec.num_classes, 0.0)};
  for (std::size_t c = 0; c < n_cls; ++c) {
    const auto mu = centroids.row(c);
    for (std::size_t k = 0; k < spec.d_model; ++k) head.cls_weight(k, c) = beta * mu[k];
    head.cls_bias[c] = -0.5 * beta * dot(mu, mu);
  }
  return head;
}

namespace {

RelationModuleParams averaging_module(const RelationDims& dims, double similarity_scale) {
  dims.validate();
  const double q = std::sqrt(similarity_scale);
  RelationModuleParams params;
  params.dims = dims;
  for (std::size_t m = 0; m < dims.heads; ++m) {
    RelationHeadParams head{Matrix(dims.d_model, dims.d_k), Matrix(dims.d_model, dims.d_k),
                            Matrix(dims.d_model, dims.d_rel), std::vector<double>(dims.d_geo, 0.0)};
    for (std::size_t k = 0; k < std::min(dims.d_model, dims.d_k); ++k) {
      head.query(k, k) = q;
      head.key(k, k) = q;
    }
    for (std::size_t c = 0; c < dims.d_rel; ++c) head.value(m * dims.d_rel + c, c) = 0.5;
    params.heads.push_back(std::move(head));
  }
  return params;
}

}  // namespace

DistillParams averaging_attention_params(const RelationDims& dims, std::size_t num_basic,
                                         double r_percent, double similarity_scale) {
  if (num_basic == 0) throw ValidationError("basic stage needs at least one relation module");
  const RelationModuleParams module = averaging_module(dims, similarity_scale);
  DistillParams out;
  out.basic.modules.assign(num_basic, module);
  out.basic.transforms.assign(num_basic - 1, AffineTransform::identity(dims.d_model));
  out.advanced = {module, module, r_percent};
  out.advanced.validate();
  return out;
}

DistillParams zero_value_params(std::uint64_t seed, const RelationDims& dims,
                                std::size_t num_basic, double r_percent) {
  DistillParams out;
  out.basic = init_basic_stage(seed, dims, num_basic);
  for (auto& m : out.basic.modules) m = with_zero_values(std::move(m));
  for (auto& t : out.basic.transforms) t = AffineTransform::identity(dims.d_model);
  out.advanced = init_advanced_stage(seed, dims, r_percent);
  out.advanced.pool_module = with_zero_values(std::move(out.advanced.pool_module));
  out.advanced.distill_module = with_zero_values(std::move(out.advanced.distill_module));
  return out;
}

namespace {

ProposalBatch window_pool(const std::vector<std::vector<Proposal>>& frames, std::size_t t,
                          const PipelineConfig& config) {
  const std::size_t lo = t >= config.temporal_range ? t - config.temporal_range : 0;
  const std::size_t hi = std::min(frames.size() - 1, t + config.temporal_range);
  std::vector<Proposal> pool;
  for (std::size_t tau = lo; tau <= hi; ++tau) {
    auto sampled = sample_top_k(frames[tau], config.top_k);
    pool.insert(pool.end(), sampled.begin(), sampled.end());
  }
  return ProposalBatch::from_proposals(pool);
}

}  // namespace

DenoisingReport measure_denoising(const ScenarioSpec& spec, const DistillParams& params,
                                  const PipelineConfig& config) {
  ScenarioSpec clean_spec = spec;
  clean_spec.sigma_ref = 0.0;
  clean_spec.sigma_sup = 0.0;
  const Scenario noisy_run = generate_scenario(spec);
  const Scenario clean_run = generate_scenario(clean_spec);

  struct Sample {
    std::vector<double> raw;
    std::vector<double> refined;
    std::vector<double> clean_refined;
    int class_id;
  };
  std::vector<Sample> samples;

  for (std::size_t t = 0; t < spec.num_frames; ++t) {
    const auto refs_noisy = ProposalBatch::from_proposals(
        sample_top_k(noisy_run.reference_views[t], config.num_refs));
    const auto refs_clean = ProposalBatch::from_proposals(
        sample_top_k(clean_run.reference_views[t], config.num_refs));
    const auto out_noisy = distillation_forward(refs_noisy, window_pool(noisy_run.frames, t, config),
                                                params.basic, params.advanced, config.mode);
    const auto out_clean = distillation_forward(refs_clean, window_pool(clean_run.frames, t, config),
                                                params.basic, params.advanced, config.mode);
    for (std::size_t i = 0; i < refs_noisy.size(); ++i) {
      const int cls = noisy_run.labels.at(refs_noisy.ids[i]).class_id;
      if (cls < 1) continue;
      const auto raw = refs_noisy.features.row(i);
      const auto refined = out_noisy.refined.features.row(i);
      const auto clean = out_clean.refined.features.row(i);
      samples.push_back({{raw.begin(), raw.end()},
                         {refined.begin(), refined.end()},
                         {clean.begin(), clean.end()},
                         cls});
    }
  }

  DenoisingReport report;
  report.samples = samples.size();
  if (samples.empty()) return report;

  double num = 0.0;
  double den = 0.0;
  for (const auto& s : samples) {
    const auto mu = clean_run.centroids.row(static_cast<std::size_t>(s.class_id));
    num += dot(s.clean_refined, mu);
    den += dot(mu, mu);
  }
  report.gain = num / den;

  auto distance = [](std::span<const double> f, std::span<const double> mu, double scale) {
    double acc = 0.0;
    for (std::size_t k = 0; k < f.size(); ++k) {
      const double d = f[k] / scale - mu[k];
      acc += d * d;
    }
    return std::sqrt(acc);
  };
  for (const auto& s : samples) {
    const auto mu = noisy_run.centroids.row(static_cast<std::size_t>(s.class_id));
    report.raw_distance += distance(s.raw, mu, 1.0);
    report.augmented_distance += distance(s.refined, mu, report.gain);
  }
  report.raw_distance /= static_cast<double>(samples.size());
  report.augmented_distance /= static_cast<double>(samples.size());
  return report;
}

}  // namespace rdn
