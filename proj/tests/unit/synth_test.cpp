#include <gtest/gtest.h>

#include <cmath>

#include "rdn/error.hpp"
#include "rdn/synth.hpp"
#include "test_support.hpp"

namespace rdn {
namespace {

std::size_t argmax(std::span<const double> row) {
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

TEST(Scenario, NoiselessDegenerateCase) {
  ScenarioSpec spec;
  spec.num_frames = 1;
  spec.objects = {{2, {10, 10, 50, 60}, 0, 0}};
  spec.jitter_per_object = 0;
  spec.distractors_per_frame = 0;
  const Scenario s = generate_scenario(spec);
  ASSERT_EQ(s.frames.size(), 1u);
  ASSERT_EQ(s.frames[0].size(), 1u);
  const Proposal& p = s.frames[0][0];
  EXPECT_EQ(p.box, BoxGeometry(10, 10, 50, 60));
  const auto mu = s.centroids.row(2);
  EXPECT_EQ(p.feature, std::vector<double>(mu.begin(), mu.end()));
  EXPECT_GE(p.objectness, 0.7);
}

TEST(Scenario, DeterministicPerSeed) {
  ScenarioSpec spec = ScenarioSpec::desk_default();
  spec.sigma_ref = 0.3;
  spec.sigma_sup = 0.1;
  const Scenario a = generate_scenario(spec);
  const Scenario b = generate_scenario(spec);
  ASSERT_EQ(a.frames.size(), b.frames.size());
  for (std::size_t t = 0; t < a.frames.size(); ++t) {
    for (std::size_t i = 0; i < a.frames[t].size(); ++i) {
      EXPECT_EQ(a.frames[t][i].feature, b.frames[t][i].feature);
      EXPECT_EQ(a.reference_views[t][i].feature, b.reference_views[t][i].feature);
      EXPECT_EQ(a.frames[t][i].box, b.frames[t][i].box);
    }
  }
  spec.seed = 8;
  EXPECT_NE(generate_scenario(spec).frames[0][0].feature, a.frames[0][0].feature);
}

TEST(Scenario, TracksFollowLinearMotion) {
  ScenarioSpec spec = ScenarioSpec::desk_default();
  spec.objects.resize(2);
  const Scenario s = generate_scenario(spec);
  ASSERT_EQ(s.tracks.size(), 2u);
  for (const auto& track : s.tracks) {
    ASSERT_EQ(track.frames.size(), 30u);
    const auto& obj = spec.objects[static_cast<std::size_t>(track.track_id)];
    for (std::size_t t = 0; t < 30; ++t) {
      EXPECT_EQ(track.boxes[t].x1(), obj.start.x1() + obj.vx * double(t));
      EXPECT_EQ(track.boxes[t].y2(), obj.start.y2() + obj.vy * double(t));
    }
  }
}

TEST(Scenario, GroundTruthBoxesAppearWithHighObjectness) {
  ScenarioSpec spec = ScenarioSpec::desk_default();
  spec.sigma_sup = 0.2;
  const Scenario s = generate_scenario(spec);
  for (const auto& track : s.tracks) {
    for (std::size_t t = 0; t < track.frames.size(); ++t) {
      const auto& props = s.frames[t];
      auto it = std::find_if(props.begin(), props.end(),
                             [&](const Proposal& p) { return p.box == track.boxes[t]; });
      ASSERT_NE(it, props.end());
      EXPECT_GE(it->objectness, 0.7);
      EXPECT_TRUE(s.labels.at(it->id).exact_box);
    }
  }
  for (const auto& frame : s.frames) {
    for (const auto& p : frame) {
      if (s.labels.at(p.id).class_id == 0) {
        EXPECT_LT(p.objectness, 0.3);
      }
    }
  }
}

TEST(Scenario, CentroidsOrthogonalWithSeparation) {
  const ScenarioSpec spec = ScenarioSpec::desk_default();
  const Matrix c = class_centroids(spec);
  ASSERT_EQ(c.rows(), 4u);
  for (std::size_t a = 0; a < 4; ++a) {
    EXPECT_NEAR(std::sqrt(dot(c.row(a), c.row(a))), spec.separation, 1e-12);
    for (std::size_t b = a + 1; b < 4; ++b) {
      EXPECT_NEAR(dot(c.row(a), c.row(b)), 0.0, 1e-9);
      double d2 = 0.0;
      for (std::size_t k = 0; k < c.cols(); ++k) d2 += (c(a, k) - c(b, k)) * (c(a, k) - c(b, k));
      EXPECT_GE(std::sqrt(d2), spec.separation);
    }
  }
}

TEST(Scenario, ValidationNamesOffendingObject) {
  ScenarioSpec spec = ScenarioSpec::desk_default();
  spec.objects[1].vx = 40.0;
  try {
    generate_scenario(spec);
    FAIL() << "expected a validation error";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("object 1"), std::string::npos) << e.what();
  }
  spec = ScenarioSpec::desk_default();
  spec.separation = 0.0;
  EXPECT_THROW(spec.validate(), ValidationError);
  spec = ScenarioSpec::desk_default();
  spec.objects[0].class_id = 9;
  EXPECT_THROW(spec.validate(), ValidationError);
}

TEST(OracleHead, NearestCentroidBehaviour) {
  const ScenarioSpec spec = ScenarioSpec::desk_default();
  const auto head = oracle_head(spec);
  const Matrix c = class_centroids(spec);
  const Matrix p = head.class_probabilities(c);
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_EQ(argmax(p.row(k)), k);
    EXPECT_GT(p(k, k), 0.99);
  }
  Matrix mid(1, spec.d_model);
  for (std::size_t k = 0; k < spec.d_model; ++k) mid(0, k) = 0.5 * (c(1, k) + c(2, k));
  const Matrix pm = head.class_probabilities(mid);
  EXPECT_NEAR(pm(0, 1), pm(0, 2), 1e-12);
  for (double v : head.reg_weight.data()) EXPECT_EQ(v, 0.0);
}

TEST(AveragingParams, IdenticalPoolCase) {
  Rng rng(3);
  const auto params = averaging_attention_params(testing::desk_dims(), 1, 25.0);
  std::vector<double> f(16), eps(16);
  for (double& v : f) v = rng.normal();
  for (double& v : eps) v = 0.1 * rng.normal();
  for (double e_scale : {1.0, 0.0}) {
    ProposalBatch refs;
    refs.ids = {0};
    refs.boxes = {{0, 0, 10, 10}};
    refs.objectness = {1.0};
    refs.features = Matrix(1, 16);
    for (std::size_t k = 0; k < 16; ++k) refs.features(0, k) = f[k] + e_scale * eps[k];
    ProposalBatch pool;
    for (std::size_t j = 0; j < 5; ++j) {
      pool.ids.push_back(static_cast<ProposalId>(10 + j));
      pool.boxes.push_back(testing::random_box(rng));
      pool.objectness.push_back(0.5);
    }
    pool.features = Matrix(5, 16);
    for (std::size_t j = 0; j < 5; ++j)
      for (std::size_t k = 0; k < 16; ++k) pool.features(j, k) = f[k];
    const Matrix out = relation_module_forward(refs, pool, params.basic.modules[0]).features;
    for (std::size_t k = 0; k < 16; ++k) {
      EXPECT_NEAR(out(0, k), refs.features(0, k) + 0.5 * f[k], 1e-12);
    }
  }
}

TEST(AveragingParams, DenoisingImprovesOnSmallScenario) {
  ScenarioSpec spec = ScenarioSpec::desk_default();
  spec.num_frames = 8;
  spec.sigma_sup = 0.25;
  spec.sigma_ref = 0.75;
  PipelineConfig c;
  c.temporal_range = 2;
  c.top_k = 8;
  c.r_percent = 25.0;
  c.num_classes = 3;
  const auto params = averaging_attention_params(testing::desk_dims(), 2, 25.0);
  const auto report = measure_denoising(spec, params, c);
  EXPECT_GT(report.samples, 0u);
  EXPECT_GT(report.gain, 1.0);
  EXPECT_LT(report.augmented_distance, report.raw_distance);
}

TEST(ZeroValueParams, AllValueProjectionsZero) {
  const auto p = zero_value_params(1, testing::desk_dims(), 2, 25.0);
  for (const auto& m : p.basic.modules)
    for (const auto& h : m.heads)
      for (double v : h.value.data()) EXPECT_EQ(v, 0.0);
  for (const auto& t : p.basic.transforms) EXPECT_EQ(t, AffineTransform::identity(16));
}

}  // namespace
}  // namespace rdn
