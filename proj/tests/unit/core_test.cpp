#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "rdn/core.hpp"
#include "rdn/error.hpp"
#include "test_support.hpp"

namespace rdn {
namespace {

using testing::random_int_box;

// Counts unit cells covered by integer-cornered boxes.
double raster_iou(const BoxGeometry& a, const BoxGeometry& b) {
  long inter = 0, uni = 0;
  const long x0 = static_cast<long>(std::min(a.x1(), b.x1()));
  const long x1 = static_cast<long>(std::max(a.x2(), b.x2()));
  const long y0 = static_cast<long>(std::min(a.y1(), b.y1()));
  const long y1 = static_cast<long>(std::max(a.y2(), b.y2()));
  auto inside = [](const BoxGeometry& g, long x, long y) {
    return x >= g.x1() && x + 1 <= g.x2() && y >= g.y1() && y + 1 <= g.y2();
  };
  for (long x = x0; x < x1; ++x) {
    for (long y = y0; y < y1; ++y) {
      const bool ia = inside(a, x, y);
      const bool ib = inside(b, x, y);
      inter += ia && ib;
      uni += ia || ib;
    }
  }
  return static_cast<double>(inter) / static_cast<double>(uni);
}

// Repeatedly takes the best remaining detection and drops everything it overlaps.
std::vector<Detection> rescan_nms(std::vector<Detection> dets, double thr) {
  std::vector<Detection> kept;
  while (!dets.empty()) {
    auto best = std::min_element(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) {
      return a.score > b.score || (a.score == b.score && a.source_proposal_id < b.source_proposal_id);
    });
    const Detection top = *best;
    kept.push_back(top);
    std::erase_if(dets, [&](const Detection& d) {
      return d.source_proposal_id == top.source_proposal_id || iou(d.box, top.box) > thr;
    });
  }
  return kept;
}

TEST(BoxGeometry, RejectsDegenerateAndNonFinite) {
  EXPECT_THROW(BoxGeometry(0, 0, 0, 5), ValidationError);
  EXPECT_THROW(BoxGeometry(0, 0, 5, -1), ValidationError);
  EXPECT_THROW(BoxGeometry(0, 0, std::nan(""), 5), ValidationError);
  const BoxGeometry b = BoxGeometry::from_center(10, 20, 4, 6);
  EXPECT_EQ(b.x1(), 8);
  EXPECT_EQ(b.y2(), 23);
  EXPECT_EQ(b.area(), 24);
}

TEST(Iou, MatchesRasterOracle) {
  Rng rng(101);
  for (int trial = 0; trial < 300; ++trial) {
    const BoxGeometry a = random_int_box(rng);
    const BoxGeometry b = random_int_box(rng);
    EXPECT_NEAR(iou(a, b), raster_iou(a, b), 1e-12);
  }
}

TEST(Iou, SymmetricBoundedAndOneOnSelf) {
  Rng rng(5);
  for (int trial = 0; trial < 500; ++trial) {
    const BoxGeometry a = testing::random_box(rng);
    const BoxGeometry b = testing::random_box(rng);
    const double o = iou(a, b);
    EXPECT_EQ(o, iou(b, a));
    EXPECT_GE(o, 0.0);
    EXPECT_LE(o, 1.0);
    EXPECT_EQ(iou(a, a), 1.0);
  }
}

TEST(Iou, HandValues) {
  EXPECT_EQ(iou({0, 0, 10, 10}, {0, 0, 10, 20}), 0.5);
  EXPECT_EQ(iou({0, 0, 10, 10}, {10, 0, 20, 10}), 0.0);
  EXPECT_DOUBLE_EQ(iou({0, 0, 2, 2}, {1, 1, 3, 3}), 1.0 / 7.0);
}

TEST(Nms, MatchesRescanOracle) {
  Rng rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Detection> dets;
    const std::size_t n = 1 + rng.below(25);
    for (std::size_t i = 0; i < n; ++i) {
      Detection d;
      d.box = random_int_box(rng);
      // Coarse scores force ties.
      d.score = static_cast<double>(rng.below(5)) / 4.0;
      d.source_proposal_id = static_cast<ProposalId>(rng.below(1000) * 100 + i);
      dets.push_back(d);
    }
    const double thr = 0.1 + 0.8 * rng.uniform();
    EXPECT_EQ(nms(dets, thr), rescan_nms(dets, thr)) << "trial " << trial;
  }
}

TEST(Nms, KeptBoxesNeverOverlapAboveThreshold) {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Detection> dets;
    for (std::size_t i = 0; i < 20; ++i) {
      dets.push_back({0, 1, rng.uniform(), random_int_box(rng), static_cast<ProposalId>(i)});
    }
    const auto kept = nms(dets, 0.5);
    for (std::size_t i = 0; i < kept.size(); ++i) {
      for (std::size_t j = i + 1; j < kept.size(); ++j) {
        EXPECT_LE(iou(kept[i].box, kept[j].box), 0.5);
      }
    }
  }
}

TEST(Nms, ThresholdOutsideRangeRejected) {
  std::vector<Detection> none;
  EXPECT_THROW(nms(none, 0.0), ValidationError);
  EXPECT_THROW(nms(none, 1.5), ValidationError);
  EXPECT_TRUE(nms(none, 0.5).empty());
}

TEST(Sampling, TopKMatchesFullSort) {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    auto props = testing::random_proposals(rng, 1 + rng.below(40), 2, 0, 0);
    for (auto& p : props) p.objectness = static_cast<double>(rng.below(6)) / 5.0;
    const std::size_t k = rng.below(50);
    auto oracle = props;
    std::sort(oracle.begin(), oracle.end(), [](const Proposal& a, const Proposal& b) {
      return std::tie(b.objectness, a.id) < std::tie(a.objectness, b.id);
    });
    oracle.resize(std::min(k, oracle.size()));
    const auto got = sample_top_k(props, k);
    ASSERT_EQ(got.size(), oracle.size());
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_EQ(got[i].id, oracle[i].id);
  }
}

TEST(Sampling, TopRatioCountIsCeilingClampedToOne) {
  EXPECT_EQ(top_ratio_count(40, 25.0), 10u);
  EXPECT_EQ(top_ratio_count(375, 20.0), 75u);
  EXPECT_EQ(top_ratio_count(3, 20.0), 1u);
  EXPECT_EQ(top_ratio_count(7, 50.0), 4u);
  EXPECT_EQ(top_ratio_count(0, 20.0), 0u);
  EXPECT_EQ(top_ratio_count(9, 100.0), 9u);
  EXPECT_THROW(top_ratio_count(10, 0.0), ValidationError);
  EXPECT_THROW(top_ratio_count(10, 101.0), ValidationError);
}

TEST(Sampling, ObjectnessOrderAgreesWithTopK) {
  Rng rng(12);
  const auto props = testing::random_proposals(rng, 30, 4, 0, 50);
  const ProposalBatch batch = ProposalBatch::from_proposals(props);
  const auto order = objectness_order(batch);
  const auto top = sample_top_k(props, props.size());
  for (std::size_t i = 0; i < order.size(); ++i) EXPECT_EQ(batch.ids[order[i]], top[i].id);
}

TEST(ProposalBatch, RejectsRaggedFeatures) {
  std::vector<Proposal> props(2);
  props[0].feature = {1, 2};
  props[1].feature = {1};
  EXPECT_THROW(ProposalBatch::from_proposals(props), ValidationError);
}

TEST(ProposalBatch, SelectKeepsRowsAligned) {
  Rng rng(2);
  const auto batch = ProposalBatch::from_proposals(testing::random_proposals(rng, 5, 3, 0, 10));
  const std::vector<std::size_t> rows{4, 1};
  const auto sub = batch.select(rows);
  ASSERT_EQ(sub.size(), 2u);
  EXPECT_EQ(sub.ids[0], 14);
  EXPECT_EQ(sub.boxes[1], batch.boxes[1]);
  EXPECT_EQ(sub.features(0, 2), batch.features(4, 2));
}

}  // namespace
}  // namespace rdn
