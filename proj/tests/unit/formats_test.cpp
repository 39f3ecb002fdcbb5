#include <gtest/gtest.h>

#include <fstream>

#include "rdn/error.hpp"
#include "rdn/formats.hpp"
#include "test_support.hpp"

namespace rdn {
namespace {

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<std::vector<Proposal>> sample_frames() {
  Rng rng(4);
  std::vector<std::vector<Proposal>> frames;
  ProposalId next = 0;
  for (std::int64_t t = 0; t < 3; ++t) {
    frames.push_back(testing::random_proposals(rng, t == 1 ? 0 : 4, 5, t, next));
    next += 4;
  }
  return frames;
}

void expect_same(const std::vector<std::vector<Proposal>>& a,
                 const std::vector<std::vector<Proposal>>& b) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t t = 0; t < a.size(); ++t) {
    ASSERT_EQ(a[t].size(), b[t].size());
    for (std::size_t i = 0; i < a[t].size(); ++i) {
      EXPECT_EQ(a[t][i].id, b[t][i].id);
      EXPECT_EQ(a[t][i].frame_index, b[t][i].frame_index);
      EXPECT_EQ(a[t][i].box, b[t][i].box);
      EXPECT_EQ(a[t][i].objectness, b[t][i].objectness);
      EXPECT_EQ(a[t][i].feature, b[t][i].feature);
    }
  }
}

TEST(Formats, ProposalRoundTripKeepsEmptyFrames) {
  const auto dir = testing::scratch_dir("formats_props");
  const auto frames = sample_frames();
  write_proposals(dir / "p.jsonl", frames, {{"note", "x"}});
  expect_same(read_proposals(dir / "p.jsonl"), frames);
}

TEST(Formats, SidecarRoundTrip) {
  const auto dir = testing::scratch_dir("formats_sidecar");
  const auto frames = sample_frames();
  write_proposals(dir / "p.jsonl", frames, nullptr, {dir / "features.bin"});
  EXPECT_EQ(std::filesystem::file_size(dir / "features.bin"), 8u * 5u * 8u);
  expect_same(read_proposals(dir / "p.jsonl", 5), frames);
}

TEST(Formats, MalformedRecordNamesLine) {
  const auto dir = testing::scratch_dir("formats_bad");
  write_text(dir / "p.jsonl",
             "{\"header\":{}}\n"
             "{\"frame\":0,\"id\":1,\"box\":[0,0,1,1],\"objectness\":0.5,\"feature\":[1,2]}\n"
             "{\"frame\":0,\"id\":2,\"box\":[0,0,1,1],\"objectness\":0.5,\"feature\":[1,2,3]}\n");
  try {
    read_proposals(dir / "p.jsonl");
    FAIL() << "expected a validation error";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("p.jsonl:3:"), std::string::npos) << e.what();
  }
  write_text(dir / "q.jsonl", "{\"frame\":0,\"id\":1,\n");
  try {
    read_proposals(dir / "q.jsonl");
    FAIL() << "expected a validation error";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("q.jsonl:1:"), std::string::npos);
  }
  write_text(dir / "r.jsonl",
             "{\"frame\":0,\"id\":1,\"box\":[0,0,1,1],\"objectness\":1.5,\"feature\":[1]}\n");
  EXPECT_THROW(read_proposals(dir / "r.jsonl"), ValidationError);
  write_text(dir / "s.jsonl", "{\"frame\":0,\"id\":1,\"box\":[0,0,0,1],\"objectness\":0.5,\"feature\":[1]}\n");
  EXPECT_THROW(read_proposals(dir / "s.jsonl"), ValidationError);
  EXPECT_THROW(read_proposals(dir / "absent.jsonl"), IoError);
}

TEST(Formats, ExpectedDimensionEnforced) {
  const auto dir = testing::scratch_dir("formats_dim");
  write_proposals(dir / "p.jsonl", sample_frames(), nullptr);
  EXPECT_THROW(read_proposals(dir / "p.jsonl", 7), ValidationError);
}

TEST(Formats, EmptyFileGivesNoFrames) {
  const auto dir = testing::scratch_dir("formats_empty");
  write_text(dir / "p.jsonl", "");
  EXPECT_TRUE(read_proposals(dir / "p.jsonl").empty());
}

TEST(Formats, DetectionsWeightsAndTruthRoundTrip) {
  const auto dir = testing::scratch_dir("formats_misc");
  std::vector<std::vector<Detection>> dets(3);
  dets[0].push_back({0, 2, 0.75, {1, 2, 3, 4}, 9});
  dets[2].push_back({2, 1, 0.1 + 0.2, {5, 5, 9, 9}, 11});
  write_detections(dir / "d.jsonl", dets, nullptr);
  EXPECT_EQ(read_detections(dir / "d.jsonl"), dets);

  RelationWeightTable table;
  table.set(0, 1, 2, 0.25);
  table.set(1, 3, 4, 1.0 / 3.0);
  write_weights(dir / "w.jsonl", table, {{"k", 1}});
  const auto back = read_weights(dir / "w.jsonl");
  EXPECT_EQ(back.size(), 2u);
  EXPECT_EQ(back.find(1, 3, 4), 1.0 / 3.0);

  std::vector<GroundTruthTrack> tracks{{3, 2, {0, 1}, {{0, 0, 1, 1}, {1, 1, 2, 2}}}};
  write_ground_truth(dir / "g.jsonl", tracks, nullptr);
  const auto gt = read_ground_truth(dir / "g.jsonl");
  ASSERT_EQ(gt.size(), 1u);
  EXPECT_EQ(gt[0].track_id, 3);
  EXPECT_EQ(gt[0].boxes[1], BoxGeometry(1, 1, 2, 2));
}

TEST(Formats, TubeRecordsCarryBothScoreLists) {
  const auto dir = testing::scratch_dir("formats_tubes");
  Tube t;
  t.class_id = 2;
  t.path_score = 1.5;
  t.rescored = true;
  t.scores_before = {0.5, 0.25};
  t.detections = {{4, 2, 1.0, {0, 0, 2, 2}, 1}, {5, 2, 0.75, {0, 0, 2, 2}, 2}};
  write_tubes(dir / "t.jsonl", {t}, nullptr);
  const auto line = nlohmann::json::parse(read_text(dir / "t.jsonl"));
  EXPECT_EQ(line["frames"], nlohmann::json({4, 5}));
  EXPECT_EQ(line["scores_before"], nlohmann::json({0.5, 0.25}));
  EXPECT_EQ(line["scores_after"], nlohmann::json({1.0, 0.75}));
  EXPECT_EQ(line["tube_id"], 0);
}

TEST(Formats, WritesAreByteStable) {
  const auto dir = testing::scratch_dir("formats_stable");
  write_proposals(dir / "a.jsonl", sample_frames(), {{"seed", 1}});
  write_proposals(dir / "b.jsonl", sample_frames(), {{"seed", 1}});
  EXPECT_EQ(read_text(dir / "a.jsonl"), read_text(dir / "b.jsonl"));
}

}  // namespace
}  // namespace rdn
