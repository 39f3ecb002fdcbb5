#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "rdn/commands.hpp"
#include "rdn/error.hpp"
#include "rdn/formats.hpp"
#include "test_support.hpp"

namespace rdn {
namespace {

using nlohmann::json;

json desk_json() {
  return json::parse(R"({
    "seed": 7,
    "mode": "full",
    "pipeline": {"temporal_range": 2, "top_k": 8, "r_percent": 25, "num_classes": 3},
    "model": {"kind": "oracle", "d_model": 16, "d_k": 16, "d_rel": 8, "d_geo": 8, "heads": 2},
    "scenario": {"num_frames": 12, "num_classes": 3, "d_model": 16, "separation": 4.0}
  })");
}

std::filesystem::path write_config(const std::filesystem::path& dir, const json& j) {
  const auto path = dir / "config.json";
  std::ofstream(path) << j.dump(2);
  return path;
}

struct CliResult {
  int code = 0;
  std::string out;
  std::string err;
};

CliResult cli(std::vector<std::string> args) {
  args.insert(args.begin(), "rdn");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

CliResult run_in(const std::filesystem::path& dir, const std::string& sub,
                 std::vector<std::string> extra = {}) {
  std::vector<std::string> args{sub, "--config", (dir / "config.json").string(), "--out-dir",
                                dir.string()};
  args.insert(args.end(), extra.begin(), extra.end());
  return cli(args);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<json> records(const std::filesystem::path& p) {
  std::vector<json> out;
  std::ifstream in(p);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    if (!j.contains("header")) out.push_back(std::move(j));
  }
  return out;
}

TEST(RunConfig, DefaultsMatchReferenceConfiguration) {
  const RunConfig c;
  const json j = c.to_json();
  EXPECT_EQ(j["pipeline"]["temporal_range"], 18);
  EXPECT_EQ(j["pipeline"]["top_k"], 75);
  EXPECT_EQ(j["pipeline"]["r_percent"], 20.0);
  EXPECT_EQ(j["pipeline"]["num_refs"], 300);
  EXPECT_EQ(j["model"]["heads"], 16);
  EXPECT_EQ(j["model"]["d_rel"], 64);
  EXPECT_EQ(j["model"]["num_basic"], 2);
  EXPECT_TRUE(j.contains("sources"));
  EXPECT_FALSE(j.contains("out_dir"));
}

TEST(RunConfig, JsonRoundTrip) {
  const RunConfig a = RunConfig::from_json(desk_json());
  const RunConfig b = RunConfig::from_json(a.to_json());
  EXPECT_EQ(a.to_json(), b.to_json());
  EXPECT_EQ(b.pipeline.temporal_range, 2u);
  EXPECT_EQ(b.model.kind, ModelKind::oracle);
}

TEST(RunConfig, RejectsUnknownKeysAndBadTypes) {
  json j = desk_json();
  j["pipeline"]["topk"] = 3;
  try {
    RunConfig::from_json(j);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("topk"), std::string::npos);
  }
  j = desk_json();
  j["pipeline"]["top_k"] = "many";
  EXPECT_THROW(RunConfig::from_json(j), ValidationError);
  j = desk_json();
  j["model"]["d_model"] = 32;
  EXPECT_THROW(RunConfig::from_json(j).validate(), ValidationError);
  EXPECT_THROW(parse_mode("partial"), ValidationError);
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(cli({"--help"}).code, 0);
  EXPECT_EQ(cli({"frobnicate"}).code, 1);
  EXPECT_EQ(cli({"synth", "--mode", "partial"}).code, 1);
  EXPECT_EQ(cli({"synth", "--config", "/nonexistent/config.json"}).code, 2);
}

TEST(Cli, InvalidScenarioNamesObject) {
  const auto dir = testing::scratch_dir("cli_invalid");
  json j = desk_json();
  j["scenario"]["objects"] = json::array({{{"class", 1}, {"box", {600, 10, 630, 40}}, {"velocity", {5, 0}}}});
  write_config(dir, j);
  const auto r = run_in(dir, "synth");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("object 0"), std::string::npos) << r.err;
}

TEST(Cli, EmptyProposalFileGivesEmptyDetections) {
  const auto dir = testing::scratch_dir("cli_empty");
  write_config(dir, desk_json());
  std::ofstream(dir / "proposals.jsonl").close();
  const auto r = run_in(dir, "infer");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(read_detections(dir / "detections.jsonl").empty());
}

TEST(Cli, SynthIsDeterministic) {
  const auto a = testing::scratch_dir("cli_det_a");
  const auto b = testing::scratch_dir("cli_det_b");
  json j = desk_json();
  j["scenario"]["sigma_ref"] = 0.3;
  j["scenario"]["sigma_sup"] = 0.1;
  write_config(a, j);
  write_config(b, j);
  ASSERT_EQ(run_in(a, "synth").code, 0);
  ASSERT_EQ(run_in(b, "synth").code, 0);
  EXPECT_EQ(slurp(a / "proposals.jsonl"), slurp(b / "proposals.jsonl"));
  EXPECT_EQ(slurp(a / "ground_truth.jsonl"), slurp(b / "ground_truth.jsonl"));
}

TEST(Cli, BothModesRunEndToEnd) {
  for (const std::string mode : {"basic_only", "full"}) {
    const auto dir = testing::scratch_dir("cli_mode_" + mode);
    write_config(dir, desk_json());
    ASSERT_EQ(run_in(dir, "synth").code, 0);
    const auto r = run_in(dir, "infer", {"--mode", mode});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("mode " + mode), std::string::npos);
    const auto e = run_in(dir, "eval");
    ASSERT_EQ(e.code, 0) << e.err;
    EXPECT_NE(e.out.find("mAP@0.5: 1"), std::string::npos) << e.out;
    EXPECT_TRUE(std::filesystem::exists(dir / "eval.json"));
  }
}

TEST(Cli, LinkNeedsWeightsUnlessRelationFree) {
  const auto dir = testing::scratch_dir("cli_link");
  json j = desk_json();
  j["linking"]["enabled"] = false;
  write_config(dir, j);
  ASSERT_EQ(run_in(dir, "synth").code, 0);
  ASSERT_EQ(run_in(dir, "infer").code, 0);
  EXPECT_FALSE(std::filesystem::exists(dir / "weights.jsonl"));
  const auto missing = run_in(dir, "link");
  EXPECT_EQ(missing.code, 2);
  EXPECT_NE(missing.err.find("weights.jsonl"), std::string::npos);
  EXPECT_EQ(run_in(dir, "link", {"--relation-free"}).code, 0);
  EXPECT_EQ(records(dir / "tubes.jsonl").size(), 3u);
}

TEST(Cli, SingleObjectGivesOneFullTube) {
  const auto dir = testing::scratch_dir("cli_single");
  json j = desk_json();
  j["scenario"]["objects"] =
      json::array({{{"class", 2}, {"box", {100, 100, 160, 150}}, {"velocity", {3, 1}}}});
  write_config(dir, j);
  ASSERT_EQ(run_in(dir, "synth").code, 0);
  ASSERT_EQ(run_in(dir, "infer").code, 0);
  ASSERT_EQ(run_in(dir, "link").code, 0);
  const auto tubes = records(dir / "tubes.jsonl");
  ASSERT_EQ(tubes.size(), 1u);
  EXPECT_EQ(tubes[0]["class"], 2);
  EXPECT_EQ(tubes[0]["frames"].size(), 12u);
  EXPECT_EQ(tubes[0]["frames"].front(), 0);
  EXPECT_EQ(tubes[0]["frames"].back(), 11);
}

TEST(Cli, TubesFollowGroundTruthTracks) {
  const auto dir = testing::scratch_dir("cli_two");
  json j = desk_json();
  j["scenario"]["objects"] = json::array(
      {{{"class", 1}, {"box", {20, 20, 80, 80}}, {"velocity", {4, 2}}},
       {{"class", 3}, {"box", {400, 300, 470, 380}}, {"velocity", {-3, -2}}}});
  write_config(dir, j);
  ASSERT_EQ(run_in(dir, "synth").code, 0);
  ASSERT_EQ(run_in(dir, "infer").code, 0);
  ASSERT_EQ(run_in(dir, "link").code, 0);
  const auto truth = read_ground_truth(dir / "ground_truth.jsonl");
  const auto tubes = records(dir / "tubes.jsonl");
  ASSERT_EQ(tubes.size(), 2u);
  for (const auto& tube : tubes) {
    auto it = std::find_if(truth.begin(), truth.end(),
                           [&](const GroundTruthTrack& t) { return t.class_id == tube["class"]; });
    ASSERT_NE(it, truth.end());
    ASSERT_EQ(tube["boxes"].size(), it->boxes.size());
    for (std::size_t k = 0; k < it->boxes.size(); ++k) {
      EXPECT_EQ(tube["boxes"][k], box_to_json(it->boxes[k]));
    }
  }
}

TEST(Cli, GradcheckRejectsBadDims) {
  const auto dir = testing::scratch_dir("cli_grad");
  json j = desk_json();
  j["gradcheck"] = {{"d_model", 4}, {"d_rel", 3}, {"heads", 2}};
  write_config(dir, j);
  EXPECT_EQ(run_in(dir, "gradcheck").code, 1);
}

}  // namespace
}  // namespace rdn
