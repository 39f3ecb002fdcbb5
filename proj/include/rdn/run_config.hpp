#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "rdn/gradcheck.hpp"
#include "rdn/linking.hpp"
#include "rdn/pipeline.hpp"
#include "rdn/relation.hpp"
#include "rdn/synth.hpp"

namespace rdn {

enum class ModelKind {
  random,     // seeded initialization
  oracle,     // nearest-centroid head over the scenario, zero value projections
  averaging,  // nearest-centroid head, averaging-attention relation modules
  file        // parameter container from model.params_file
};

struct ModelConfig {
  ModelKind kind = ModelKind::random;
  std::filesystem::path params_file;
  RelationDims dims;                 // 1024 / 64 / 64 / 64 / 16
  std::size_t num_basic = 2;         // N_b stacked basic-stage modules
  double similarity_scale = 2.0;     // averaging kind only
  double transform_noise = 0.01;     // random kind only
};

struct LinkingConfig {
  bool enabled = true;         // retain relation weights during inference
  bool relation_free = false;  // link with every w_bar = 0
  TubeOptions tubes;
};

/// Output file names, resolved against out_dir.
struct PathsConfig {
  std::string proposals = "proposals.jsonl";
  std::string ground_truth = "ground_truth.jsonl";
  std::string detections = "detections.jsonl";
  std::string weights = "weights.jsonl";
  std::string tubes = "tubes.jsonl";
  std::string rescored = "rescored_detections.jsonl";
  std::string params = "params.bin";
  std::string eval = "eval.json";
};

struct GradcheckConfig {
  GradcheckOptions options;
  std::size_t num_seeds = 1;
  double tolerance = 1e-4;
};

struct RunConfig {
  PipelineConfig pipeline;
  ModelConfig model;
  ScenarioSpec scenario = ScenarioSpec::desk_default();
  LinkingConfig linking;
  PathsConfig paths;
  GradcheckConfig gradcheck;
  double iou_thresh = 0.5;
  std::filesystem::path out_dir = ".";
  std::uint64_t seed = 7;

  /// Checks every section; throws ValidationError naming the offending field.
  void validate() const;

  std::filesystem::path resolve(const std::string& name) const { return out_dir / name; }

  /// Missing keys keep their defaults; unknown keys are rejected.
  static RunConfig from_json(const nlohmann::json& j);
  /// Throws IoError if unreadable, ValidationError if malformed.
  static RunConfig load(const std::filesystem::path& path);

  /// Complete configuration with every default made explicit, plus the
  /// origin of each reference default. out_dir is omitted so outputs do not
  /// depend on where they were written.
  nlohmann::json to_json() const;
};

std::string to_string(DistillMode mode);
DistillMode parse_mode(const std::string& text);
std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& text);

}  // namespace rdn
