#pragma once

#include <cstdint>
#include <vector>

#include "rdn/core.hpp"
#include "rdn/relation.hpp"

namespace rdn {

enum class Activation { none, relu };

/// h(x) = act(x W + b) with W square (d_model x d_model).
struct AffineTransform {
  Matrix weight;
  std::vector<double> bias;
  Activation activation = Activation::relu;

  Matrix apply(const Matrix& input) const;
  void validate(std::size_t d_model) const;

  /// Exact identity map: W = I, b = 0, no rectification.
  static AffineTransform identity(std::size_t d_model);

  bool operator==(const AffineTransform&) const = default;
};

struct BasicStageParams {
  std::vector<RelationModuleParams> modules;
  std::vector<AffineTransform> transforms;  // modules.size() - 1

  void validate() const;
  bool operator==(const BasicStageParams&) const = default;
};

struct AdvancedStageParams {
  RelationModuleParams pool_module;
  RelationModuleParams distill_module;
  double r_percent = 20.0;

  void validate() const;
  bool operator==(const AdvancedStageParams&) const = default;
};

struct StageOutput {
  ProposalBatch refined;           // same ids, boxes and objectness as the input refs
  RelationWeights last_weights;    // from the final basic-stage relation module
};

/// Stacked relation modules against the full supportive pool; module k > 1
/// takes h(previous output) as its reference features.
StageOutput basic_stage(const ProposalBatch& refs, const ProposalBatch& pool,
                        const BasicStageParams& params);

/// Refines the advanced pool against the full pool, then augments the
/// basic-stage references against the refined advanced pool.
ProposalBatch advanced_stage(const ProposalBatch& refined_refs, const ProposalBatch& pool,
                             const ProposalBatch& advanced_pool,
                             const AdvancedStageParams& params);

/// Top r% of a pool by objectness, ties by lower id.
ProposalBatch sample_advanced_pool(const ProposalBatch& pool, double r_percent);

enum class DistillMode { basic_only, full };

StageOutput distillation_forward(const ProposalBatch& refs, const ProposalBatch& pool,
                                 const BasicStageParams& basic,
                                 const AdvancedStageParams& advanced, DistillMode mode);

/// Independent 64-bit stream seed derived from a base seed (splitmix64).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

/// Random relation modules; transforms are identity plus uniform noise in
/// ±transform_noise with zero offset and ReLU.
BasicStageParams init_basic_stage(std::uint64_t seed, const RelationDims& dims,
                                  std::size_t num_modules, double transform_noise = 0.01);
AdvancedStageParams init_advanced_stage(std::uint64_t seed, const RelationDims& dims,
                                        double r_percent);

}  // namespace rdn
