#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <vector>

#include "rdn/core.hpp"
#include "rdn/matrix.hpp"

namespace rdn {

/// Floor on the rectified geometry bias so a fully clipped row still normalizes.
inline constexpr double kGeometryBiasFloor = 1e-6;
/// Co-centered boxes clamp |Δcx| to this fraction of the reference width (resp. height).
inline constexpr double kCenterOffsetClamp = 1e-3;
/// Sinusoidal embedding: angle = kEmbeddingScale * value / kEmbeddingWaveLength^(k/n).
inline constexpr double kEmbeddingScale = 100.0;
inline constexpr double kEmbeddingWaveLength = 1000.0;

struct RelationDims {
  std::size_t d_model = 1024;
  std::size_t d_k = 64;
  std::size_t d_rel = 64;
  std::size_t d_geo = 64;
  std::size_t heads = 16;

  /// Throws ValidationError naming the violated constraint.
  void validate() const;
  bool operator==(const RelationDims&) const = default;
};

struct RelationHeadParams {
  Matrix query;                  // d_model x d_k
  Matrix key;                    // d_model x d_k
  Matrix value;                  // d_model x d_rel
  std::vector<double> geometry;  // d_geo

  bool operator==(const RelationHeadParams&) const = default;
};

struct RelationModuleParams {
  RelationDims dims;
  std::uint64_t seed = 0;
  std::vector<RelationHeadParams> heads;

  /// Checks dims, head count, every matrix shape and finiteness.
  void validate() const;
  bool operator==(const RelationModuleParams&) const = default;
};

/// One |refs| x |pool| row-stochastic matrix per head.
struct RelationWeights {
  std::vector<Matrix> heads;

  /// Element-wise mean over heads.
  Matrix mean() const;
};

/// (log(max(|Δcx|, ε·w_i)/w_i), log(max(|Δcy|, ε·h_i)/h_i), log(w_j/w_i), log(h_j/h_i)),
/// normalized by the reference box i.
std::array<double, 4> relative_geometry(const BoxGeometry& ref, const BoxGeometry& other);

/// Sinusoidal encoding of relative_geometry. Component c occupies
/// [c·d_geo/4, (c+1)·d_geo/4): first d_geo/8 sines, then d_geo/8 cosines.
std::vector<double> geometry_embedding(const BoxGeometry& ref, const BoxGeometry& other,
                                       std::size_t d_geo);

RelationWeights relation_weights(const ProposalBatch& refs, const ProposalBatch& pool,
                                 const RelationModuleParams& params);

struct RelationCache;

struct RelationOutput {
  Matrix features;  // |refs| x d_model
  RelationWeights weights;
  std::shared_ptr<const RelationCache> cache;  // set only when requested
};

/// f_i + concat_m Σ_j ω^m_ij (f_j W_V^m).
RelationOutput relation_module_forward(const ProposalBatch& refs, const ProposalBatch& pool,
                                       const RelationModuleParams& params,
                                       bool keep_cache = false);

struct RelationGradients {
  std::vector<Matrix> query;
  std::vector<Matrix> key;
  std::vector<Matrix> value;
  std::vector<std::vector<double>> geometry;
  Matrix refs;
  Matrix pool;
};

/// Gradients of L = Σ upstream ∘ output. Throws std::logic_error if the
/// forward pass did not keep its cache.
RelationGradients relation_module_backward(const Matrix& upstream, const RelationOutput& forward);

/// Uniform in ±1/sqrt(fan_in), derived only from the seed.
RelationModuleParams init_params(std::uint64_t seed, const RelationDims& dims);

/// Copy of params with every value projection set to zero.
RelationModuleParams with_zero_values(RelationModuleParams params);

}  // namespace rdn
