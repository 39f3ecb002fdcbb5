#include "rdn/distill.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_set>

#include "rdn/error.hpp"
#include "rdn/random.hpp"

namespace rdn {

Matrix AffineTransform::apply(const Matrix& input) const {
  Matrix out = matmul(input, weight);
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto row = out.row(i);
    for (std::size_t c = 0; c < row.size(); ++c) {
      row[c] += bias[c];
      if (activation == Activation::relu && row[c] < 0.0) row[c] = 0.0;
    }
  }
  return out;
}

void AffineTransform::validate(std::size_t d_model) const {
  if (weight.rows() != d_model || weight.cols() != d_model || bias.size() != d_model) {
    throw ValidationError("feature transform must be " + std::to_string(d_model) + "x" +
                          std::to_string(d_model) + " with a length-" + std::to_string(d_model) +
                          " offset");
  }
}

AffineTransform AffineTransform::identity(std::size_t d_model) {
  return {Matrix::identity(d_model), std::vector<double>(d_model, 0.0), Activation::none};
}

void BasicStageParams::validate() const {
  if (modules.empty()) throw ValidationError("basic stage needs at least one relation module");
  if (transforms.size() + 1 != modules.size()) {
    throw ValidationError("basic stage with " + std::to_string(modules.size()) +
                          " modules needs " + std::to_string(modules.size() - 1) +
                          " transforms, got " + std::to_string(transforms.size()));
  }
  const std::size_t d_model = modules.front().dims.d_model;
  for (const auto& m : modules) {
    m.validate();
    if (m.dims.d_model != d_model) throw ValidationError("basic stage modules disagree on d_model");
  }
  for (const auto& t : transforms) t.validate(d_model);
}

void AdvancedStageParams::validate() const {
  pool_module.validate();
  distill_module.validate();
  if (pool_module.dims.d_model != distill_module.dims.d_model) {
    throw ValidationError("advanced stage modules disagree on d_model");
  }
  if (!(r_percent > 0.0 && r_percent <= 100.0)) {
    throw ValidationError("advanced stage r_percent must lie in (0, 100]");
  }
}

StageOutput basic_stage(const ProposalBatch& refs, const ProposalBatch& pool,
                        const BasicStageParams& params) {
  params.validate();
  StageOutput out;
  out.refined = refs;
  for (std::size_t k = 0; k < params.modules.size(); ++k) {
    if (k > 0) out.refined.features = params.transforms[k - 1].apply(out.refined.features);
    auto step = relation_module_forward(out.refined, pool, params.modules[k]);
    out.refined.features = std::move(step.features);
    out.last_weights = std::move(step.weights);
  }
  return out;
}

ProposalBatch advanced_stage(const ProposalBatch& refined_refs, const ProposalBatch& pool,
                             const ProposalBatch& advanced_pool,
                             const AdvancedStageParams& params) {
  params.validate();
  if (advanced_pool.empty()) throw ValidationError("advanced supportive pool is empty");
  const std::unordered_set<ProposalId> pool_ids(pool.ids.begin(), pool.ids.end());
  for (ProposalId id : advanced_pool.ids) {
    if (!pool_ids.contains(id)) {
      throw ValidationError("advanced pool proposal " + std::to_string(id) +
                            " is not in the supportive pool");
    }
  }
  ProposalBatch distilled = advanced_pool;
  distilled.features = relation_module_forward(advanced_pool, pool, params.pool_module).features;

  ProposalBatch upgraded = refined_refs;
  upgraded.features =
      relation_module_forward(refined_refs, distilled, params.distill_module).features;
  return upgraded;
}

ProposalBatch sample_advanced_pool(const ProposalBatch& pool, double r_percent) {
  auto order = objectness_order(pool);
  order.resize(top_ratio_count(pool.size(), r_percent));
  return pool.select(order);
}

StageOutput distillation_forward(const ProposalBatch& refs, const ProposalBatch& pool,
                                 const BasicStageParams& basic,
                                 const AdvancedStageParams& advanced, DistillMode mode) {
  StageOutput out = basic_stage(refs, pool, basic);
  if (mode == DistillMode::full) {
    const ProposalBatch advanced_pool = sample_advanced_pool(pool, advanced.r_percent);
    out.refined = advanced_stage(out.refined, pool, advanced_pool, advanced);
  }
  return out;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

BasicStageParams init_basic_stage(std::uint64_t seed, const RelationDims& dims,
                                  std::size_t num_modules, double transform_noise) {
  if (num_modules == 0) throw ValidationError("basic stage needs at least one relation module");
  BasicStageParams params;
  for (std::size_t k = 0; k < num_modules; ++k) {
    params.modules.push_back(init_params(derive_seed(seed, k), dims));
  }
  for (std::size_t k = 0; k + 1 < num_modules; ++k) {
    Rng rng(derive_seed(seed, 1000 + k));
    AffineTransform t{Matrix::identity(dims.d_model), std::vector<double>(dims.d_model, 0.0),
                      Activation::relu};
    for (double& v : t.weight.data()) v += rng.uniform(-transform_noise, transform_noise);
    params.transforms.push_back(std::move(t));
  }
  return params;
}

AdvancedStageParams init_advanced_stage(std::uint64_t seed, const RelationDims& dims,
                                        double r_percent) {
  AdvancedStageParams params{init_params(derive_seed(seed, 2000), dims),
                             init_params(derive_seed(seed, 2001), dims), r_percent};
  params.validate();
  return params;
}

}  // namespace rdn
