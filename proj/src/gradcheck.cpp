#include "rdn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <span>

#include "rdn/distill.hpp"
#include "rdn/random.hpp"

namespace rdn {

namespace {

ProposalBatch random_batch(Rng& rng, std::size_t n, std::size_t d_model, ProposalId first_id) {
  ProposalBatch b;
  b.features = Matrix(n, d_model);
  for (std::size_t i = 0; i < n; ++i) {
    b.ids.push_back(first_id + static_cast<ProposalId>(i));
    const double w = rng.uniform(20.0, 100.0);
    const double h = rng.uniform(20.0, 100.0);
    b.boxes.push_back(BoxGeometry::from_center(rng.uniform(50.0, 300.0),
                                               rng.uniform(50.0, 300.0), w, h));
    b.objectness.push_back(rng.uniform());
    for (double& v : b.features.row(i)) v = rng.normal();
  }
  return b;
}

double loss(const ProposalBatch& refs, const ProposalBatch& pool,
            const RelationModuleParams& params, const Matrix& upstream) {
  const Matrix out = relation_module_forward(refs, pool, params).features;
  return dot(out.data(), upstream.data());
}

double relative_error(std::span<const double> analytic, std::span<const double> numeric) {
  double diff = 0.0;
  double na = 0.0;
  double nn = 0.0;
  for (std::size_t k = 0; k < analytic.size(); ++k) {
    diff += (analytic[k] - numeric[k]) * (analytic[k] - numeric[k]);
    na += analytic[k] * analytic[k];
    nn += numeric[k] * numeric[k];
  }
  const double scale = std::sqrt(std::max(na, nn));
  return scale == 0.0 ? 0.0 : std::sqrt(diff) / scale;
}

}  // namespace

GradcheckReport gradient_check(std::uint64_t seed, const GradcheckOptions& options) {
  options.dims.validate();
  Rng rng(derive_seed(seed, 17));
  ProposalBatch refs = random_batch(rng, options.num_refs, options.dims.d_model, 0);
  ProposalBatch pool = random_batch(rng, options.pool_size, options.dims.d_model, 1000);
  RelationModuleParams params = init_params(seed, options.dims);
  Matrix upstream(options.num_refs, options.dims.d_model);
  for (double& v : upstream.data()) v = rng.normal();

  const RelationOutput forward = relation_module_forward(refs, pool, params, true);
  const RelationGradients grads = relation_module_backward(upstream, forward);

  GradcheckReport report;
  report.seed = seed;
  const double h = options.step;
  auto check = [&](const std::string& name, std::span<double> values,
                   std::span<const double> analytic) {
    std::vector<double> numeric(values.size());
    for (std::size_t k = 0; k < values.size(); ++k) {
      const double saved = values[k];
      values[k] = saved + h;
      const double up = loss(refs, pool, params, upstream);
      values[k] = saved - h;
      const double down = loss(refs, pool, params, upstream);
      values[k] = saved;
      numeric[k] = (up - down) / (2.0 * h);
    }
    const double err = relative_error(analytic, numeric);
    report.tensors.push_back({name, err});
    report.max_relative_error = std::max(report.max_relative_error, err);
  };

  for (std::size_t m = 0; m < params.heads.size(); ++m) {
    const std::string tag = "head" + std::to_string(m) + ".";
    auto& head = params.heads[m];
    check(tag + "W_Q", head.query.data(), grads.query[m].data());
    check(tag + "W_K", head.key.data(), grads.key[m].data());
    check(tag + "W_V", head.value.data(), grads.value[m].data());
    check(tag + "W_G", head.geometry, grads.geometry[m]);
  }
  check("ref_features", refs.features.data(), grads.refs.data());
  check("pool_features", pool.features.data(), grads.pool.data());
  return report;
}

}  // namespace rdn
