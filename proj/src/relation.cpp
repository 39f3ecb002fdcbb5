#include "rdn/relation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "rdn/error.hpp"
#include "rdn/random.hpp"

namespace rdn {

struct RelationCache {
  ProposalBatch refs;
  ProposalBatch pool;
  RelationModuleParams params;
  std::vector<Matrix> queries;     // per head |refs| x d_k
  std::vector<Matrix> keys;        // per head |pool| x d_k
  std::vector<Matrix> values;      // per head |pool| x d_rel
  std::vector<Matrix> geo_logits;  // per head |refs| x |pool|, before rectification
  std::vector<std::vector<double>> embeddings;  // |refs|*|pool| rows of d_geo
};

void RelationDims::validate() const {
  auto fail = [](const std::string& msg) { throw ValidationError("relation dims: " + msg); };
  if (heads == 0) fail("heads must be positive");
  if (d_model == 0) fail("d_model must be positive");
  if (d_k == 0) fail("d_k must be positive");
  if (d_rel == 0) fail("d_rel must be positive");
  if (d_rel * heads != d_model) {
    fail("d_rel * heads = " + std::to_string(d_rel * heads) + " must equal d_model = " +
         std::to_string(d_model));
  }
  if (d_geo == 0 || d_geo % 8 != 0) {
    fail("d_geo = " + std::to_string(d_geo) + " must be a positive multiple of 8");
  }
}

namespace {

void require_shape(const Matrix& m, std::size_t rows, std::size_t cols, const char* name,
                   std::size_t head) {
  if (m.rows() != rows || m.cols() != cols) {
    throw ValidationError("head " + std::to_string(head) + " " + name + " has shape " +
                          std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                          ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
  }
}

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

void check_inputs(const ProposalBatch& refs, const ProposalBatch& pool,
                  const RelationModuleParams& params) {
  const std::size_t d_model = params.dims.d_model;
  if (pool.empty()) throw ValidationError("relation module: supportive pool is empty");
  if (!refs.empty() && refs.features.cols() != d_model) {
    throw ValidationError("relation module: reference feature dimension d_model is " +
                          std::to_string(refs.features.cols()) + ", expected " +
                          std::to_string(d_model));
  }
  if (pool.features.cols() != d_model) {
    throw ValidationError("relation module: pool feature dimension d_model is " +
                          std::to_string(pool.features.cols()) + ", expected " +
                          std::to_string(d_model));
  }
  for (std::size_t i = 0; i < refs.size(); ++i) {
    if (!all_finite(refs.features.row(i))) {
      throw ValidationError("relation module: non-finite feature in proposal " +
                            std::to_string(refs.ids[i]));
    }
  }
  for (std::size_t j = 0; j < pool.size(); ++j) {
    if (!all_finite(pool.features.row(j))) {
      throw ValidationError("relation module: non-finite feature in proposal " +
                            std::to_string(pool.ids[j]));
    }
  }
}

/// Pairwise embeddings, row-major over (ref, pool).
std::vector<std::vector<double>> pair_embeddings(const ProposalBatch& refs,
                                                 const ProposalBatch& pool, std::size_t d_geo) {
  std::vector<std::vector<double>> out;
  out.reserve(refs.size() * pool.size());
  for (std::size_t i = 0; i < refs.size(); ++i) {
    for (std::size_t j = 0; j < pool.size(); ++j) {
      out.push_back(geometry_embedding(refs.boxes[i], pool.boxes[j], d_geo));
    }
  }
  return out;
}

Matrix geometry_logits(const std::vector<std::vector<double>>& embeddings,
                       const std::vector<double>& projection, std::size_t n_refs,
                       std::size_t n_pool) {
  Matrix out(n_refs, n_pool);
  for (std::size_t i = 0; i < n_refs; ++i) {
    for (std::size_t j = 0; j < n_pool; ++j) {
      out(i, j) = dot(projection, embeddings[i * n_pool + j]);
    }
  }
  return out;
}

double rectified_bias(double geo_logit) { return std::max(kGeometryBiasFloor, geo_logit); }

/// Row-wise ω = b·exp(a - max a) / Σ.
Matrix normalize_rows(const Matrix& app_logits, const Matrix& geo_logits) {
  Matrix w(app_logits.rows(), app_logits.cols());
  for (std::size_t i = 0; i < w.rows(); ++i) {
    const auto a = app_logits.row(i);
    const double peak = *std::max_element(a.begin(), a.end());
    double total = 0.0;
    auto out = w.row(i);
    for (std::size_t j = 0; j < out.size(); ++j) {
      out[j] = rectified_bias(geo_logits(i, j)) * std::exp(a[j] - peak);
      total += out[j];
    }
    for (double& v : out) v /= total;
  }
  return w;
}

struct HeadPass {
  Matrix queries;
  Matrix keys;
  Matrix geo_logits;
  Matrix weights;
};

HeadPass head_weights(const ProposalBatch& refs, const ProposalBatch& pool,
                      const RelationHeadParams& head, std::size_t d_k,
                      const std::vector<std::vector<double>>& embeddings) {
  HeadPass pass;
  pass.queries = matmul(refs.features, head.query);
  pass.keys = matmul(pool.features, head.key);
  Matrix logits = matmul_nt(pass.queries, pass.keys);
  const double scale = 1.0 / std::sqrt(static_cast<double>(d_k));
  for (double& v : logits.data()) v *= scale;
  pass.geo_logits = geometry_logits(embeddings, head.geometry, refs.size(), pool.size());
  pass.weights = normalize_rows(logits, pass.geo_logits);
  return pass;
}

}  // namespace

void RelationModuleParams::validate() const {
  dims.validate();
  if (heads.size() != dims.heads) {
    throw ValidationError("relation module has " + std::to_string(heads.size()) +
                          " heads, expected " + std::to_string(dims.heads));
  }
  for (std::size_t m = 0; m < heads.size(); ++m) {
    const auto& h = heads[m];
    require_shape(h.query, dims.d_model, dims.d_k, "W_Q", m);
    require_shape(h.key, dims.d_model, dims.d_k, "W_K", m);
    require_shape(h.value, dims.d_model, dims.d_rel, "W_V", m);
    if (h.geometry.size() != dims.d_geo) {
      throw ValidationError("head " + std::to_string(m) + " W_G has length " +
                            std::to_string(h.geometry.size()) + ", expected d_geo " +
                            std::to_string(dims.d_geo));
    }
    if (!all_finite(h.query.data()) || !all_finite(h.key.data()) ||
        !all_finite(h.value.data()) || !all_finite(h.geometry)) {
      throw ValidationError("head " + std::to_string(m) + " has non-finite parameters");
    }
  }
}

Matrix RelationWeights::mean() const {
  if (heads.empty()) return {};
  Matrix out(heads.front().rows(), heads.front().cols());
  for (const auto& h : heads) add_inplace(out, h);
  const double inv = 1.0 / static_cast<double>(heads.size());
  for (double& v : out.data()) v *= inv;
  return out;
}

std::array<double, 4> relative_geometry(const BoxGeometry& ref, const BoxGeometry& other) {
  const double w = ref.width();
  const double h = ref.height();
  const double dx = std::max(std::abs(ref.cx() - other.cx()), kCenterOffsetClamp * w);
  const double dy = std::max(std::abs(ref.cy() - other.cy()), kCenterOffsetClamp * h);
  return {std::log(dx / w), std::log(dy / h), std::log(other.width() / w),
          std::log(other.height() / h)};
}

std::vector<double> geometry_embedding(const BoxGeometry& ref, const BoxGeometry& other,
                                       std::size_t d_geo) {
  if (d_geo == 0 || d_geo % 8 != 0) {
    throw ValidationError("d_geo must be a positive multiple of 8");
  }
  const auto rel = relative_geometry(ref, other);
  const std::size_t freqs = d_geo / 8;
  std::vector<double> out(d_geo);
  for (std::size_t c = 0; c < 4; ++c) {
    const std::size_t base = c * 2 * freqs;
    for (std::size_t k = 0; k < freqs; ++k) {
      const double exponent = static_cast<double>(k) / static_cast<double>(freqs);
      const double angle = kEmbeddingScale * rel[c] / std::pow(kEmbeddingWaveLength, exponent);
      out[base + k] = std::sin(angle);
      out[base + freqs + k] = std::cos(angle);
    }
  }
  return out;
}

RelationWeights relation_weights(const ProposalBatch& refs, const ProposalBatch& pool,
                                 const RelationModuleParams& params) {
  params.validate();
  check_inputs(refs, pool, params);
  const auto embeddings = pair_embeddings(refs, pool, params.dims.d_geo);
  RelationWeights out;
  for (const auto& head : params.heads) {
    out.heads.push_back(head_weights(refs, pool, head, params.dims.d_k, embeddings).weights);
  }
  return out;
}

RelationOutput relation_module_forward(const ProposalBatch& refs, const ProposalBatch& pool,
                                       const RelationModuleParams& params, bool keep_cache) {
  params.validate();
  check_inputs(refs, pool, params);
  const auto& dims = params.dims;
  auto embeddings = pair_embeddings(refs, pool, dims.d_geo);

  RelationOutput out;
  out.features = refs.features;
  if (refs.empty()) out.features = Matrix(0, dims.d_model);

  std::shared_ptr<RelationCache> cache;
  if (keep_cache) {
    cache = std::make_shared<RelationCache>();
    cache->refs = refs;
    cache->pool = pool;
    cache->params = params;
  }

  for (std::size_t m = 0; m < params.heads.size(); ++m) {
    const auto& head = params.heads[m];
    HeadPass pass = head_weights(refs, pool, head, dims.d_k, embeddings);
    Matrix values = matmul(pool.features, head.value);
    const Matrix relation = matmul(pass.weights, values);
    const std::size_t offset = m * dims.d_rel;
    for (std::size_t i = 0; i < refs.size(); ++i) {
      auto dst = out.features.row(i);
      const auto src = relation.row(i);
      for (std::size_t c = 0; c < dims.d_rel; ++c) dst[offset + c] += src[c];
    }
    if (cache) {
      cache->queries.push_back(std::move(pass.queries));
      cache->keys.push_back(std::move(pass.keys));
      cache->values.push_back(std::move(values));
      cache->geo_logits.push_back(std::move(pass.geo_logits));
    }
    out.weights.heads.push_back(std::move(pass.weights));
  }
  if (cache) {
    cache->embeddings = std::move(embeddings);
    out.cache = std::move(cache);
  }
  return out;
}

RelationGradients relation_module_backward(const Matrix& upstream, const RelationOutput& forward) {
  if (!forward.cache) {
    throw std::logic_error("relation_module_backward: forward pass ran without a cache");
  }
  const RelationCache& c = *forward.cache;
  const auto& dims = c.params.dims;
  const std::size_t n_refs = c.refs.size();
  const std::size_t n_pool = c.pool.size();
  if (upstream.rows() != n_refs || upstream.cols() != dims.d_model) {
    throw ValidationError("relation_module_backward: upstream gradient shape " +
                          std::to_string(upstream.rows()) + "x" +
                          std::to_string(upstream.cols()) + " does not match output " +
                          std::to_string(n_refs) + "x" + std::to_string(dims.d_model));
  }

  RelationGradients g;
  g.refs = upstream;  // residual path
  g.pool = Matrix(n_pool, dims.d_model);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dims.d_k));

  for (std::size_t m = 0; m < c.params.heads.size(); ++m) {
    const auto& head = c.params.heads[m];
    const Matrix& w = forward.weights.heads[m];
    const Matrix& values = c.values[m];

    Matrix head_grad(n_refs, dims.d_rel);
    for (std::size_t i = 0; i < n_refs; ++i) {
      for (std::size_t k = 0; k < dims.d_rel; ++k) head_grad(i, k) = upstream(i, m * dims.d_rel + k);
    }

    // Value path.
    const Matrix d_values = matmul_tn(w, head_grad);  // |pool| x d_rel
    g.value.push_back(matmul_tn(c.pool.features, d_values));
    add_inplace(g.pool, matmul_nt(d_values, head.value));

    // Through the normalization: ω = u / Σu with log u = a + log b.
    const Matrix d_weights = matmul_nt(head_grad, values);  // |refs| x |pool|
    Matrix d_app(n_refs, n_pool);
    std::vector<double> d_geo_proj(dims.d_geo, 0.0);
    for (std::size_t i = 0; i < n_refs; ++i) {
      const double row_dot = dot(w.row(i), d_weights.row(i));
      for (std::size_t j = 0; j < n_pool; ++j) {
        const double d_log_u = w(i, j) * (d_weights(i, j) - row_dot);
        d_app(i, j) = d_log_u;
        const double geo_logit = c.geo_logits[m](i, j);
        if (geo_logit > kGeometryBiasFloor) {
          const double d_geo_logit = d_log_u / geo_logit;
          const auto& emb = c.embeddings[i * n_pool + j];
          for (std::size_t k = 0; k < dims.d_geo; ++k) d_geo_proj[k] += d_geo_logit * emb[k];
        }
      }
    }
    g.geometry.push_back(std::move(d_geo_proj));

    for (double& v : d_app.data()) v *= scale;
    const Matrix d_queries = matmul(d_app, c.keys[m]);     // |refs| x d_k
    const Matrix d_keys = matmul_tn(d_app, c.queries[m]);  // |pool| x d_k
    g.query.push_back(matmul_tn(c.refs.features, d_queries));
    g.key.push_back(matmul_tn(c.pool.features, d_keys));
    add_inplace(g.refs, matmul_nt(d_queries, head.query));
    add_inplace(g.pool, matmul_nt(d_keys, head.key));
  }
  return g;
}

RelationModuleParams init_params(std::uint64_t seed, const RelationDims& dims) {
  dims.validate();
  Rng rng(seed);
  auto fill_uniform = [&rng](auto& values, double bound) {
    for (double& v : values) v = rng.uniform(-bound, bound);
  };
  const double model_bound = 1.0 / std::sqrt(static_cast<double>(dims.d_model));
  const double geo_bound = 1.0 / std::sqrt(static_cast<double>(dims.d_geo));

  RelationModuleParams params;
  params.dims = dims;
  params.seed = seed;
  for (std::size_t m = 0; m < dims.heads; ++m) {
    RelationHeadParams head{Matrix(dims.d_model, dims.d_k), Matrix(dims.d_model, dims.d_k),
                            Matrix(dims.d_model, dims.d_rel), std::vector<double>(dims.d_geo)};
    fill_uniform(head.query.data(), model_bound);
    fill_uniform(head.key.data(), model_bound);
    fill_uniform(head.value.data(), model_bound);
    fill_uniform(head.geometry, geo_bound);
    params.heads.push_back(std::move(head));
  }
  return params;
}

RelationModuleParams with_zero_values(RelationModuleParams params) {
  for (auto& head : params.heads) head.value.fill(0.0);
  return params;
}

}  // namespace rdn
