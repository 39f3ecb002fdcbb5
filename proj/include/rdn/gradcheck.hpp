#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rdn/relation.hpp"

namespace rdn {

struct GradcheckOptions {
  RelationDims dims{16, 8, 8, 8, 2};
  std::size_t num_refs = 3;
  std::size_t pool_size = 6;
  double step = 1e-5;
};

struct TensorCheck {
  std::string name;
  double relative_error = 0.0;  // |analytic - numeric|₂ / max(|analytic|₂, |numeric|₂)
};

struct GradcheckReport {
  std::uint64_t seed = 0;
  std::vector<TensorCheck> tensors;
  double max_relative_error = 0.0;
};

/// Compares relation_module_backward against central finite differences on a
/// random instance (features, boxes, parameters and upstream gradient all
/// drawn from the seed) for every parameter and input tensor.
GradcheckReport gradient_check(std::uint64_t seed, const GradcheckOptions& options = {});

}  // namespace rdn
