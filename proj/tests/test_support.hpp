#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <string>
#include <vector>

#include "rdn/core.hpp"
#include "rdn/distill.hpp"
#include "rdn/random.hpp"
#include "rdn/relation.hpp"

namespace rdn::testing {

/// Random box with integer corners inside a 200 x 200 canvas.
inline BoxGeometry random_int_box(Rng& rng) {
  const double x1 = static_cast<double>(rng.below(150));
  const double y1 = static_cast<double>(rng.below(150));
  const double w = 1.0 + static_cast<double>(rng.below(50));
  const double h = 1.0 + static_cast<double>(rng.below(50));
  return {x1, y1, x1 + w, y1 + h};
}

inline BoxGeometry random_box(Rng& rng) {
  return BoxGeometry::from_center(rng.uniform(50.0, 400.0), rng.uniform(50.0, 400.0),
                                  rng.uniform(10.0, 120.0), rng.uniform(10.0, 120.0));
}

inline ProposalBatch random_batch(Rng& rng, std::size_t n, std::size_t d_model,
                                  ProposalId first_id = 0) {
  ProposalBatch b;
  b.features = Matrix(n, d_model);
  for (std::size_t i = 0; i < n; ++i) {
    b.ids.push_back(first_id + static_cast<ProposalId>(i));
    b.boxes.push_back(random_box(rng));
    b.objectness.push_back(rng.uniform());
    for (double& v : b.features.row(i)) v = rng.normal();
  }
  return b;
}

inline std::vector<Proposal> random_proposals(Rng& rng, std::size_t n, std::size_t d_model,
                                              std::int64_t frame, ProposalId first_id) {
  std::vector<Proposal> out;
  for (std::size_t i = 0; i < n; ++i) {
    Proposal p;
    p.id = first_id + static_cast<ProposalId>(i);
    p.frame_index = frame;
    p.box = random_box(rng);
    p.objectness = rng.uniform();
    p.feature.resize(d_model);
    for (double& v : p.feature) v = rng.normal();
    out.push_back(std::move(p));
  }
  return out;
}

/// Random permutation by Fisher-Yates over the test generator.
inline std::vector<std::size_t> random_permutation(Rng& rng, std::size_t n) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[rng.below(i)]);
  return p;
}

/// Desk-scale dimensions used across tests: 2 heads of 8 relation channels.
inline RelationDims desk_dims() { return {16, 16, 8, 8, 2}; }

inline double max_abs(const Matrix& a, const Matrix& b) { return max_abs_diff(a, b); }

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("rdn_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace rdn::testing
