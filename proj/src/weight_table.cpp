#include "rdn/weight_table.hpp"

#include "rdn/error.hpp"

namespace rdn {

std::size_t RelationWeightTable::KeyHash::operator()(const Key& k) const noexcept {
  std::uint64_t h = static_cast<std::uint64_t>(k.frame) * 0x9E3779B97F4A7C15ULL;
  h ^= static_cast<std::uint64_t>(k.ref_id) + 0xBF58476D1CE4E5B9ULL + (h << 6) + (h >> 2);
  h ^= static_cast<std::uint64_t>(k.support_id) + 0x94D049BB133111EBULL + (h << 6) + (h >> 2);
  return static_cast<std::size_t>(h);
}

void RelationWeightTable::set(std::int64_t frame, ProposalId ref_id, ProposalId support_id,
                              double w_bar) {
  const Key key{frame, ref_id, support_id};
  if (auto it = index_.find(key); it != index_.end()) {
    entries_[it->second].w_bar = w_bar;
    return;
  }
  index_.emplace(key, entries_.size());
  entries_.push_back({frame, ref_id, support_id, w_bar});
}

void RelationWeightTable::add_frame(std::int64_t frame, std::span<const ProposalId> ref_ids,
                                    std::span<const ProposalId> support_ids,
                                    const RelationWeights& weights) {
  if (weights.heads.empty()) return;
  const Matrix mean = weights.mean();
  if (mean.rows() != ref_ids.size() || mean.cols() != support_ids.size()) {
    throw ValidationError("relation weight shape does not match the labelled proposals");
  }
  for (std::size_t i = 0; i < ref_ids.size(); ++i) {
    for (std::size_t j = 0; j < support_ids.size(); ++j) {
      set(frame, ref_ids[i], support_ids[j], mean(i, j));
    }
  }
}

std::optional<double> RelationWeightTable::find(std::int64_t frame, ProposalId ref_id,
                                                ProposalId support_id) const {
  if (auto it = index_.find(Key{frame, ref_id, support_id}); it != index_.end()) {
    return entries_[it->second].w_bar;
  }
  return std::nullopt;
}

void RelationWeightTable::merge(const RelationWeightTable& other) {
  for (const auto& e : other.entries_) set(e.frame, e.ref_id, e.support_id, e.w_bar);
}

}  // namespace rdn
