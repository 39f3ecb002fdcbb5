#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "rdn/core.hpp"
#include "rdn/relation.hpp"

namespace rdn {

/// Head-averaged relation weights ω̄ retained per reference frame, keyed by
/// (frame, reference proposal id, supportive proposal id).
class RelationWeightTable {
 public:
  struct Entry {
    std::int64_t frame;
    ProposalId ref_id;
    ProposalId support_id;
    double w_bar;
  };

  /// Inserts or overwrites one entry.
  void set(std::int64_t frame, ProposalId ref_id, ProposalId support_id, double w_bar);

  /// Averages the heads of one module's weights and stores every (row, column) pair.
  void add_frame(std::int64_t frame, std::span<const ProposalId> ref_ids,
                 std::span<const ProposalId> support_ids, const RelationWeights& weights);

  std::optional<double> find(std::int64_t frame, ProposalId ref_id, ProposalId support_id) const;

  /// Entries in insertion order.
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  void merge(const RelationWeightTable& other);

 private:
  struct Key {
    std::int64_t frame;
    ProposalId ref_id;
    ProposalId support_id;
    bool operator==(const Key&) const = default;
  };
  struct KeyHash {
    std::size_t operator()(const Key& k) const noexcept;
  };

  std::vector<Entry> entries_;
  std::unordered_map<Key, std::size_t, KeyHash> index_;
};

}  // namespace rdn
