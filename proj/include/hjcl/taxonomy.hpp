#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

#include "hjcl/errors.hpp"

namespace hjcl {

// Binary label assignment aligned to Taxonomy label order.
using LabelVector = std::vector<std::uint8_t>;

// The label hierarchy: a tree rooted at a distinguished root that is not
// itself a label. Labels are indexed 0..n-1 in first-appearance order of
// their defining line; depth is 1 for children of the root. Immutable after
// load and safe to share across threads.
//
// File format: one `child<TAB>parent` pair per line, UTF-8, '\n' endings,
// `ROOT` as the parent sentinel, '#' starts a comment line.
class Taxonomy {
 public:
  static Taxonomy load(std::istream& in);
  static Taxonomy from_edges(const std::vector<std::pair<std::string, std::string>>& child_parent);
  void save(std::ostream& out) const;

  int size() const { return static_cast<int>(labels_.size()); }
  int max_depth() const { return max_depth_; }

  const std::string& label(int id) const { return labels_[static_cast<std::size_t>(id)]; }
  int index_of(const std::string& name) const;  // throws DataError on unknown
  int find(const std::string& name) const;      // -1 when absent

  // -1 when the parent is the root.
  int parent(int id) const { return parent_[static_cast<std::size_t>(id)]; }
  int depth(int id) const { return depth_[static_cast<std::size_t>(id)]; }
  const std::vector<int>& children(int id) const { return children_[static_cast<std::size_t>(id)]; }
  const std::vector<int>& level1() const { return level1_; }

  // Chain from the level-1 ancestor down to the parent; empty for level-1
  // labels. Root is never included.
  std::vector<int> ancestors(int id) const;

  bool ancestor_closed(const LabelVector& y) const;
  LabelVector close_ancestors(LabelVector y) const;

  // Splits an ancestor-closed set into one chain per leaf of the induced
  // subtree, each chain depth-ordered and itself ancestor-closed. Chains
  // sharing a prefix repeat it. Throws DataError when y is not closed.
  std::vector<std::vector<int>> decompose_paths(const LabelVector& y) const;

  // Number of chains decompose_paths would return, allocation-free.
  int path_count(const LabelVector& y) const;

  // Active labels with no active child; equals path_count on closed sets
  // but accepts arbitrary vectors.
  int induced_leaf_count(const LabelVector& y) const;

  // FNV-1a over the canonical serialization; ties checkpoints to the
  // taxonomy they were trained on.
  std::uint64_t hash() const;

  bool operator==(const Taxonomy& other) const;

 private:
  void check_vector(const LabelVector& y) const;

  std::vector<std::string> labels_;
  std::unordered_map<std::string, int> index_;
  std::vector<int> parent_;
  std::vector<int> depth_;
  std::vector<std::vector<int>> children_;
  std::vector<int> level1_;
  int max_depth_ = 0;
};

}  // namespace hjcl
