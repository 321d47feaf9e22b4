// Copyright 2026 The topomo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "topomo/numerics/tensor.hpp"

namespace topomo {

inline constexpr int kRootParent = -1;

struct Joint {
  std::string name;
  int parent = kRootParent;
  std::array<double, 3> offset{0.0, 0.0, 0.0};

  friend bool operator==(const Joint&, const Joint&) = default;
};

/// Articulated skeleton in topological order: joint 0 is the root and every
/// parent index is smaller than its child's index.
struct SkeletonGraph {
  std::string name;
  std::string species;
  std::vector<Joint> joints;

  std::size_t size() const noexcept { return joints.size(); }
  std::vector<int> parents() const;
  std::vector<std::vector<std::size_t>> children() const;
  /// Hop count from the root.
  std::vector<std::size_t> depths() const;

  /// Throws DataError if the structural invariants do not hold.
  void validate() const;

  friend bool operator==(const SkeletonGraph&, const SkeletonGraph&) = default;
};

enum class Relation : std::uint8_t { kSelf = 0, kParent = 1, kChild = 2, kSibling = 3, kOther = 4 };
inline constexpr std::size_t kRelationCount = 5;

/// entries(i, j) is j's role as seen from joint i.
class RelationMatrix {
 public:
  RelationMatrix() = default;
  explicit RelationMatrix(std::size_t n) : n_(n), entries_(n * n, Relation::kOther) {}

  std::size_t size() const noexcept { return n_; }
  Relation operator()(std::size_t i, std::size_t j) const { return entries_[i * n_ + j]; }
  Relation& operator()(std::size_t i, std::size_t j) { return entries_[i * n_ + j]; }

  friend bool operator==(const RelationMatrix&, const RelationMatrix&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<Relation> entries_;
};

/// Symmetric hop counts on the undirected bone graph.
class DistanceMatrix {
 public:
  DistanceMatrix() = default;
  explicit DistanceMatrix(std::size_t n) : n_(n), entries_(n * n, 0) {}

  std::size_t size() const noexcept { return n_; }
  std::size_t operator()(std::size_t i, std::size_t j) const { return entries_[i * n_ + j]; }
  std::size_t& operator()(std::size_t i, std::size_t j) { return entries_[i * n_ + j]; }

  friend bool operator==(const DistanceMatrix&, const DistanceMatrix&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<std::size_t> entries_;
};

/// Per-sample joint validity: 1 for real joints (the first K slots), 0 for padding.
struct JointMask {
  std::vector<std::uint8_t> flags;

  static JointMask valid_prefix(std::size_t valid, std::size_t total);
  std::size_t size() const noexcept { return flags.size(); }
  std::size_t valid_count() const noexcept;
  bool valid(std::size_t j) const { return flags[j] != 0; }
  std::vector<double> weights() const;

  friend bool operator==(const JointMask&, const JointMask&) = default;
};

// ---- topology ---------------------------------------------------------------

/// Relation/distance over an arbitrary parent list (one -1 root, no cycles);
/// joint order is not required to be topological.
RelationMatrix relation_matrix(std::span<const int> parents);
DistanceMatrix distance_matrix(std::span<const int> parents);

RelationMatrix relation_matrix(const SkeletonGraph& s);
DistanceMatrix distance_matrix(const SkeletonGraph& s);

// ---- normalization ----------------------------------------------------------

struct NormalizedSkeleton {
  SkeletonGraph skeleton;
  double scale_factor = 1.0;  // multiplier that was applied to every offset
};

/// Length of the longest root-to-leaf chain (sum of bone offset norms; the
/// root's own offset is not a bone).
double longest_chain_length(const SkeletonGraph& s);

/// Uniformly rescales offsets so the longest root-to-leaf chain has length 1.
NormalizedSkeleton normalize_skeleton(const SkeletonGraph& s);

/// Re-indexes joints into depth-first pre-order (children visited in index order).
SkeletonGraph depth_first_order(const SkeletonGraph& s);

// ---- padding ----------------------------------------------------------------

struct PaddedBatch {
  Tensor stacked;  // (B, ..., J_max, ...)
  std::vector<JointMask> masks;
};

/// Zero-pads `item` along `joint_axis` to `j_max` slots.
Tensor pad_joints(const Tensor& item, std::size_t joint_axis, std::size_t j_max);

/// Pads every item to the largest joint count in the batch and stacks them
/// along a new leading axis. Extents other than the joint axis must agree.
PaddedBatch pad_joint_batch(std::span<const Tensor> items, std::size_t joint_axis = 0);

// ---- per-joint geometric features --------------------------------------------

inline constexpr std::size_t kJointFeatureWidth = 6;

/// (K, 6) rows of [offset xyz, depth / max_depth, child count, bone length].
Tensor joint_features(const SkeletonGraph& s);

// ---- JSON interchange ----------------------------------------------------------

std::string skeleton_to_json(const SkeletonGraph& s, int indent = 2);
SkeletonGraph skeleton_from_json(const std::string& text);
SkeletonGraph load_skeleton_json(const std::string& path);
void save_skeleton_json(const SkeletonGraph& s, const std::string& path);

}  // namespace topomo
