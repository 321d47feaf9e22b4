// Copyright 2026 The topomo Authors
// SPDX-License-Identifier: Apache-2.0

#include "topomo/skeleton/skeleton.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <queue>
#include <sstream>

#include "topomo/skeleton/skeleton_json.hpp"

namespace topomo {

namespace {

double norm3(const std::array<double, 3>& v) { return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]); }

std::vector<std::vector<std::size_t>> adjacency(std::span<const int> parents) {
  std::vector<std::vector<std::size_t>> adj(parents.size());
  for (std::size_t i = 0; i < parents.size(); ++i) {
    if (parents[i] < 0) continue;
    const auto p = static_cast<std::size_t>(parents[i]);
    if (p >= parents.size()) throw DataError("parent index out of range");
    adj[i].push_back(p);
    adj[p].push_back(i);
  }
  return adj;
}

}  // namespace

std::vector<int> SkeletonGraph::parents() const {
  std::vector<int> p(joints.size());
  for (std::size_t i = 0; i < joints.size(); ++i) p[i] = joints[i].parent;
  return p;
}

std::vector<std::vector<std::size_t>> SkeletonGraph::children() const {
  std::vector<std::vector<std::size_t>> c(joints.size());
  for (std::size_t i = 0; i < joints.size(); ++i)
    if (joints[i].parent >= 0) c[static_cast<std::size_t>(joints[i].parent)].push_back(i);
  return c;
}

std::vector<std::size_t> SkeletonGraph::depths() const {
  std::vector<std::size_t> d(joints.size(), 0);
  for (std::size_t i = 1; i < joints.size(); ++i) d[i] = d[static_cast<std::size_t>(joints[i].parent)] + 1;
  return d;
}

void SkeletonGraph::validate() const {
  if (joints.empty()) throw DataError("skeleton '" + name + "' has no joints");
  if (joints[0].parent != kRootParent) throw DataError("skeleton '" + name + "': joint 0 must be the root");
  for (std::size_t i = 0; i < joints.size(); ++i) {
    const auto& j = joints[i];
    if (i > 0 && (j.parent < 0 || static_cast<std::size_t>(j.parent) >= i)) {
      throw DataError("skeleton '" + name + "': joint " + std::to_string(i) + " ('" + j.name +
                      "') must have a parent with smaller index");
    }
    for (double v : j.offset)
      if (!std::isfinite(v)) throw DataError("skeleton '" + name + "': non-finite offset on joint '" + j.name + "'");
  }
}

JointMask JointMask::valid_prefix(std::size_t valid, std::size_t total) {
  if (valid == 0 || valid > total) throw DimensionError("joint mask needs 1 <= valid <= total");
  JointMask m;
  m.flags.assign(total, 0);
  std::fill_n(m.flags.begin(), valid, 1);
  return m;
}

std::size_t JointMask::valid_count() const noexcept {
  return static_cast<std::size_t>(std::count(flags.begin(), flags.end(), 1));
}

std::vector<double> JointMask::weights() const { return {flags.begin(), flags.end()}; }

RelationMatrix relation_matrix(std::span<const int> parents) {
  const std::size_t n = parents.size();
  RelationMatrix r(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      Relation rel = Relation::kOther;
      if (i == j) {
        rel = Relation::kSelf;
      } else if (parents[i] == static_cast<int>(j)) {
        rel = Relation::kParent;
      } else if (parents[j] == static_cast<int>(i)) {
        rel = Relation::kChild;
      } else if (parents[i] >= 0 && parents[i] == parents[j]) {
        rel = Relation::kSibling;
      }
      r(i, j) = rel;
    }
  }
  return r;
}

DistanceMatrix distance_matrix(std::span<const int> parents) {
  const std::size_t n = parents.size();
  const auto adj = adjacency(parents);
  DistanceMatrix d(n);
  constexpr std::size_t kUnseen = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> dist(n);
  for (std::size_t src = 0; src < n; ++src) {
    std::fill(dist.begin(), dist.end(), kUnseen);
    std::queue<std::size_t> q;
    dist[src] = 0;
    q.push(src);
    while (!q.empty()) {
      const std::size_t u = q.front();
      q.pop();
      for (std::size_t v : adj[u]) {
        if (dist[v] != kUnseen) continue;
        dist[v] = dist[u] + 1;
        q.push(v);
      }
    }
    for (std::size_t j = 0; j < n; ++j) {
      if (dist[j] == kUnseen) throw DataError("joint graph is disconnected");
      d(src, j) = dist[j];
    }
  }
  return d;
}

RelationMatrix relation_matrix(const SkeletonGraph& s) {
  const auto p = s.parents();
  return relation_matrix(std::span<const int>(p));
}

DistanceMatrix distance_matrix(const SkeletonGraph& s) {
  const auto p = s.parents();
  return distance_matrix(std::span<const int>(p));
}

double longest_chain_length(const SkeletonGraph& s) {
  std::vector<double> reach(s.size(), 0.0);
  double best = 0.0;
  for (std::size_t i = 1; i < s.size(); ++i) {
    reach[i] = reach[static_cast<std::size_t>(s.joints[i].parent)] + norm3(s.joints[i].offset);
    best = std::max(best, reach[i]);
  }
  return best;
}

NormalizedSkeleton normalize_skeleton(const SkeletonGraph& s) {
  s.validate();
  const double length = longest_chain_length(s);
  if (!(length > 0.0)) throw DataError("skeleton '" + s.name + "' is degenerate: all bone offsets are zero");
  // Already unit length up to rounding: leave untouched so the operation is idempotent.
  if (std::fabs(length - 1.0) <= 8.0 * std::numeric_limits<double>::epsilon()) return {s, 1.0};
  NormalizedSkeleton out{s, 1.0 / length};
  for (auto& j : out.skeleton.joints)
    for (auto& v : j.offset) v *= out.scale_factor;
  return out;
}

SkeletonGraph depth_first_order(const SkeletonGraph& s) {
  s.validate();
  const auto kids = s.children();
  std::vector<std::size_t> order;
  std::vector<std::size_t> stack{0};
  while (!stack.empty()) {
    const std::size_t u = stack.back();
    stack.pop_back();
    order.push_back(u);
    for (auto it = kids[u].rbegin(); it != kids[u].rend(); ++it) stack.push_back(*it);
  }
  std::vector<int> new_index(s.size());
  for (std::size_t k = 0; k < order.size(); ++k) new_index[order[k]] = static_cast<int>(k);
  SkeletonGraph out{s.name, s.species, {}};
  for (std::size_t old : order) {
    Joint j = s.joints[old];
    if (j.parent >= 0) j.parent = new_index[static_cast<std::size_t>(j.parent)];
    out.joints.push_back(std::move(j));
  }
  return out;
}

Tensor pad_joints(const Tensor& item, std::size_t joint_axis, std::size_t j_max) {
  const Shape& in = item.shape();
  if (joint_axis >= in.size()) throw DimensionError("pad_joints: joint axis out of range");
  if (in[joint_axis] > j_max) throw DimensionError("pad_joints: item has more joints than j_max");
  if (in[joint_axis] == j_max) return item;
  Shape out_shape = in;
  out_shape[joint_axis] = j_max;
  Tensor out(out_shape);
  std::size_t outer = 1, inner = 1;
  for (std::size_t a = 0; a < joint_axis; ++a) outer *= in[a];
  for (std::size_t a = joint_axis + 1; a < in.size(); ++a) inner *= in[a];
  const std::size_t k = in[joint_axis];
  for (std::size_t o = 0; o < outer; ++o) {
    const auto src = item.data().subspan(o * k * inner, k * inner);
    std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>(o * j_max * inner));
  }
  return out;
}

PaddedBatch pad_joint_batch(std::span<const Tensor> items, std::size_t joint_axis) {
  if (items.empty()) throw DimensionError("pad_joint_batch: empty batch");
  std::size_t j_max = 0;
  for (const auto& it : items) {
    if (joint_axis >= it.rank()) throw DimensionError("pad_joint_batch: joint axis out of range");
    if (it.rank() != items[0].rank()) throw DimensionError("pad_joint_batch: items differ in rank");
    for (std::size_t a = 0; a < it.rank(); ++a) {
      if (a != joint_axis && it.dim(a) != items[0].dim(a)) {
        throw DimensionError("pad_joint_batch: inconsistent extent on axis " + std::to_string(a));
      }
    }
    j_max = std::max(j_max, it.dim(joint_axis));
  }
  Shape stacked_shape{items.size()};
  for (std::size_t a = 0; a < items[0].rank(); ++a) stacked_shape.push_back(a == joint_axis ? j_max : items[0].dim(a));
  PaddedBatch out{Tensor(stacked_shape), {}};
  const std::size_t per_item = shape_numel(stacked_shape) / items.size();
  for (std::size_t b = 0; b < items.size(); ++b) {
    const Tensor padded = pad_joints(items[b], joint_axis, j_max);
    std::copy(padded.data().begin(), padded.data().end(),
              out.stacked.data().begin() + static_cast<std::ptrdiff_t>(b * per_item));
    out.masks.push_back(JointMask::valid_prefix(items[b].dim(joint_axis), j_max));
  }
  return out;
}

Tensor joint_features(const SkeletonGraph& s) {
  s.validate();
  const auto depth = s.depths();
  const auto kids = s.children();
  const double max_depth = static_cast<double>(*std::max_element(depth.begin(), depth.end()));
  Tensor f({s.size(), kJointFeatureWidth});
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto& o = s.joints[i].offset;
    f(i, 0) = o[0];
    f(i, 1) = o[1];
    f(i, 2) = o[2];
    f(i, 3) = max_depth > 0.0 ? static_cast<double>(depth[i]) / max_depth : 0.0;
    f(i, 4) = static_cast<double>(kids[i].size());
    f(i, 5) = norm3(o);
  }
  return f;
}

nlohmann::json skeleton_to_json_value(const SkeletonGraph& s) {
  nlohmann::json joints = nlohmann::json::array();
  for (const auto& j : s.joints) {
    joints.push_back({{"name", j.name}, {"parent", j.parent}, {"offset", {j.offset[0], j.offset[1], j.offset[2]}}});
  }
  return {{"name", s.name}, {"species", s.species}, {"joints", std::move(joints)}};
}

SkeletonGraph skeleton_from_json_value(const nlohmann::json& j) {
  try {
    SkeletonGraph s;
    s.name = j.value("name", std::string{});
    s.species = j.value("species", std::string{});
    for (const auto& jj : j.at("joints")) {
      Joint joint;
      joint.name = jj.at("name").get<std::string>();
      const auto& p = jj.at("parent");
      joint.parent = p.is_null() ? kRootParent : p.get<int>();
      const auto& o = jj.at("offset");
      if (!o.is_array() || o.size() != 3) throw DataError("joint '" + joint.name + "': offset must have 3 components");
      for (std::size_t k = 0; k < 3; ++k) joint.offset[k] = o[k].get<double>();
      s.joints.push_back(std::move(joint));
    }
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("skeleton JSON: ") + e.what());
  }
}

std::string skeleton_to_json(const SkeletonGraph& s, int indent) { return skeleton_to_json_value(s).dump(indent); }

SkeletonGraph skeleton_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("skeleton JSON: ") + e.what());
  }
  return skeleton_from_json_value(j);
}

SkeletonGraph load_skeleton_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open skeleton file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return skeleton_from_json(ss.str());
}

void save_skeleton_json(const SkeletonGraph& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write skeleton file '" + path + "'");
  out << skeleton_to_json(s) << '\n';
}

}  // namespace topomo
