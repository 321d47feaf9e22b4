// Copyright 2026 The topomo Authors
// SPDX-License-Identifier: Apache-2.0

#include "topomo/motion/synth.hpp"

#include <cmath>
#include <vector>

#include "topomo/motion/align.hpp"
#include "topomo/numerics/random.hpp"

namespace topomo {

namespace {

constexpr std::array<const char*, 16> kSpeciesNames{"fox",   "heron",  "lizard", "crab",    "horse", "spider",
                                                    "otter", "beetle", "crane",  "gecko",   "wolf",  "scorpion",
                                                    "moose", "mantis", "eel",    "lobster"};

std::string species_name(std::size_t s) {
  std::string name = kSpeciesNames[s % kSpeciesNames.size()];
  if (s >= kSpeciesNames.size()) name += std::to_string(s / kSpeciesNames.size() + 1);
  return name;
}

struct Gait {
  double freq;   // Hz
  double amp;    // radians
  double speed;  // skeleton units per second
  std::vector<double> phase;
  std::vector<double> weight;
  std::vector<Vec3> axis;
};

Gait make_gait(std::size_t joints, Rng& rng) {
  Gait g;
  g.freq = rng.uniform(0.6, 2.0);
  g.amp = rng.uniform(0.25, 0.7);
  g.speed = rng.uniform(0.3, 1.2);
  for (std::size_t j = 0; j < joints; ++j) {
    g.phase.push_back(rng.uniform(0.0, 2.0 * EIGEN_PI));
    g.weight.push_back(rng.uniform(0.3, 1.0));
    Vec3 a(rng.normal(), rng.normal(), rng.normal());
    if (a.norm() < 1e-6) a = Vec3::UnitX();
    g.axis.push_back(a.normalized());
  }
  return g;
}

std::string modifier(double amp_jitter, double freq_jitter) {
  const char* pace = freq_jitter > 1.07 ? "quickly" : (freq_jitter < 0.93 ? "slowly" : "steadily");
  const char* size = amp_jitter > 1.1 ? "with large movements" : (amp_jitter < 0.9 ? "with small movements"
                                                                                  : "with moderate movements");
  return std::string(pace) + " " + size;
}

std::string verb(const std::string& cls) {
  if (cls == "walk") return "walks";
  if (cls == "jump") return "jumps";
  if (cls == "idle") return "sways idly";
  return "turns";
}

}  // namespace

SkeletonGraph random_skeleton(std::size_t joints, std::uint64_t seed, const std::string& name) {
  if (joints < 3 || joints > 64) throw UsageError("skeleton joint count must lie in [3, 64]");
  Rng rng(seed);
  SkeletonGraph s{name, name, {}};
  s.joints.push_back({"root", kRootParent, {0.0, rng.uniform(0.3, 0.8), 0.0}});
  for (std::size_t i = 1; i < joints; ++i) {
    // Extending the newest joint most of the time gives limb-like chains.
    const int parent = rng.bernoulli(0.55) ? static_cast<int>(i - 1) : static_cast<int>(rng.index(i));
    Vec3 dir(rng.normal(), rng.normal(), rng.normal());
    if (dir.norm() < 1e-6) dir = Vec3::UnitY();
    const Vec3 off = dir.normalized() * rng.uniform(0.5, 1.5);
    s.joints.push_back({"j" + std::to_string(i), parent, {off.x(), off.y(), off.z()}});
  }
  return normalize_skeleton(depth_first_order(s)).skeleton;
}

Corpus synth_corpus(const SynthOptions& o) {
  if (o.n_species < 2) throw UsageError("synth_corpus needs at least 2 species");
  if (o.seqs_per_species < 1) throw UsageError("synth_corpus needs at least 1 sequence per species");
  if (o.joint_min < 3 || o.joint_max > 64 || o.joint_min > o.joint_max) {
    throw UsageError("joint range must satisfy 3 <= min <= max <= 64");
  }
  if (o.frame_min < kMinCorpusFrames || o.frame_max > kMaxCorpusFrames || o.frame_min > o.frame_max) {
    throw UsageError("frame range must satisfy 20 <= min <= max <= 240");
  }
  if (!(o.fps > 0.0)) throw UsageError("fps must be positive");

  Corpus corpus;
  for (std::size_t sp = 0; sp < o.n_species; ++sp) {
    Rng species_rng(Rng::derive(o.seed, 100 + sp));
    const std::size_t k = o.joint_min + species_rng.index(o.joint_max - o.joint_min + 1);
    const std::string name = species_name(sp);
    corpus.skeletons.push_back(random_skeleton(k, Rng::derive(o.seed, 5000 + sp), name));
    const SkeletonGraph& skel = corpus.skeletons.back();
    const Gait gait = make_gait(k, species_rng);
    const Pose rest = rest_pose(skel);

    for (std::size_t q = 0; q < o.seqs_per_species; ++q) {
      Rng rng(Rng::derive(o.seed, 100000 + sp * 10007 + q));
      const std::string cls = kMotionClasses[q % kMotionClasses.size()];
      const std::size_t frames = o.frame_min + rng.index(o.frame_max - o.frame_min + 1);
      const double ja = rng.uniform(0.7, 1.3);
      const double jf = rng.uniform(0.8, 1.2);
      const double amp = gait.amp * ja;
      const double omega = 2.0 * EIGEN_PI * gait.freq * jf;
      const double duration = static_cast<double>(frames) / o.fps;
      const double turn_rate = (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(0.5, 1.2);

      std::vector<Pose> poses;
      poses.reserve(frames);
      for (std::size_t t = 0; t < frames; ++t) {
        const double tau = static_cast<double>(t) / o.fps;
        Pose p = rest;
        Vec3 root_move = Vec3::Zero();
        double limb_scale = 1.0, limb_rate = 1.0;
        if (cls == "walk") {
          root_move = Vec3(0.0, 0.02 * std::sin(2.0 * omega * tau), gait.speed * tau);
        } else if (cls == "jump") {
          const double s = tau / duration;
          root_move = Vec3(0.0, 0.3 * ja * 4.0 * s * (1.0 - s), 0.3 * gait.speed * tau);
        } else if (cls == "idle") {
          root_move = Vec3(0.03 * std::sin(0.5 * omega * tau), 0.0, 0.0);
          limb_scale = 0.25;
          limb_rate = 0.5;
        } else {  // turn
          const double theta = turn_rate * tau;
          const double radius = 0.5 * gait.speed / turn_rate;
          root_move = Vec3(radius * (1.0 - std::cos(theta)), 0.0, radius * std::sin(theta));
          p.local[0] = yaw_rotation(theta);
          limb_scale = 0.5;
        }
        p.translation[0] += root_move;
        for (std::size_t j = 1; j < k; ++j) {
          double angle;
          if (cls == "jump") {
            const double s = tau / duration;
            angle = amp * gait.weight[j] * std::sin(EIGEN_PI * s) * (std::cos(gait.phase[j]) >= 0 ? 1.0 : -1.0);
          } else {
            angle = limb_scale * amp * gait.weight[j] * std::sin(limb_rate * omega * tau + gait.phase[j]);
          }
          p.local[j] = Eigen::AngleAxisd(angle, gait.axis[j]).toRotationMatrix();
        }
        poses.push_back(std::move(p));
      }

      const std::string who = o.species_in_text ? name : "creature";
      CorpusEntry e;
      e.skeleton = sp;
      e.motion = align_motion(motion_from_poses(skel, poses, o.fps, name));
      e.text.summary = "a " + who + " " + verb(cls);
      e.text.detail = e.text.summary + ", " + modifier(ja, jf);
      e.text.motion_class = cls;
      e.text.species = name;
      corpus.entries.push_back(std::move(e));
    }
  }
  assign_splits(corpus, o.test_fraction, o.seed);
  return corpus;
}

}  // namespace topomo
