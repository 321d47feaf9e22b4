// Copyright 2026 The topomo Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include "topomo/io/container.hpp"
#include "topomo/motion/align.hpp"
#include "topomo/motion/corpus.hpp"
#include "topomo/motion/ingest.hpp"
#include "topomo/motion/synth.hpp"
#include "topomo/numerics/random.hpp"

namespace topomo {
namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("topomo_motion_" + name)).string();
}

std::string fixture(const std::string& name) { return std::string(TOPOMO_FIXTURE_DIR) + "/bvh/" + name; }

SynthOptions small_options(std::uint64_t seed) {
  SynthOptions o;
  o.seed = seed;
  o.n_species = 3;
  o.seqs_per_species = 4;
  o.joint_min = 5;
  o.joint_max = 12;
  o.frame_min = 20;
  o.frame_max = 40;
  return o;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

// ---- alignment ---------------------------------------------------------------

TEST(Align, FixedPointOnAlignedMotion) {
  const auto c = synth_corpus(small_options(1));
  for (const auto& e : c.entries) {
    const auto again = align_motion(e.motion);
    EXPECT_LE(max_abs_diff(again.frames, e.motion.frames), 1e-9);
  }
}

TEST(Align, InvariantUnderRigidYaw) {
  const auto c = synth_corpus(small_options(2));
  for (const auto& e : c.entries) {
    const auto rotated = apply_world_yaw(e.motion, EIGEN_PI / 2, Vec3(0.3, 0.1, -2.0));
    EXPECT_LE(max_abs_diff(align_motion(rotated).frames, align_motion(e.motion).frames), 1e-6);
  }
}

TEST(Align, FrameZeroAtOriginFacingPlusZ) {
  const auto c = synth_corpus(small_options(3));
  const auto m = apply_world_yaw(c.entries[3].motion, 1.234, Vec3(5, 0, 5));
  const auto a = align_motion(m);
  EXPECT_LE(a.position(0, 0).norm(), 1e-9);
  EXPECT_LE(std::fabs(yaw_of(a.rotation(0, 0))), 1e-9);
}

// ---- synthetic corpus ----------------------------------------------------------

TEST(Synth, DeterministicForSeed) {
  EXPECT_EQ(synth_corpus(small_options(7)), synth_corpus(small_options(7)));
  EXPECT_NE(synth_corpus(small_options(7)), synth_corpus(small_options(8)));
}

TEST(Synth, Counts) {
  auto o = small_options(4);
  o.n_species = 2;
  o.seqs_per_species = 3;
  const auto c = synth_corpus(o);
  EXPECT_EQ(c.size(), 6u);
  EXPECT_EQ(c.skeletons.size(), 2u);
  EXPECT_NE(c.skeletons[0].parents(), c.skeletons[1].parents());
}

TEST(Synth, ValidatorSweep) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto o = small_options(seed);
    o.frame_min = 20;
    o.frame_max = 240;
    const auto c = synth_corpus(o);
    EXPECT_NO_THROW(c.validate());
    for (const auto& e : c.entries) {
      ASSERT_GE(e.motion.num_frames(), 20u);
      ASSERT_LE(e.motion.num_frames(), 240u);
      ASSERT_LE(max_abs_diff(align_motion(e.motion).frames, e.motion.frames), 1e-9);
      // Velocity block is the frame difference of the position block.
      for (std::size_t t = 1; t < e.motion.num_frames(); ++t)
        for (std::size_t j = 0; j < e.motion.num_joints(); ++j)
          ASSERT_LE((e.motion.velocity(t, j) - (e.motion.position(t, j) - e.motion.position(t - 1, j))).norm(), 1e-6);
      ASSERT_NEAR(longest_chain_length(c.skeleton_of(e)), 1.0, 1e-9);
    }
  }
}

TEST(Synth, SkeletonEdgeSetsDifferAcrossSeeds) {
  std::size_t collisions = 0, comparisons = 0;
  std::vector<std::vector<std::set<std::pair<int, int>>>> edges;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::vector<std::set<std::pair<int, int>>> per_species;
    for (std::size_t sp = 0; sp < 2; ++sp) {
      const auto s = random_skeleton(8 + (seed * 7 + sp) % 17, Rng::derive(seed, 5000 + sp), "x");
      std::set<std::pair<int, int>> e;
      for (std::size_t j = 1; j < s.size(); ++j) e.insert({s.joints[j].parent, static_cast<int>(j)});
      per_species.push_back(std::move(e));
    }
    edges.push_back(std::move(per_species));
  }
  for (std::size_t a = 0; a < edges.size(); ++a)
    for (std::size_t b = a + 1; b < edges.size(); ++b)
      for (std::size_t sp = 0; sp < 2; ++sp) {
        ++comparisons;
        if (edges[a][sp] == edges[b][sp]) ++collisions;
      }
  EXPECT_LT(static_cast<double>(collisions) / static_cast<double>(comparisons), 0.01);
}

TEST(Synth, SpeciesFreeText) {
  auto o = small_options(5);
  o.species_in_text = false;
  const auto c = synth_corpus(o);
  for (const auto& e : c.entries) {
    EXPECT_EQ(e.text.detail.find(e.text.species), std::string::npos) << e.text.detail;
    EXPECT_NE(e.text.detail.find("creature"), std::string::npos);
  }
}

TEST(Synth, RejectsBadRanges) {
  auto o = small_options(1);
  o.n_species = 1;
  EXPECT_THROW(synth_corpus(o), UsageError);
  o = small_options(1);
  o.joint_min = 2;
  EXPECT_THROW(synth_corpus(o), UsageError);
  o = small_options(1);
  o.frame_max = 300;
  EXPECT_THROW(synth_corpus(o), UsageError);
}

TEST(Splits, DefaultFraction) {
  auto o = small_options(6);
  o.n_species = 5;
  o.seqs_per_species = 20;
  const auto c = synth_corpus(o);
  EXPECT_EQ(c.indices(Split::kTest).size(), 5u);
  EXPECT_EQ(c.indices(Split::kTrain).size(), 95u);
}

// ---- container ---------------------------------------------------------------------

TEST(CorpusFile, RoundTrip) {
  const auto c = synth_corpus(small_options(9));
  const auto path = temp_path("rt.corpus");
  save_corpus(c, path);
  EXPECT_EQ(load_corpus(path), c);
  std::filesystem::remove(path);
}

TEST(CorpusFile, CorruptedMagic) {
  const auto c = synth_corpus(small_options(9));
  const auto path = temp_path("magic.corpus");
  save_corpus(c, path);
  auto bytes = io::read_file_bytes(path);
  bytes[0] = 'X';
  io::write_file_bytes(path, bytes);
  EXPECT_THROW(load_corpus(path), FormatError);
  std::filesystem::remove(path);
}

TEST(CorpusFile, ChecksumAndTruncation) {
  const auto c = synth_corpus(small_options(9));
  const auto path = temp_path("crc.corpus");
  save_corpus(c, path);
  auto bytes = io::read_file_bytes(path);
  auto flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x40;
  io::write_file_bytes(path, flipped);
  try {
    load_corpus(path);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("checksum"), std::string::npos);
  }
  bytes.resize(bytes.size() - 100);
  io::write_file_bytes(path, bytes);
  EXPECT_THROW(load_corpus(path), FormatError);
  std::filesystem::remove(path);
}

TEST(CorpusFile, VersionMismatch) {
  const std::vector<double> payload{1.0, 2.0};
  const auto bytes = io::encode_container(io::kCorpusMagic, kCorpusVersion + 1, {{"k", 1}}, payload);
  EXPECT_THROW(io::decode_container(bytes, io::kCorpusMagic, kCorpusVersion), FormatError);
  const auto ok = io::decode_container(io::encode_container(io::kCorpusMagic, 3, {{"k", 1}}, payload),
                                       io::kCorpusMagic, 3);
  EXPECT_EQ(ok.payload, payload);
  EXPECT_EQ(ok.header["k"], 1);
}

TEST(CorpusFile, TextJsonLines) {
  const auto c = synth_corpus(small_options(10));
  const auto path = temp_path("text.jsonl");
  export_text_jsonl(c, path);
  std::ifstream in(path);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j["summary"], c.entries[n].text.summary);
    ++n;
  }
  EXPECT_EQ(n, c.size());
  std::filesystem::remove(path);
}

// ---- ingest -----------------------------------------------------------------------

std::string write_clip(const std::string& name, std::size_t frames) {
  std::string text =
      "HIERARCHY\nROOT r\n{\n OFFSET 0 2 0\n CHANNELS 6 Xposition Yposition Zposition Zrotation Xrotation Yrotation\n"
      " JOINT a\n {\n  OFFSET 0 1 0\n  CHANNELS 3 Zrotation Xrotation Yrotation\n  End Site\n  {\n   OFFSET 0 1 0\n  }\n"
      " }\n}\nMOTION\nFrames: " +
      std::to_string(frames) + "\nFrame Time: 0.0333333\n";
  for (std::size_t t = 0; t < frames; ++t) {
    const double x = 0.1 * static_cast<double>(t);
    text += std::to_string(x) + " 2 " + std::to_string(2 * x) + " 5 " + std::to_string(10.0 * x) + " 30 " +
            std::to_string(-20 * x) + " 4 1\n";
  }
  const auto path = temp_path(name);
  std::ofstream(path) << text;
  return path;
}

TEST(Ingest, ValidFileGivesOneEntry) {
  const std::vector<std::string> paths{write_clip("ok.bvh", 30)};
  const auto r = ingest_bvh_files(paths, {});
  ASSERT_EQ(r.corpus.size(), 1u);
  EXPECT_TRUE(r.rejected.empty());
  EXPECT_NO_THROW(r.corpus.validate());
  EXPECT_NEAR(longest_chain_length(r.corpus.skeletons[0]), 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(r.corpus.entries[0].scale_factor, 0.5);
}

TEST(Ingest, ShortClipRejectedUnlessResampled) {
  const std::vector<std::string> paths{write_clip("short.bvh", 10)};
  const auto r = ingest_bvh_files(paths, {});
  EXPECT_EQ(r.corpus.size(), 0u);
  ASSERT_EQ(r.rejected.size(), 1u);
  EXPECT_NE(r.rejected[0].reason.find("10 frames"), std::string::npos);
  IngestOptions o;
  o.resample = true;
  const auto r2 = ingest_bvh_files(paths, o);
  ASSERT_EQ(r2.corpus.size(), 1u);
  EXPECT_EQ(r2.corpus.entries[0].motion.num_frames(), 20u);
}

TEST(Ingest, ParseErrorsAreReported) {
  const auto path = temp_path("broken.bvh");
  std::ofstream(path) << "HIERARCHY\nROOT r\n{\n";
  const std::vector<std::string> paths{path};
  const auto r = ingest_bvh_files(paths, {});
  ASSERT_EQ(r.rejected.size(), 1u);
  EXPECT_NE(r.rejected[0].reason.find("line"), std::string::npos);
}

TEST(Ingest, ExportRoundTripMatchesIngest) {
  const std::vector<std::string> paths{write_clip("rt.bvh", 25)};
  const auto r = ingest_bvh_files(paths, {});
  const auto& e = r.corpus.entries[0];
  const auto& skel = r.corpus.skeletons[0];
  const auto out = temp_path("rt_export.bvh");
  std::ofstream(out) << export_bvh(skel, e.motion, 1.0 / e.motion.fps);
  const std::vector<std::string> again{out};
  const auto r2 = ingest_bvh_files(again, {});
  ASSERT_EQ(r2.corpus.size(), 1u);
  EXPECT_LE(max_abs_diff(r2.corpus.entries[0].motion.frames, e.motion.frames), 1e-6);
}

TEST(Ingest, ResampleKeepsEndpoints) {
  const auto clip = load_bvh(fixture("snake8.bvh"));
  const auto poses = clip_poses(clip);
  const auto re = resample_poses(poses, 9);
  ASSERT_EQ(re.size(), 9u);
  for (std::size_t j = 0; j < poses[0].local.size(); ++j) {
    EXPECT_TRUE(re.front().local[j].isApprox(poses.front().local[j], 1e-12));
    EXPECT_TRUE(re.back().local[j].isApprox(poses.back().local[j], 1e-12));
  }
}

}  // namespace
}  // namespace topomo
