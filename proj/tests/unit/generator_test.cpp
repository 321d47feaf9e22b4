// Copyright 2026 The topomo Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "topomo/generator/generator.hpp"
#include "topomo/motion/synth.hpp"
#include "topomo/numerics/grad_check.hpp"

namespace topomo::gen {
namespace {

GenConfig tiny_config() {
  GenConfig c;
  c.layers = 1;
  c.residual_layers = 1;
  c.heads = 2;
  c.model_dim = 16;
  c.ffn_dim = 16;
  c.text_dim = 8;
  c.cond_dim = 8;
  c.max_tokens = 64;
  c.lr = 1e-3;
  return c;
}

skelembed::SkelEmbedConfig tiny_skel() {
  skelembed::SkelEmbedConfig c;
  c.layers = 1;
  c.heads = 2;
  c.model_dim = 8;
  c.ffn_dim = 8;
  c.out_dim = 4;
  return c;
}

rvq::RvqConfig tiny_rvq() {
  rvq::RvqConfig c;
  c.levels = 3;
  c.codes_per_level = 8;
  c.code_dim = 4;
  c.channels = 16;
  c.head_hidden = 16;
  c.max_joints = 16;
  return c;
}

Corpus toy_corpus(std::uint64_t seed, std::size_t species = 2, std::size_t per = 2) {
  SynthOptions o;
  o.seed = seed;
  o.n_species = species;
  o.seqs_per_species = per;
  o.joint_min = 5;
  o.joint_max = 8;
  o.frame_min = 20;
  o.frame_max = 30;
  o.test_fraction = 0.0;
  return synth_corpus(o);
}

// ---- text embedder ---------------------------------------------------------------

TEST(Text, TokenizerLowercasesAndSplits) {
  EXPECT_EQ(HashedBagEmbedder::tokenize("A Fox, walks-FAST!"), (std::vector<std::string>{"a", "fox", "walks", "fast"}));
  EXPECT_TRUE(HashedBagEmbedder::tokenize(" ,.;").empty());
}

TEST(Text, DeterministicAndNormalized) {
  const HashedBagEmbedder a(32, 5), b(32, 5), c(32, 6);
  const auto va = a.embed("a heron walks slowly");
  EXPECT_EQ(va, b.embed("a heron walks slowly"));
  EXPECT_EQ(va, a.embed("A HERON   walks, slowly."));
  EXPECT_NE(va, c.embed("a heron walks slowly"));
  double n = 0.0;
  for (double x : va) n += x * x;
  EXPECT_NEAR(n, 1.0, 1e-12);
  for (double x : a.embed("")) EXPECT_EQ(x, 0.0);
}

// ---- condition fusion -------------------------------------------------------------

TEST(Fusion, ShapeDeterminismAndNullPath) {
  const GenModel m = GenModel::init(tiny_config(), tiny_skel(), 8, 3, 1);
  const Corpus c = toy_corpus(1);
  const auto& s = c.skeletons[0];
  const auto text = m.text_embedder().embed("a fox walks");
  const ad::Var skel = m.skeleton_feature(skelembed::make_input(s));
  const Tensor f1 = m.fuse_condition(text, skel, false).value();
  EXPECT_EQ(f1.shape(), (Shape{1, 8}));
  EXPECT_EQ(f1, m.fuse_condition(text, m.skeleton_feature(skelembed::make_input(s)), false).value());
  const Tensor n1 = m.fuse_condition(text, skel, true).value();
  const Tensor n2 = m.fuse_condition(m.text_embedder().embed("something else"),
                                     m.skeleton_feature(skelembed::make_input(c.skeletons[1])), true).value();
  EXPECT_EQ(n1, n2);
  EXPECT_NE(n1, f1);
}

TEST(Fusion, SkeletonAblationGivesZeroFeature) {
  GenConfig cfg = tiny_config();
  cfg.use_skeleton_embed = false;
  const GenModel m = GenModel::init(cfg, tiny_skel(), 8, 3, 1);
  const Corpus c = toy_corpus(1);
  const ad::Var f = m.skeleton_feature(skelembed::make_input(c.skeletons[0]));
  EXPECT_EQ(f.value().shape(), (Shape{1, 4}));
  for (double v : f.value().data()) EXPECT_EQ(v, 0.0);
}

// ---- masking -------------------------------------------------------------------------

TEST(Mask, CountsAndFullMask) {
  const std::vector<std::size_t> toks{1, 2, 3, 4, 5, 6, 7, 0, 1, 2};
  const MaskedTokens all = mask_tokens(toks, 1.0, 3, 99);
  EXPECT_EQ(all.positions.size(), 10u);
  for (auto t : all.tokens) EXPECT_EQ(t, 99u);
  const MaskedTokens part = mask_tokens(toks, 0.3, 4, 99);
  EXPECT_EQ(part.positions.size(), 3u);
  for (std::size_t p = 0; p < 10; ++p) {
    const bool masked = std::find(part.positions.begin(), part.positions.end(), p) != part.positions.end();
    EXPECT_EQ(part.tokens[p], masked ? 99u : toks[p]);
  }
  EXPECT_EQ(mask_tokens(toks, 0.3, 4, 99).positions, part.positions);
  EXPECT_THROW(mask_tokens(toks, 0.0, 1, 99), UsageError);
}

TEST(Mask, PositionsAreUniformAcrossSeeds) {
  const std::vector<std::size_t> toks(10, 0);
  std::vector<int> hits(10, 0);
  for (std::uint64_t s = 0; s < 1000; ++s)
    for (auto p : mask_tokens(toks, 0.3, s, 8).positions) ++hits[p];
  const double mean = 300.0, sigma = std::sqrt(1000.0 * 0.3 * 0.7);
  for (int h : hits) EXPECT_LT(std::fabs(h - mean), 3.0 * sigma) << h;
}

TEST(Mask, CosineSchedule) {
  EXPECT_DOUBLE_EQ(cosine_mask_ratio(0.0), 1.0);
  EXPECT_NEAR(cosine_mask_ratio(1.0), 0.0, 1e-15);
  EXPECT_NEAR(cosine_mask_ratio(0.5), std::sqrt(0.5), 1e-15);
}

// ---- losses ----------------------------------------------------------------------------

TEST(Loss, UniformLogitsGiveLogK) {
  const std::vector<std::size_t> targets{0, 3, 5, 7};
  const std::vector<std::size_t> masked{1, 2};
  const ad::Var logits = ad::constant(Tensor({4, 8}, 0.25));
  EXPECT_NEAR(masked_loss(logits, targets, masked).loss.value()[0], std::log(8.0), 1e-12);
  EXPECT_NEAR(residual_loss(logits, targets).value()[0], std::log(8.0), 1e-12);
}

TEST(Loss, ConfidentCorrectIsNearZero) {
  const std::vector<std::size_t> targets{0, 3, 5, 7};
  Tensor l({4, 8});
  for (std::size_t r = 0; r < 4; ++r) l(r, targets[r]) = 20.0;
  const std::vector<std::size_t> masked{0, 3};
  EXPECT_LT(masked_loss(ad::constant(l), targets, masked).loss.value()[0], 1e-3);
}

TEST(Loss, UnmaskedLogitsAreIgnored) {
  Rng rng(1);
  const std::vector<std::size_t> targets{0, 3, 5, 7};
  const std::vector<std::size_t> masked{1, 3};
  Tensor l = randn({4, 8}, rng, 1.0);
  const double before = masked_loss(ad::constant(l), targets, masked).loss.value()[0];
  for (std::size_t c = 0; c < 8; ++c) {
    l(0, c) = rng.normal(0.0, 100.0);
    l(2, c) = rng.normal(0.0, 100.0);
  }
  EXPECT_EQ(masked_loss(ad::constant(l), targets, masked).loss.value()[0], before);
}

TEST(Loss, EmptyMaskIsZeroWithFlag) {
  const std::vector<std::size_t> targets{0, 1};
  const LossValue v = masked_loss(ad::constant(Tensor({2, 4})), targets, {});
  EXPECT_TRUE(v.empty);
  EXPECT_EQ(v.loss.value()[0], 0.0);
}

TEST(Residual, LevelRangeAndSingleLevelDepth) {
  const GenModel m = GenModel::init(tiny_config(), tiny_skel(), 8, 2, 2);  // V = 1
  const rvq::TokenSequences t{{{1, 2, 3}, {4, 5, 6}}};
  const ad::Var cond = m.fuse_condition({}, ad::Var{}, true);
  const ad::Var logits = m.residual_logits(t, 1, cond);
  EXPECT_EQ(logits.value().shape(), (Shape{3, 8}));
  EXPECT_THROW(m.residual_logits(t, 0, cond), UsageError);
  EXPECT_THROW(m.residual_logits(t, 2, cond), UsageError);
}

TEST(Residual, HeadSharesStorageWithNextEmbedding) {
  GenModel m = GenModel::init(tiny_config(), tiny_skel(), 8, 4, 3);
  for (std::size_t j = 1; j + 1 < 4; ++j) {
    ad::Var head = m.residual_head(j);
    const ad::Var emb = m.residual_embedding(j);
    EXPECT_TRUE(head.same_storage(emb));
    head.mutable_value()(2, 3) = 42.0;
    EXPECT_EQ(emb.value()(2, 3), 42.0);
  }
}

TEST(Guidance, IdentityAndAffinity) {
  Rng rng(4);
  const Tensor c = randn({5, 8}, rng, 1.0), n = randn({5, 8}, rng, 1.0);
  EXPECT_EQ(guided_logits(c, n, 1.0), c);
  const Tensor l0 = guided_logits(c, n, 0.0), l1 = guided_logits(c, n, 1.0), l2 = guided_logits(c, n, 2.0);
  for (std::size_t i = 0; i < c.size(); ++i) {
    EXPECT_EQ(l0[i], n[i]);
    EXPECT_NEAR(l2[i] - l1[i], l1[i] - l0[i], 1e-12);
  }
}

// ---- gradient checks --------------------------------------------------------------------

TEST(GradCheck, MaskedObjective) {
  GenConfig cfg = tiny_config();
  cfg.model_dim = 8;
  cfg.ffn_dim = 8;
  const GenModel m = GenModel::init(cfg, tiny_skel(), 5, 2, 5);
  const Corpus c = toy_corpus(2);
  const auto input = skelembed::make_input(c.skeletons[0]);
  const auto text = m.text_embedder().embed("a fox walks");
  const std::vector<std::size_t> targets{1, 4, 0, 2};
  const std::vector<std::size_t> tokens{1, m.mask_id(), 0, m.mask_id()};
  const std::vector<std::size_t> masked{1, 3};
  auto loss_fn = [&] {
    const ad::Var cond = m.fuse_condition(text, m.skeleton_feature(input), false);
    return masked_loss(m.masked_logits(tokens, cond), targets, masked).loss;
  };
  const GradReport r = grad_check(loss_fn, m.parameters(), {});
  EXPECT_TRUE(r.passed) << r.summary();
}

TEST(GradCheck, ResidualObjectiveWithSharedTables) {
  GenConfig cfg = tiny_config();
  cfg.model_dim = 8;
  cfg.ffn_dim = 8;
  const GenModel m = GenModel::init(cfg, tiny_skel(), 5, 3, 6);
  const auto text = m.text_embedder().embed("a heron jumps");
  const Corpus c = toy_corpus(3);
  const auto input = skelembed::make_input(c.skeletons[1]);
  const rvq::TokenSequences t{{{1, 4, 0, 2}, {3, 3, 1, 0}, {2, 0, 4, 1}}};
  auto loss_fn = [&] {
    const ad::Var cond = m.fuse_condition(text, m.skeleton_feature(input), false);
    // Level 1's table is both the head here and an input embedding for level 2.
    return ad::add(residual_loss(m.residual_logits(t, 1, cond), t.levels[1]),
                   residual_loss(m.residual_logits(t, 2, cond), t.levels[2]));
  };
  // Skeleton encoder gradients reach this loss at ~1e-7, below finite-difference
  // roundoff; that encoder has its own check.
  ad::NamedParams params;
  for (const auto& p : m.parameters())
    if (p.first.rfind("skel.", 0) != 0) params.push_back(p);
  const GradReport r = grad_check(loss_fn, params, {});
  EXPECT_TRUE(r.passed) << r.summary();
}

// ---- training and generation ---------------------------------------------------------------

struct Trained {
  Corpus corpus;
  rvq::RvqModel rvq;
  GenModel gen;
};

Trained train_tiny(std::size_t gen_epochs, std::uint64_t seed = 7) {
  Trained t{toy_corpus(seed), rvq::RvqModel::init(tiny_rvq(), seed), GenModel::init(tiny_config(), tiny_skel(), 8, 3, seed)};
  rvq::RvqTrainOptions ro;
  ro.epochs = 5;
  rvq::train_rvq(t.rvq, t.corpus, ro);
  GenTrainOptions go;
  go.epochs = gen_epochs;
  go.seed = seed;
  train_generator(t.gen, t.rvq, t.corpus, go);
  return t;
}

TEST(Train, DeterministicHistory) {
  const Corpus c = toy_corpus(8);
  rvq::RvqModel r = rvq::RvqModel::init(tiny_rvq(), 1);
  rvq::RvqTrainOptions ro;
  ro.epochs = 2;
  rvq::train_rvq(r, c, ro);
  GenModel a = GenModel::init(tiny_config(), tiny_skel(), 8, 3, 2), b = GenModel::init(tiny_config(), tiny_skel(), 8, 3, 2);
  GenTrainOptions go;
  go.epochs = 3;
  go.seed = 11;
  const auto ha = train_generator(a, r, c, go).history, hb = train_generator(b, r, c, go).history;
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(ha[i].masked_loss, hb[i].masked_loss);
    EXPECT_EQ(ha[i].residual_loss, hb[i].residual_loss);
  }
}

TEST(Train, NullConditionRate) {
  const Corpus c = toy_corpus(9, 4, 5);  // 20 sequences
  rvq::RvqModel r = rvq::RvqModel::init(tiny_rvq(), 1);
  rvq::RvqTrainOptions ro;
  ro.epochs = 1;
  rvq::train_rvq(r, c, ro);
  GenConfig cfg = tiny_config();
  cfg.batch_size = 20;
  GenModel g = GenModel::init(cfg, tiny_skel(), 8, 3, 2);
  GenTrainOptions go;
  go.epochs = 25;
  const auto h = train_generator(g, r, c, go).history;
  std::size_t nulls = 0, total = 0;
  for (const auto& e : h) {
    nulls += e.null_conditions;
    total += e.samples;
  }
  const double mean = 0.1 * static_cast<double>(total), sigma = std::sqrt(static_cast<double>(total) * 0.1 * 0.9);
  EXPECT_LT(std::fabs(static_cast<double>(nulls) - mean), 3.0 * sigma) << nulls << " of " << total;
}

TEST(Train, MaskedLossDecreases) {
  const Trained t = train_tiny(60);
  // Accuracy on the training set with half the tokens masked beats chance (1/8).
  std::vector<std::size_t> all(t.corpus.size());
  std::iota(all.begin(), all.end(), 0);
  EXPECT_GT(masked_token_accuracy(t.gen, t.rvq, t.corpus, all, 0.5, 1), 0.25);
}

TEST(Train, EvaluationLossMatchesObjective) {
  const Trained t = train_tiny(2);
  const std::vector<std::size_t> one{1};
  const MaskedEval ev = masked_evaluation(t.gen, t.rvq, t.corpus, one, 0.5, 9);
  const auto& e = t.corpus.entries[1];
  const auto& s = t.corpus.skeleton_of(e);
  const GenItem item = t.gen.make_item(rvq::tokenize(t.rvq, e.motion, s), e.text, s);
  const auto& base = item.tokens.levels[0];
  const MaskedTokens mt = mask_tokens(base, 0.5, Rng::derive(9, 1), t.gen.mask_id());
  const ad::Var cond = t.gen.fuse_condition(item.text, t.gen.skeleton_feature(item.skeleton), false);
  const double direct = masked_loss(t.gen.masked_logits(mt.tokens, cond), base, mt.positions).loss.value()[0];
  EXPECT_EQ(ev.positions, mt.positions.size());
  EXPECT_NEAR(ev.loss, direct, 1e-12);
}

TEST(Generate, ContractAndDeterminism) {
  const Trained t = train_tiny(3);
  const auto& s = t.corpus.skeletons[0];
  GenerateOptions o;
  o.seed = 5;
  const Generation a = generate(t.gen, t.rvq, "a fox walks", s, 33, o);
  EXPECT_EQ(a.motion.num_frames(), 33u);
  EXPECT_EQ(a.motion.num_joints(), s.size());
  EXPECT_EQ(a.tokens.length(), 17u);
  for (const auto& lv : a.tokens.levels)
    for (auto k : lv) EXPECT_LT(k, 8u);
  const Generation b = generate(t.gen, t.rvq, "a fox walks", s, 33, o);
  EXPECT_EQ(a.motion.frames, b.motion.frames);
  EXPECT_EQ(a.tokens, b.tokens);
  std::size_t differ = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    o.seed = 100 + seed;
    differ += generate(t.gen, t.rvq, "a fox walks", s, 33, o).tokens == a.tokens ? 0 : 1;
  }
  EXPECT_GE(differ, 19u);
  EXPECT_THROW(generate(t.gen, t.rvq, "x", s, 19, o), UsageError);
  EXPECT_THROW(generate(t.gen, t.rvq, "x", s, 241, o), UsageError);
}

TEST(Generate, UnitGuidanceUsesConditionalLogitsOnly) {
  const Trained t = train_tiny(2);
  const auto& s = t.corpus.skeletons[1];
  GenerateOptions o;
  o.cfg_scale = 1.0;
  const auto tok = generate_tokens(t.gen, "a heron jumps", s, 10, o);
  // With one iteration and scale 1 the base tokens are samples of the conditional logits.
  EXPECT_EQ(tok.levels.size(), 3u);
  EXPECT_EQ(tok.length(), 10u);
}

TEST(Generate, OutputIsRescaledToInputSkeleton) {
  const Trained t = train_tiny(2);
  SkeletonGraph big = t.corpus.skeletons[0];
  for (auto& j : big.joints)
    for (double& v : j.offset) v *= 3.0;
  GenerateOptions o;
  const Generation a = generate(t.gen, t.rvq, "a fox walks", t.corpus.skeletons[0], 20, o);
  const Generation b = generate(t.gen, t.rvq, "a fox walks", big, 20, o);
  EXPECT_EQ(a.tokens, b.tokens);
  for (std::size_t tt = 0; tt < 20; ++tt)
    for (std::size_t j = 0; j < big.size(); ++j) {
      EXPECT_NEAR(b.motion.position(tt, j)[0], 3.0 * a.motion.position(tt, j)[0], 1e-9);
      EXPECT_EQ(b.motion.rotation(tt, j), a.motion.rotation(tt, j));
    }
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const Trained t = train_tiny(2);
  io::Checkpoint ck;
  t.rvq.save(ck);
  t.gen.save(ck);
  const auto path = (std::filesystem::temp_directory_path() / "topomo_gen_ckpt.bin").string();
  ck.save(path);
  const io::Checkpoint back = io::Checkpoint::load(path);
  std::filesystem::remove(path);
  const GenModel g = GenModel::load(back);
  const rvq::RvqModel r = rvq::RvqModel::load(back);
  const auto pa = t.gen.parameters(), pb = g.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i].second.value(), pb[i].second.value()) << pa[i].first;
  GenerateOptions o;
  o.seed = 3;
  EXPECT_EQ(generate(t.gen, t.rvq, "a fox", t.corpus.skeletons[0], 24, o).motion.frames,
            generate(g, r, "a fox", t.corpus.skeletons[0], 24, o).motion.frames);
}

}  // namespace
}  // namespace topomo::gen
