// Copyright 2026 The topomo Authors
// SPDX-License-Identifier: Apache-2.0

#include "topomo/cli/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "topomo/io/checkpoint.hpp"
#include "topomo/motion/corpus.hpp"
#include "topomo/motion/ingest.hpp"
#include "topomo/motion/synth.hpp"
#include "topomo/numerics/error.hpp"
#include "topomo/numerics/optim.hpp"
#include "topomo/skeleton/bvh.hpp"

namespace topomo::cli {

// ---- configuration -----------------------------------------------------------------------

nlohmann::json MetricSettings::to_json() const {
  return {{"pool_size", pool_size}, {"diversity_pairs", diversity_pairs}, {"mm_prompts", mm_prompts},
          {"mm_reps", mm_reps},     {"fid_shrinkage", fid_shrinkage}};
}

MetricSettings MetricSettings::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw UsageError("metrics config must be a JSON object");
  MetricSettings m;
  const nlohmann::json defaults = m.to_json();
  for (const auto& [k, v] : j.items())
    if (!defaults.contains(k)) throw UsageError("metrics config: unknown key '" + k + "'");
  try {
    m.pool_size = j.value("pool_size", m.pool_size);
    m.diversity_pairs = j.value("diversity_pairs", m.diversity_pairs);
    m.mm_prompts = j.value("mm_prompts", m.mm_prompts);
    m.mm_reps = j.value("mm_reps", m.mm_reps);
    m.fid_shrinkage = j.value("fid_shrinkage", m.fid_shrinkage);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("metrics config: ") + e.what());
  }
  if (m.pool_size < 2 || m.diversity_pairs == 0 || m.mm_reps < 2 || m.fid_shrinkage < 0.0)
    throw UsageError("metrics config: pool_size >= 2, diversity_pairs >= 1, mm_reps >= 2, fid_shrinkage >= 0");
  return m;
}

RunConfig RunConfig::desk_defaults() {
  RunConfig c;
  c.rvq.batch_size = 16;
  c.rvq.lr = 1e-3;
  c.generator.batch_size = 16;
  c.generator.lr = 1e-3;
  return c;
}

void RunConfig::validate() const {
  rvq.validate();
  skelembed.validate();
  generator.validate();
  eval_embedder.validate();
}

nlohmann::json RunConfig::to_json() const {
  return {{"seed", seed},
          {"rvq_epochs", rvq_epochs},
          {"gen_epochs", gen_epochs},
          {"rvq", rvq.to_json()},
          {"skelembed", skelembed.to_json()},
          {"generator", generator.to_json()},
          {"eval_embedder", eval_embedder.to_json()},
          {"metrics", metrics.to_json()}};
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw UsageError("run config must be a JSON object");
  RunConfig c = desk_defaults();
  nlohmann::json merged = c.to_json();
  for (const auto& [k, v] : j.items()) {
    if (!merged.contains(k)) throw UsageError("run config: unknown key '" + k + "'");
    if (merged[k].is_object() != v.is_object()) throw UsageError("run config: key '" + k + "' has the wrong type");
  }
  merged.merge_patch(j);
  try {
    c.seed = merged.at("seed").get<std::uint64_t>();
    c.rvq_epochs = merged.at("rvq_epochs").get<std::size_t>();
    c.gen_epochs = merged.at("gen_epochs").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("run config: ") + e.what());
  }
  c.rvq = rvq::RvqConfig::from_json(merged.at("rvq"));
  c.skelembed = skelembed::SkelEmbedConfig::from_json(merged.at("skelembed"));
  c.generator = gen::GenConfig::from_json(merged.at("generator"));
  c.eval_embedder = metrics::EvalEmbedderConfig::from_json(merged.at("eval_embedder"));
  c.metrics = MetricSettings::from_json(merged.at("metrics"));
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("config file '" + path + "' is not valid JSON: " + e.what());
  }
  return from_json(j);
}

// ---- helpers ------------------------------------------------------------------------------

namespace {

void require_file(const std::string& path, const std::string& what, const std::string& hint = {}) {
  if (!std::filesystem::exists(path)) {
    throw DataError(what + " '" + path + "' not found" + (hint.empty() ? "" : "; " + hint));
  }
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << text;
  if (!out) throw DataError("write failed for '" + path + "'");
}

void print_stats(const Corpus& c, std::ostream& out) {
  struct Row {
    std::size_t sequences = 0, frames = 0, joints = 0;
  };
  std::map<std::string, Row> rows;
  Row total;
  for (const auto& e : c.entries) {
    const auto& s = c.skeleton_of(e);
    const std::string species = s.species.empty() ? s.name : s.species;
    Row& r = rows[species];
    for (Row* x : {&r, &total}) {
      ++x->sequences;
      x->frames += e.motion.num_frames();
      x->joints += s.size();
    }
  }
  auto line = [&](const std::string& name, const Row& r) {
    const double avg = r.sequences ? static_cast<double>(r.joints) / static_cast<double>(r.sequences) : 0.0;
    out << std::left << std::setw(20) << name << std::right << std::setw(10) << r.sequences << std::setw(10)
        << r.frames << std::setw(12) << std::fixed << std::setprecision(1) << avg << '\n';
  };
  out << std::left << std::setw(20) << "species" << std::right << std::setw(10) << "sequences" << std::setw(10)
      << "frames" << std::setw(12) << "avg joints" << '\n';
  for (const auto& [name, r] : rows) line(name, r);
  line("total", total);
  out << "train " << c.indices(Split::kTrain).size() << ", test " << c.indices(Split::kTest).size() << '\n';
}

// Optimizer moments and progress, stored beside the model.
void save_train_state(io::Checkpoint& ck, const std::string& stage, std::size_t epochs_done, std::uint64_t seed,
                      Adam& opt) {
  ck.config("train_state") = {{"stage", stage}, {"epochs_done", epochs_done}, {"seed", seed}, {"steps", opt.steps()}};
  for (std::size_t i = 0; i < opt.first_moments().size(); ++i) {
    ck.put_tensor("train_state", "adam.m." + std::to_string(i), opt.first_moments()[i]);
    ck.put_tensor("train_state", "adam.v." + std::to_string(i), opt.second_moments()[i]);
  }
}

struct ResumeInfo {
  std::size_t epochs_done = 0;
  std::uint64_t seed = 0;
};

ResumeInfo restore_train_state(const io::Checkpoint& ck, const std::string& stage, Adam& opt) {
  if (!ck.has_section("train_state")) throw DataError("checkpoint has no training state to resume from");
  const auto& st = ck.config("train_state");
  if (st.value("stage", std::string()) != stage) {
    throw DataError("checkpoint training state is for stage '" + st.value("stage", std::string()) + "', not '" + stage + "'");
  }
  for (std::size_t i = 0; i < opt.first_moments().size(); ++i) {
    opt.first_moments()[i] = ck.get_tensor("train_state", "adam.m." + std::to_string(i));
    opt.second_moments()[i] = ck.get_tensor("train_state", "adam.v." + std::to_string(i));
  }
  opt.set_steps(st.at("steps").get<std::uint64_t>());
  return {st.at("epochs_done").get<std::size_t>(), st.at("seed").get<std::uint64_t>()};
}

class CsvLog {
 public:
  CsvLog(const std::string& path, const std::string& header, bool append) {
    if (path.empty()) return;
    const bool exists = std::filesystem::exists(path);
    out_.open(path, append ? std::ios::app : std::ios::trunc);
    if (!out_) throw DataError("cannot write loss CSV '" + path + "'");
    if (!append || !exists) out_ << header << '\n';
  }
  template <typename... T>
  void row(const T&... values) {
    if (!out_.is_open()) return;
    std::ostringstream s;
    s << std::setprecision(10);
    ((s << values << ','), ...);
    std::string line = s.str();
    line.pop_back();
    out_ << line << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

SkeletonGraph load_skeleton_any(const std::string& path) {
  require_file(path, "skeleton file");
  const std::string ext = std::filesystem::path(path).extension().string();
  if (ext == ".bvh") return load_bvh(path).skeleton;
  if (ext == ".json") return load_skeleton_json(path);
  throw UsageError("skeleton file must be .bvh or .json, got '" + path + "'");
}

// Random-pose motions on the given skeletons: the unstructured reference for FID.
MotionSequence random_motion(const SkeletonGraph& s, std::size_t frames, double fps, Rng& rng) {
  std::vector<Pose> poses;
  Pose p = rest_pose(s);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      const Vec3 axis = Vec3(rng.normal(0, 1), rng.normal(0, 1), rng.normal(0, 1)).normalized();
      p.local[j] = Eigen::AngleAxisd(rng.uniform(-1.5, 1.5), axis).toRotationMatrix();
    }
    p.translation[0] = Vec3(rng.normal(0, 0.5), rng.normal(0, 0.5), rng.normal(0, 0.5));
    poses.push_back(p);
  }
  return motion_from_poses(s, poses, fps, s.species);
}

// ---- commands -------------------------------------------------------------------------------

struct SynthArgs {
  std::string out;
  std::size_t species = 4, per = 8, joint_min = 8, joint_max = 24, frame_min = 40, frame_max = 80;
  double test_fraction = kDefaultTestFraction;
  bool species_free_text = false;
};

int cmd_synth(const SynthArgs& a, std::uint64_t seed, std::ostream& out) {
  SynthOptions o;
  o.seed = seed;
  o.n_species = a.species;
  o.seqs_per_species = a.per;
  o.joint_min = a.joint_min;
  o.joint_max = a.joint_max;
  o.frame_min = a.frame_min;
  o.frame_max = a.frame_max;
  o.test_fraction = a.test_fraction;
  o.species_in_text = !a.species_free_text;
  const Corpus c = synth_corpus(o);
  save_corpus(c, a.out);
  print_stats(c, out);
  out << "wrote " << c.size() << " sequences to " << a.out << '\n';
  return 0;
}

struct IngestArgs {
  std::vector<std::string> files;
  std::string out, species;
  bool resample = false;
  double test_fraction = kDefaultTestFraction;
};

int cmd_ingest(const IngestArgs& a, std::uint64_t seed, std::ostream& out, std::ostream& err) {
  IngestOptions o;
  o.resample = a.resample;
  o.species = a.species;
  o.test_fraction = a.test_fraction;
  o.seed = seed;
  const IngestReport rep = ingest_bvh_files(a.files, o);
  for (const auto& r : rep.rejected) err << "rejected " << r.path << ": " << r.reason << '\n';
  if (rep.corpus.size() == 0) throw DataError("no file was ingested");
  save_corpus(rep.corpus, a.out);
  print_stats(rep.corpus, out);
  out << "ingested " << rep.corpus.size() << ", rejected " << rep.rejected.size() << '\n';
  return 0;
}

struct TrainArgs {
  std::string corpus, out, rvq, loss_csv, resume;
  std::optional<std::size_t> epochs;
  bool no_skeleton_embed = false, no_motion_summary = false;
};

int cmd_train_rvq(const TrainArgs& a, const RunConfig& cfg, std::ostream& out) {
  require_file(a.corpus, "corpus");
  const Corpus corpus = load_corpus(a.corpus);
  const std::size_t total = a.epochs.value_or(cfg.rvq_epochs);
  rvq::RvqModel model;
  std::unique_ptr<Adam> opt;
  AdamConfig ac;
  std::size_t done = 0;
  std::uint64_t seed = cfg.seed;
  if (!a.resume.empty()) {
    require_file(a.resume, "resume checkpoint");
    const io::Checkpoint ck = io::Checkpoint::load(a.resume);
    model = rvq::RvqModel::load(ck);
    ac.lr = model.config().lr;
    opt = std::make_unique<Adam>(model.parameters(), ac);
    const ResumeInfo info = restore_train_state(ck, "rvq", *opt);
    done = info.epochs_done;
    seed = info.seed;
  } else {
    model = rvq::RvqModel::init(cfg.rvq, seed);
    ac.lr = model.config().lr;
    opt = std::make_unique<Adam>(model.parameters(), ac);
  }
  CsvLog csv(a.loss_csv, "epoch,loss,recon_per_feature,commit,code_usage", !a.resume.empty());
  rvq::RvqTrainOptions o;
  o.seed = seed;
  o.first_epoch = done;
  o.epochs = total > done ? total - done : 0;
  o.on_epoch = [&](std::size_t e, const rvq::RvqEpochStats& s) {
    csv.row(e, s.loss, s.recon_per_feature, s.commit, s.code_usage);
  };
  const auto result = rvq::train_rvq(model, corpus, o, opt.get());
  io::Checkpoint ck;
  model.save(ck);
  save_train_state(ck, "rvq", done + o.epochs, seed, *opt);
  ck.save(a.out);
  if (!result.history.empty()) {
    const auto& s = result.history.back();
    out << "epoch " << done + o.epochs << ": loss " << s.loss << ", recon/feature " << s.recon_per_feature
        << ", code usage " << s.code_usage << '\n';
  }
  out << "wrote " << a.out << '\n';
  return 0;
}

int cmd_train_gen(const TrainArgs& a, const RunConfig& cfg, std::ostream& out) {
  require_file(a.corpus, "corpus");
  const Corpus corpus = load_corpus(a.corpus);
  const std::size_t total = a.epochs.value_or(cfg.gen_epochs);
  rvq::RvqModel rvq_model;
  gen::GenModel model;
  std::unique_ptr<Adam> opt;
  AdamConfig ac;
  std::size_t done = 0;
  std::uint64_t seed = cfg.seed;
  if (!a.resume.empty()) {
    require_file(a.resume, "resume checkpoint");
    const io::Checkpoint ck = io::Checkpoint::load(a.resume);
    rvq_model = rvq::RvqModel::load(ck);
    model = gen::GenModel::load(ck);
    ac.lr = model.config().lr;
    opt = std::make_unique<Adam>(model.parameters(), ac);
    const ResumeInfo info = restore_train_state(ck, "gen", *opt);
    done = info.epochs_done;
    seed = info.seed;
  } else {
    if (a.rvq.empty()) throw UsageError("train-gen needs --rvq <checkpoint> (produced by train-rvq) or --resume");
    require_file(a.rvq, "rvq checkpoint", "run `topomo train-rvq` first to produce it");
    const io::Checkpoint rck = io::Checkpoint::load(a.rvq);
    if (!rck.has_section("rvq")) throw DataError("'" + a.rvq + "' holds no rvq model; run `topomo train-rvq` first");
    rvq_model = rvq::RvqModel::load(rck);
    gen::GenConfig gc = cfg.generator;
    if (a.no_skeleton_embed) gc.use_skeleton_embed = false;
    if (a.no_motion_summary) gc.use_motion_summary = false;
    model = gen::GenModel::init(gc, cfg.skelembed, rvq_model.config().codes_per_level, rvq_model.config().levels, seed);
    ac.lr = model.config().lr;
    opt = std::make_unique<Adam>(model.parameters(), ac);
  }
  CsvLog csv(a.loss_csv, "epoch,masked_loss,residual_loss,samples,null_conditions", !a.resume.empty());
  gen::GenTrainOptions o;
  o.seed = seed;
  o.first_epoch = done;
  o.epochs = total > done ? total - done : 0;
  o.on_epoch = [&](std::size_t e, const gen::GenEpochStats& s) {
    csv.row(e, s.masked_loss, s.residual_loss, s.samples, s.null_conditions);
  };
  const auto result = gen::train_generator(model, rvq_model, corpus, o, opt.get());
  io::Checkpoint ck;
  rvq_model.save(ck);
  model.save(ck);
  save_train_state(ck, "gen", done + o.epochs, seed, *opt);
  ck.save(a.out);
  if (!result.history.empty()) {
    const auto& s = result.history.back();
    out << "epoch " << done + o.epochs << ": masked loss " << s.masked_loss << ", residual loss " << s.residual_loss
        << '\n';
  }
  out << "wrote " << a.out << '\n';
  return 0;
}

struct GenerateArgs {
  std::string checkpoint, text, skeleton, out, format;
  std::size_t frames = 60;
  std::optional<double> cfg_scale;
  double temperature = 1.0;
};

int cmd_generate(const GenerateArgs& a, const RunConfig& cfg, std::ostream& out) {
  require_file(a.checkpoint, "checkpoint", "run `topomo train-gen` first");
  const io::Checkpoint ck = io::Checkpoint::load(a.checkpoint);
  const rvq::RvqModel rvq_model = rvq::RvqModel::load(ck);
  const gen::GenModel model = gen::GenModel::load(ck);
  const SkeletonGraph skeleton = load_skeleton_any(a.skeleton);
  gen::GenerateOptions o;
  o.seed = cfg.seed;
  o.cfg_scale = a.cfg_scale.value_or(model.config().cfg_scale);
  o.temperature = a.temperature;
  gen::Generation g = gen::generate(model, rvq_model, a.text, skeleton, a.frames, o);
  orthonormalize_rotations(g.motion);

  std::string format = a.format;
  if (format.empty()) {
    const std::string ext = std::filesystem::path(a.out).extension().string();
    format = ext == ".bvh" ? "bvh" : ext == ".json" ? "json" : "corpus";
  }
  if (format == "bvh") {
    write_text(a.out, export_bvh(skeleton, g.motion, 1.0 / g.motion.fps));
  } else if (format == "json") {
    nlohmann::json j = {{"text", a.text},
                        {"frames", g.motion.num_frames()},
                        {"joints", g.motion.num_joints()},
                        {"fps", g.motion.fps},
                        {"seed", o.seed},
                        {"cfg_scale", o.cfg_scale},
                        {"tokens", g.tokens.levels},
                        {"skeleton", nlohmann::json::parse(skeleton_to_json(skeleton))},
                        {"features", std::vector<double>(g.motion.frames.data().begin(), g.motion.frames.data().end())}};
    write_text(a.out, j.dump(2) + "\n");
  } else if (format == "corpus") {
    Corpus c;
    c.skeletons.push_back(skeleton);
    CorpusEntry e;
    e.motion = g.motion;
    e.text.summary = a.text;
    e.text.detail = a.text;
    e.text.species = skeleton.species;
    c.entries.push_back(std::move(e));
    save_corpus(c, a.out);
  } else {
    throw UsageError("unknown output format '" + format + "' (bvh, corpus or json)");
  }
  out << "generated " << g.motion.num_frames() << " frames for " << skeleton.size() << " joints -> " << a.out << '\n';
  return 0;
}

struct EvaluateArgs {
  std::string checkpoint, corpus, out, eval_embedder, save_eval_embedder, split = "test";
  bool no_skeleton_embed = false, no_motion_summary = false, baselines = false;
  std::optional<std::size_t> pool_size;
  std::optional<double> fid_shrinkage;
};

int cmd_evaluate(const EvaluateArgs& a, const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  require_file(a.checkpoint, "checkpoint", "run `topomo train-gen` first");
  require_file(a.corpus, "corpus");
  const io::Checkpoint ck = io::Checkpoint::load(a.checkpoint);
  const rvq::RvqModel rvq_model = rvq::RvqModel::load(ck);
  gen::GenModel model = gen::GenModel::load(ck);
  if (a.no_skeleton_embed) model.mutable_config().use_skeleton_embed = false;
  if (a.no_motion_summary) model.mutable_config().use_motion_summary = false;
  const Corpus corpus = load_corpus(a.corpus);
  MetricSettings ms = cfg.metrics;
  if (a.pool_size) ms.pool_size = *a.pool_size;
  if (a.fid_shrinkage) ms.fid_shrinkage = *a.fid_shrinkage;

  metrics::EvalEmbedder embedder;
  if (!a.eval_embedder.empty()) {
    require_file(a.eval_embedder, "evaluation embedder checkpoint");
    embedder = metrics::EvalEmbedder::load(io::Checkpoint::load(a.eval_embedder));
  } else {
    metrics::EvalTrainReport rep;
    embedder = metrics::EvalEmbedder::train(corpus, cfg.eval_embedder, cfg.seed, &rep);
    if (!rep.warning.empty()) err << "warning: " << rep.warning << '\n';
    out << "evaluation embedder: validation R@1 " << rep.validation_r1 << " (pool " << rep.validation_pool << ")\n";
    if (!a.save_eval_embedder.empty()) {
      io::Checkpoint eck;
      embedder.save(eck);
      eck.save(a.save_eval_embedder);
    }
  }

  std::vector<std::size_t> idx;
  if (a.split == "test") idx = corpus.indices(Split::kTest);
  else if (a.split == "train") idx = corpus.indices(Split::kTrain);
  else if (a.split == "all") {
    idx.resize(corpus.size());
    std::iota(idx.begin(), idx.end(), 0);
  } else {
    throw UsageError("--split must be test, train or all");
  }
  if (idx.size() < 2) throw DataError("evaluation split has fewer than 2 sequences");

  std::vector<std::string> eval_texts;
  std::vector<MotionSequence> generated;
  std::vector<const MotionSequence*> real_ptrs, gen_ptrs;
  auto gen_one = [&](std::size_t i, std::uint64_t seed) {
    const auto& e = corpus.entries[i];
    gen::GenerateOptions o;
    o.seed = seed;
    o.cfg_scale = model.config().cfg_scale;
    return gen::generate(model, rvq_model, prompt_text(e.text, model.config().use_motion_summary),
                         corpus.skeleton_of(e), e.motion.num_frames(), o, e.motion.fps)
        .motion;
  };
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const auto& e = corpus.entries[idx[r]];
    eval_texts.push_back(metrics::eval_prompt(e.text));
    real_ptrs.push_back(&e.motion);
    generated.push_back(gen_one(idx[r], Rng::derive(cfg.seed, 0x6e0000 + r)));
  }
  for (const auto& m : generated) gen_ptrs.push_back(&m);
  const metrics::Features real_f = embedder.embed_motions(real_ptrs);
  const metrics::Features gen_f = embedder.embed_motions(gen_ptrs);
  const metrics::Features text_f = embedder.embed_texts(eval_texts);

  metrics::MetricReport rep;
  metrics::FidOptions fo;
  fo.shrinkage = ms.fid_shrinkage;
  rep.fid = metrics::fid(real_f, gen_f, fo);
  rep.diversity = metrics::diversity(gen_f, ms.diversity_pairs, cfg.seed);
  rep.matching_score = metrics::matching_score(text_f, gen_f);
  const std::size_t ks[] = {1, 2, 3};
  rep.r_at = metrics::r_precision(text_f, gen_f, ks, ms.pool_size, cfg.seed);
  const std::size_t prompts = std::min(ms.mm_prompts, idx.size());
  rep.multimodality = metrics::multimodality(
      [&](std::size_t p, std::uint64_t seed) { return embedder.embed_motion(gen_one(idx[p], seed)); }, prompts,
      ms.mm_reps, cfg.seed);
  rep.config = {{"checkpoint", a.checkpoint},
                {"corpus", a.corpus},
                {"split", a.split},
                {"count", idx.size()},
                {"seed", cfg.seed},
                {"metrics", ms.to_json()},
                {"embed_dim", embedder.config().embed_dim},
                {"use_skeleton_embed", model.config().use_skeleton_embed},
                {"use_motion_summary", model.config().use_motion_summary},
                {"cfg_scale", model.config().cfg_scale}};
  rep.validate();
  nlohmann::json j = rep.to_json();

  if (a.baselines) {
    // Real train split against the evaluated split, and random poses against it.
    const auto train = corpus.indices(Split::kTrain);
    std::vector<const MotionSequence*> train_ptrs;
    for (std::size_t i : train) train_ptrs.push_back(&corpus.entries[i].motion);
    Rng rng(Rng::derive(cfg.seed, 0xba5e));
    std::vector<MotionSequence> random;
    for (std::size_t i : idx) {
      const auto& e = corpus.entries[i];
      random.push_back(random_motion(corpus.skeleton_of(e), e.motion.num_frames(), e.motion.fps, rng));
    }
    std::vector<const MotionSequence*> random_ptrs;
    for (const auto& m : random) random_ptrs.push_back(&m);
    j["baselines"] = {{"fid_real_train_vs_eval", metrics::fid(embedder.embed_motions(train_ptrs), real_f, fo)},
                      {"fid_random_vs_eval", metrics::fid(embedder.embed_motions(random_ptrs), real_f, fo)}};
  }
  write_text(a.out, j.dump(2) + "\n");
  out << std::setprecision(4) << "FID " << rep.fid << "  diversity " << rep.diversity << "  matching "
      << rep.matching_score << "  R@1/2/3 " << rep.r_at[1] << '/' << rep.r_at[2] << '/' << rep.r_at[3]
      << "  multimodality " << rep.multimodality << '\n';
  out << "wrote " << a.out << '\n';
  return 0;
}

}  // namespace

// ---- entry point -----------------------------------------------------------------------------

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"topomo: skeleton-aware text-to-motion training, generation and evaluation"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  std::optional<std::uint64_t> seed;
  app.add_option("--config", config_path, "JSON run config")->envname(kConfigEnv);
  app.add_option("--seed", seed, "Seed (overrides the config)");

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Write a procedural multi-species corpus");
  synth->add_option("--out", sa.out, "Corpus path")->required();
  synth->add_option("--species", sa.species, "Species count")->check(CLI::PositiveNumber);
  synth->add_option("--per", sa.per, "Sequences per species")->check(CLI::PositiveNumber);
  synth->add_option("--joint-min", sa.joint_min);
  synth->add_option("--joint-max", sa.joint_max);
  synth->add_option("--frame-min", sa.frame_min);
  synth->add_option("--frame-max", sa.frame_max);
  synth->add_option("--test-fraction", sa.test_fraction)->check(CLI::Range(0.0, 1.0));
  synth->add_flag("--species-free-text", sa.species_free_text, "Prompts omit the species name");

  IngestArgs ia;
  auto* ingest = app.add_subcommand("ingest", "Ingest BVH files into a corpus");
  ingest->add_option("files", ia.files, "BVH files")->required();
  ingest->add_option("--out", ia.out, "Corpus path")->required();
  ingest->add_option("--species", ia.species, "Species label (default: file stem)");
  ingest->add_flag("--resample", ia.resample, "Resample clips outside [20, 240] frames into range");
  ingest->add_option("--test-fraction", ia.test_fraction)->check(CLI::Range(0.0, 1.0));

  std::string stats_corpus;
  auto* stats = app.add_subcommand("stats", "Print corpus statistics");
  stats->add_option("--corpus", stats_corpus)->required();

  TrainArgs ra;
  auto* train_rvq = app.add_subcommand("train-rvq", "Stage 1: train the motion tokenizer");
  train_rvq->add_option("--corpus", ra.corpus)->required();
  train_rvq->add_option("--out", ra.out, "Checkpoint path")->required();
  train_rvq->add_option("--epochs", ra.epochs, "Total epochs (overrides the config)");
  train_rvq->add_option("--loss-csv", ra.loss_csv, "Per-epoch loss log");
  train_rvq->add_option("--resume", ra.resume, "Continue from a train-rvq checkpoint");

  TrainArgs ga;
  auto* train_gen = app.add_subcommand("train-gen", "Stage 2: train the token generator");
  train_gen->add_option("--corpus", ga.corpus)->required();
  train_gen->add_option("--rvq", ga.rvq, "Checkpoint from train-rvq");
  train_gen->add_option("--out", ga.out, "Checkpoint path")->required();
  train_gen->add_option("--epochs", ga.epochs, "Total epochs (overrides the config)");
  train_gen->add_option("--loss-csv", ga.loss_csv, "Per-epoch loss log");
  train_gen->add_option("--resume", ga.resume, "Continue from a train-gen checkpoint");
  train_gen->add_flag("--no-skeleton-embed", ga.no_skeleton_embed, "Ablation: zero skeleton feature");
  train_gen->add_flag("--no-motion-summary", ga.no_motion_summary, "Ablation: drop the summary prompt");

  GenerateArgs gna;
  auto* generate = app.add_subcommand("generate", "Generate a motion for a text prompt and skeleton");
  generate->add_option("--checkpoint", gna.checkpoint, "Checkpoint from train-gen")->required();
  generate->add_option("--text", gna.text)->required();
  generate->add_option("--skeleton", gna.skeleton, "Skeleton (.bvh or .json)")->required();
  generate->add_option("--frames", gna.frames, "Frame count in [20, 240]");
  generate->add_option("--cfg-scale", gna.cfg_scale);
  generate->add_option("--temperature", gna.temperature)->check(CLI::PositiveNumber);
  generate->add_option("--out", gna.out)->required();
  generate->add_option("--format", gna.format, "bvh, corpus or json (default: from extension)");

  EvaluateArgs ea;
  auto* evaluate = app.add_subcommand("evaluate", "Compute the metric report for a trained generator");
  evaluate->add_option("--checkpoint", ea.checkpoint)->required();
  evaluate->add_option("--corpus", ea.corpus)->required();
  evaluate->add_option("--out", ea.out, "Report JSON path")->required();
  evaluate->add_option("--eval-embedder", ea.eval_embedder, "Trained evaluation embedder checkpoint");
  evaluate->add_option("--save-eval-embedder", ea.save_eval_embedder);
  evaluate->add_option("--split", ea.split, "test, train or all");
  evaluate->add_option("--pool-size", ea.pool_size);
  evaluate->add_option("--fid-shrinkage", ea.fid_shrinkage);
  evaluate->add_flag("--no-skeleton-embed", ea.no_skeleton_embed, "Ablation: zero skeleton feature at inference");
  evaluate->add_flag("--no-motion-summary", ea.no_motion_summary, "Ablation: prompts without the summary");
  evaluate->add_flag("--baselines", ea.baselines, "Also report real-vs-real and random-vs-real FID");

  std::vector<std::string> argv_storage{"topomo"};
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : argv_storage) argv.push_back(s.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    RunConfig cfg = config_path.empty() ? RunConfig::desk_defaults() : RunConfig::load(config_path);
    if (seed) cfg.seed = *seed;
    if (*synth) return cmd_synth(sa, cfg.seed, out);
    if (*ingest) return cmd_ingest(ia, cfg.seed, out, err);
    if (*stats) {
      require_file(stats_corpus, "corpus");
      print_stats(load_corpus(stats_corpus), out);
      return 0;
    }
    if (*train_rvq) return cmd_train_rvq(ra, cfg, out);
    if (*train_gen) return cmd_train_gen(ga, cfg, out);
    if (*generate) {
      return cmd_generate(gna, cfg, out);
    }
    if (*evaluate) return cmd_evaluate(ea, cfg, out, err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

}  // namespace topomo::cli
