// Copyright 2026 The topomo Authors
// SPDX-License-Identifier: Apache-2.0

#include "topomo/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <set>

#include <Eigen/Eigenvalues>

#include "topomo/numerics/error.hpp"
#include "topomo/numerics/optim.hpp"
#include "topomo/numerics/random.hpp"

namespace topomo::metrics {

// ---- metric functions ----------------------------------------------------------------

namespace {

Eigen::MatrixXd covariance(const Features& x, const Eigen::RowVectorXd& mu) {
  const Eigen::MatrixXd c = x.rowwise() - mu;
  return (c.transpose() * c) / static_cast<double>(x.rows() - 1);
}

void check_rank(const Eigen::MatrixXd& cov, Eigen::Index n, const char* which) {
  const Eigen::Index e = cov.rows();
  bool deficient = n <= e;
  if (!deficient) {
    const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(cov, Eigen::EigenvaluesOnly).eigenvalues();
    deficient = ev.minCoeff() <= 1e-12 * std::max(ev.maxCoeff(), 1e-300);
  }
  if (deficient) {
    throw NumericalError(std::string("fid: ") + which + " covariance is rank deficient (" + std::to_string(n) +
                         " samples, dimension " + std::to_string(e) + "); enable covariance shrinkage");
  }
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& a) {
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (a + a.transpose()));
  const Eigen::VectorXd s = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * s.asDiagonal() * es.eigenvectors().transpose();
}

double row_distance(const Features& a, Eigen::Index i, const Features& b, Eigen::Index j) {
  return (a.row(i) - b.row(j)).norm();
}

}  // namespace

double fid(const Features& real, const Features& gen, const FidOptions& options) {
  if (real.cols() != gen.cols()) throw DimensionError("fid: feature widths differ");
  if (real.rows() < 2 || gen.rows() < 2) throw DataError("fid: need at least 2 items per set");
  if (options.shrinkage < 0.0) throw UsageError("fid: shrinkage must be non-negative");
  const Eigen::RowVectorXd mr = real.colwise().mean(), mg = gen.colwise().mean();
  Eigen::MatrixXd sr = covariance(real, mr), sg = covariance(gen, mg);
  if (options.shrinkage == 0.0) {
    check_rank(sr, real.rows(), "real");
    check_rank(sg, gen.rows(), "generated");
  } else {
    sr.diagonal().array() += options.shrinkage;
    sg.diagonal().array() += options.shrinkage;
  }
  // tr (Sr Sg)^(1/2) = tr (Sr^(1/2) Sg Sr^(1/2))^(1/2), the latter symmetric.
  const Eigen::MatrixXd root = psd_sqrt(sr);
  Eigen::MatrixXd m = root * sg * root;
  m = 0.5 * (m + m.transpose());
  const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m, Eigen::EigenvaluesOnly).eigenvalues();
  double tr_sqrt = 0.0;
  for (double v : ev) {
    if (v < -1e-8) throw NumericalError("fid: covariance product has eigenvalue " + std::to_string(v));
    tr_sqrt += std::sqrt(std::max(v, 0.0));
  }
  const double value = (mr - mg).squaredNorm() + sr.trace() + sg.trace() - 2.0 * tr_sqrt;
  return std::max(value, 0.0);
}

double diversity(const Features& feats, std::size_t pairs, std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(feats.rows());
  if (n < 2) throw DataError("diversity: need at least 2 items");
  if (pairs == 0) throw UsageError("diversity: pairs must be positive");
  Rng rng(Rng::derive(seed, 0xd1));
  double total = 0.0;
  for (std::size_t p = 0; p < pairs; ++p) {
    const std::size_t i = rng.index(n);
    std::size_t j = rng.index(n - 1);
    if (j >= i) ++j;
    total += row_distance(feats, static_cast<Eigen::Index>(i), feats, static_cast<Eigen::Index>(j));
  }
  return total / static_cast<double>(pairs);
}

double matching_score(const Features& text, const Features& motion) {
  if (text.rows() != motion.rows()) throw DimensionError("matching_score: text and motion counts differ");
  if (text.cols() != motion.cols()) throw DimensionError("matching_score: feature widths differ");
  if (text.rows() == 0) throw DataError("matching_score: no items");
  return (text - motion).rowwise().norm().mean();
}

std::map<std::size_t, double> r_precision(const Features& text, const Features& motion,
                                          std::span<const std::size_t> ks, std::size_t pool_size,
                                          std::uint64_t seed) {
  if (text.rows() != motion.rows()) throw DimensionError("r_precision: text and motion counts differ");
  if (text.cols() != motion.cols()) throw DimensionError("r_precision: feature widths differ");
  const auto n = static_cast<std::size_t>(text.rows());
  if (pool_size < 2) throw UsageError("r_precision: pool size must be at least 2");
  if (n < pool_size) {
    throw DataError("r_precision: " + std::to_string(n) + " items is fewer than the pool size " +
                    std::to_string(pool_size));
  }
  std::map<std::size_t, std::size_t> hits;
  for (std::size_t k : ks) {
    if (k == 0) throw UsageError("r_precision: k must be positive");
    hits[k] = 0;
  }
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(Rng::derive(seed, i));
    // Distractors: a uniform subset of the other n - 1 items.
    std::vector<std::size_t> others = rng.sample_without_replacement(n - 1, pool_size - 1);
    const auto qi = static_cast<Eigen::Index>(i);
    const double d_true = row_distance(text, qi, motion, qi);
    std::size_t rank = 1;
    for (std::size_t o : others) {
      const std::size_t j = o >= i ? o + 1 : o;
      if (row_distance(text, qi, motion, static_cast<Eigen::Index>(j)) <= d_true) ++rank;
    }
    for (auto& [k, h] : hits) h += rank <= k ? 1 : 0;
  }
  std::map<std::size_t, double> out;
  for (const auto& [k, h] : hits) out[k] = static_cast<double>(h) / static_cast<double>(n);
  return out;
}

double multimodality(const std::function<Eigen::VectorXd(std::size_t prompt, std::uint64_t seed)>& embed_generation,
                     std::size_t prompts, std::size_t reps, std::uint64_t seed) {
  if (reps < 2) throw UsageError("multimodality: reps must be at least 2");
  if (prompts == 0) throw UsageError("multimodality: no prompts");
  double total = 0.0;
  for (std::size_t p = 0; p < prompts; ++p) {
    std::vector<Eigen::VectorXd> e;
    e.reserve(reps);
    for (std::size_t r = 0; r < reps; ++r) e.push_back(embed_generation(p, Rng::derive(seed, p * reps + r)));
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t a = 0; a < reps; ++a)
      for (std::size_t b = a + 1; b < reps; ++b, ++count) sum += (e[a] - e[b]).norm();
    total += sum / static_cast<double>(count);
  }
  return total / static_cast<double>(prompts);
}

// ---- report ---------------------------------------------------------------------------

void MetricReport::validate() const {
  if (!(fid >= 0.0)) throw DataError("metric report: fid must be non-negative");
  double prev = 0.0;
  for (const auto& [k, v] : r_at) {
    if (!(v >= 0.0 && v <= 1.0)) throw DataError("metric report: R@" + std::to_string(k) + " outside [0, 1]");
    if (v < prev) throw DataError("metric report: R@k must be nondecreasing in k");
    prev = v;
  }
}

nlohmann::json MetricReport::to_json() const {
  nlohmann::json r = nlohmann::json::object();
  for (const auto& [k, v] : r_at) r[std::to_string(k)] = v;
  return {{"fid", fid},
          {"diversity", diversity},
          {"matching_score", matching_score},
          {"multimodality", multimodality},
          {"r_at", r},
          {"config", config}};
}

MetricReport MetricReport::from_json(const nlohmann::json& j) {
  MetricReport m;
  try {
    m.fid = j.at("fid").get<double>();
    m.diversity = j.at("diversity").get<double>();
    m.matching_score = j.at("matching_score").get<double>();
    m.multimodality = j.at("multimodality").get<double>();
    for (const auto& [k, v] : j.at("r_at").items()) m.r_at[std::stoul(k)] = v.get<double>();
    m.config = j.value("config", nlohmann::json::object());
  } catch (const std::exception& e) {
    throw FormatError(std::string("metric report: ") + e.what());
  }
  m.validate();
  return m;
}

// ---- motion descriptor -----------------------------------------------------------------------

std::vector<double> motion_descriptor(const MotionSequence& m) {
  const std::size_t T = m.num_frames(), K = m.num_joints();
  if (T < 2 || K == 0) throw DataError("motion_descriptor: need at least 2 frames and 1 joint");
  const double inv_t = 1.0 / static_cast<double>(T);
  std::vector<double> d;
  d.reserve(kDescriptorDim);

  // Root velocity mean and spread (3 + 3), vertical spread (1), net displacement (3).
  Vec3 vm = Vec3::Zero(), vs = Vec3::Zero();
  for (std::size_t t = 0; t < T; ++t) vm += m.velocity(t, 0);
  vm *= inv_t;
  double hm = 0.0, hs = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    vs += (m.velocity(t, 0) - vm).cwiseAbs2();
    hm += m.position(t, 0).y();
  }
  hm *= inv_t;
  for (std::size_t t = 0; t < T; ++t) hs += std::pow(m.position(t, 0).y() - hm, 2);
  for (int a = 0; a < 3; ++a) d.push_back(vm[a]);
  for (int a = 0; a < 3; ++a) d.push_back(std::sqrt(vs[a] * inv_t));
  d.push_back(std::sqrt(hs * inv_t));
  const Vec3 disp = m.position(T - 1, 0) - m.position(0, 0);
  for (int a = 0; a < 3; ++a) d.push_back(disp[a]);

  // Heading change: signed net and total absolute (2).
  auto yaw = [&](std::size_t t) {
    const Vec3 f = m.rotation(t, 0) * Vec3(0.0, 0.0, 1.0);
    return std::atan2(f.x(), f.z());
  };
  double net = 0.0, absolute = 0.0, prev = yaw(0);
  for (std::size_t t = 1; t < T; ++t) {
    const double cur = yaw(t);
    double step = cur - prev;
    step -= 2.0 * std::numbers::pi * std::round(step / (2.0 * std::numbers::pi));
    net += step;
    absolute += std::fabs(step);
    prev = cur;
  }
  d.push_back(net);
  d.push_back(absolute);

  // Non-root joints: speed level and temporal spread (2), mean |v| per axis
  // (3), positional spread per axis (3), sign-change rate of vertical velocity (1).
  const std::size_t J = K > 1 ? K - 1 : 1;
  const std::size_t first = K > 1 ? 1 : 0;
  std::vector<double> speed(T, 0.0);
  Vec3 va = Vec3::Zero(), ps = Vec3::Zero();
  double crossings = 0.0;
  for (std::size_t j = first; j < K; ++j) {
    Vec3 pm = Vec3::Zero();
    for (std::size_t t = 0; t < T; ++t) pm += m.position(t, j);
    pm *= inv_t;
    for (std::size_t t = 0; t < T; ++t) {
      const Vec3 v = m.velocity(t, j);
      speed[t] += v.norm() / static_cast<double>(J);
      va += v.cwiseAbs();
      ps += (m.position(t, j) - pm).cwiseAbs2();
      if (t >= 2 && m.velocity(t, j).y() * m.velocity(t - 1, j).y() < 0.0) crossings += 1.0;
    }
  }
  const double sm = std::accumulate(speed.begin(), speed.end(), 0.0) * inv_t;
  double ss = 0.0;
  for (double s : speed) ss += (s - sm) * (s - sm);
  d.push_back(sm);
  d.push_back(std::sqrt(ss * inv_t));
  const double norm = inv_t / static_cast<double>(J);
  for (int a = 0; a < 3; ++a) d.push_back(va[a] * norm);
  for (int a = 0; a < 3; ++a) d.push_back(std::sqrt(ps[a] * norm));
  d.push_back(crossings * norm);

  // Rotation variability: per-entry temporal spread of the first two matrix
  // columns, averaged over non-root joints (6).
  std::array<double, 6> rv{};
  for (std::size_t j = first; j < K; ++j) {
    std::array<double, 6> mean{}, sq{};
    for (std::size_t t = 0; t < T; ++t) {
      const Mat3 r = m.rotation(t, j);
      for (int c = 0; c < 6; ++c) {
        const double x = r(c % 3, c / 3);
        mean[c] += x;
        sq[c] += x * x;
      }
    }
    for (int c = 0; c < 6; ++c) {
      const double mu = mean[c] * inv_t;
      rv[c] += std::sqrt(std::max(sq[c] * inv_t - mu * mu, 0.0)) / static_cast<double>(J);
    }
  }
  for (double v : rv) d.push_back(v);

  // Body extent: mean and max joint distance from the root (2), joint count (1).
  double ext = 0.0, ext_max = 0.0;
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t j = first; j < K; ++j) {
      const double r = (m.position(t, j) - (K > 1 ? Vec3::Zero() : m.position(t, 0))).norm();
      ext += r;
      ext_max = std::max(ext_max, r);
    }
  d.push_back(ext * norm);
  d.push_back(ext_max);
  d.push_back(std::log(static_cast<double>(K)));
  return d;
}

std::string eval_prompt(const TextRecord& t) { return prompt_text(t, true); }

// ---- evaluation embedder -------------------------------------------------------------------

void EvalEmbedderConfig::validate() const {
  if (embed_dim == 0 || hidden == 0 || text_dim == 0) throw UsageError("eval embedder: widths must be positive");
  if (!(temperature > 0.0)) throw UsageError("eval embedder: temperature must be positive");
  if (!(lr > 0.0)) throw UsageError("eval embedder: lr must be positive");
  if (batch_size < 2) throw UsageError("eval embedder: batch_size must be at least 2");
}

nlohmann::json EvalEmbedderConfig::to_json() const {
  return {{"embed_dim", embed_dim}, {"hidden", hidden},         {"text_dim", text_dim},
          {"temperature", temperature}, {"lr", lr},          {"epochs", epochs},
          {"batch_size", batch_size},   {"text_seed", text_seed}};
}

EvalEmbedderConfig EvalEmbedderConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw UsageError("eval embedder config must be a JSON object");
  EvalEmbedderConfig c;
  const nlohmann::json defaults = c.to_json();
  for (const auto& [k, v] : j.items())
    if (!defaults.contains(k)) throw UsageError("eval embedder config: unknown key '" + k + "'");
  try {
    c.embed_dim = j.value("embed_dim", c.embed_dim);
    c.hidden = j.value("hidden", c.hidden);
    c.text_dim = j.value("text_dim", c.text_dim);
    c.temperature = j.value("temperature", c.temperature);
    c.lr = j.value("lr", c.lr);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.text_seed = j.value("text_seed", c.text_seed);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("eval embedder config: ") + e.what());
  }
  c.validate();
  return c;
}

EvalEmbedder EvalEmbedder::init(const EvalEmbedderConfig& config, std::uint64_t seed) {
  config.validate();
  EvalEmbedder e;
  e.config_ = config;
  e.text_ = gen::HashedBagEmbedder(config.text_dim, config.text_seed);
  Rng rng(Rng::derive(seed, 0xe7a1));
  e.motion_mlp_ = nn::Mlp::init(kDescriptorDim, config.hidden, config.embed_dim, rng);
  e.text_mlp_ = nn::Mlp::init(config.text_dim, config.hidden, config.embed_dim, rng);
  e.desc_mean_ = Tensor({kDescriptorDim});
  e.desc_std_ = Tensor({kDescriptorDim}, 1.0);
  return e;
}

ad::NamedParams EvalEmbedder::parameters() const {
  ad::NamedParams p;
  motion_mlp_.collect("motion", p);
  text_mlp_.collect("text", p);
  return p;
}

Tensor EvalEmbedder::standardize(const std::vector<std::vector<double>>& rows) const {
  Tensor out({rows.size(), kDescriptorDim});
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t c = 0; c < kDescriptorDim; ++c) out(i, c) = (rows[i][c] - desc_mean_[c]) / desc_std_[c];
  return out;
}

ad::Var EvalEmbedder::motion_forward(const Tensor& descriptors) const {
  return ad::normalize_rows(motion_mlp_(ad::constant(descriptors)));
}

ad::Var EvalEmbedder::text_forward(const Tensor& texts) const {
  return ad::normalize_rows(text_mlp_(ad::constant(texts)));
}

namespace {

Eigen::VectorXd to_eigen(std::span<const double> v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Features to_features(const Tensor& t) {
  Features f(static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) f(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = t(i, j);
  return f;
}

}  // namespace

Eigen::VectorXd EvalEmbedder::embed_motion(const MotionSequence& m) const {
  return to_eigen(motion_forward(standardize({motion_descriptor(m)})).value().data());
}

Eigen::VectorXd EvalEmbedder::embed_text(const std::string& text) const {
  const auto v = text_.embed(text);
  return to_eigen(text_forward(Tensor({1, v.size()}, v)).value().data());
}

Features EvalEmbedder::embed_motions(std::span<const MotionSequence* const> motions) const {
  std::vector<std::vector<double>> rows(motions.size());
  // Descriptors are pure per motion; extraction parallelizes.
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(motions.size()); ++i)
    rows[static_cast<std::size_t>(i)] = motion_descriptor(*motions[static_cast<std::size_t>(i)]);
  if (rows.empty()) return Features(0, static_cast<Eigen::Index>(config_.embed_dim));
  return to_features(motion_forward(standardize(rows)).value());
}

Features EvalEmbedder::embed_texts(std::span<const std::string> texts) const {
  if (texts.empty()) return Features(0, static_cast<Eigen::Index>(config_.embed_dim));
  Tensor t({texts.size(), config_.text_dim});
  for (std::size_t i = 0; i < texts.size(); ++i) {
    const auto v = text_.embed(texts[i]);
    std::copy(v.begin(), v.end(), t.row(i).begin());
  }
  return to_features(text_forward(t).value());
}

EvalEmbedder EvalEmbedder::train(const Corpus& corpus, const EvalEmbedderConfig& config, std::uint64_t seed,
                                 EvalTrainReport* report) {
  EvalEmbedder e = init(config, seed);
  const std::vector<std::size_t> train_idx = corpus.indices(Split::kTrain);
  if (train_idx.size() < 2) throw DataError("eval embedder: need at least 2 training sequences");
  EvalTrainReport local;
  std::set<std::string> classes;
  for (std::size_t i : train_idx) classes.insert(corpus.entries[i].text.motion_class);
  if (classes.size() < 2) local.warning = "corpus has a single motion class; retrieval metrics are weakly informative";

  // Descriptor standardization from the training split.
  std::vector<std::vector<double>> desc;
  for (std::size_t i : train_idx) desc.push_back(motion_descriptor(corpus.entries[i].motion));
  for (std::size_t c = 0; c < kDescriptorDim; ++c) {
    double mu = 0.0, var = 0.0;
    for (const auto& d : desc) mu += d[c];
    mu /= static_cast<double>(desc.size());
    for (const auto& d : desc) var += (d[c] - mu) * (d[c] - mu);
    var /= static_cast<double>(desc.size());
    e.desc_mean_[c] = mu;
    e.desc_std_[c] = std::sqrt(var) > 1e-9 ? std::sqrt(var) : 1.0;
  }
  const Tensor x_all = e.standardize(desc);
  Tensor t_all({train_idx.size(), config.text_dim});
  for (std::size_t r = 0; r < train_idx.size(); ++r) {
    const auto v = e.text_.embed(eval_prompt(corpus.entries[train_idx[r]].text));
    std::copy(v.begin(), v.end(), t_all.row(r).begin());
  }

  const ad::NamedParams params = e.parameters();
  AdamConfig ac;
  ac.lr = config.lr;
  Adam opt(params, ac);
  const std::size_t n = train_idx.size();
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    Rng rng(Rng::derive(seed, epoch + 1));
    const std::vector<std::size_t> order = rng.permutation(n);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start + 1 < n; start += config.batch_size) {
      const std::size_t b = std::min(config.batch_size, n - start);
      if (b < 2) break;
      Tensor xb({b, kDescriptorDim}), tb({b, config.text_dim});
      for (std::size_t r = 0; r < b; ++r) {
        const auto xs = x_all.row(order[start + r]);
        const auto ts = t_all.row(order[start + r]);
        std::copy(xs.begin(), xs.end(), xb.row(r).begin());
        std::copy(ts.begin(), ts.end(), tb.row(r).begin());
      }
      opt.zero_grad();
      const ad::Var logits = ad::scale(ad::matmul_nt(e.text_forward(tb), e.motion_forward(xb)), 1.0 / config.temperature);
      std::vector<std::size_t> diag(b);
      std::iota(diag.begin(), diag.end(), 0);
      const ad::Var loss = ad::scale(ad::add(ad::nll_rows(logits, diag, diag), ad::nll_rows(ad::transpose(logits), diag, diag)), 0.5);
      if (!std::isfinite(loss.value()[0])) throw NumericalError("eval embedder: non-finite loss at epoch " + std::to_string(epoch));
      ad::backward(loss);
      opt.step();
      loss_sum += loss.value()[0];
      ++batches;
    }
    local.loss.push_back(batches > 0 ? loss_sum / static_cast<double>(batches) : 0.0);
  }

  const std::vector<std::size_t> test_idx = corpus.indices(Split::kTest);
  if (test_idx.size() >= 2) {
    std::vector<const MotionSequence*> motions;
    std::vector<std::string> texts;
    for (std::size_t i : test_idx) {
      motions.push_back(&corpus.entries[i].motion);
      texts.push_back(eval_prompt(corpus.entries[i].text));
    }
    local.validation_pool = std::min<std::size_t>(32, test_idx.size());
    const std::size_t k1[] = {1};
    local.validation_r1 = r_precision(e.embed_texts(texts), e.embed_motions(motions), k1, local.validation_pool, seed)[1];
  }
  if (report != nullptr) *report = std::move(local);
  return e;
}

void EvalEmbedder::save(io::Checkpoint& ckpt, const std::string& section) const {
  ckpt.config(section) = config_.to_json();
  ckpt.put_params(section, parameters());
  ckpt.put_tensor(section, "descriptor.mean", desc_mean_);
  ckpt.put_tensor(section, "descriptor.std", desc_std_);
}

EvalEmbedder EvalEmbedder::load(const io::Checkpoint& ckpt, const std::string& section) {
  if (!ckpt.has_section(section)) throw DataError("checkpoint has no '" + section + "' section");
  EvalEmbedder e = init(EvalEmbedderConfig::from_json(ckpt.config(section)), 0);
  ckpt.load_params(section, e.parameters());
  e.desc_mean_ = ckpt.get_tensor(section, "descriptor.mean");
  e.desc_std_ = ckpt.get_tensor(section, "descriptor.std");
  if (e.desc_mean_.size() != kDescriptorDim || e.desc_std_.size() != kDescriptorDim)
    throw DataError("eval embedder: descriptor statistics have the wrong size");
  return e;
}

}  // namespace topomo::metrics
