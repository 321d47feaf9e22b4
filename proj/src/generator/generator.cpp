// Copyright 2026 The topomo Authors
// SPDX-License-Identifier: Apache-2.0

#include "topomo/generator/generator.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <memory>
#include <numbers>
#include <numeric>

namespace topomo::gen {

// ---- text embedder ------------------------------------------------------------------

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

HashedBagEmbedder::HashedBagEmbedder(std::size_t dim, std::uint64_t seed, std::size_t buckets)
    : dim_(dim), buckets_(buckets), seed_(seed) {
  if (dim == 0 || buckets == 0) throw UsageError("text embedder needs positive dim and bucket count");
  Rng rng(Rng::derive(seed, 0x7e47));
  projection_ = randn({buckets, dim}, rng, 1.0);
}

std::vector<std::string> HashedBagEmbedder::tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::vector<double> HashedBagEmbedder::embed(const std::string& text) const {
  std::vector<double> v(dim_, 0.0);
  for (const auto& tok : tokenize(text)) {
    const auto row = projection_.row(fnv1a(tok) % buckets_);
    for (std::size_t i = 0; i < dim_; ++i) v[i] += row[i];
  }
  double n = 0.0;
  for (double x : v) n += x * x;
  if (n > 0.0) {
    n = std::sqrt(n);
    for (double& x : v) x /= n;
  }
  return v;
}

// ---- config -------------------------------------------------------------------------

void GenConfig::validate() const {
  if (layers < 1 || residual_layers < 1 || heads < 1 || model_dim < 1 || ffn_dim < 1) {
    throw UsageError("generator: sizes must be >= 1");
  }
  if (model_dim % heads != 0) throw UsageError("generator: model_dim must be divisible by heads");
  if (text_dim < 1 || cond_dim < 1 || max_tokens < 1) throw UsageError("generator: text_dim, cond_dim, max_tokens must be >= 1");
  if (!(cfg_dropout >= 0.0 && cfg_dropout <= 1.0)) throw UsageError("generator: cfg_dropout must lie in [0, 1]");
  if (unmask_iters < 1) throw UsageError("generator: unmask_iters must be >= 1");
  if (!(lr > 0.0) || batch_size < 1) throw UsageError("generator: lr and batch_size must be positive");
}

nlohmann::json GenConfig::to_json() const {
  return {{"layers", layers},
          {"heads", heads},
          {"model_dim", model_dim},
          {"ffn_dim", ffn_dim},
          {"residual_layers", residual_layers},
          {"text_dim", text_dim},
          {"cond_dim", cond_dim},
          {"max_tokens", max_tokens},
          {"cfg_dropout", cfg_dropout},
          {"cfg_scale", cfg_scale},
          {"unmask_iters", unmask_iters},
          {"lr", lr},
          {"batch_size", batch_size},
          {"text_seed", text_seed},
          {"use_skeleton_embed", use_skeleton_embed},
          {"use_motion_summary", use_motion_summary}};
}

GenConfig GenConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw UsageError("generator config must be a JSON object");
  GenConfig c;
  const nlohmann::json defaults = c.to_json();
  for (const auto& [key, value] : j.items()) {
    if (!defaults.contains(key)) throw UsageError("unknown generator config key '" + key + "'");
  }
  try {
    c.layers = j.value("layers", c.layers);
    c.heads = j.value("heads", c.heads);
    c.model_dim = j.value("model_dim", c.model_dim);
    c.ffn_dim = j.value("ffn_dim", c.ffn_dim);
    c.residual_layers = j.value("residual_layers", c.residual_layers);
    c.text_dim = j.value("text_dim", c.text_dim);
    c.cond_dim = j.value("cond_dim", c.cond_dim);
    c.max_tokens = j.value("max_tokens", c.max_tokens);
    c.cfg_dropout = j.value("cfg_dropout", c.cfg_dropout);
    c.cfg_scale = j.value("cfg_scale", c.cfg_scale);
    c.unmask_iters = j.value("unmask_iters", c.unmask_iters);
    c.lr = j.value("lr", c.lr);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.text_seed = j.value("text_seed", c.text_seed);
    c.use_skeleton_embed = j.value("use_skeleton_embed", c.use_skeleton_embed);
    c.use_motion_summary = j.value("use_motion_summary", c.use_motion_summary);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("generator config: ") + e.what());
  }
  c.validate();
  return c;
}

// ---- masking and losses --------------------------------------------------------------

MaskedTokens mask_tokens(std::span<const std::size_t> tokens, double ratio, std::uint64_t seed, std::size_t mask_id) {
  if (!(ratio > 0.0 && ratio <= 1.0)) throw UsageError("mask ratio must lie in (0, 1]");
  const std::size_t n = tokens.size();
  const auto count = std::min<std::size_t>(n, static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(n) - 1e-12)));
  Rng rng(seed);
  MaskedTokens out;
  out.tokens.assign(tokens.begin(), tokens.end());
  out.positions = rng.sample_without_replacement(n, count);
  std::sort(out.positions.begin(), out.positions.end());
  for (std::size_t p : out.positions) out.tokens[p] = mask_id;
  return out;
}

double cosine_mask_ratio(double u) { return std::cos(std::numbers::pi / 2.0 * u); }

LossValue masked_loss(const ad::Var& logits, std::span<const std::size_t> targets, std::span<const std::size_t> positions) {
  LossValue out;
  out.empty = positions.empty();
  out.loss = ad::nll_rows(logits, targets, positions);
  return out;
}

ad::Var residual_loss(const ad::Var& logits, std::span<const std::size_t> targets) {
  std::vector<std::size_t> rows(targets.size());
  std::iota(rows.begin(), rows.end(), 0);
  return ad::nll_rows(logits, targets, rows);
}

Tensor guided_logits(const Tensor& cond, const Tensor& null, double scale) {
  if (scale == 1.0) return cond;
  if (cond.shape() != null.shape()) throw DimensionError("guided_logits: shapes differ");
  Tensor out(cond.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = null[i] + scale * (cond[i] - null[i]);
  return out;
}

// ---- model ----------------------------------------------------------------------------

GenModel GenModel::init(const GenConfig& config, const skelembed::SkelEmbedConfig& skel_config, std::size_t codes,
                        std::size_t levels, std::uint64_t seed) {
  config.validate();
  skel_config.validate();
  if (codes < 1 || levels < 1) throw UsageError("generator needs at least one code and one level");
  Rng rng(Rng::derive(seed, 0x6e0));
  const std::size_t d = config.model_dim;
  GenModel m;
  m.config_ = config;
  m.skel_config_ = skel_config;
  m.codes_ = codes;
  m.levels_ = levels;
  m.text_ = HashedBagEmbedder(config.text_dim, config.text_seed);
  m.skel_ = skelembed::SkeletonEmbedder::init(skel_config, Rng::derive(seed, 0x5e));
  const std::size_t fused_in = config.text_dim + skel_config.out_dim;
  m.fuse_ = nn::Mlp::init(fused_in, config.cond_dim, config.cond_dim, rng);
  m.null_input_ = ad::parameter(randn({1, fused_in}, rng, 0.1));

  m.base_embed_ = ad::parameter(randn({codes + 1, d}, rng, 0.02));
  m.base_pos_ = ad::parameter(randn({config.max_tokens + 1, d}, rng, 0.02));
  m.base_cond_ = nn::Linear::init(config.cond_dim, d, rng);
  for (std::size_t l = 0; l < config.layers; ++l) m.base_blocks_.push_back(nn::TransformerBlock::init(d, config.heads, config.ffn_dim, rng));
  m.base_norm_ = nn::LayerNorm::init(d);
  m.base_head_ = nn::Linear::init(d, codes, rng);

  m.res_pos_ = ad::parameter(randn({config.max_tokens + 1, d}, rng, 0.02));
  m.res_level_ = ad::parameter(randn({levels, d}, rng, 0.02));
  m.res_cond_ = nn::Linear::init(config.cond_dim, d, rng);
  for (std::size_t l = 0; l < config.residual_layers; ++l) m.res_blocks_.push_back(nn::TransformerBlock::init(d, config.heads, config.ffn_dim, rng));
  m.res_norm_ = nn::LayerNorm::init(d);
  for (std::size_t v = 0; v < levels; ++v) m.res_tables_.push_back(ad::parameter(randn({codes, d}, rng, 0.02)));
  return m;
}

ad::Var GenModel::skeleton_feature(const skelembed::SkeletonInput& s) const {
  if (!config_.use_skeleton_embed) return ad::constant(Tensor({1, skel_config_.out_dim}));
  return skel_.forward(s);
}

ad::Var GenModel::fuse_condition(const std::vector<double>& text, const ad::Var& skel, bool null) const {
  if (null) return fuse_(null_input_);
  if (text.size() != config_.text_dim) throw DimensionError("fuse_condition: text embedding has the wrong width");
  const std::vector<ad::Var> parts{ad::constant(Tensor({1, text.size()}, text)), skel};
  return fuse_(ad::concat_cols(parts));
}

ad::Var GenModel::transformer(const std::vector<nn::TransformerBlock>& blocks, const nn::LayerNorm& norm,
                              const ad::Var& x) const {
  ad::Var h = x;
  for (const auto& b : blocks) h = b.forward(h);
  return norm(h);
}

namespace {

std::vector<std::size_t> iota_from(std::size_t start, std::size_t count) {
  std::vector<std::size_t> v(count);
  std::iota(v.begin(), v.end(), start);
  return v;
}

}  // namespace

ad::Var GenModel::masked_logits(std::span<const std::size_t> tokens, const ad::Var& cond) const {
  const std::size_t n = tokens.size();
  if (n == 0 || n > config_.max_tokens) {
    throw DimensionError("token sequence length " + std::to_string(n) + " outside [1, " + std::to_string(config_.max_tokens) + "]");
  }
  for (std::size_t t : tokens)
    if (t > codes_) throw DimensionError("masked_logits: token " + std::to_string(t) + " out of range");
  const std::vector<std::size_t> pos = iota_from(0, n + 1);
  const std::vector<ad::Var> parts{base_cond_(cond), ad::gather_rows(base_embed_, tokens)};
  const ad::Var x = ad::add(ad::concat_rows(parts), ad::gather_rows(base_pos_, pos));
  const ad::Var h = transformer(base_blocks_, base_norm_, x);
  return base_head_(ad::slice_rows(h, 1, n + 1));
}

ad::Var GenModel::residual_head(std::size_t level) const {
  if (level < 1 || level >= levels_) throw UsageError("residual level " + std::to_string(level) + " outside [1, " + std::to_string(levels_ - 1) + "]");
  return res_tables_[level];
}

ad::Var GenModel::residual_embedding(std::size_t level) const {
  if (level + 1 >= levels_) throw UsageError("no input embedding for level " + std::to_string(level));
  return res_tables_[level];
}

ad::Var GenModel::residual_logits(const rvq::TokenSequences& tokens, std::size_t level, const ad::Var& cond) const {
  if (level < 1 || level >= levels_) throw UsageError("residual level " + std::to_string(level) + " outside [1, " + std::to_string(levels_ - 1) + "]");
  if (tokens.levels.size() < level) throw DimensionError("residual_logits: missing preceding levels");
  const std::size_t n = tokens.length();
  if (n == 0 || n > config_.max_tokens) throw DimensionError("residual_logits: sequence length out of range");
  ad::Var sum = ad::gather_rows(res_tables_[0], tokens.levels[0]);
  for (std::size_t v = 1; v < level; ++v) sum = ad::add(sum, ad::gather_rows(res_tables_[v], tokens.levels[v]));
  const std::vector<std::size_t> lvl(n, level);
  sum = ad::add(sum, ad::gather_rows(res_level_, lvl));
  const std::vector<ad::Var> parts{res_cond_(cond), sum};
  const ad::Var x = ad::add(ad::concat_rows(parts), ad::gather_rows(res_pos_, iota_from(0, n + 1)));
  const ad::Var h = transformer(res_blocks_, res_norm_, x);
  return ad::matmul_nt(ad::slice_rows(h, 1, n + 1), res_tables_[level]);
}

ad::NamedParams GenModel::parameters() const {
  ad::NamedParams p = skel_.parameters("skel");
  fuse_.collect("gen.fuse", p);
  p.emplace_back("gen.null", null_input_);
  p.emplace_back("gen.base.embed", base_embed_);
  p.emplace_back("gen.base.pos", base_pos_);
  base_cond_.collect("gen.base.cond", p);
  for (std::size_t l = 0; l < base_blocks_.size(); ++l) base_blocks_[l].collect("gen.base.block" + std::to_string(l), p);
  base_norm_.collect("gen.base.norm", p);
  base_head_.collect("gen.base.head", p);
  p.emplace_back("gen.res.pos", res_pos_);
  p.emplace_back("gen.res.level", res_level_);
  res_cond_.collect("gen.res.cond", p);
  for (std::size_t l = 0; l < res_blocks_.size(); ++l) res_blocks_[l].collect("gen.res.block" + std::to_string(l), p);
  res_norm_.collect("gen.res.norm", p);
  for (std::size_t v = 0; v < res_tables_.size(); ++v) p.emplace_back("gen.res.table" + std::to_string(v), res_tables_[v]);
  return p;
}

void GenModel::save(io::Checkpoint& ckpt) const {
  nlohmann::json cfg = config_.to_json();
  ckpt.config("generator") = {{"model", cfg}, {"codes", codes_}, {"levels", levels_}, {"skelembed", skel_config_.to_json()}};
  ckpt.put_params("generator", parameters());
}

GenModel GenModel::load(const io::Checkpoint& ckpt) {
  if (!ckpt.has_section("generator")) throw FormatError("checkpoint has no generator section");
  const auto& c = ckpt.config("generator");
  GenModel m;
  try {
    m = init(GenConfig::from_json(c.at("model")), skelembed::SkelEmbedConfig::from_json(c.at("skelembed")),
             c.at("codes").get<std::size_t>(), c.at("levels").get<std::size_t>(), 0);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("generator checkpoint header: ") + e.what());
  }
  ckpt.load_params("generator", m.parameters());
  return m;
}

GenItem GenModel::make_item(const rvq::TokenSequences& tokens, const TextRecord& text, const SkeletonGraph& s) const {
  return {tokens, text_.embed(prompt_text(text, config_.use_motion_summary)), skelembed::make_input(s)};
}

// ---- training -----------------------------------------------------------------------------

namespace {

std::vector<std::size_t> training_pool(const Corpus& corpus, bool train_only) {
  std::vector<std::size_t> pool = train_only ? corpus.indices(Split::kTrain) : std::vector<std::size_t>{};
  if (pool.empty()) pool = iota_from(0, corpus.size());
  return pool;
}

}  // namespace

GenTrainResult train_generator(GenModel& model, const rvq::RvqModel& rvq_model, const Corpus& corpus,
                               const GenTrainOptions& options, Adam* optimizer) {
  if (rvq_model.config().codes_per_level != model.codes() || rvq_model.config().levels != model.levels()) {
    throw UsageError("generator and rvq model disagree on codebook size or depth");
  }
  const auto pool = training_pool(corpus, options.train_split_only);
  if (pool.empty()) throw DataError("train_generator: corpus is empty");
  std::vector<GenItem> items;
  for (std::size_t i : pool) {
    const auto& e = corpus.entries[i];
    const auto& s = corpus.skeleton_of(e);
    items.push_back(model.make_item(rvq::tokenize(rvq_model, e.motion, s), e.text, s));
    if (items.back().tokens.length() > model.config().max_tokens) throw DataError("sequence longer than generator max_tokens");
  }

  std::unique_ptr<Adam> owned;
  if (optimizer == nullptr) {
    AdamConfig ac;
    ac.lr = model.config().lr;
    owned = std::make_unique<Adam>(model.parameters(), ac);
    optimizer = owned.get();
  }
  const GenConfig& cfg = model.config();
  const std::size_t depth = model.levels() - 1;
  GenTrainResult result;
  for (std::size_t epoch = options.first_epoch; epoch < options.first_epoch + options.epochs; ++epoch) {
    Rng rng(Rng::derive(options.seed, epoch + 1));
    const auto order = rng.permutation(items.size());
    GenEpochStats stats;
    double masked_sum = 0.0, residual_sum = 0.0;
    std::size_t residual_count = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      std::vector<ad::Var> losses;
      for (std::size_t b = start; b < stop; ++b) {
        const GenItem& item = items[order[b]];
        const bool null = rng.bernoulli(cfg.cfg_dropout);
        const double ratio = std::max(cosine_mask_ratio(rng.uniform()), 1e-6);
        const std::uint64_t mask_seed = rng.engine()();
        const std::size_t level = depth > 0 ? 1 + rng.index(depth) : 0;

        const ad::Var cond = null ? model.fuse_condition({}, ad::Var{}, true)
                                  : model.fuse_condition(item.text, model.skeleton_feature(item.skeleton), false);
        const auto& base = item.tokens.levels[0];
        const MaskedTokens mt = mask_tokens(base, ratio, mask_seed, model.mask_id());
        ad::Var loss = masked_loss(model.masked_logits(mt.tokens, cond), base, mt.positions).loss;
        masked_sum += loss.value()[0];
        if (level > 0) {
          const ad::Var rl = residual_loss(model.residual_logits(item.tokens, level, cond), item.tokens.levels[level]);
          residual_sum += rl.value()[0];
          ++residual_count;
          loss = ad::add(loss, rl);
        }
        losses.push_back(loss);
        stats.null_conditions += null ? 1 : 0;
        ++stats.samples;
      }
      ad::Var total = losses[0];
      for (std::size_t i = 1; i < losses.size(); ++i) total = ad::add(total, losses[i]);
      total = ad::scale(total, 1.0 / static_cast<double>(losses.size()));
      if (!std::isfinite(total.value()[0])) {
        throw NumericalError("train_generator diverged: loss is " + std::to_string(total.value()[0]) + " at epoch " +
                             std::to_string(epoch));
      }
      optimizer->zero_grad();
      ad::backward(total);
      optimizer->step();
    }
    stats.masked_loss = masked_sum / static_cast<double>(stats.samples);
    stats.residual_loss = residual_count > 0 ? residual_sum / static_cast<double>(residual_count) : 0.0;
    result.history.push_back(stats);
    if (options.on_epoch) options.on_epoch(epoch, stats);
  }
  return result;
}

MaskedEval masked_evaluation(const GenModel& model, const rvq::RvqModel& rvq_model, const Corpus& corpus,
                             std::span<const std::size_t> entries, double ratio, std::uint64_t seed) {
  std::size_t hit = 0, total = 0;
  double nll = 0.0;
  for (std::size_t idx : entries) {
    const auto& e = corpus.entries.at(idx);
    const auto& s = corpus.skeleton_of(e);
    const GenItem item = model.make_item(rvq::tokenize(rvq_model, e.motion, s), e.text, s);
    const auto& base = item.tokens.levels[0];
    const MaskedTokens mt = mask_tokens(base, ratio, Rng::derive(seed, idx), model.mask_id());
    const ad::Var cond = model.fuse_condition(item.text, model.skeleton_feature(item.skeleton), false);
    const Tensor logits = model.masked_logits(mt.tokens, cond).value();
    for (std::size_t p : mt.positions) {
      const auto row = logits.row(p);
      const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
      const double mx = row[best];
      double z = 0.0;
      for (double v : row) z += std::exp(v - mx);
      nll += std::log(z) + mx - row[base[p]];
      hit += best == base[p] ? 1 : 0;
      ++total;
    }
  }
  if (total == 0) return {};
  return {static_cast<double>(hit) / static_cast<double>(total), nll / static_cast<double>(total), total};
}

double masked_token_accuracy(const GenModel& model, const rvq::RvqModel& rvq_model, const Corpus& corpus,
                             std::span<const std::size_t> entries, double ratio, std::uint64_t seed) {
  return masked_evaluation(model, rvq_model, corpus, entries, ratio, seed).accuracy;
}

// ---- generation ------------------------------------------------------------------------------

namespace {

std::size_t sample_from(std::span<const double> logits, double temperature, Rng& rng, double* prob) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) z += p[k] = std::exp((logits[k] - mx) / temperature);
  double u = rng.uniform() * z;
  std::size_t pick = p.size() - 1;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (u < p[k]) {
      pick = k;
      break;
    }
    u -= p[k];
  }
  *prob = p[pick] / z;
  return pick;
}

}  // namespace

rvq::TokenSequences generate_tokens(const GenModel& model, const std::string& text, const SkeletonGraph& normalized,
                                    std::size_t n, const GenerateOptions& options) {
  if (n == 0 || n > model.config().max_tokens) throw UsageError("generate: token length out of range");
  if (!(options.temperature > 0.0)) throw UsageError("generate: temperature must be positive");
  const bool guided = options.cfg_scale != 1.0;
  const std::vector<double> f_text = model.text_embedder().embed(text);
  const ad::Var cond = model.fuse_condition(f_text, model.skeleton_feature(skelembed::make_input(normalized)), false);
  const ad::Var null = model.fuse_condition({}, ad::Var{}, true);
  auto logits_for = [&](auto&& fn) {
    const Tensor c = fn(cond).value();
    return guided ? guided_logits(c, fn(null).value(), options.cfg_scale) : c;
  };

  Rng rng(Rng::derive(options.seed, 0x9e4));
  std::vector<std::size_t> tokens(n, model.mask_id());
  std::vector<bool> known(n, false);
  const std::size_t iters = model.config().unmask_iters;
  for (std::size_t it = 0; it < iters; ++it) {
    const Tensor logits = logits_for([&](const ad::Var& c) { return model.masked_logits(tokens, c); });
    std::vector<std::pair<double, std::size_t>> scored;  // (confidence, position) of newly sampled tokens
    std::vector<std::size_t> sampled(n);
    for (std::size_t p = 0; p < n; ++p) {
      if (known[p]) continue;
      double prob = 0.0;
      sampled[p] = sample_from(logits.row(p), options.temperature, rng, &prob);
      scored.emplace_back(prob, p);
    }
    std::size_t remain = 0;
    if (it + 1 < iters) {
      const double r = cosine_mask_ratio(static_cast<double>(it + 1) / static_cast<double>(iters));
      remain = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(r * static_cast<double>(n))));
    }
    remain = std::min(remain, scored.size());
    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t i = 0; i + remain < scored.size(); ++i) {
      const std::size_t p = scored[i].second;
      tokens[p] = sampled[p];
      known[p] = true;
    }
  }
  rvq::TokenSequences out;
  out.levels.push_back(tokens);
  for (std::size_t level = 1; level < model.levels(); ++level) {
    const Tensor logits = logits_for([&](const ad::Var& c) { return model.residual_logits(out, level, c); });
    std::vector<std::size_t> lv(n);
    for (std::size_t p = 0; p < n; ++p) {
      const auto row = logits.row(p);
      lv[p] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    }
    out.levels.push_back(std::move(lv));
  }
  return out;
}

Generation generate(const GenModel& model, const rvq::RvqModel& rvq_model, const std::string& text,
                    const SkeletonGraph& skeleton, std::size_t frames, const GenerateOptions& options, double fps) {
  if (frames < kMinGenerateFrames || frames > kMaxGenerateFrames) {
    throw UsageError("generate: frame count " + std::to_string(frames) + " outside [" + std::to_string(kMinGenerateFrames) +
                     ", " + std::to_string(kMaxGenerateFrames) + "]");
  }
  if (rvq_model.config().codes_per_level != model.codes() || rvq_model.config().levels != model.levels()) {
    throw UsageError("generator and rvq model disagree on codebook size or depth");
  }
  const NormalizedSkeleton norm = normalize_skeleton(skeleton);
  const std::size_t n = (frames + 1) / 2;
  Generation g;
  g.tokens = generate_tokens(model, text, norm.skeleton, n, options);
  const MotionSequence full = rvq::detokenize(rvq_model, g.tokens, norm.skeleton, fps);
  const std::size_t k = skeleton.size();
  Tensor out({frames, k, kMotionFeatureWidth});
  std::copy_n(full.frames.data().begin(), out.size(), out.data().begin());
  const double inv = 1.0 / norm.scale_factor;
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t j = 0; j < k; ++j) {
      double* f = &out.data()[(t * k + j) * kMotionFeatureWidth];
      for (std::size_t c = 0; c < 3; ++c) {
        f[kPositionOffset + c] *= inv;
        f[kVelocityOffset + c] *= inv;
      }
    }
  g.motion = MotionSequence{std::move(out), fps, skeleton.species};
  return g;
}

}  // namespace topomo::gen
