// Copyright 2026 The topomo Authors
// SPDX-License-Identifier: Apache-2.0

#include "topomo/rvq/rvq.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>

#include "topomo/motion/sequence.hpp"
#include "topomo/numerics/random.hpp"

namespace topomo::rvq {

// ---- config -----------------------------------------------------------------

void RvqConfig::validate() const {
  if (levels < 1) throw UsageError("rvq: levels must be >= 1");
  if (codes_per_level < 1) throw UsageError("rvq: codes_per_level must be >= 1");
  if (code_dim < 1 || channels < 1 || head_hidden < 1) throw UsageError("rvq: widths must be >= 1");
  if (temporal_downsample != 2) throw UsageError("rvq: temporal_downsample is fixed at 2");
  if (!(beta >= 0.0)) throw UsageError("rvq: beta must be non-negative");
  if (!(ema_decay > 0.0 && ema_decay < 1.0)) throw UsageError("rvq: ema_decay must lie in (0, 1)");
  if (!(lr > 0.0)) throw UsageError("rvq: lr must be positive");
  if (batch_size < 1 || max_joints < 1) throw UsageError("rvq: batch_size and max_joints must be >= 1");
}

nlohmann::json RvqConfig::to_json() const {
  return {{"levels", levels},         {"codes_per_level", codes_per_level},
          {"code_dim", code_dim},     {"temporal_downsample", temporal_downsample},
          {"beta", beta},             {"channels", channels},
          {"head_hidden", head_hidden}, {"max_joints", max_joints},
          {"ema_decay", ema_decay},   {"lr", lr},
          {"batch_size", batch_size}};
}

RvqConfig RvqConfig::from_json(const nlohmann::json& j) {
  static const std::vector<std::string> kKeys{"levels",   "codes_per_level", "code_dim",   "temporal_downsample",
                                              "beta",     "channels",        "head_hidden", "max_joints",
                                              "ema_decay", "lr",             "batch_size"};
  if (!j.is_object()) throw UsageError("rvq config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(kKeys.begin(), kKeys.end(), key) == kKeys.end()) throw UsageError("unknown rvq config key '" + key + "'");
  }
  RvqConfig c;
  try {
    c.levels = j.value("levels", c.levels);
    c.codes_per_level = j.value("codes_per_level", c.codes_per_level);
    c.code_dim = j.value("code_dim", c.code_dim);
    c.temporal_downsample = j.value("temporal_downsample", c.temporal_downsample);
    c.beta = j.value("beta", c.beta);
    c.channels = j.value("channels", c.channels);
    c.head_hidden = j.value("head_hidden", c.head_hidden);
    c.max_joints = j.value("max_joints", c.max_joints);
    c.ema_decay = j.value("ema_decay", c.ema_decay);
    c.lr = j.value("lr", c.lr);
    c.batch_size = j.value("batch_size", c.batch_size);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("rvq config: ") + e.what());
  }
  c.validate();
  return c;
}

// ---- lattice and quantization ---------------------------------------------------

double snap(double x) {
  const double c = std::clamp(x, -kLatticeLimit, kLatticeLimit);
  return std::nearbyint(c / kLatticeStep) * kLatticeStep;
}

Tensor snap(const Tensor& t) {
  Tensor out = t;
  for (auto& v : out.data()) v = snap(v);
  return out;
}

std::size_t nearest_code(std::span<const double> r, const Tensor& codes) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < codes.rows(); ++k) {
    const auto c = codes.row(k);
    double d = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) {
      const double e = r[i] - c[i];
      d += e * e;
    }
    if (d < best_d) {  // strict: ties keep the lower index
      best_d = d;
      best = k;
    }
  }
  return best;
}

Quantized quantize(const Tensor& z, std::span<const Codebook> books) {
  if (z.rank() != 2) throw DimensionError("quantize expects an (n, d_z) latent");
  const std::size_t n = z.rows(), dz = z.cols();
  Quantized q;
  q.residuals.push_back(z);
  q.zhat = Tensor(z.shape());
  for (const auto& book : books) {
    if (book.codes.cols() != dz) throw DimensionError("codebook width does not match latent width");
    const Tensor& r = q.residuals.back();
    Tensor sel(z.shape());
    Tensor next(z.shape());
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) {
      idx[i] = nearest_code(r.row(i), book.codes);
      const auto c = book.codes.row(idx[i]);
      for (std::size_t k = 0; k < dz; ++k) {
        sel(i, k) = c[k];
        next(i, k) = r(i, k) - c[k];
        q.zhat(i, k) += c[k];
      }
    }
    q.tokens.levels.push_back(std::move(idx));
    q.selected.push_back(std::move(sel));
    q.residuals.push_back(std::move(next));
  }
  return q;
}

Tensor lookup(const TokenSequences& tokens, std::span<const Codebook> books) {
  if (tokens.levels.size() != books.size()) {
    throw DataError("token sequences have " + std::to_string(tokens.levels.size()) + " levels, model has " +
                    std::to_string(books.size()));
  }
  const std::size_t n = tokens.length();
  if (n == 0) throw DataError("empty token sequence");
  const std::size_t dz = books[0].codes.cols();
  Tensor zhat({n, dz});
  for (std::size_t v = 0; v < books.size(); ++v) {
    if (tokens.levels[v].size() != n) throw DataError("token levels differ in length");
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t k = tokens.levels[v][i];
      if (k >= books[v].codes.rows()) {
        throw DataError("token " + std::to_string(k) + " at level " + std::to_string(v) + " is outside [0, " +
                        std::to_string(books[v].codes.rows()) + ")");
      }
      const auto c = books[v].codes.row(k);
      for (std::size_t d = 0; d < dz; ++d) zhat(i, d) += c[d];
    }
  }
  return zhat;
}

// ---- masking helpers --------------------------------------------------------------

namespace {

std::vector<std::size_t> valid_slots(const JointMask& mask) {
  std::vector<std::size_t> slots;
  for (std::size_t j = 0; j < mask.size(); ++j)
    if (mask.valid(j)) slots.push_back(j);
  if (slots.empty()) throw DimensionError("joint mask has no valid joint");
  return slots;
}

void check_motion_input(const Tensor& x, const JointMask& mask) {
  if (x.rank() != 3 || x.dim(2) != kMotionFeatureWidth) {
    throw DimensionError("motion input must be (T, J_max, 12), got " + shape_string(x.shape()));
  }
  if (x.dim(1) != mask.size()) throw DimensionError("joint mask length does not match the joint axis");
}

}  // namespace

Tensor valid_rows(const Tensor& x, const JointMask& mask) {
  check_motion_input(x, mask);
  const auto slots = valid_slots(mask);
  const std::size_t t_count = x.dim(0), j_max = x.dim(1), d = x.dim(2);
  Tensor rows({t_count * slots.size(), d});
  for (std::size_t t = 0; t < t_count; ++t)
    for (std::size_t s = 0; s < slots.size(); ++s) {
      const auto src = x.data().subspan((t * j_max + slots[s]) * d, d);
      std::copy(src.begin(), src.end(), rows.row(t * slots.size() + s).begin());
    }
  return rows;
}

Tensor scatter_rows(const Tensor& rows, const JointMask& mask, std::size_t frames) {
  const auto slots = valid_slots(mask);
  const std::size_t d = rows.cols(), j_max = mask.size();
  if (rows.rows() < frames * slots.size()) throw DimensionError("scatter_rows: not enough rows");
  Tensor out({frames, j_max, d});
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t s = 0; s < slots.size(); ++s) {
      const auto src = rows.row(t * slots.size() + s);
      std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>((t * j_max + slots[s]) * d));
    }
  return out;
}

// ---- loss ---------------------------------------------------------------------------

RvqLossTerms rvq_loss_terms(const Tensor& target, const ad::Var& recon, const JointMask& mask,
                            std::span<const ad::Var> residuals, std::span<const Tensor> selected) {
  if (residuals.size() != selected.size()) throw DimensionError("rvq_loss: one selected code set per residual");
  const Tensor rows = valid_rows(target, mask);
  const std::size_t k = mask.valid_count();
  const std::size_t used = rows.rows();
  if (recon.value().rows() < used || recon.value().cols() != rows.cols()) {
    throw DimensionError("rvq_loss: reconstruction " + shape_string(recon.shape()) + " does not cover target rows " +
                         shape_string(rows.shape()));
  }
  const ad::Var rec = recon.value().rows() == used ? recon : ad::slice_rows(recon, 0, used);
  RvqLossTerms terms;
  terms.recon_sum = ad::sum(ad::abs(ad::sub(rec, ad::constant(rows))));
  terms.recon_weight = static_cast<double>(used);
  std::vector<ad::Var> per_level;
  std::size_t positions = 0;
  for (std::size_t l = 0; l < residuals.size(); ++l) {
    positions = residuals[l].value().rows();
    per_level.push_back(ad::sum(ad::square(ad::sub(residuals[l], ad::constant(selected[l])))));
  }
  if (per_level.empty()) {
    terms.commit_sum = ad::constant(Tensor({1}, 0.0));
  } else {
    ad::Var total = per_level[0];
    for (std::size_t l = 1; l < per_level.size(); ++l) total = ad::add(total, per_level[l]);
    terms.commit_sum = ad::scale(total, static_cast<double>(k));
  }
  terms.commit_weight = static_cast<double>(positions * k);
  return terms;
}

ad::Var combine_loss(std::span<const RvqLossTerms> terms, double beta) {
  if (terms.empty()) throw DimensionError("combine_loss: no terms");
  ad::Var rec = terms[0].recon_sum, com = terms[0].commit_sum;
  double rw = terms[0].recon_weight, cw = terms[0].commit_weight;
  for (std::size_t i = 1; i < terms.size(); ++i) {
    rec = ad::add(rec, terms[i].recon_sum);
    com = ad::add(com, terms[i].commit_sum);
    rw += terms[i].recon_weight;
    cw += terms[i].commit_weight;
  }
  return ad::add(ad::scale(rec, 1.0 / (rw + kLossEps)), ad::scale(com, beta / (cw + kLossEps)));
}

ad::Var rvq_loss(const Tensor& target, const ad::Var& recon, const JointMask& mask, std::span<const ad::Var> residuals,
                 std::span<const Tensor> selected, double beta) {
  const RvqLossTerms t = rvq_loss_terms(target, recon, mask, residuals, selected);
  return combine_loss(std::span(&t, 1), beta);
}

// ---- model --------------------------------------------------------------------------

RvqModel RvqModel::init(const RvqConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(Rng::derive(seed, 0x7a11));
  const std::size_t c = config.channels, d = kMotionFeatureWidth;
  RvqModel m;
  m.config_ = config;
  m.in_proj_ = nn::Linear::init(d, c, rng);
  m.slot_embed_ = ad::parameter(randn({config.max_joints, c}, rng, 0.1));
  m.enc_conv_ = nn::Linear::init(3 * c, c, rng);
  m.enc_down_ = nn::Linear::init(3 * c, c, rng);
  m.enc_out_ = nn::Linear::init(c, config.code_dim, rng);
  m.dec_in_ = nn::Linear::init(config.code_dim, c, rng);
  m.dec_conv_ = nn::Linear::init(3 * c, c, rng);
  m.dec_up_ = nn::Linear::init(c, 4 * c, rng, false);
  m.dec_up_bias_ = ad::parameter(Tensor({c}));
  m.dec_post_ = nn::Linear::init(3 * c, c, rng);
  m.head_in_ = nn::Linear::init(c, config.head_hidden, rng);
  Tensor scale = randn({config.max_joints, config.head_hidden}, rng, 0.1);
  for (auto& v : scale.data()) v += 1.0;
  m.head_scale_ = ad::parameter(std::move(scale));
  m.head_slot_ = ad::parameter(randn({config.max_joints, config.head_hidden}, rng, 0.1));
  m.head_mid_ = nn::Linear::init(config.head_hidden, config.head_hidden, rng);
  m.head_out_ = nn::Linear::init(config.head_hidden, d, rng);
  for (std::size_t l = 0; l < config.levels; ++l) {
    Codebook b;
    b.codes = Tensor({config.codes_per_level, config.code_dim});
    b.ema_count = Tensor({config.codes_per_level});
    b.ema_sum = Tensor({config.codes_per_level, config.code_dim});
    b.usage.assign(config.codes_per_level, 0);
    b.epoch_usage.assign(config.codes_per_level, 0);
    m.books_.push_back(std::move(b));
  }
  return m;
}

ad::NamedParams RvqModel::parameters() const {
  ad::NamedParams p;
  in_proj_.collect("enc.in", p);
  p.emplace_back("enc.slot", slot_embed_);
  enc_conv_.collect("enc.conv", p);
  enc_down_.collect("enc.down", p);
  enc_out_.collect("enc.out", p);
  dec_in_.collect("dec.in", p);
  dec_conv_.collect("dec.conv", p);
  dec_up_.collect("dec.up", p);
  p.emplace_back("dec.up.bias", dec_up_bias_);
  dec_post_.collect("dec.post", p);
  head_in_.collect("dec.head.in", p);
  p.emplace_back("dec.head.scale", head_scale_);
  p.emplace_back("dec.head.slot", head_slot_);
  head_mid_.collect("dec.head.mid", p);
  head_out_.collect("dec.head.out", p);
  return p;
}

ad::Var RvqModel::encode(const Tensor& x, const JointMask& mask, bool snap_latent) const {
  check_motion_input(x, mask);
  const std::size_t t_count = x.dim(0);
  if (t_count < config_.temporal_downsample) {
    throw DimensionError("encode needs at least " + std::to_string(config_.temporal_downsample) + " frames");
  }
  const auto slots = valid_slots(mask);
  if (slots.back() >= config_.max_joints) {
    throw DimensionError("skeleton uses joint slot " + std::to_string(slots.back()) + " but max_joints is " +
                         std::to_string(config_.max_joints));
  }
  const std::size_t k = slots.size();
  std::vector<std::size_t> slot_of_row(t_count * k);
  for (std::size_t r = 0; r < slot_of_row.size(); ++r) slot_of_row[r] = slots[r % k];

  const ad::Var rows = ad::constant(valid_rows(x, mask));
  const ad::Var h = ad::gelu(ad::add(in_proj_(rows), ad::gather_rows(slot_embed_, slot_of_row)));
  const std::vector<double> ones(k, 1.0);
  const ad::Var pooled = ad::masked_joint_mean(h, ones, t_count);
  const ad::Var c1 = ad::add(pooled, ad::gelu(enc_conv_(ad::im2col(pooled, 3, 1, 1))));
  const ad::Var down = ad::gelu(enc_down_(ad::im2col(c1, 3, 2, 1)));
  const ad::Var z = enc_out_(down);
  return snap_latent ? ad::straight_through(z, snap(z.value())) : z;
}

ad::Var RvqModel::decode_rows(const ad::Var& zhat, std::size_t valid_joints) const {
  if (zhat.value().rank() != 2 || zhat.value().cols() != config_.code_dim) {
    throw DimensionError("decode expects an (n, d_z) latent, got " + shape_string(zhat.shape()));
  }
  if (valid_joints == 0 || valid_joints > config_.max_joints) throw DimensionError("decode: joint count out of range");
  const std::size_t n = zhat.value().rows();
  const std::size_t frames = 2 * n;
  const ad::Var u0 = ad::gelu(dec_in_(zhat));
  const ad::Var u = ad::add(u0, ad::gelu(dec_conv_(ad::im2col(u0, 3, 1, 1))));
  const ad::Var up = ad::gelu(ad::add_row(ad::col2im(dec_up_(u), 4, 2, 1, frames), dec_up_bias_));
  const ad::Var v = ad::add(up, ad::gelu(dec_post_(ad::im2col(up, 3, 1, 1))));
  const ad::Var a = head_in_(v);
  std::vector<std::size_t> frame_of_row(frames * valid_joints), slot_of_row(frames * valid_joints);
  for (std::size_t r = 0; r < frame_of_row.size(); ++r) {
    frame_of_row[r] = r / valid_joints;
    slot_of_row[r] = r % valid_joints;
  }
  const ad::Var g = ad::gelu(ad::add(ad::mul(ad::gather_rows(a, frame_of_row), ad::gather_rows(head_scale_, slot_of_row)),
                                     ad::gather_rows(head_slot_, slot_of_row)));
  return head_out_(ad::add(g, ad::gelu(head_mid_(g))));
}

Tensor RvqModel::decode(const Tensor& zhat, const JointMask& mask) const {
  const std::size_t k = mask.valid_count();
  const ad::Var rows = decode_rows(ad::constant(zhat), k);
  return scatter_rows(rows.value(), mask, 2 * zhat.rows());
}

void RvqModel::save(io::Checkpoint& ckpt) const {
  ckpt.config("rvq") = config_.to_json();
  ckpt.put_params("rvq", parameters());
  for (std::size_t l = 0; l < books_.size(); ++l) {
    const std::string p = "codebook." + std::to_string(l);
    ckpt.put_tensor("rvq", p + ".codes", books_[l].codes);
    ckpt.put_tensor("rvq", p + ".ema_count", books_[l].ema_count);
    ckpt.put_tensor("rvq", p + ".ema_sum", books_[l].ema_sum);
    Tensor usage({books_[l].usage.size()});
    for (std::size_t k = 0; k < usage.size(); ++k) usage[k] = static_cast<double>(books_[l].usage[k]);
    ckpt.put_tensor("rvq", p + ".usage", usage);
  }
}

RvqModel RvqModel::load(const io::Checkpoint& ckpt) {
  RvqModel m = init(RvqConfig::from_json(ckpt.config("rvq")), 0);
  ckpt.load_params("rvq", m.parameters());
  for (std::size_t l = 0; l < m.books_.size(); ++l) {
    const std::string p = "codebook." + std::to_string(l);
    auto& b = m.books_[l];
    b.codes = ckpt.get_tensor("rvq", p + ".codes");
    b.ema_count = ckpt.get_tensor("rvq", p + ".ema_count");
    b.ema_sum = ckpt.get_tensor("rvq", p + ".ema_sum");
    const Tensor usage = ckpt.get_tensor("rvq", p + ".usage");
    if (b.codes.shape() != Shape{m.config_.codes_per_level, m.config_.code_dim} || usage.size() != b.usage.size()) {
      throw FormatError("codebook " + std::to_string(l) + " does not match the rvq config");
    }
    for (std::size_t k = 0; k < usage.size(); ++k) b.usage[k] = static_cast<std::uint64_t>(usage[k]);
  }
  return m;
}

// ---- training ---------------------------------------------------------------------

MotionItem make_item(const MotionSequence& m) {
  return {m.frames, JointMask::valid_prefix(m.num_joints(), m.num_joints())};
}

namespace {

bool codebooks_initialized(const std::vector<Codebook>& books) {
  for (double c : books[0].ema_count.data())
    if (c != 0.0) return true;
  return false;
}

// Seeds level l from residual rows of the first batch, quantizing level by level.
void init_codebooks(std::vector<Codebook>& books, const std::vector<Tensor>& latents, Rng& rng) {
  std::vector<Tensor> residual = latents;
  for (auto& book : books) {
    std::vector<std::pair<std::size_t, std::size_t>> pool;  // (sample, row)
    double spread = 0.0;
    std::size_t count = 0;
    for (std::size_t s = 0; s < residual.size(); ++s)
      for (std::size_t r = 0; r < residual[s].rows(); ++r) {
        pool.emplace_back(s, r);
        for (double v : residual[s].row(r)) {
          spread += v * v;
          ++count;
        }
      }
    const double noise = 1e-3 * std::sqrt(spread / static_cast<double>(std::max<std::size_t>(count, 1))) + 1e-6;
    const std::size_t k_count = book.codes.rows(), dz = book.codes.cols();
    const auto order = rng.permutation(pool.size());
    for (std::size_t k = 0; k < k_count; ++k) {
      const auto [s, r] = pool[order[k % pool.size()]];
      const auto src = residual[s].row(r);
      for (std::size_t d = 0; d < dz; ++d) {
        // Repeats of the same latent get jitter so they are not exact ties.
        book.codes(k, d) = snap(src[d] + (k < pool.size() ? 0.0 : rng.normal(0.0, noise)));
        book.ema_sum(k, d) = book.codes(k, d);
      }
      book.ema_count[k] = 1.0;
    }
    for (auto& res : residual) {
      for (std::size_t r = 0; r < res.rows(); ++r) {
        const std::size_t k = nearest_code(res.row(r), book.codes);
        for (std::size_t d = 0; d < dz; ++d) res(r, d) -= book.codes(k, d);
      }
    }
  }
}

void ema_update(Codebook& book, const std::vector<std::pair<const Tensor*, const std::vector<std::size_t>*>>& batch,
                double decay) {
  const std::size_t k_count = book.codes.rows(), dz = book.codes.cols();
  Tensor counts({k_count});
  Tensor sums({k_count, dz});
  for (const auto& [res, idx] : batch) {
    for (std::size_t i = 0; i < idx->size(); ++i) {
      const std::size_t k = (*idx)[i];
      counts[k] += 1.0;
      for (std::size_t d = 0; d < dz; ++d) sums(k, d) += (*res)(i, d);
      ++book.usage[k];
      ++book.epoch_usage[k];
    }
  }
  double total = 0.0;
  for (std::size_t k = 0; k < k_count; ++k) {
    book.ema_count[k] = decay * book.ema_count[k] + (1.0 - decay) * counts[k];
    for (std::size_t d = 0; d < dz; ++d) book.ema_sum(k, d) = decay * book.ema_sum(k, d) + (1.0 - decay) * sums(k, d);
    total += book.ema_count[k];
  }
  constexpr double kLaplace = 1e-5;
  for (std::size_t k = 0; k < k_count; ++k) {
    const double smoothed = (book.ema_count[k] + kLaplace) / (total + static_cast<double>(k_count) * kLaplace) * total;
    for (std::size_t d = 0; d < dz; ++d) book.codes(k, d) = snap(book.ema_sum(k, d) / smoothed);
  }
}

}  // namespace

RvqTrainResult train_rvq(RvqModel& model, const Corpus& corpus, const RvqTrainOptions& options, Adam* optimizer) {
  const RvqConfig& cfg = model.config();
  std::vector<std::size_t> pool = options.train_split_only ? corpus.indices(Split::kTrain) : std::vector<std::size_t>{};
  if (pool.empty()) {
    pool.resize(corpus.size());
    std::iota(pool.begin(), pool.end(), 0);
  }
  if (pool.empty()) throw DataError("train_rvq: corpus is empty");
  std::vector<MotionItem> items;
  for (std::size_t i : pool) items.push_back(make_item(corpus.entries[i].motion));

  std::unique_ptr<Adam> owned;
  if (optimizer == nullptr) {
    AdamConfig ac;
    ac.lr = cfg.lr;
    owned = std::make_unique<Adam>(model.parameters(), ac);
    optimizer = owned.get();
  }
  auto& books = model.codebooks();
  RvqTrainResult result;
  const std::size_t first_epoch = options.first_epoch;
  for (std::size_t epoch = first_epoch; epoch < first_epoch + options.epochs; ++epoch) {
    Rng rng(Rng::derive(options.seed, epoch + 1));
    const auto order = rng.permutation(items.size());
    for (auto& b : books) std::fill(b.epoch_usage.begin(), b.epoch_usage.end(), 0);
    std::vector<std::vector<Tensor>> reservoir(books.size());
    RvqEpochStats stats;
    double rec_num = 0.0, rec_den = 0.0, com_num = 0.0, com_den = 0.0;
    std::size_t batches = 0;

    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      std::vector<ad::Var> latents;
      for (std::size_t b = start; b < stop; ++b) latents.push_back(model.encode(items[order[b]].x, items[order[b]].mask));
      if (!codebooks_initialized(books)) {
        std::vector<Tensor> values;
        for (const auto& z : latents) values.push_back(z.value());
        init_codebooks(books, values, rng);
      }
      std::vector<Quantized> qs;
      std::vector<RvqLossTerms> terms;
      for (std::size_t b = start; b < stop; ++b) {
        const ad::Var& z = latents[b - start];
        qs.push_back(model.quantize(z.value()));
        const Quantized& q = qs.back();
        // R_l as a function of z: z minus the (constant) codes chosen above it.
        std::vector<ad::Var> residuals;
        Tensor prefix(z.value().shape());
        for (std::size_t l = 0; l < books.size(); ++l) {
          residuals.push_back(l == 0 ? z : ad::sub(z, ad::constant(prefix)));
          for (std::size_t i = 0; i < prefix.size(); ++i) prefix[i] += q.selected[l][i];
        }
        const ad::Var zq = ad::straight_through(z, q.zhat);
        const MotionItem& item = items[order[b]];
        const ad::Var recon = model.decode_rows(zq, item.mask.valid_count());
        terms.push_back(rvq_loss_terms(item.x, recon, item.mask, residuals, q.selected));
      }
      const ad::Var loss = combine_loss(terms, cfg.beta);
      const double lv = loss.value()[0];
      if (!std::isfinite(lv)) {
        throw NumericalError("train_rvq diverged: loss is " + std::to_string(lv) + " at epoch " + std::to_string(epoch) +
                             ", batch " + std::to_string(batches));
      }
      optimizer->zero_grad();
      ad::backward(loss);
      optimizer->step();

      for (std::size_t l = 0; l < books.size(); ++l) {
        std::vector<std::pair<const Tensor*, const std::vector<std::size_t>*>> batch;
        for (const auto& q : qs) {
          batch.emplace_back(&q.residuals[l], &q.tokens.levels[l]);
          reservoir[l].push_back(q.residuals[l]);
        }
        ema_update(books[l], batch, cfg.ema_decay);
      }
      for (const auto& t : terms) {
        rec_num += t.recon_sum.value()[0];
        rec_den += t.recon_weight;
        com_num += t.commit_sum.value()[0];
        com_den += t.commit_weight;
      }
      stats.loss += lv;
      ++batches;
    }

    stats.loss /= static_cast<double>(batches);
    stats.recon_per_feature = rec_num / (rec_den + kLossEps) / static_cast<double>(kMotionFeatureWidth);
    stats.commit = com_num / (com_den + kLossEps);
    double usage = 0.0;
    for (const auto& b : books) {
      const auto used = std::count_if(b.epoch_usage.begin(), b.epoch_usage.end(), [](auto u) { return u > 0; });
      usage += static_cast<double>(used) / static_cast<double>(b.epoch_usage.size());
    }
    stats.code_usage = usage / static_cast<double>(books.size());

    // Dead codes: re-seed from latents seen this epoch.
    for (std::size_t l = 0; l < books.size(); ++l) {
      auto& b = books[l];
      for (std::size_t k = 0; k < b.codes.rows(); ++k) {
        if (b.epoch_usage[k] > 0 || reservoir[l].empty()) continue;
        const Tensor& src = reservoir[l][rng.index(reservoir[l].size())];
        const auto row = src.row(rng.index(src.rows()));
        for (std::size_t d = 0; d < b.codes.cols(); ++d) {
          b.codes(k, d) = snap(row[d]);
          b.ema_sum(k, d) = b.codes(k, d);
        }
        b.ema_count[k] = 1.0;
      }
    }
    result.history.push_back(stats);
    if (options.on_epoch) options.on_epoch(epoch, stats);
  }
  return result;
}

bool trending_down(const std::vector<RvqEpochStats>& history, std::size_t window) {
  if (window == 0 || history.size() < 2 * window) return false;
  double head = 0.0, tail = 0.0;
  for (std::size_t i = 0; i < window; ++i) {
    head += history[i].loss;
    tail += history[history.size() - 1 - i].loss;
  }
  return tail < head;
}

TokenSequences tokenize(const RvqModel& model, const MotionSequence& m, const SkeletonGraph& s) {
  if (m.num_joints() != s.size()) throw DimensionError("tokenize: motion and skeleton joint counts differ");
  const MotionItem item = make_item(m);
  return model.quantize(model.encode(item.x, item.mask).value()).tokens;
}

MotionSequence detokenize(const RvqModel& model, const TokenSequences& tokens, const SkeletonGraph& s, double fps) {
  const Tensor zhat = lookup(tokens, model.codebooks());
  const JointMask mask = JointMask::valid_prefix(s.size(), s.size());
  return MotionSequence{model.decode(zhat, mask), fps, s.species};
}

double reconstruction_error(const RvqModel& model, const MotionSequence& m) {
  const MotionItem item = make_item(m);
  const Quantized q = model.quantize(model.encode(item.x, item.mask).value());
  const Tensor recon = model.decode(q.zhat, item.mask);
  double total = 0.0;
  const std::size_t used = m.frames.size();
  for (std::size_t i = 0; i < used; ++i) total += std::fabs(recon[i] - m.frames[i]);
  return total / (static_cast<double>(m.num_frames() * m.num_joints()) + kLossEps) / static_cast<double>(kMotionFeatureWidth);
}

}  // namespace topomo::rvq
