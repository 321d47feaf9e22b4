// Copyright 2026 The topomo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "topomo/io/checkpoint.hpp"
#include "topomo/motion/corpus.hpp"
#include "topomo/numerics/autodiff.hpp"
#include "topomo/numerics/nn.hpp"
#include "topomo/numerics/optim.hpp"
#include "topomo/skeleton/skeleton.hpp"

namespace topomo::rvq {

struct RvqConfig {
  std::size_t levels = 6;            // L
  std::size_t codes_per_level = 64;  // K_l (full scale: 512)
  std::size_t code_dim = 32;         // d_z
  std::size_t temporal_downsample = 2;
  double beta = 0.25;
  std::size_t channels = 128;     // encoder/decoder temporal width
  std::size_t head_hidden = 128;  // per-joint decoder head width
  std::size_t max_joints = 64;    // joint-slot embedding table size
  double ema_decay = 0.99;
  double lr = 1e-3;
  std::size_t batch_size = 4;

  void validate() const;
  nlohmann::json to_json() const;
  static RvqConfig from_json(const nlohmann::json& j);
};

/// Token indices per level: levels[v][i], v in [0, L), i in [0, n).
struct TokenSequences {
  std::vector<std::vector<std::size_t>> levels;
  std::size_t length() const { return levels.empty() ? 0 : levels[0].size(); }

  friend bool operator==(const TokenSequences&, const TokenSequences&) = default;
};

struct Codebook {
  Tensor codes;      // (K, d_z), lattice-valued
  Tensor ema_count;  // (K)
  Tensor ema_sum;    // (K, d_z)
  std::vector<std::uint64_t> usage;        // assignments since training began
  std::vector<std::uint64_t> epoch_usage;  // assignments in the current epoch
};

struct Quantized {
  TokenSequences tokens;
  std::vector<Tensor> residuals;  // R_1 .. R_{L+1}
  std::vector<Tensor> selected;   // R̂_1 .. R̂_L
  Tensor zhat;                    // sum of R̂_l
};

// Latents and codes live on a 2^-32 lattice with |x| < 2^20 so that residual
// subtraction and accumulation are exact in float64.
inline constexpr double kLatticeStep = 1.0 / 4294967296.0;
inline constexpr double kLatticeLimit = 1048575.0;
double snap(double x);
Tensor snap(const Tensor& t);

/// argmin_k ||r - codes[k]||^2 with ties resolved to the lowest index.
std::size_t nearest_code(std::span<const double> r, const Tensor& codes);

/// Residual quantization of (n, d_z) latents against the given codebooks.
Quantized quantize(const Tensor& z, std::span<const Codebook> books);

/// Sum of the selected codes; throws DataError on out-of-range indices.
Tensor lookup(const TokenSequences& tokens, std::span<const Codebook> books);

/// Valid-joint rows of a (T, J_max, d) tensor, as a (T*K, d) matrix.
Tensor valid_rows(const Tensor& x, const JointMask& mask);
/// Inverse of valid_rows for `frames` frames; padded slots are zero.
Tensor scatter_rows(const Tensor& rows, const JointMask& mask, std::size_t frames);

struct RvqLossTerms {
  ad::Var recon_sum;       // sum over valid (t, j) of ||x - x̂||_1
  double recon_weight = 0;  // sum of mask entries
  ad::Var commit_sum;      // sum over levels of masked ||R_l - sg[R̂_l]||^2
  double commit_weight = 0;
};

inline constexpr double kLossEps = 1e-8;

/// Masked terms for one sample. `target` is (T, J_max, d); `recon` holds the
/// decoder's valid-joint rows frame-major (at least T frames); `residuals`
/// are R_l as functions of the latent and `selected` the constant R̂_l.
/// The pooled latent is broadcast over the valid joints, so each latent
/// position carries weight K in the commitment sums.
RvqLossTerms rvq_loss_terms(const Tensor& target, const ad::Var& recon, const JointMask& mask,
                            std::span<const ad::Var> residuals, std::span<const Tensor> selected);

/// recon_sum / (recon_weight + eps) + beta * commit_sum / (commit_weight + eps), summed across the batch.
ad::Var combine_loss(std::span<const RvqLossTerms> terms, double beta);

ad::Var rvq_loss(const Tensor& target, const ad::Var& recon, const JointMask& mask, std::span<const ad::Var> residuals,
                 std::span<const Tensor> selected, double beta);

class RvqModel {
 public:
  static RvqModel init(const RvqConfig& config, std::uint64_t seed);

  const RvqConfig& config() const { return config_; }

  /// (T, J_max, d) input -> (n, d_z) latent with n = ceil(T / 2). Values are
  /// lattice-snapped; the gradient passes straight through the snap.
  /// `snap_latent = false` skips the snap (used by finite-difference checks).
  ad::Var encode(const Tensor& x, const JointMask& mask, bool snap_latent = true) const;

  /// Decoder over valid joints only: (2n * K, d) rows, frame-major.
  ad::Var decode_rows(const ad::Var& zhat, std::size_t valid_joints) const;
  /// (2n, J_max, d) with padded joints exactly zero.
  Tensor decode(const Tensor& zhat, const JointMask& mask) const;

  Quantized quantize(const Tensor& z) const { return rvq::quantize(z, books_); }

  std::vector<Codebook>& codebooks() { return books_; }
  const std::vector<Codebook>& codebooks() const { return books_; }

  ad::NamedParams parameters() const;

  void save(io::Checkpoint& ckpt) const;
  static RvqModel load(const io::Checkpoint& ckpt);

 private:
  RvqConfig config_;
  // encoder
  nn::Linear in_proj_;
  ad::Var slot_embed_;
  nn::Linear enc_conv_, enc_down_, enc_out_;
  // decoder
  nn::Linear dec_in_, dec_conv_, dec_up_;
  ad::Var dec_up_bias_;
  nn::Linear dec_post_, head_in_;
  ad::Var head_scale_, head_slot_;  // per-joint modulation of the frame features
  nn::Linear head_mid_, head_out_;
  std::vector<Codebook> books_;
};

struct RvqEpochStats {
  double loss = 0;
  double recon_per_feature = 0;  // masked L1 / d
  double commit = 0;
  double code_usage = 0;  // fraction of codes used this epoch, averaged over levels
};

struct RvqTrainOptions {
  std::size_t epochs = 100;
  std::size_t first_epoch = 0;  // nonzero when resuming
  std::uint64_t seed = 0;
  bool train_split_only = true;
  std::function<void(std::size_t epoch, const RvqEpochStats&)> on_epoch;
};

struct RvqTrainResult {
  std::vector<RvqEpochStats> history;
};

/// Sample layout used for training and tokenization: frames (T, K, d) with an all-ones mask.
struct MotionItem {
  Tensor x;
  JointMask mask;
};
MotionItem make_item(const MotionSequence& m);

/// Trains `model` in place. Codebooks are seeded from the first batch and then
/// updated by EMA; codes unused for a whole epoch are re-seeded from latents of
/// that epoch. Throws NumericalError if the loss becomes non-finite.
RvqTrainResult train_rvq(RvqModel& model, const Corpus& corpus, const RvqTrainOptions& options, Adam* optimizer = nullptr);

/// Mean of the last `window` losses is below the mean of the first `window`.
bool trending_down(const std::vector<RvqEpochStats>& history, std::size_t window);

TokenSequences tokenize(const RvqModel& model, const MotionSequence& m, const SkeletonGraph& s);
/// Decoded motion with 2n frames; rotations are raw decoder output.
MotionSequence detokenize(const RvqModel& model, const TokenSequences& tokens, const SkeletonGraph& s, double fps = 30.0);

/// Masked L1 per feature of the model's reconstruction of `m`.
double reconstruction_error(const RvqModel& model, const MotionSequence& m);

}  // namespace topomo::rvq
