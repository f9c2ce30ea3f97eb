// Copyright 2026 The forge authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "forge/geo.hpp"
#include "forge/nn.hpp"
#include "forge/rng.hpp"

namespace forge::vae {

inline constexpr double kLogvarClamp = 10.0;

struct ModelConfig {
  int seq_len = 64;
  int in_channels = 2;
  int hidden_channels = 64;
  int latent_dim = 100;
  double beta = 1e-3;
  int epochs = 500;
  int batch_size = 64;
  double learning_rate = 1e-3;
  // Runtime ablation switches, independent of each other.
  bool disable_conflux_ema = false;    // EMA residual -> second conv block
  bool disable_conflux_block = false;  // CEConv -> plain conv + activation
  bool disable_beta_kl = false;        // train on reconstruction loss only
  bool disable_sg_filter = false;      // smoothing stage becomes a passthrough

  void validate() const {
    if (seq_len < 4) raise(ErrorCode::ConfigInvalid, "seq_len must be >= 4");
    if (in_channels != 2) raise(ErrorCode::ConfigInvalid, "in_channels must be 2");
    if (hidden_channels < 2) {
      raise(ErrorCode::ConfigInvalid, "hidden_channels must be >= 2");
    }
    if (latent_dim < 1) raise(ErrorCode::ConfigInvalid, "latent_dim must be >= 1");
    if (!(beta >= 0.0)) raise(ErrorCode::ConfigInvalid, "beta must be >= 0");
    if (epochs < 1) raise(ErrorCode::ConfigInvalid, "epochs must be >= 1");
    if (batch_size < 1) raise(ErrorCode::ConfigInvalid, "batch_size must be >= 1");
    if (!(learning_rate > 0.0)) {
      raise(ErrorCode::ConfigInvalid, "learning_rate must be > 0");
    }
  }

  nn::CeconvBlock::Variant ceconv_variant() const {
    if (disable_conflux_block) return nn::CeconvBlock::Variant::ConvOnly;
    if (disable_conflux_ema) return nn::CeconvBlock::Variant::DoubleConv;
    return nn::CeconvBlock::Variant::Full;
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Posterior sample for one sequence.
struct LatentCode {
  std::vector<double> mu;
  std::vector<double> logvar;
  std::vector<double> z;
};

/// Everything needed to reload a trained model: configuration, named
/// parameter arrays, and the normalization bounds of the training route.
struct ModelWeights {
  ModelConfig config;
  geo::Bounds bounds;
  std::uint64_t rng_seed = 0;
  std::map<std::string, nn::Tensor> params;
};

struct LossParts {
  double total = 0.0;
  double recon = 0.0;
  double kl = 0.0;
};

struct TrainResult {
  ModelWeights weights;
  std::vector<LossParts> history;  // one entry per epoch
};

/// Sequence VAE over [B,L,2] normalized tracks. Encoder: two convolution
/// stages, a CEConv block, then dense heads for mu and logvar. Decoder mirrors
/// it with transposed convolutions and a final sigmoid, so outputs live in
/// (0,1) and denormalize directly.
class ConfluxVae {
 public:
  ConfluxVae(ModelConfig cfg, Rng& init_rng) : cfg_(std::move(cfg)) {
    cfg_.validate();
    build(init_rng);
  }

  explicit ConfluxVae(const ModelWeights& w) : cfg_(w.config) {
    cfg_.validate();
    Rng dummy(0);
    build(dummy);
    for (const auto& [name, src] : w.params) {
      if (!store_.contains(name)) {
        raise(ErrorCode::CorruptFile, "weights carry unknown parameter '" + name + "'");
      }
      nn::Tensor dst = store_.at(name);
      if (dst.shape() != src.shape()) {
        raise(ErrorCode::ShapeMismatch, "parameter '" + name + "' shape mismatch");
      }
      dst.values() = src.values();
    }
    for (const auto& [name, t] : store_.params()) {
      if (!w.params.contains(name)) {
        raise(ErrorCode::CorruptFile, "weights missing parameter '" + name + "'");
      }
    }
  }

  const ModelConfig& config() const { return cfg_; }
  nn::ParameterStore& store() { return store_; }
  const nn::ParameterStore& store() const { return store_; }
  std::size_t parameter_count() const { return store_.parameter_count(); }

  /// x is [B,L,2] with values in [0,1]. Returns (mu, logvar), both [B,J];
  /// logvar is clamped to [-kLogvarClamp, kLogvarClamp].
  std::pair<nn::Tensor, nn::Tensor> encode(const nn::Tensor& x) const {
    if (x.rank() != 3 || x.dim(1) != cfg_.seq_len || x.dim(2) != cfg_.in_channels) {
      raise(ErrorCode::ShapeMismatch,
            "encode expects [B," + std::to_string(cfg_.seq_len) + ",2]");
    }
    const int B = x.dim(0);
    nn::Tensor h = nn::transpose_12(x);  // [B,2,L]
    h = nn::relu(nn::conv1d(h, enc_conv1_k_, enc_conv1_b_));
    h = nn::relu(nn::conv1d(h, enc_conv2_k_, enc_conv2_b_));
    h = enc_ce_.forward(h);
    nn::Tensor flat = nn::reshape(h, {B, cfg_.hidden_channels * cfg_.seq_len});
    nn::Tensor mu = nn::dense(flat, enc_mu_w_, enc_mu_b_);
    nn::Tensor logvar = nn::clamp(nn::dense(flat, enc_logvar_w_, enc_logvar_b_),
                                  -kLogvarClamp, kLogvarClamp);
    return {mu, logvar};
  }

  /// z is [B,J]. Returns [B,L,2] with every entry in (0,1).
  nn::Tensor decode(const nn::Tensor& z) const {
    if (z.rank() != 2 || z.dim(1) != cfg_.latent_dim) {
      raise(ErrorCode::ShapeMismatch,
            "decode expects [B," + std::to_string(cfg_.latent_dim) + "]");
    }
    const int B = z.dim(0);
    nn::Tensor h = nn::dense(z, dec_fc_w_, dec_fc_b_);
    h = nn::reshape(h, {B, cfg_.hidden_channels, cfg_.seq_len});
    h = dec_ce_.forward(h);
    h = nn::relu(nn::conv1d_transpose(h, dec_tconv1_k_, dec_tconv1_b_));
    h = nn::sigmoid(nn::conv1d_transpose(h, dec_tconv2_k_, dec_tconv2_b_));
    return nn::transpose_12(h);  // [B,L,2]
  }

  /// Effective KL weight: 0 under disable_beta_kl, so total collapses to the
  /// reconstruction loss alone.
  double effective_beta() const { return cfg_.disable_beta_kl ? 0.0 : cfg_.beta; }

  /// total = mse + beta_eff * kl. The KL term stays in the graph even at
  /// weight 0 so every parameter receives a (possibly zero) gradient; adding
  /// 0 * kl leaves the total bitwise equal to the reconstruction loss.
  std::pair<nn::Tensor, LossParts> total_loss(const nn::Tensor& x,
                                              const nn::Tensor& x_hat,
                                              const nn::Tensor& mu,
                                              const nn::Tensor& logvar) const {
    nn::Tensor recon = nn::mse_loss(x, x_hat);
    nn::Tensor kl = nn::kl_loss(mu, logvar);
    LossParts parts;
    parts.recon = recon.value();
    parts.kl = kl.value();
    nn::Tensor total = nn::add(recon, nn::scale(kl, effective_beta()));
    parts.total = total.value();
    return {total, parts};
  }

 private:
  void build(Rng& rng) {
    const int C = cfg_.hidden_channels;
    const int L = cfg_.seq_len;
    const int J = cfg_.latent_dim;
    constexpr int k = 3;
    const auto variant = cfg_.ceconv_variant();

    enc_conv1_k_ = store_.create(
        "enc.conv1.k", nn::glorot_uniform({C, cfg_.in_channels, k},
                                          cfg_.in_channels * k, C * k, rng));
    enc_conv1_b_ = store_.create("enc.conv1.b", nn::Tensor::zeros({C}));
    enc_conv2_k_ = store_.create(
        "enc.conv2.k", nn::glorot_uniform({C, C, k}, C * k, C * k, rng));
    enc_conv2_b_ = store_.create("enc.conv2.b", nn::Tensor::zeros({C}));
    enc_ce_ = nn::CeconvBlock::create(store_, "enc.ce", C, variant, rng);
    enc_mu_w_ = store_.create("enc.mu.w",
                              nn::glorot_uniform({C * L, J}, C * L, J, rng));
    enc_mu_b_ = store_.create("enc.mu.b", nn::Tensor::zeros({J}));
    enc_logvar_w_ = store_.create("enc.logvar.w",
                                  nn::glorot_uniform({C * L, J}, C * L, J, rng));
    enc_logvar_b_ = store_.create("enc.logvar.b", nn::Tensor::zeros({J}));

    dec_fc_w_ = store_.create("dec.fc.w",
                              nn::glorot_uniform({J, C * L}, J, C * L, rng));
    dec_fc_b_ = store_.create("dec.fc.b", nn::Tensor::zeros({C * L}));
    dec_ce_ = nn::CeconvBlock::create(store_, "dec.ce", C, variant, rng);
    dec_tconv1_k_ = store_.create(
        "dec.tconv1.k", nn::glorot_uniform({C, C, k}, C * k, C * k, rng));
    dec_tconv1_b_ = store_.create("dec.tconv1.b", nn::Tensor::zeros({C}));
    dec_tconv2_k_ = store_.create(
        "dec.tconv2.k", nn::glorot_uniform({C, cfg_.in_channels, k}, C * k,
                                           cfg_.in_channels * k, rng));
    dec_tconv2_b_ = store_.create("dec.tconv2.b",
                                  nn::Tensor::zeros({cfg_.in_channels}));
  }

  ModelConfig cfg_;
  nn::ParameterStore store_;
  nn::Tensor enc_conv1_k_, enc_conv1_b_, enc_conv2_k_, enc_conv2_b_;
  nn::CeconvBlock enc_ce_;
  nn::Tensor enc_mu_w_, enc_mu_b_, enc_logvar_w_, enc_logvar_b_;
  nn::Tensor dec_fc_w_, dec_fc_b_;
  nn::CeconvBlock dec_ce_;
  nn::Tensor dec_tconv1_k_, dec_tconv1_b_, dec_tconv2_k_, dec_tconv2_b_;
};

/// z = mu + exp(0.5 * logvar) * eps with the given eps (recorded noise).
/// Differentiable through mu and logvar.
inline nn::Tensor reparameterize(const nn::Tensor& mu, const nn::Tensor& logvar,
                                 const nn::Tensor& eps) {
  return nn::add(mu, nn::mul(nn::exp_elem(nn::scale(logvar, 0.5)), eps));
}

/// Convenience overload drawing eps ~ N(0, I) from `rng`.
inline nn::Tensor reparameterize(const nn::Tensor& mu, const nn::Tensor& logvar,
                                 Rng& rng) {
  std::vector<double> eps(mu.size());
  for (auto& e : eps) e = rng.normal();
  return reparameterize(mu, logvar, nn::Tensor(mu.shape(), std::move(eps)));
}

namespace detail {

/// Stacks normalized sequences (selected by `indices`) into a [B,L,2] tensor.
inline nn::Tensor stack_batch(const std::vector<geo::NormalizedSequence>& seqs,
                              const std::vector<std::size_t>& indices, int L) {
  const int B = static_cast<int>(indices.size());
  std::vector<double> data(static_cast<std::size_t>(B) * L * 2);
  for (int b = 0; b < B; ++b) {
    const auto& seq = seqs[indices[static_cast<std::size_t>(b)]];
    for (int t = 0; t < L; ++t) {
      data[(static_cast<std::size_t>(b) * L + t) * 2 + 0] = seq.values[t][0];
      data[(static_cast<std::size_t>(b) * L + t) * 2 + 1] = seq.values[t][1];
    }
  }
  return nn::Tensor({B, L, 2}, std::move(data));
}

}  // namespace detail

/// Trains a fresh model on the route dataset. One seeded stream drives
/// initialization, epoch shuffles, and reparameterization noise, in that
/// order, so identical seeds reproduce identical weights and history.
///
/// When the effective KL weight is zero (beta = 0 or disable_beta_kl) the
/// posterior noise has no objective to serve, so the forward pass uses the
/// deterministic z = mu instead of sampling; the model trains as a plain
/// autoencoder.
inline TrainResult train(const geo::RouteDataset& ds, const ModelConfig& cfg_in,
                         std::uint64_t seed) {
  ModelConfig cfg = cfg_in;
  cfg.validate();
  if (ds.trajectories.empty()) {
    raise(ErrorCode::EmptyDataset, "training dataset is empty");
  }
  if (ds.length() != static_cast<std::size_t>(cfg.seq_len)) {
    raise(ErrorCode::ShapeMismatch,
          "dataset length " + std::to_string(ds.length()) +
              " does not match configured seq_len " + std::to_string(cfg.seq_len));
  }

  Rng rng(seed);
  ConfluxVae model(cfg, rng);

  std::vector<geo::NormalizedSequence> seqs;
  seqs.reserve(ds.size());
  for (const auto& traj : ds.trajectories) {
    seqs.push_back(geo::normalize(traj, ds.bounds));
  }

  const std::size_t n = seqs.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  TrainResult result;
  result.history.reserve(static_cast<std::size_t>(cfg.epochs));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    LossParts epoch_loss;
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(n, start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                     order.begin() + static_cast<std::ptrdiff_t>(stop));
      nn::Tensor x = detail::stack_batch(seqs, batch, cfg.seq_len);
      auto [mu, logvar] = model.encode(x);
      nn::Tensor z = model.effective_beta() > 0.0 ? reparameterize(mu, logvar, rng)
                                                  : mu;
      nn::Tensor x_hat = model.decode(z);
      auto [total, parts] = model.total_loss(x, x_hat, mu, logvar);
      model.store().zero_grad();
      total.backward();
      nn::adam_step(model.store(), cfg.learning_rate);
      const double w = static_cast<double>(batch.size()) / static_cast<double>(n);
      epoch_loss.total += w * parts.total;
      epoch_loss.recon += w * parts.recon;
      epoch_loss.kl += w * parts.kl;
    }
    result.history.push_back(epoch_loss);
  }

  result.weights.config = cfg;
  result.weights.bounds = ds.bounds;
  result.weights.rng_seed = seed;
  for (const auto& [name, t] : model.store().params()) {
    result.weights.params.emplace(name, nn::Tensor(t.shape(), t.values()));
  }
  return result;
}

/// Samples `count` trajectories from the prior. Each trajectory i is decoded
/// on its own (batch size 1) from a stream seeded with
/// derive_seed(seed, start_index + i), so generating 100 tracks in one call
/// is bitwise identical to two calls of 50 with start_index 0 and 50.
/// Timestamps start at 0 with the given dt.
inline std::vector<geo::Trajectory> generate(const ModelWeights& weights,
                                             std::size_t count, std::uint64_t seed,
                                             std::size_t start_index = 0,
                                             double dt = 10.0) {
  if (count < 1) raise(ErrorCode::InvalidArgument, "count must be >= 1");
  ConfluxVae model(weights);
  const int J = weights.config.latent_dim;
  const int L = weights.config.seq_len;
  std::vector<geo::Trajectory> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t index = start_index + i;
    Rng rng(derive_seed(seed, index));
    std::vector<double> z(static_cast<std::size_t>(J));
    for (auto& v : z) v = rng.normal();
    nn::Tensor decoded = model.decode(nn::Tensor({1, J}, std::move(z)));
    geo::NormalizedSequence seq;
    seq.source_bounds = weights.bounds;
    seq.values.resize(static_cast<std::size_t>(L));
    for (int t = 0; t < L; ++t) {
      seq.values[static_cast<std::size_t>(t)] = {
          decoded.data()[static_cast<std::size_t>(t) * 2 + 0],
          decoded.data()[static_cast<std::size_t>(t) * 2 + 1]};
    }
    char id[32];
    std::snprintf(id, sizeof(id), "gen-%06zu", index);
    out.push_back(geo::denormalize(seq, dt, id));
  }
  return out;
}

}  // namespace forge::vae
