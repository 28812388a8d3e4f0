// Copyright 2026 The dmvqe Authors
// SPDX-License-Identifier: Apache-2.0

// Conditional denoising diffusion over L x N parameter grids: linear noise
// schedule, a small U-Net noise predictor, training, ancestral sampling and
// best-of-k selection, plus checkpoint persistence.

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dmvqe/conditioning.hpp"
#include "dmvqe/dataset.hpp"
#include "dmvqe/error.hpp"
#include "dmvqe/layers.hpp"
#include "dmvqe/optim.hpp"
#include "dmvqe/rng.hpp"
#include "dmvqe/simulator.hpp"
#include "dmvqe/tensor.hpp"

namespace dmvqe {

// ---------------------------------------------------------------------------
// Schedule and closed-form steps

/// Steps are 1-based: betas[t - 1] is beta_t.
struct NoiseSchedule {
  int T = 0;
  double beta_start = 0.0;
  double beta_end = 0.0;
  std::vector<double> betas;
  std::vector<double> alphas;
  std::vector<double> alpha_bars;

  double beta(int t) const { return betas.at(static_cast<std::size_t>(t - 1)); }
  double alpha(int t) const { return alphas.at(static_cast<std::size_t>(t - 1)); }
  double alpha_bar(int t) const { return alpha_bars.at(static_cast<std::size_t>(t - 1)); }

  void check_step(int t) const {
    if (t < 1 || t > T) throw InvalidArgument("diffusion step " + std::to_string(t) + " outside [1, " + std::to_string(T) + "]");
  }
};

inline NoiseSchedule make_linear_schedule(int T, double beta_start, double beta_end) {
  if (T < 1) throw InvalidArgument("schedule needs T >= 1");
  if (!(beta_start > 0.0 && beta_start < beta_end && beta_end < 1.0)) {
    throw InvalidArgument("schedule needs 0 < beta_start < beta_end < 1");
  }
  NoiseSchedule s;
  s.T = T;
  s.beta_start = beta_start;
  s.beta_end = beta_end;
  double prod = 1.0;
  for (int i = 0; i < T; ++i) {
    const double b = T == 1 ? beta_start : beta_start + (beta_end - beta_start) * i / (T - 1);
    s.betas.push_back(b);
    s.alphas.push_back(1.0 - b);
    prod *= 1.0 - b;
    s.alpha_bars.push_back(prod);
  }
  return s;
}

inline void to_json(nlohmann::json& j, const NoiseSchedule& s) {
  j = {{"T", s.T}, {"beta_start", s.beta_start}, {"beta_end", s.beta_end}};
}

inline NoiseSchedule schedule_from_json(const nlohmann::json& j) {
  return make_linear_schedule(j.at("T").get<int>(), j.at("beta_start").get<double>(), j.at("beta_end").get<double>());
}

/// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps.
inline std::vector<double> forward_noise(std::span<const double> x0, int t, std::span<const double> eps, const NoiseSchedule& s) {
  s.check_step(t);
  if (x0.size() != eps.size()) throw InvalidArgument("forward_noise: x0 and eps sizes differ");
  const double a = std::sqrt(s.alpha_bar(t)), b = std::sqrt(1.0 - s.alpha_bar(t));
  std::vector<double> out(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) out[i] = a * x0[i] + b * eps[i];
  return out;
}

/// (x_t - (1 - alpha_t) / sqrt(1 - abar_t) * eps_hat) / sqrt(alpha_t), plus
/// sqrt(beta_t) z when t > 1 and noise is enabled.
inline std::vector<double> reverse_step(std::span<const double> x_t, int t, std::span<const double> eps_hat, std::span<const double> z,
                                        const NoiseSchedule& s, bool add_noise = true) {
  s.check_step(t);
  if (x_t.size() != eps_hat.size()) throw InvalidArgument("reverse_step: x_t and eps_hat sizes differ");
  const bool noisy = add_noise && t > 1;
  if (noisy && z.size() != x_t.size()) throw InvalidArgument("reverse_step: noise draw size differs");
  const double inv_sqrt_alpha = 1.0 / std::sqrt(s.alpha(t));
  const double coef = (1.0 - s.alpha(t)) / std::sqrt(1.0 - s.alpha_bar(t));
  const double sigma = std::sqrt(s.beta(t));
  std::vector<double> out(x_t.size());
  for (std::size_t i = 0; i < x_t.size(); ++i) {
    out[i] = inv_sqrt_alpha * (x_t[i] - coef * eps_hat[i]);
    if (noisy) out[i] += sigma * z[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Noise predictor

struct UNetConfig {
  int layers = 10;  // grid rows (circuit layers)
  int qubits = 6;   // grid columns
  int base_width = 32;
  int groups = 8;
  int time_dim = 128;
  int emb_dim = 128;
  int cond_dim = static_cast<int>(kEmbeddingDim);

  int padded_rows() const { return layers + layers % 2; }
  int padded_cols() const { return qubits + qubits % 2; }

  void validate() const {
    if (layers < 1 || qubits < 1) throw InvalidArgument("U-Net grid dimensions must be positive");
    if (base_width < 1 || groups < 1 || base_width % groups != 0) throw InvalidArgument("base_width must be a positive multiple of groups");
    if (time_dim < 2 || time_dim % 2 != 0) throw InvalidArgument("time_dim must be even");
    if (emb_dim < 1 || cond_dim < 1) throw InvalidArgument("embedding dimensions must be positive");
  }

  friend bool operator==(const UNetConfig&, const UNetConfig&) = default;
};

inline void to_json(nlohmann::json& j, const UNetConfig& c) {
  j = {{"kind", "unet"}, {"layers", c.layers}, {"qubits", c.qubits}, {"base_width", c.base_width}, {"groups", c.groups},
       {"time_dim", c.time_dim}, {"emb_dim", c.emb_dim}, {"cond_dim", c.cond_dim}};
}

inline void from_json(const nlohmann::json& j, UNetConfig& c) {
  if (j.value("kind", std::string("unet")) != "unet") throw InvalidArgument("unsupported architecture kind");
  c = UNetConfig{};
  c.layers = j.at("layers").get<int>();
  c.qubits = j.at("qubits").get<int>();
  c.base_width = j.value("base_width", c.base_width);
  c.groups = j.value("groups", c.groups);
  c.time_dim = j.value("time_dim", c.time_dim);
  c.emb_dim = j.value("emb_dim", c.emb_dim);
  c.cond_dim = j.value("cond_dim", c.cond_dim);
  c.validate();
}

/// Sinusoidal embedding of integer steps: [sin(t f_i), cos(t f_i)] with
/// f_i = 10000^(-i / (dim/2)).
inline std::vector<float> timestep_embedding(std::span<const int> steps, int dim) {
  const int half = dim / 2;
  std::vector<float> out(steps.size() * static_cast<std::size_t>(dim));
  for (std::size_t b = 0; b < steps.size(); ++b)
    for (int i = 0; i < half; ++i) {
      const double f = std::exp(-std::log(10000.0) * i / half);
      const double a = steps[b] * f;
      out[b * dim + i] = static_cast<float>(std::sin(a));
      out[b * dim + half + i] = static_cast<float>(std::cos(a));
    }
  return out;
}

namespace detail {

// GN -> SiLU -> conv, add projected embedding per channel, GN -> SiLU -> conv,
// plus a (1x1-projected when widths differ) residual.
struct ResBlock {
  nn::GroupNorm norm1;
  nn::Conv2d conv1;
  nn::Linear emb_proj;
  nn::GroupNorm norm2;
  nn::Conv2d conv2;
  std::optional<nn::Conv2d> skip;

  ResBlock(nn::ParameterSet& ps, const std::string& name, int in, int out, int emb_dim, int groups, Rng& rng)
      : norm1(ps, name + ".norm1", in, groups),
        conv1(ps, name + ".conv1", in, out, 3, rng),
        emb_proj(ps, name + ".emb", emb_dim, out, rng),
        norm2(ps, name + ".norm2", out, groups),
        conv2(ps, name + ".conv2", out, out, 3, rng) {
    if (in != out) skip.emplace(ps, name + ".skip", in, out, 1, rng);
  }

  nn::Tensor operator()(const nn::Tensor& x, const nn::Tensor& emb) const {
    nn::Tensor h = conv1(nn::silu(norm1(x)));
    h = nn::add_channel_bias(h, emb_proj(emb));
    h = conv2(nn::silu(norm2(h)));
    return nn::add(h, skip ? (*skip)(x) : x);
  }
};

}  // namespace detail

/// Encoder-decoder over the (padded) grid with one down/up resolution step:
/// conv_in, two blocks at full resolution, average-pool, two blocks at double
/// width, nearest upsample, concatenation with the full-resolution skip, two
/// blocks, GN -> SiLU -> conv_out. The step embedding (MLP over sinusoidal
/// features) plus a projection of the prompt embedding feeds every block.
class NoisePredictor {
 public:
  NoisePredictor(const UNetConfig& config, std::uint64_t seed) : config_(config), seed_(seed) {
    config.validate();
    Rng rng(seed);
    const int C = config.base_width, E = config.emb_dim, G = config.groups;
    time1_ = nn::Linear(ps_, "time.fc1", config.time_dim, E, rng);
    time2_ = nn::Linear(ps_, "time.fc2", E, E, rng);
    cond_ = nn::Linear(ps_, "cond.proj", config.cond_dim, E, rng);
    conv_in_ = nn::Conv2d(ps_, "conv_in", 1, C, 3, rng);
    blocks_.emplace_back(ps_, "down0.block0", C, C, E, G, rng);
    blocks_.emplace_back(ps_, "down0.block1", C, C, E, G, rng);
    blocks_.emplace_back(ps_, "down1.block0", C, 2 * C, E, G, rng);
    blocks_.emplace_back(ps_, "down1.block1", 2 * C, 2 * C, E, G, rng);
    blocks_.emplace_back(ps_, "up0.block0", 3 * C, C, E, G, rng);
    blocks_.emplace_back(ps_, "up0.block1", C, C, E, G, rng);
    norm_out_ = nn::GroupNorm(ps_, "norm_out", C, G);
    conv_out_ = nn::Conv2d(ps_, "conv_out", C, 1, 3, rng);
  }

  NoisePredictor(const NoisePredictor&) = delete;
  NoisePredictor& operator=(const NoisePredictor&) = delete;
  NoisePredictor(NoisePredictor&&) = default;
  NoisePredictor& operator=(NoisePredictor&&) = default;

  const UNetConfig& config() const noexcept { return config_; }
  std::uint64_t seed() const noexcept { return seed_; }
  nn::ParameterSet& parameters() noexcept { return ps_; }
  const nn::ParameterSet& parameters() const noexcept { return ps_; }

  /// x: [B, 1, layers, qubits]; cond: [B, cond_dim]; one step per sample.
  nn::Tensor forward(const nn::Tensor& x, std::span<const int> steps, const nn::Tensor& cond) const {
    const int B = x.dim(0);
    if (x.shape() != nn::Shape{B, 1, config_.layers, config_.qubits}) {
      throw InvalidArgument("noise predictor input " + nn::shape_str(x.shape()) + " does not match grid " +
                            std::to_string(config_.layers) + "x" + std::to_string(config_.qubits));
    }
    if (static_cast<int>(steps.size()) != B || cond.shape() != nn::Shape{B, config_.cond_dim}) {
      throw InvalidArgument("noise predictor step / condition batch mismatch");
    }
    const nn::Tensor temb = nn::Tensor::from({B, config_.time_dim}, timestep_embedding(steps, config_.time_dim));
    const nn::Tensor emb = nn::silu(nn::add(time2_(nn::silu(time1_(temb))), cond_(cond)));

    const nn::Tensor xp = nn::pad_to(x, config_.padded_rows(), config_.padded_cols());
    nn::Tensor h = conv_in_(xp);
    h = blocks_[0](h, emb);
    const nn::Tensor skip = blocks_[1](h, emb);
    h = nn::avg_pool2(skip);
    h = blocks_[2](h, emb);
    h = blocks_[3](h, emb);
    h = nn::concat_channels(nn::upsample_nearest2(h), skip);
    h = blocks_[4](h, emb);
    h = blocks_[5](h, emb);
    h = conv_out_(nn::silu(norm_out_(h)));
    return nn::crop(h, config_.layers, config_.qubits);
  }

 private:
  UNetConfig config_;
  std::uint64_t seed_;
  nn::ParameterSet ps_;
  nn::Linear time1_, time2_, cond_;
  nn::Conv2d conv_in_;
  std::vector<detail::ResBlock> blocks_;
  nn::GroupNorm norm_out_;
  nn::Conv2d conv_out_;
};

/// A trained predictor together with the schedule it was trained under.
struct DiffusionModel {
  NoisePredictor net;
  NoiseSchedule schedule;
};

// ---------------------------------------------------------------------------
// Checkpoints: one JSON header line, then every parameter tensor in
// declaration order as little-endian float32.

inline constexpr int kCheckpointVersion = 1;

inline void write_checkpoint(std::ostream& out, const DiffusionModel& m) {
  static_assert(std::endian::native == std::endian::little, "checkpoint writer assumes a little-endian host");
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& p : m.net.parameters().entries()) tensors.push_back({{"name", p.name}, {"shape", p.tensor.shape()}});
  const nlohmann::json header = {{"format", "dmvqe-checkpoint"}, {"version", kCheckpointVersion}, {"architecture", m.net.config()},
                                 {"seed", m.net.seed()}, {"schedule", m.schedule}, {"tensors", tensors}};
  out << header.dump() << '\n';
  for (const auto& p : m.net.parameters().entries()) {
    out.write(reinterpret_cast<const char*>(p.tensor.data().data()), static_cast<std::streamsize>(p.tensor.numel() * sizeof(float)));
  }
}

inline DiffusionModel read_checkpoint(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("missing checkpoint header", 1);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(e.what(), 1);
  }
  if (header.value("format", std::string()) != "dmvqe-checkpoint") throw ParseError("not a dmvqe checkpoint", 1);
  if (header.value("version", 0) != kCheckpointVersion) throw ParseError("unsupported checkpoint version", 1);
  DiffusionModel m{NoisePredictor(header.at("architecture").get<UNetConfig>(), header.at("seed").get<std::uint64_t>()),
                   schedule_from_json(header.at("schedule"))};
  const auto& declared = header.at("tensors");
  const auto& entries = m.net.parameters().entries();
  if (declared.size() != entries.size()) throw ParseError("checkpoint tensor count does not match architecture", 1);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& p = entries[i];
    if (declared[i].at("name").get<std::string>() != p.name || declared[i].at("shape").get<nn::Shape>() != p.tensor.shape()) {
      throw ParseError("checkpoint tensor " + p.name + " does not match architecture", 1);
    }
    auto data = const_cast<nn::Tensor&>(p.tensor).data();
    if (!in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(float)))) {
      throw ParseError("truncated checkpoint payload in " + p.name, 0);
    }
  }
  return m;
}

inline void save_checkpoint(const DiffusionModel& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_checkpoint(out, m);
  if (!out) throw std::runtime_error("failed writing " + path);
}

inline DiffusionModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StagedArtifactError(path);
  return read_checkpoint(in);
}

/// FNV-1a over the serialized checkpoint, as 16 hex digits.
inline std::string model_hash(const DiffusionModel& m) {
  std::ostringstream ss;
  write_checkpoint(ss, m);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(ss.str())));
  return buf;
}

// ---------------------------------------------------------------------------
// Training

struct DMTrainingConfig {
  int epochs = 2000;
  int batch_size = 16;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  int T = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  int base_width = 32;
  int groups = 8;
  std::string lr_schedule = "constant";  // or "cosine": decays to 0 over all steps

  void validate() const {
    if (epochs < 1 || batch_size < 1) throw InvalidArgument("epochs and batch_size must be positive");
    if (!(learning_rate > 0.0)) throw InvalidArgument("learning_rate must be positive");
    if (lr_schedule != "constant" && lr_schedule != "cosine") throw InvalidArgument("lr_schedule must be constant or cosine");
    make_linear_schedule(T, beta_start, beta_end);
  }

  double learning_rate_at(long step, long total_steps) const {
    if (lr_schedule == "constant" || total_steps <= 1) return learning_rate;
    return 0.5 * learning_rate * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / static_cast<double>(total_steps)));
  }
};

inline void to_json(nlohmann::json& j, const DMTrainingConfig& c) {
  j = {{"epochs", c.epochs}, {"batch_size", c.batch_size}, {"learning_rate", c.learning_rate}, {"seed", c.seed}, {"T", c.T},
       {"beta_start", c.beta_start}, {"beta_end", c.beta_end}, {"base_width", c.base_width}, {"groups", c.groups},
       {"lr_schedule", c.lr_schedule}};
}

inline void from_json(const nlohmann::json& j, DMTrainingConfig& c) {
  c = DMTrainingConfig{};
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.seed = j.value("seed", c.seed);
  c.T = j.value("T", c.T);
  c.beta_start = j.value("beta_start", c.beta_start);
  c.beta_end = j.value("beta_end", c.beta_end);
  c.base_width = j.value("base_width", c.base_width);
  c.groups = j.value("groups", c.groups);
  c.lr_schedule = j.value("lr_schedule", c.lr_schedule);
  c.validate();
}

struct TrainResult {
  DiffusionModel model;
  std::vector<double> loss_trace;  // mean batch loss per epoch
};

/// Epsilon-prediction MSE over uniformly drawn steps and Gaussian noise.
/// `progress`, when set, is called after every epoch with (epoch, loss).
inline TrainResult train_dm(std::span<const LabelRecord> data, const DMTrainingConfig& config,
                            const std::function<void(int, double)>& progress = {}) {
  config.validate();
  if (data.empty()) throw InvalidArgument("cannot train on an empty dataset");
  const int L = data[0].params.layers(), N = data[0].params.qubits();
  for (const auto& r : data) {
    if (r.params.layers() != L || r.params.qubits() != N) throw InvalidArgument("dataset grids have inconsistent shapes");
    if (r.embedding.size() != kEmbeddingDim) throw InvalidArgument("dataset embedding has the wrong dimension");
  }
  if (static_cast<std::size_t>(config.batch_size) > data.size()) throw InvalidArgument("batch_size exceeds dataset size");
  UNetConfig arch;
  arch.layers = L;
  arch.qubits = N;
  arch.base_width = config.base_width;
  arch.groups = config.groups;
  Rng rng(config.seed);
  TrainResult result{DiffusionModel{NoisePredictor(arch, derive_seed(config.seed, {0})), make_linear_schedule(config.T, config.beta_start, config.beta_end)}, {}};
  auto& net = result.model.net;
  const auto& sched = result.model.schedule;
  nn::Adam opt(net.parameters().tensors(), AdamHyper{config.learning_rate});
  const std::size_t G = static_cast<std::size_t>(L) * N;
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  const long batches_per_epoch = static_cast<long>((data.size() + static_cast<std::size_t>(config.batch_size) - 1) / static_cast<std::size_t>(config.batch_size));
  const long total_steps = batches_per_epoch * config.epochs;
  long step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
    double epoch_loss = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t B = std::min(order.size() - start, static_cast<std::size_t>(config.batch_size));
      std::vector<float> xt(B * G), eps(B * G), cond(B * kEmbeddingDim);
      std::vector<int> steps(B);
      for (std::size_t b = 0; b < B; ++b) {
        const LabelRecord& r = data[order[start + b]];
        const int t = static_cast<int>(rng.uniform_int(1, sched.T));
        steps[b] = t;
        const double a = std::sqrt(sched.alpha_bar(t)), s = std::sqrt(1.0 - sched.alpha_bar(t));
        for (std::size_t i = 0; i < G; ++i) {
          const double e = rng.normal();
          eps[b * G + i] = static_cast<float>(e);
          xt[b * G + i] = static_cast<float>(a * r.params.values()[i] + s * e);
        }
        for (std::size_t i = 0; i < kEmbeddingDim; ++i) cond[b * kEmbeddingDim + i] = static_cast<float>(r.embedding[i]);
      }
      const int Bi = static_cast<int>(B);
      opt.zero_grad();
      const nn::Tensor pred = net.forward(nn::Tensor::from({Bi, 1, L, N}, std::move(xt)), steps,
                                          nn::Tensor::from({Bi, static_cast<int>(kEmbeddingDim)}, std::move(cond)));
      const nn::Tensor loss = nn::mse(pred, nn::Tensor::from({Bi, 1, L, N}, std::move(eps)));
      nn::backward(loss);
      opt.set_learning_rate(config.learning_rate_at(step++, total_steps));
      opt.step();
      epoch_loss += loss.item();
      ++batches;
    }
    result.loss_trace.push_back(epoch_loss / batches);
    if (progress) progress(epoch, result.loss_trace.back());
  }
  return result;
}

// ---------------------------------------------------------------------------
// Sampling

struct SampleOptions {
  bool deterministic = false;  // omit the posterior noise term at every step
  int max_batch = 16;
};

/// One grid per seed, conditioned on conds[i] (or on conds[0] for every
/// seed when a single condition is given). Each sample draws x_T and its
/// per-step noise from its own stream Rng(seed), so results do not depend on
/// batching.
inline std::vector<ParamGrid> sample_batch(const DiffusionModel& model, std::span<const Embedding> conds, std::span<const std::uint64_t> seeds,
                                           const SampleOptions& options = {}) {
  if (conds.size() != 1 && conds.size() != seeds.size()) throw InvalidArgument("need one condition or one per seed");
  for (const auto& c : conds)
    if (c.size() != kEmbeddingDim) throw InvalidArgument("condition must have 512 entries");
  const auto& cfg = model.net.config();
  const auto& sched = model.schedule;
  const std::size_t G = static_cast<std::size_t>(cfg.layers) * cfg.qubits;
  std::vector<ParamGrid> out;
  nn::NoGradGuard guard;
  for (std::size_t start = 0; start < seeds.size(); start += static_cast<std::size_t>(std::max(options.max_batch, 1))) {
    const std::size_t B = std::min(seeds.size() - start, static_cast<std::size_t>(std::max(options.max_batch, 1)));
    std::vector<Rng> rngs;
    for (std::size_t b = 0; b < B; ++b) rngs.emplace_back(seeds[start + b]);
    std::vector<double> x(B * G);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t i = 0; i < G; ++i) x[b * G + i] = rngs[b].normal();
    std::vector<float> condf(B * kEmbeddingDim);
    for (std::size_t b = 0; b < B; ++b) {
      const Embedding& cond = conds[conds.size() == 1 ? 0 : start + b];
      for (std::size_t i = 0; i < kEmbeddingDim; ++i) condf[b * kEmbeddingDim + i] = static_cast<float>(cond[i]);
    }
    const nn::Tensor cond_t = nn::Tensor::from({static_cast<int>(B), static_cast<int>(kEmbeddingDim)}, condf);
    std::vector<int> steps(B);
    std::vector<double> z(G);
    for (int t = sched.T; t >= 1; --t) {
      std::fill(steps.begin(), steps.end(), t);
      std::vector<float> xf(x.begin(), x.end());
      const nn::Tensor eps = model.net.forward(nn::Tensor::from({static_cast<int>(B), 1, cfg.layers, cfg.qubits}, std::move(xf)), steps, cond_t);
      const bool noisy = !options.deterministic && t > 1;
      for (std::size_t b = 0; b < B; ++b) {
        if (noisy)
          for (auto& v : z) v = rngs[b].normal();
        std::vector<double> eps_b(eps.data().begin() + static_cast<std::ptrdiff_t>(b * G), eps.data().begin() + static_cast<std::ptrdiff_t>((b + 1) * G));
        const auto next = reverse_step(std::span<const double>(x).subspan(b * G, G), t, eps_b, z, sched, noisy);
        std::copy(next.begin(), next.end(), x.begin() + static_cast<std::ptrdiff_t>(b * G));
      }
    }
    for (std::size_t b = 0; b < B; ++b) {
      std::vector<double> v(x.begin() + static_cast<std::ptrdiff_t>(b * G), x.begin() + static_cast<std::ptrdiff_t>((b + 1) * G));
      for (double& e : v) e = std::clamp(e, -1.0, 1.0);
      out.emplace_back(cfg.layers, cfg.qubits, v);
    }
  }
  return out;
}

inline std::vector<ParamGrid> sample_batch(const DiffusionModel& model, const Embedding& cond, std::span<const std::uint64_t> seeds,
                                           const SampleOptions& options = {}) {
  return sample_batch(model, std::span<const Embedding>(&cond, 1), seeds, options);
}

inline ParamGrid sample(const DiffusionModel& model, const Embedding& cond, std::uint64_t seed, const SampleOptions& options = {}) {
  const std::uint64_t seeds[] = {seed};
  return sample_batch(model, cond, seeds, options).front();
}

struct BestOf {
  ParamGrid grid;
  double energy = 0.0;
  int index = 0;
  std::vector<double> energies;  // per candidate, in seed order
};

/// Seeds of the k candidates; candidate i uses derive_seed(seed, {i}), so the
/// first k candidates of a larger k are the same.
inline std::vector<std::uint64_t> candidate_seeds(std::uint64_t seed, int k) {
  std::vector<std::uint64_t> s;
  for (int i = 0; i < k; ++i) s.push_back(derive_seed(seed, {static_cast<std::uint64_t>(i)}));
  return s;
}

namespace detail {

inline BestOf select_best(const CircuitLayout& layout, const PauliSum& h, std::span<const ParamGrid> grids) {
  const CompiledObservable obs(h);
  BestOf best;
  for (std::size_t i = 0; i < grids.size(); ++i) {
    const double e = energy(layout, grids[i], obs);
    best.energies.push_back(e);
    if (i == 0 || e < best.energy) {
      best.energy = e;
      best.grid = grids[i];
      best.index = static_cast<int>(i);
    }
  }
  return best;
}

inline void check_model_layout(const DiffusionModel& model, const CircuitLayout& layout) {
  if (layout.n_layers != model.net.config().layers || layout.n_qubits != model.net.config().qubits) {
    throw InvalidArgument("model grid does not match the circuit layout");
  }
}

}  // namespace detail

/// k samples conditioned on h; keeps the lowest single-run energy with
/// index-order tie-breaking.
inline BestOf generate_best_of(const DiffusionModel& model, const PauliSum& h, const CircuitLayout& layout, int k, std::uint64_t seed,
                               const SampleOptions& options = {}, std::uint64_t hash_seed = kDefaultHashSeed) {
  if (k < 1) throw InvalidArgument("best-of needs k >= 1");
  detail::check_model_layout(model, layout);
  const auto grids = sample_batch(model, encode_hamiltonian(h, hash_seed), candidate_seeds(seed, k), options);
  return detail::select_best(layout, h, grids);
}

/// generate_best_of for several Hamiltonians at once (seeds[i] for hs[i]).
/// All candidates share sampler batches; each result equals the single call.
inline std::vector<BestOf> generate_best_of_many(const DiffusionModel& model, std::span<const PauliSum> hs, const CircuitLayout& layout, int k,
                                                 std::span<const std::uint64_t> seeds, const SampleOptions& options = {},
                                                 std::uint64_t hash_seed = kDefaultHashSeed) {
  if (k < 1) throw InvalidArgument("best-of needs k >= 1");
  if (hs.size() != seeds.size()) throw InvalidArgument("need one seed per Hamiltonian");
  detail::check_model_layout(model, layout);
  std::vector<Embedding> conds;
  std::vector<std::uint64_t> all_seeds;
  for (std::size_t i = 0; i < hs.size(); ++i) {
    const Embedding e = encode_hamiltonian(hs[i], hash_seed);
    for (std::uint64_t s : candidate_seeds(seeds[i], k)) {
      conds.push_back(e);
      all_seeds.push_back(s);
    }
  }
  if (all_seeds.empty()) return {};
  const auto grids = sample_batch(model, conds, all_seeds, options);
  std::vector<BestOf> out;
  const auto K = static_cast<std::size_t>(k);
  for (std::size_t i = 0; i < hs.size(); ++i) {
    out.push_back(detail::select_best(layout, hs[i], std::span<const ParamGrid>(grids).subspan(i * K, K)));
  }
  return out;
}

struct SamplingManifest {
  std::uint64_t seed = 0;
  int k = 1;
  NoiseSchedule schedule;
  bool deterministic = false;
  std::string model_hash;
};

inline void to_json(nlohmann::json& j, const SamplingManifest& m) {
  j = {{"seed", m.seed}, {"k", m.k}, {"schedule", m.schedule}, {"deterministic", m.deterministic}, {"model_hash", m.model_hash}};
}

}  // namespace dmvqe
