#pragma once

// Small differentiable classifier used in place of a vision transformer:
// shared patch embedding with learned position offsets, tanh, mean pooling,
// a tanh hidden layer and a two-logit output. Gradients are hand-derived
// reverse mode; the optimizer is AdamW with linear warmup and cosine decay.

#include <array>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "oculomix/cohort.hpp"
#include "oculomix/error.hpp"
#include "oculomix/losses.hpp"
#include "oculomix/rng.hpp"

namespace oculomix {

struct PredictorConfig {
  std::size_t image_height = 32;
  std::size_t image_width = 32;
  std::size_t patch_size = 8;
  std::size_t embed_dim = 64;
  std::size_t hidden_dim = 128;
  double init_scale = 1.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (patch_size == 0 || embed_dim == 0 || hidden_dim == 0 || image_height == 0 || image_width == 0) {
      throw Error(ErrorKind::InvalidConfig, "predictor dimensions must be positive");
    }
    if (image_height % patch_size != 0 || image_width % patch_size != 0) {
      throw Error(ErrorKind::InvalidConfig, "image size must be divisible by patch_size");
    }
    if (!(init_scale > 0.0)) throw Error(ErrorKind::InvalidConfig, "init_scale must be positive");
  }

  std::size_t patch_dim() const noexcept { return patch_size * patch_size; }
  std::size_t num_patches() const noexcept { return (image_height / patch_size) * (image_width / patch_size); }
};

/// Exact parameter count: embedding (d*p^2 + d), positions (N*d), hidden
/// (h*d + h) and output (2*h + 2).
inline std::size_t parameter_count(const PredictorConfig& c) {
  const std::size_t d = c.embed_dim, h = c.hidden_dim;
  return d * c.patch_dim() + d + c.num_patches() * d + h * d + h + 2 * h + 2;
}

/// Flat parameter vector with named views. `version` changes on every
/// update so stale forward caches can be detected.
class Params {
 public:
  Params() = default;
  explicit Params(const PredictorConfig& config) : config_(config) {
    config_.validate();
    const std::size_t d = config_.embed_dim, h = config_.hidden_dim, P = config_.patch_dim();
    const std::size_t N = config_.num_patches();
    patch_weight_ = 0;
    patch_bias_ = patch_weight_ + d * P;
    position_ = patch_bias_ + d;
    hidden_weight_ = position_ + N * d;
    hidden_bias_ = hidden_weight_ + h * d;
    output_weight_ = hidden_bias_ + h;
    output_bias_ = output_weight_ + 2 * h;
    values_.assign(output_bias_ + 2, 0.0);
  }

  const PredictorConfig& config() const noexcept { return config_; }
  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }
  std::uint64_t version() const noexcept { return version_; }
  void touch() noexcept { ++version_; }

  // d x p^2, row-major
  std::span<double> patch_weight() { return slice(patch_weight_, patch_bias_); }
  std::span<double> patch_bias() { return slice(patch_bias_, position_); }
  // N x d
  std::span<double> position() { return slice(position_, hidden_weight_); }
  // h x d
  std::span<double> hidden_weight() { return slice(hidden_weight_, hidden_bias_); }
  std::span<double> hidden_bias() { return slice(hidden_bias_, output_weight_); }
  // 2 x h
  std::span<double> output_weight() { return slice(output_weight_, output_bias_); }
  std::span<double> output_bias() { return slice(output_bias_, values_.size()); }

  std::span<const double> patch_weight() const { return slice(patch_weight_, patch_bias_); }
  std::span<const double> patch_bias() const { return slice(patch_bias_, position_); }
  std::span<const double> position() const { return slice(position_, hidden_weight_); }
  std::span<const double> hidden_weight() const { return slice(hidden_weight_, hidden_bias_); }
  std::span<const double> hidden_bias() const { return slice(hidden_bias_, output_weight_); }
  std::span<const double> output_weight() const { return slice(output_weight_, output_bias_); }
  std::span<const double> output_bias() const { return slice(output_bias_, values_.size()); }

  /// 1 for weight matrices (decayed), 0 for biases and position offsets.
  std::vector<unsigned char> decay_mask() const {
    std::vector<unsigned char> mask(values_.size(), 0);
    auto mark = [&](std::size_t lo, std::size_t hi) {
      for (std::size_t k = lo; k < hi; ++k) mask[k] = 1;
    };
    mark(patch_weight_, patch_bias_);
    mark(hidden_weight_, hidden_bias_);
    mark(output_weight_, output_bias_);
    return mask;
  }

 private:
  std::span<double> slice(std::size_t lo, std::size_t hi) { return std::span<double>(values_).subspan(lo, hi - lo); }
  std::span<const double> slice(std::size_t lo, std::size_t hi) const {
    return std::span<const double>(values_).subspan(lo, hi - lo);
  }

  PredictorConfig config_;
  std::vector<double> values_;
  std::uint64_t version_ = 0;
  std::size_t patch_weight_ = 0, patch_bias_ = 0, position_ = 0, hidden_weight_ = 0, hidden_bias_ = 0,
              output_weight_ = 0, output_bias_ = 0;
};

/// He-scaled Gaussian weights, zero biases, small Gaussian position offsets.
inline Params init_params(const PredictorConfig& config) {
  Params params(config);
  Rng rng = make_rng(config.seed, Stream::init);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto fill = [&](std::span<double> w, double sd) {
    for (double& x : w) x = sd * normal(rng);
  };
  fill(params.patch_weight(), config.init_scale * std::sqrt(2.0 / static_cast<double>(config.patch_dim())));
  fill(params.position(), 0.02 * config.init_scale);
  fill(params.hidden_weight(), config.init_scale * std::sqrt(2.0 / static_cast<double>(config.embed_dim)));
  fill(params.output_weight(), config.init_scale * std::sqrt(2.0 / static_cast<double>(config.hidden_dim)));
  return params;
}

struct ForwardCache {
  std::uint64_t params_version = 0;
  const Params* params = nullptr;
  std::vector<double> patches;   // N x p^2
  std::vector<double> embedded;  // N x d, post-tanh
  std::vector<double> pooled;    // d
  std::vector<double> hidden;    // h, post-tanh
};

inline Logits forward(const Params& params, const PixelGrid& pixels, ForwardCache& cache) {
  const PredictorConfig& c = params.config();
  if (pixels.height != c.image_height || pixels.width != c.image_width ||
      pixels.values.size() != c.image_height * c.image_width) {
    throw Error(ErrorKind::ShapeMismatch, "predictor expects " + std::to_string(c.image_height) + "x" +
                                              std::to_string(c.image_width) + " input");
  }
  const std::size_t p = c.patch_size, P = c.patch_dim(), N = c.num_patches();
  const std::size_t d = c.embed_dim, h = c.hidden_dim;
  const std::size_t patches_per_row = c.image_width / p;

  cache.params = &params;
  cache.params_version = params.version();
  cache.patches.resize(N * P);
  cache.embedded.resize(N * d);
  cache.pooled.assign(d, 0.0);
  cache.hidden.resize(h);

  for (std::size_t n = 0; n < N; ++n) {
    const std::size_t r0 = (n / patches_per_row) * p;
    const std::size_t c0 = (n % patches_per_row) * p;
    double* x = &cache.patches[n * P];
    for (std::size_t r = 0; r < p; ++r)
      for (std::size_t q = 0; q < p; ++q) x[r * p + q] = pixels.at(r0 + r, c0 + q);
  }

  const auto Wp = params.patch_weight();
  const auto bp = params.patch_bias();
  const auto pos = params.position();
  for (std::size_t n = 0; n < N; ++n) {
    const double* x = &cache.patches[n * P];
    double* e = &cache.embedded[n * d];
    for (std::size_t j = 0; j < d; ++j) {
      const double* w = &Wp[j * P];
      double acc = bp[j] + pos[n * d + j];
      for (std::size_t k = 0; k < P; ++k) acc += w[k] * x[k];
      e[j] = std::tanh(acc);
      cache.pooled[j] += e[j];
    }
  }
  const double inv_n = 1.0 / static_cast<double>(N);
  for (double& v : cache.pooled) v *= inv_n;

  const auto W1 = params.hidden_weight();
  const auto b1 = params.hidden_bias();
  for (std::size_t i = 0; i < h; ++i) {
    double acc = b1[i];
    for (std::size_t j = 0; j < d; ++j) acc += W1[i * d + j] * cache.pooled[j];
    cache.hidden[i] = std::tanh(acc);
  }

  const auto W2 = params.output_weight();
  const auto b2 = params.output_bias();
  Logits out{b2[0], b2[1]};
  for (std::size_t i = 0; i < h; ++i) {
    out[0] += W2[i] * cache.hidden[i];
    out[1] += W2[h + i] * cache.hidden[i];
  }
  return out;
}

inline Logits forward(const Params& params, const PixelGrid& pixels) {
  ForwardCache cache;
  return forward(params, pixels, cache);
}

/// Accumulates d loss / d params into `grad` given d loss / d logits.
inline void backward(const Params& params, const ForwardCache& cache, const Logits& upstream, std::span<double> grad) {
  if (cache.params != &params || cache.params_version != params.version()) {
    throw Error(ErrorKind::StaleCache, "forward cache does not match the current parameters");
  }
  if (grad.size() != params.size()) throw Error(ErrorKind::ShapeMismatch, "gradient buffer size");
  const PredictorConfig& c = params.config();
  const std::size_t P = c.patch_dim(), N = c.num_patches(), d = c.embed_dim, h = c.hidden_dim;

  // Offsets follow the Params layout.
  double* gWp = grad.data();
  double* gbp = gWp + d * P;
  double* gpos = gbp + d;
  double* gW1 = gpos + N * d;
  double* gb1 = gW1 + h * d;
  double* gW2 = gb1 + h;
  double* gb2 = gW2 + 2 * h;

  const auto W1 = params.hidden_weight();
  const auto W2 = params.output_weight();
  gb2[0] += upstream[0];
  gb2[1] += upstream[1];

  std::vector<double> d_hidden_pre(h);
  for (std::size_t i = 0; i < h; ++i) {
    gW2[i] += upstream[0] * cache.hidden[i];
    gW2[h + i] += upstream[1] * cache.hidden[i];
    const double g = upstream[0] * W2[i] + upstream[1] * W2[h + i];
    d_hidden_pre[i] = g * (1.0 - cache.hidden[i] * cache.hidden[i]);
  }

  std::vector<double> d_pooled(d, 0.0);
  for (std::size_t i = 0; i < h; ++i) {
    const double g = d_hidden_pre[i];
    gb1[i] += g;
    if (g == 0.0) continue;
    for (std::size_t j = 0; j < d; ++j) {
      gW1[i * d + j] += g * cache.pooled[j];
      d_pooled[j] += g * W1[i * d + j];
    }
  }

  const double inv_n = 1.0 / static_cast<double>(N);
  for (std::size_t n = 0; n < N; ++n) {
    const double* x = &cache.patches[n * P];
    const double* e = &cache.embedded[n * d];
    for (std::size_t j = 0; j < d; ++j) {
      const double g = d_pooled[j] * inv_n * (1.0 - e[j] * e[j]);
      gbp[j] += g;
      gpos[n * d + j] += g;
      double* w = gWp + j * P;
      for (std::size_t k = 0; k < P; ++k) w[k] += g * x[k];
    }
  }
}

struct TrainConfig {
  double learning_rate = 2e-4;
  std::size_t batch_size = 64;
  std::size_t epochs = 100;
  double weight_decay = 0.05;
  std::size_t warmup_epochs = 5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const {
    if (!(learning_rate > 0.0)) throw Error(ErrorKind::InvalidConfig, "learning_rate must be positive");
    if (epochs < 1) throw Error(ErrorKind::InvalidConfig, "epochs must be >= 1");
    if (batch_size < 1) throw Error(ErrorKind::InvalidConfig, "batch_size must be >= 1");
    if (!(weight_decay >= 0.0)) throw Error(ErrorKind::InvalidConfig, "weight_decay must be >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
      throw Error(ErrorKind::InvalidConfig, "betas must be in [0,1)");
    }
    if (!(eps > 0.0)) throw Error(ErrorKind::InvalidConfig, "eps must be positive");
  }
};

struct LrSchedule {
  std::size_t total_steps = 1;
  std::size_t warmup_steps = 0;
};

/// Linear warmup to the base rate, then cosine decay reaching 0 on the final step.
inline double scheduled_learning_rate(double base, std::size_t step, const LrSchedule& schedule) {
  if (schedule.total_steps == 0 || step + 1 >= schedule.total_steps) return 0.0;
  const std::size_t warmup = std::min(schedule.warmup_steps, schedule.total_steps - 1);
  if (step < warmup) return base * static_cast<double>(step + 1) / static_cast<double>(warmup);
  const double progress =
      static_cast<double>(step - warmup) / static_cast<double>(schedule.total_steps - 1 - warmup);
  return base * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

struct OptimizerState {
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::uint64_t step = 0;
};

/// One AdamW update with bias correction; decay is applied to masked entries
/// directly on the weights, independent of the gradient.
inline void adamw_update(std::span<double> params, std::span<const double> grads, OptimizerState& state, double lr,
                         double weight_decay, const TrainConfig& config, std::span<const unsigned char> decay_mask) {
  if (grads.size() != params.size()) throw Error(ErrorKind::ShapeMismatch, "gradient size");
  for (double g : grads) {
    if (!std::isfinite(g)) throw Error(ErrorKind::NonFiniteGradient, "non-finite gradient entry");
  }
  if (state.first_moment.size() != params.size()) {
    state.first_moment.assign(params.size(), 0.0);
    state.second_moment.assign(params.size(), 0.0);
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    double& m = state.first_moment[k];
    double& v = state.second_moment[k];
    m = config.beta1 * m + (1.0 - config.beta1) * grads[k];
    v = config.beta2 * v + (1.0 - config.beta2) * grads[k] * grads[k];
    if (!decay_mask.empty() && decay_mask[k]) params[k] -= lr * weight_decay * params[k];
    params[k] -= lr * (m / c1) / (std::sqrt(v / c2) + config.eps);
  }
}

/// Returns the learning rate used for this step.
inline double train_step(Params& params, OptimizerState& state, std::span<const double> grads, std::size_t step,
                         const LrSchedule& schedule, const TrainConfig& config) {
  const double lr = scheduled_learning_rate(config.learning_rate, step, schedule);
  adamw_update(params.values(), grads, state, lr, config.weight_decay, config, params.decay_mask());
  params.touch();
  return lr;
}

// Checkpoint: "OCMXCKPT", u64 header length, JSON header, u64 parameter
// count, parameters. All integers and floats little-endian.

inline nlohmann::json to_json(const PredictorConfig& c) {
  return {{"image_size", {c.image_height, c.image_width}},
          {"patch_size", c.patch_size},
          {"embed_dim", c.embed_dim},
          {"hidden_dim", c.hidden_dim},
          {"init_scale", c.init_scale},
          {"seed", c.seed}};
}

inline PredictorConfig predictor_config_from_json(const nlohmann::json& j) {
  PredictorConfig c;
  if (j.contains("image_size")) {
    const auto& size = j.at("image_size");
    if (!size.is_array() || size.size() != 2) throw Error(ErrorKind::Parse, "image_size must be [height, width]");
    c.image_height = size[0].get<std::size_t>();
    c.image_width = size[1].get<std::size_t>();
  }
  c.patch_size = j.value("patch_size", c.patch_size);
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
  c.init_scale = j.value("init_scale", c.init_scale);
  c.seed = j.value("seed", c.seed);
  return c;
}

struct Checkpoint {
  Params params;
  std::uint64_t step = 0;
  std::string rng_state;
  nlohmann::json extra;  // caller-defined, e.g. the experiment config
};

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  nlohmann::json header = {{"predictor", to_json(ckpt.params.config())},
                           {"step", ckpt.step},
                           {"rng_state", ckpt.rng_state},
                           {"extra", ckpt.extra}};
  const std::string text = header.dump();
  std::vector<unsigned char> bytes;
  auto put_u64 = [&](std::uint64_t v) {
    for (int b = 0; b < 8; ++b) bytes.push_back(static_cast<unsigned char>(v >> (8 * b)));
  };
  const std::string magic = "OCMXCKPT";
  bytes.insert(bytes.end(), magic.begin(), magic.end());
  put_u64(text.size());
  bytes.insert(bytes.end(), text.begin(), text.end());
  put_u64(ckpt.params.size());
  for (double v : ckpt.params.values()) put_u64(std::bit_cast<std::uint64_t>(v));

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  std::size_t pos = 0;
  auto need = [&](std::size_t n) {
    if (pos + n > bytes.size()) throw Error(ErrorKind::Parse, "truncated checkpoint " + path.string());
  };
  auto get_u64 = [&] {
    need(8);
    std::uint64_t v = 0;
    for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(bytes[pos + b]) << (8 * b);
    pos += 8;
    return v;
  };
  need(8);
  if (std::string(bytes.begin(), bytes.begin() + 8) != "OCMXCKPT") {
    throw Error(ErrorKind::Parse, path.string() + " is not a checkpoint");
  }
  pos = 8;
  const std::uint64_t header_len = get_u64();
  need(header_len);
  Checkpoint ckpt;
  try {
    const nlohmann::json header = nlohmann::json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                                                        bytes.begin() + static_cast<std::ptrdiff_t>(pos + header_len));
    ckpt.params = Params(predictor_config_from_json(header.at("predictor")));
    ckpt.step = header.value("step", std::uint64_t{0});
    ckpt.rng_state = header.value("rng_state", std::string{});
    ckpt.extra = header.value("extra", nlohmann::json::object());
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorKind::Parse, ex.what());
  }
  pos += header_len;
  const std::uint64_t count = get_u64();
  if (count != ckpt.params.size()) throw Error(ErrorKind::IncompatibleShapes, "parameter count mismatch");
  for (double& v : ckpt.params.values()) v = std::bit_cast<double>(get_u64());
  return ckpt;
}

}  // namespace oculomix
