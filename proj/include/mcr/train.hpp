// Copyright (c) 2026 the mcr developers
// SPDX-License-Identifier: Apache-2.0
//
// The mask-consistency training objective and loop. Each step noises a
// sample once, runs the denoiser under the original mask and under the two
// perturbed masks on the same noisy input, and penalizes the reconstruction
// error plus the divergence between the original-mask prediction and each
// perturbed-mask prediction. All randomness derives from (seed, step,
// sample slot), so runs are reproducible bit for bit and resumable.
#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "mcr/conditioning.hpp"
#include "mcr/config.hpp"
#include "mcr/corpus.hpp"
#include "mcr/denoiser.hpp"
#include "mcr/diffusion.hpp"
#include "mcr/errors.hpp"
#include "mcr/mask.hpp"
#include "mcr/parallel.hpp"
#include "mcr/rng.hpp"

namespace mcr {

enum class TrainMode { kMcr, kDilateOnly, kReshapeOnly, kBaseline };

inline std::string to_string(TrainMode m) {
  switch (m) {
    case TrainMode::kMcr: return "mcr";
    case TrainMode::kDilateOnly: return "dilate_only";
    case TrainMode::kReshapeOnly: return "reshape_only";
    case TrainMode::kBaseline: return "baseline";
  }
  return "?";
}

inline TrainMode train_mode_from_string(const std::string& s) {
  if (s == "mcr") return TrainMode::kMcr;
  if (s == "dilate_only") return TrainMode::kDilateOnly;
  if (s == "reshape_only") return TrainMode::kReshapeOnly;
  if (s == "baseline") return TrainMode::kBaseline;
  throw ConfigError("unknown mode '" + s + "'");
}

struct TrainConfig {
  double learning_rate = 5e-5;
  int batch_size = 2;
  double lambda_cons = 2.0;
  TrainMode mode = TrainMode::kMcr;
  long steps = 2000;
  std::uint64_t seed = 1;
  bool stop_gradient_original = false;
  long checkpoint_every = 0;  // 0: final checkpoint only
  bool log_walltime = false;  // false keeps the loss log bit-reproducible
  int threads = 0;            // 0: auto (one worker per batch sample)
  int hidden_width = 32;
  int time_embed_dim = 16;
  int timesteps = 200;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  int sample_steps = 20;          // inference default carried in the config
  bool dilation_auto = true;      // derive radius from image width
  PerturbConfig perturb;          // radius is overwritten when dilation_auto
};

inline void validate(const TrainConfig& cfg) {
  if (!(cfg.learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (cfg.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (cfg.lambda_cons < 0.0) throw ConfigError("lambda_cons must be >= 0");
  if (cfg.steps < 0) throw ConfigError("steps must be >= 0");
  if (cfg.checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
  if (cfg.timesteps < 2) throw ConfigError("timesteps must be >= 2");
  if (cfg.sample_steps < 1 || cfg.sample_steps > cfg.timesteps)
    throw ConfigError("sample_steps must be in [1, timesteps]");
  validate(cfg.perturb);
}

/// Applies one `key = value` setting. Unknown keys are errors.
inline void apply_config_kv(TrainConfig& cfg, const std::string& key,
                            const std::string& value) {
  auto& p = cfg.perturb;
  auto& r = p.random_mask_params;
  if (key == "learning_rate") cfg.learning_rate = parse_double(value, key);
  else if (key == "batch_size") cfg.batch_size = static_cast<int>(parse_long(value, key));
  else if (key == "lambda_cons") cfg.lambda_cons = parse_double(value, key);
  else if (key == "mode") cfg.mode = train_mode_from_string(value);
  else if (key == "steps") cfg.steps = parse_long(value, key);
  else if (key == "seed") cfg.seed = parse_u64(value, key);
  else if (key == "stop_gradient_original") cfg.stop_gradient_original = parse_bool(value, key);
  else if (key == "checkpoint_every") cfg.checkpoint_every = parse_long(value, key);
  else if (key == "log_timing") {
    if (value == "wall") cfg.log_walltime = true;
    else if (value == "none") cfg.log_walltime = false;
    else throw ConfigError("log_timing must be 'wall' or 'none'");
  }
  else if (key == "threads") cfg.threads = static_cast<int>(parse_long(value, key));
  else if (key == "hidden_width") cfg.hidden_width = static_cast<int>(parse_long(value, key));
  else if (key == "time_embed_dim") cfg.time_embed_dim = static_cast<int>(parse_long(value, key));
  else if (key == "timesteps") cfg.timesteps = static_cast<int>(parse_long(value, key));
  else if (key == "beta_start") cfg.beta_start = parse_double(value, key);
  else if (key == "beta_end") cfg.beta_end = parse_double(value, key);
  else if (key == "sample_steps") cfg.sample_steps = static_cast<int>(parse_long(value, key));
  else if (key == "dilation_radius") {
    if (value == "auto") cfg.dilation_auto = true;
    else {
      cfg.dilation_auto = false;
      p.dilation_radius_k = static_cast<int>(parse_long(value, key));
    }
  }
  else if (key == "dilation_mode") {
    if (value == "fixed") p.dilation_mode = DilationMode::kFixed;
    else if (value == "uniform") p.dilation_mode = DilationMode::kUniform;
    else throw ConfigError("dilation_mode must be 'fixed' or 'uniform'");
  }
  else if (key == "dilation_min") p.dilation_min = static_cast<int>(parse_long(value, key));
  else if (key == "dilation_max") p.dilation_max = static_cast<int>(parse_long(value, key));
  else if (key == "rect_probability") p.rect_probability = parse_double(value, key);
  else if (key == "strokes_min") r.num_strokes_min = static_cast<int>(parse_long(value, key));
  else if (key == "strokes_max") r.num_strokes_max = static_cast<int>(parse_long(value, key));
  else if (key == "stroke_width_min") r.stroke_width_min = static_cast<int>(parse_long(value, key));
  else if (key == "stroke_width_max") r.stroke_width_max = static_cast<int>(parse_long(value, key));
  else if (key == "stroke_vertices_min") r.stroke_vertices_min = static_cast<int>(parse_long(value, key));
  else if (key == "stroke_vertices_max") r.stroke_vertices_max = static_cast<int>(parse_long(value, key));
  else if (key == "rects_min") r.num_rects_min = static_cast<int>(parse_long(value, key));
  else if (key == "rects_max") r.num_rects_max = static_cast<int>(parse_long(value, key));
  else if (key == "rect_frac_min") r.rect_frac_min = parse_double(value, key);
  else if (key == "rect_frac_max") r.rect_frac_max = parse_double(value, key);
  else if (key == "coverage_cap") r.target_coverage_cap = parse_double(value, key);
  else throw ConfigError("unknown config key '" + key + "'");
}

inline void apply_config_file(TrainConfig& cfg, const std::filesystem::path& path) {
  for (const auto& [k, v] : parse_kv_file(path)) apply_config_kv(cfg, k, v);
}

/// Canonical text form: every key in fixed order, one per line. The digest
/// of this text identifies a configuration in checkpoints.
inline std::string canonical_config_text(const TrainConfig& cfg) {
  std::ostringstream out;
  out.precision(17);
  const auto& p = cfg.perturb;
  const auto& r = p.random_mask_params;
  out << "mode = " << to_string(cfg.mode) << '\n'
      << "steps = " << cfg.steps << '\n'
      << "batch_size = " << cfg.batch_size << '\n'
      << "learning_rate = " << cfg.learning_rate << '\n'
      << "lambda_cons = " << cfg.lambda_cons << '\n'
      << "stop_gradient_original = " << (cfg.stop_gradient_original ? "true" : "false") << '\n'
      << "seed = " << cfg.seed << '\n'
      << "checkpoint_every = " << cfg.checkpoint_every << '\n'
      << "log_timing = " << (cfg.log_walltime ? "wall" : "none") << '\n'
      << "threads = " << cfg.threads << '\n'
      << "hidden_width = " << cfg.hidden_width << '\n'
      << "time_embed_dim = " << cfg.time_embed_dim << '\n'
      << "timesteps = " << cfg.timesteps << '\n'
      << "beta_start = " << cfg.beta_start << '\n'
      << "beta_end = " << cfg.beta_end << '\n'
      << "sample_steps = " << cfg.sample_steps << '\n'
      << "dilation_radius = ";
  if (cfg.dilation_auto) out << "auto";
  else out << p.dilation_radius_k;
  out << '\n'
      << "dilation_mode = "
      << (p.dilation_mode == DilationMode::kFixed ? "fixed" : "uniform") << '\n'
      << "dilation_min = " << p.dilation_min << '\n'
      << "dilation_max = " << p.dilation_max << '\n'
      << "rect_probability = " << p.rect_probability << '\n'
      << "strokes_min = " << r.num_strokes_min << '\n'
      << "strokes_max = " << r.num_strokes_max << '\n'
      << "stroke_width_min = " << r.stroke_width_min << '\n'
      << "stroke_width_max = " << r.stroke_width_max << '\n'
      << "stroke_vertices_min = " << r.stroke_vertices_min << '\n'
      << "stroke_vertices_max = " << r.stroke_vertices_max << '\n'
      << "rects_min = " << r.num_rects_min << '\n'
      << "rects_max = " << r.num_rects_max << '\n'
      << "rect_frac_min = " << r.rect_frac_min << '\n'
      << "rect_frac_max = " << r.rect_frac_max << '\n'
      << "coverage_cap = " << r.target_coverage_cap << '\n';
  return out.str();
}

/// The subset of the configuration that shapes the parameter trajectory.
/// Runtime knobs (steps, checkpoint cadence, log timing, thread count,
/// inference step count) are left out so a run can be extended or replayed
/// with different telemetry and still resume from its checkpoints.
inline std::string digest_config_text(const TrainConfig& cfg) {
  TrainConfig canon = cfg;
  canon.steps = 0;
  canon.checkpoint_every = 0;
  canon.log_walltime = false;
  canon.threads = 0;
  canon.sample_steps = 1;
  return canonical_config_text(canon);
}

inline std::uint64_t config_digest(const TrainConfig& cfg) {
  return fnv1a64(digest_config_text(cfg));
}

// ---------------------------------------------------------------------------
// Losses

/// Mean squared error between the true and predicted noise.
inline double rec_loss(const ImageTensor& eps, const ImageTensor& eps_hat) {
  return mse(eps, eps_hat);
}

/// Consistency loss: divergence of each perturbed-branch prediction from
/// the original-branch prediction. Modes drop the corresponding terms.
inline double cons_loss(const ImageTensor& eps_o, const ImageTensor& eps_d,
                        const ImageTensor& eps_r,
                        TrainMode mode = TrainMode::kMcr) {
  double acc = 0.0;
  if (mode == TrainMode::kMcr || mode == TrainMode::kDilateOnly)
    acc += mse(eps_o, eps_d);
  if (mode == TrainMode::kMcr || mode == TrainMode::kReshapeOnly)
    acc += mse(eps_o, eps_r);
  return acc;
}

inline double total_loss(double rec, double cons, double lambda_cons) {
  if (lambda_cons < 0.0) throw InvalidRangeError("lambda_cons must be >= 0");
  return rec + lambda_cons * cons;
}

// ---------------------------------------------------------------------------
// Optimizer

struct AdamConfig {
  double learning_rate = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// One Adam update; `step` is 1-based for bias correction.
inline void adam_step(std::span<double> params, std::span<const double> grads,
                      std::span<double> m, std::span<double> v, long step,
                      const AdamConfig& cfg) {
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grads[i];
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
    const double m_hat = m[i] / c1;
    const double v_hat = v[i] / c2;
    params[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
  }
}

// ---------------------------------------------------------------------------
// Training state and step

struct TrainState {
  TrainConfig config;  // resolved (dilation radius is a concrete pixel value)
  NoiseSchedule schedule;
  DenoiserParams params;
  std::vector<double> adam_m, adam_v;
  long step = 0;  // completed steps
};

struct StepLoss {
  double rec = 0.0;
  double cons = 0.0;
  double total = 0.0;
};

/// Test instrumentation: one record per (sample, branch) forward pass.
struct BranchTrace {
  int slot = 0;
  int branch = 0;  // 0 = original, 1 = dilated, 2 = reshaped
  int t = 0;
  std::uint64_t x_t_hash = 0;
  std::uint64_t eps_hash = 0;
};

inline std::uint64_t hash_doubles(std::span<const double> xs) {
  return fnv1a64(std::string_view(reinterpret_cast<const char*>(xs.data()),
                                  xs.size() * sizeof(double)));
}

/// Initializes a fresh training state for images with `image_channels`.
inline TrainState train_init(const TrainConfig& cfg, int image_channels) {
  validate(cfg);
  TrainState st;
  st.config = cfg;
  st.schedule = linear_schedule(cfg.timesteps, cfg.beta_start, cfg.beta_end);
  const DenoiserConfig dc = make_denoiser_config(image_channels, cfg.hidden_width,
                                                 cfg.time_embed_dim);
  Rng rng(mix_seed(cfg.seed, 0x696e6974ull));  // "init" stream
  st.params = init_params(dc, rng);
  st.adam_m.assign(st.params.flat.size(), 0.0);
  st.adam_v.assign(st.params.flat.size(), 0.0);
  return st;
}

namespace detail {

// Everything one sample contributes to a step: its gradient sum (already
// weighted 1/batch) and its loss terms.
struct SampleWork {
  std::vector<double> grads;
  double rec = 0.0, cons = 0.0, total = 0.0;
  std::vector<BranchTrace> trace;
};

inline std::uint64_t step_stream_seed(std::uint64_t seed, long step, int slot) {
  return mix_seed(mix_seed(seed, 0x73746570ull, static_cast<std::uint64_t>(step)),
                  static_cast<std::uint64_t>(slot));
}

inline void process_sample(const TrainState& st, const RemovalTriplet& sample,
                           long step, int slot, SampleWork& work,
                           bool want_trace) {
  const TrainConfig& cfg = st.config;
  const double lambda = cfg.lambda_cons;
  const bool include_d =
      lambda > 0.0 &&
      (cfg.mode == TrainMode::kMcr || cfg.mode == TrainMode::kDilateOnly);
  const bool include_r =
      lambda > 0.0 &&
      (cfg.mode == TrainMode::kMcr || cfg.mode == TrainMode::kReshapeOnly);

  Rng rng(step_stream_seed(cfg.seed, step, slot));

  // Fixed draw order: t, eps, dilation radius, reshape. Every mode consumes
  // the same draws, which keeps trajectories comparable across modes.
  const ImageTensor x0 = to_model_domain(sample.ground_truth);
  const int t = static_cast<int>(rng.uniform_below(
      static_cast<std::uint64_t>(st.schedule.T)));
  ImageTensor eps(x0.channels, x0.height, x0.width);
  rng.fill_normal(eps.data);
  const int k = draw_dilation_radius(cfg.perturb, rng);
  const BinaryMask mask_d = dilate(sample.mask, k);
  const BinaryMask mask_r = reshape_perturb(sample.mask, cfg.perturb, rng);

  const ImageTensor x_t = forward_sample(x0, t, eps, st.schedule);
  const std::uint64_t x_t_hash = want_trace ? hash_doubles(x_t.data) : 0;
  const std::uint64_t eps_hash = want_trace ? hash_doubles(eps.data) : 0;
  auto record = [&](int branch) {
    if (want_trace)
      work.trace.push_back({slot, branch, t, x_t_hash, eps_hash});
  };

  const ImageTensor cond_o = cond_encode(x0, sample.mask);
  ForwardCache cache_o;
  record(0);
  const ImageTensor eps_o = denoiser_forward(st.params, x_t, t, cond_o, &cache_o);

  ImageTensor eps_d, eps_r;
  ForwardCache cache_d, cache_r;
  if (include_d) {
    record(1);
    eps_d = denoiser_forward(st.params, x_t, t, cond_encode(x0, mask_d), &cache_d);
  }
  if (include_r) {
    record(2);
    eps_r = denoiser_forward(st.params, x_t, t, cond_encode(x0, mask_r), &cache_r);
  }

  const auto n = static_cast<double>(eps.size());
  work.rec = rec_loss(eps, eps_o);
  work.cons = 0.0;
  if (include_d) work.cons += mse(eps_o, eps_d);
  if (include_r) work.cons += mse(eps_o, eps_r);
  work.total = total_loss(work.rec, work.cons, lambda);

  // Output-side gradients of the per-sample loss.
  ImageTensor g_o(eps.channels, eps.height, eps.width);
  for (std::size_t i = 0; i < g_o.size(); ++i)
    g_o.data[i] = 2.0 * (eps_o.data[i] - eps.data[i]) / n;
  ImageTensor g_d, g_r;
  if (include_d) {
    g_d = ImageTensor(eps.channels, eps.height, eps.width);
    for (std::size_t i = 0; i < g_d.size(); ++i) {
      const double diff = 2.0 * lambda * (eps_o.data[i] - eps_d.data[i]) / n;
      g_d.data[i] = -diff;
      if (!cfg.stop_gradient_original) g_o.data[i] += diff;
    }
  }
  if (include_r) {
    g_r = ImageTensor(eps.channels, eps.height, eps.width);
    for (std::size_t i = 0; i < g_r.size(); ++i) {
      const double diff = 2.0 * lambda * (eps_o.data[i] - eps_r.data[i]) / n;
      g_r.data[i] = -diff;
      if (!cfg.stop_gradient_original) g_o.data[i] += diff;
    }
  }

  // Accumulate parameter gradients in fixed branch order: O, D, R.
  work.grads.assign(st.params.flat.size(), 0.0);
  auto add = [&](const std::vector<double>& g) {
    for (std::size_t i = 0; i < work.grads.size(); ++i) work.grads[i] += g[i];
  };
  add(denoiser_backward(st.params, cache_o, g_o));
  if (include_d) add(denoiser_backward(st.params, cache_d, g_d));
  if (include_r) add(denoiser_backward(st.params, cache_r, g_r));
}

}  // namespace detail

/// One optimizer step over a batch. Randomness is a pure function of
/// (config.seed, state.step, sample slot); the reduction order over slots
/// and branches is fixed, so results do not depend on the thread count.
inline StepLoss train_step(TrainState& state,
                           std::span<const RemovalTriplet> batch,
                           std::vector<BranchTrace>* trace = nullptr) {
  if (batch.empty()) throw EmptyBatchError("train_step: empty batch");
  for (const auto& s : batch)
    if (s.mask.empty_mask()) throw EmptyMaskError("train_step: empty mask in batch");

  std::vector<detail::SampleWork> work(batch.size());
  const int threads = resolve_threads(state.config.threads, batch.size());
  parallel_for(batch.size(), threads, [&](std::size_t slot) {
    detail::process_sample(state, batch[slot], state.step,
                           static_cast<int>(slot), work[slot], trace != nullptr);
  });

  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  std::vector<double> grads(state.params.flat.size(), 0.0);
  StepLoss loss;
  for (std::size_t slot = 0; slot < work.size(); ++slot) {
    for (std::size_t i = 0; i < grads.size(); ++i)
      grads[i] += inv_batch * work[slot].grads[i];
    loss.rec += inv_batch * work[slot].rec;
    loss.cons += inv_batch * work[slot].cons;
    loss.total += inv_batch * work[slot].total;
    if (trace)
      trace->insert(trace->end(), work[slot].trace.begin(),
                    work[slot].trace.end());
  }

  AdamConfig adam;
  adam.learning_rate = state.config.learning_rate;
  adam_step(state.params.flat, grads, state.adam_m, state.adam_v,
            state.step + 1, adam);
  state.step += 1;
  return loss;
}

// ---------------------------------------------------------------------------
// Checkpoints
//
// Binary layout, little-endian throughout:
//   "MCR1"                                  magic
//   6 x i32: in_channels, out_channels, hidden_width, n_layers, kernel,
//            time_embed_dim
//   u64: parameter count P
//   P x f64: parameters (layer 0 kernel, bias, time projection; layer 1 ...)
//   P x f64: Adam first moments   (same order)
//   P x f64: Adam second moments  (same order)
//   u64: completed steps
//   u64: seed
//   4 x u64: generator state of the next step's stream
//   u64: config digest

struct Checkpoint {
  DenoiserParams params;
  std::vector<double> adam_m, adam_v;
  long step = 0;
  std::uint64_t seed = 0;
  Rng::state_type rng_state{};
  std::uint64_t config_digest = 0;
};

namespace detail {

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_i32(std::string& out, std::int32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_f64(std::string& out, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, 8);
  put_u64(out, bits);
}

struct ByteReader {
  const std::string& bytes;
  std::size_t pos = 0;
  void need(std::size_t n) const {
    if (pos + n > bytes.size())
      throw CorruptCheckpointError("checkpoint truncated");
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos + i]))
           << (8 * i);
    pos += 8;
    return v;
  }
  std::int32_t i32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[pos + i]))
           << (8 * i);
    pos += 4;
    return static_cast<std::int32_t>(v);
  }
  double f64() {
    const std::uint64_t bits = u64();
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
  }
};

}  // namespace detail

inline Rng::state_type next_step_stream_state(std::uint64_t seed, long step) {
  return Rng(mix_seed(seed, 0x73746570ull, static_cast<std::uint64_t>(step)))
      .state();
}

inline void save_checkpoint(const std::filesystem::path& path,
                            const Checkpoint& ckpt) {
  const DenoiserConfig& dc = ckpt.params.config;
  std::string out;
  out.reserve(64 + ckpt.params.flat.size() * 24);
  out += "MCR1";
  detail::put_i32(out, dc.in_channels);
  detail::put_i32(out, dc.out_channels);
  detail::put_i32(out, dc.hidden_width);
  detail::put_i32(out, DenoiserConfig::n_layers);
  detail::put_i32(out, DenoiserConfig::kernel);
  detail::put_i32(out, dc.time_embed_dim);
  detail::put_u64(out, ckpt.params.flat.size());
  for (const double d : ckpt.params.flat) detail::put_f64(out, d);
  for (const double d : ckpt.adam_m) detail::put_f64(out, d);
  for (const double d : ckpt.adam_v) detail::put_f64(out, d);
  detail::put_u64(out, static_cast<std::uint64_t>(ckpt.step));
  detail::put_u64(out, ckpt.seed);
  for (const std::uint64_t w : ckpt.rng_state) detail::put_u64(out, w);
  detail::put_u64(out, ckpt.config_digest);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write checkpoint " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f.flush()) throw IoError("short write to " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(f)),
                    std::istreambuf_iterator<char>());
  if (bytes.size() < 4 || bytes.compare(0, 4, "MCR1") != 0)
    throw CorruptCheckpointError("bad checkpoint magic in " + path.string());
  detail::ByteReader r{bytes, 4};
  Checkpoint ckpt;
  DenoiserConfig dc;
  dc.in_channels = r.i32();
  dc.out_channels = r.i32();
  dc.hidden_width = r.i32();
  const int n_layers = r.i32();
  const int kernel = r.i32();
  dc.time_embed_dim = r.i32();
  if (n_layers != DenoiserConfig::n_layers || kernel != DenoiserConfig::kernel)
    throw CorruptCheckpointError("unsupported architecture in checkpoint");
  try {
    validate(dc);
  } catch (const Error& e) {
    throw CorruptCheckpointError(std::string("bad checkpoint config: ") + e.what());
  }
  const std::uint64_t n = r.u64();
  if (n != param_count(dc))
    throw CorruptCheckpointError("parameter count mismatch in checkpoint");
  ckpt.params.config = dc;
  ckpt.params.flat.resize(n);
  ckpt.adam_m.resize(n);
  ckpt.adam_v.resize(n);
  for (auto& d : ckpt.params.flat) d = r.f64();
  for (auto& d : ckpt.adam_m) d = r.f64();
  for (auto& d : ckpt.adam_v) d = r.f64();
  ckpt.step = static_cast<long>(r.u64());
  ckpt.seed = r.u64();
  for (auto& w : ckpt.rng_state) w = r.u64();
  ckpt.config_digest = r.u64();
  if (r.pos != bytes.size())
    throw CorruptCheckpointError("trailing bytes in checkpoint " + path.string());
  return ckpt;
}

inline Checkpoint make_checkpoint(const TrainState& st) {
  Checkpoint ckpt;
  ckpt.params = st.params;
  ckpt.adam_m = st.adam_m;
  ckpt.adam_v = st.adam_v;
  ckpt.step = st.step;
  ckpt.seed = st.config.seed;
  ckpt.rng_state = next_step_stream_state(st.config.seed, st.step);
  ckpt.config_digest = config_digest(st.config);
  return ckpt;
}

// ---------------------------------------------------------------------------
// Training loop

struct TrainResult {
  TrainState state;
  std::vector<StepLoss> history;
  std::filesystem::path checkpoint_path;
  std::filesystem::path loss_log_path;
};

/// Shuffled batch order for one epoch; a pure function of (seed, epoch).
inline std::vector<std::size_t> epoch_permutation(std::uint64_t seed, long epoch,
                                                  std::size_t n) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(mix_seed(seed, 0x65706f6368ull, static_cast<std::uint64_t>(epoch)));
  for (std::size_t i = n; i > 1; --i)
    std::swap(perm[i - 1], perm[rng.uniform_below(i)]);
  return perm;
}

/// Runs cfg.steps optimizer steps over shuffled corpus batches, writing
/// `loss.tsv` plus periodic and final checkpoints into out_dir. The loss
/// log and the final checkpoint are pure functions of (cfg, corpus bytes);
/// enable log_timing=wall to trade that for wall-clock telemetry.
inline TrainResult train(TrainConfig cfg,
                         const std::filesystem::path& corpus_manifest,
                         const std::filesystem::path& out_dir,
                         const std::filesystem::path* resume = nullptr) {
  const std::vector<RemovalTriplet> corpus = load_corpus(corpus_manifest);
  if (corpus.empty()) throw EmptyBatchError("train: corpus is empty");
  for (const auto& t : corpus)
    if (!t.composite.same_shape(corpus.front().composite))
      throw ShapeMismatchError("train: corpus images must share one shape");
  if (static_cast<std::size_t>(cfg.batch_size) > corpus.size())
    throw ConfigError("batch_size exceeds corpus size");

  if (cfg.dilation_auto) {
    cfg.perturb.dilation_radius_k =
        default_dilation_radius(corpus.front().composite.width);
    cfg.dilation_auto = false;  // resolved; the digest covers the real radius
  }
  validate(cfg);

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec && !std::filesystem::is_directory(out_dir))
    throw IoError("cannot create " + out_dir.string());

  TrainState state = train_init(cfg, corpus.front().composite.channels);
  if (resume) {
    const Checkpoint ckpt = load_checkpoint(*resume);
    if (ckpt.config_digest != config_digest(cfg))
      throw ConfigError("checkpoint " + resume->string() +
                        " was produced by a different configuration");
    if (ckpt.params.config != state.params.config)
      throw CorruptCheckpointError("checkpoint architecture mismatch");
    state.params = ckpt.params;
    state.adam_m = ckpt.adam_m;
    state.adam_v = ckpt.adam_v;
    state.step = ckpt.step;
  }

  const std::filesystem::path log_path = out_dir / "loss.tsv";
  std::ofstream log(log_path, resume ? std::ios::app : std::ios::trunc);
  if (!log) throw IoError("cannot write " + log_path.string());
  if (!resume) log << "step\trec\tcons\ttotal\tseconds\n";
  log.precision(17);

  const std::size_t batches_per_epoch =
      corpus.size() / static_cast<std::size_t>(cfg.batch_size);
  std::vector<std::size_t> perm;
  long perm_epoch = -1;

  std::vector<RemovalTriplet> batch(cfg.batch_size);
  TrainResult result;
  const auto t_start = std::chrono::steady_clock::now();
  while (state.step < cfg.steps) {
    const long step = state.step;
    const long epoch = step / static_cast<long>(batches_per_epoch);
    if (epoch != perm_epoch) {
      perm = epoch_permutation(cfg.seed, epoch, corpus.size());
      perm_epoch = epoch;
    }
    const std::size_t base =
        static_cast<std::size_t>(step % static_cast<long>(batches_per_epoch)) *
        cfg.batch_size;
    for (int i = 0; i < cfg.batch_size; ++i) batch[i] = corpus[perm[base + i]];

    const StepLoss loss = train_step(state, batch);
    result.history.push_back(loss);

    double seconds = 0.0;
    if (cfg.log_walltime)
      seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                              t_start)
                    .count();
    char line[160];
    std::snprintf(line, sizeof(line), "%ld\t%.17g\t%.17g\t%.17g\t%.3f\n",
                  state.step, loss.rec, loss.cons, loss.total, seconds);
    log << line;

    if (cfg.checkpoint_every > 0 && state.step % cfg.checkpoint_every == 0 &&
        state.step < cfg.steps) {
      char name[48];
      std::snprintf(name, sizeof(name), "ckpt_%06ld.bin", state.step);
      save_checkpoint(out_dir / name, make_checkpoint(state));
    }
  }
  log.flush();
  if (!log) throw IoError("short write to " + log_path.string());

  result.checkpoint_path = out_dir / "ckpt_final.bin";
  save_checkpoint(result.checkpoint_path, make_checkpoint(state));
  result.loss_log_path = log_path;
  result.state = std::move(state);
  return result;
}

/// Denoiser functor over checkpoint parameters, usable with the sampler.
struct DenoiserModel {
  DenoiserParams params;
  ImageTensor operator()(const ImageTensor& x_t, int t,
                         const ImageTensor& cond) const {
    return denoiser_forward(params, x_t, t, cond);
  }
};

}  // namespace mcr
