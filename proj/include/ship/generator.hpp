#pragma once

// The SHIP generative model. A VAE encoder maps a visual feature to a latent
// code; the generator turns the code into instance-specific prompts (global
// learnable vectors plus a local bias from a small MLP) and reconstructs the
// feature by pushing prompts + class tokens through the frozen text encoder.
// An alternative generator decodes the latent code directly with an MLP
// trained from scratch, kept for ablations.
//
// All backward passes are written out by hand; the finite-difference suite in
// the tests pins them down.

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "ship/encoder.hpp"
#include "ship/feature_set.hpp"
#include "ship/io.hpp"
#include "ship/manifest.hpp"
#include "ship/nn.hpp"
#include "ship/rng.hpp"

namespace ship {

struct PromptConfig {
  int length = 4;            // L
  bool use_global = true;    // include learnable global prompt vectors
  bool sequential = false;   // per-position local bias instead of a shared one
  double init_std = 0.02;    // global prompt initialization scale
};

enum class GeneratorKind { text_encoder, scratch_mlp };

inline const char* generator_kind_name(GeneratorKind k) {
  return k == GeneratorKind::text_encoder ? "text_encoder" : "scratch_mlp";
}

inline GeneratorKind generator_kind_from_name(const std::string& s) {
  if (s == "text_encoder") return GeneratorKind::text_encoder;
  if (s == "scratch_mlp") return GeneratorKind::scratch_mlp;
  throw std::runtime_error("unknown generator kind: '" + s + "'");
}

struct LossBreakdown {
  double recon = 0.0;
  double kl = 0.0;
  double total = 0.0;
  double beta = 1.0;
};

inline LossBreakdown make_loss(double recon, double kl, double beta) {
  return LossBreakdown{recon, kl, recon + beta * kl, beta};
}

struct TrainConfig {
  int epochs = 200;
  int batch_size = 64;
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;
  int hidden_width = 128;
  double beta = 1.0;  // KL weight
  // Fraction of epochs over which the KL weight ramps from 0 to beta.
  // Without the ramp the posterior collapses before the decoder learns to
  // read the latent code, and synthesis loses all within-class diversity.
  double kl_warmup = 0.5;
  // Initial posterior log-variance (the vae.b_logvar bias). Negative values
  // start the posterior narrow so the latent signal is readable early.
  double logvar_init = -2.0;
  std::uint64_t seed = 0;
};

inline int default_hidden_width(int d) { return std::max(64, 4 * d); }

struct ShipGenerator {
  int d = 0;
  int d_tok = 0;
  int latent_dim = 0;  // equals d_tok
  int hidden = 0;
  GeneratorKind kind = GeneratorKind::text_encoder;
  PromptConfig prompt;
  ParameterSet params;

  int bias_out_dim() const {
    return prompt.sequential ? prompt.length * d_tok : d_tok;
  }
};

inline ShipGenerator make_generator(int d, int d_tok, int hidden,
                                    const PromptConfig& pcfg,
                                    GeneratorKind kind, std::uint64_t seed,
                                    double logvar_init = -2.0) {
  if (d < 1 || d_tok < 1) throw std::invalid_argument("generator dims must be positive");
  if (hidden < 1) throw std::invalid_argument("hidden width must be positive");
  if (pcfg.length < 1) throw std::invalid_argument("prompt length must be >= 1");
  if (pcfg.init_std <= 0.0) throw std::invalid_argument("init_std must be positive");

  ShipGenerator gen;
  gen.d = d;
  gen.d_tok = d_tok;
  gen.latent_dim = d_tok;  // latent code lives in token-embedding space
  gen.hidden = hidden;
  gen.kind = kind;
  gen.prompt = pcfg;

  auto init = [&](const std::string& name, Eigen::Index rows, Eigen::Index cols,
                  double std_dev) {
    Eigen::MatrixXd& t = gen.params.add(name, rows, cols);
    if (std_dev > 0.0) {
      Rng rng(mix_seed({seed, hash64(name)}));
      rng.fill_gaussian(t, std_dev);
    }
  };

  const int dz = gen.latent_dim;
  init("vae.w1", hidden, d, std::sqrt(2.0 / d));
  init("vae.b1", hidden, 1, 0.0);
  init("vae.w_mu", dz, hidden, std::sqrt(1.0 / hidden));
  init("vae.b_mu", dz, 1, 0.0);
  init("vae.w_logvar", dz, hidden, std::sqrt(1.0 / hidden));
  // Starting the posterior narrow keeps the latent signal readable from the
  // first steps; the KL term widens it toward the prior during training.
  gen.params.add("vae.b_logvar", dz, 1).setConstant(logvar_init);

  if (kind == GeneratorKind::text_encoder) {
    const int r_dim = gen.bias_out_dim();
    init("bias.w1", hidden, dz, std::sqrt(2.0 / dz));
    init("bias.b1", hidden, 1, 0.0);
    init("bias.w2", r_dim, hidden, std::sqrt(1.0 / hidden));
    init("bias.b2", r_dim, 1, 0.0);
    if (pcfg.use_global)
      init("prompts.global", pcfg.length, d_tok, pcfg.init_std);
  } else {
    init("scratch.w1", hidden, dz + d_tok, std::sqrt(2.0 / (dz + d_tok)));
    init("scratch.b1", hidden, 1, 0.0);
    init("scratch.w2", hidden, hidden, std::sqrt(2.0 / hidden));
    init("scratch.b2", hidden, 1, 0.0);
    init("scratch.w3", d, hidden, std::sqrt(1.0 / hidden));
    init("scratch.b3", d, 1, 0.0);
  }
  return gen;
}

// ---------------------------------------------------------------------------
// Forward passes with caches for backprop.

struct VaeForward {
  Eigen::VectorXd x, h_pre, h, mu, logvar;
};

inline VaeForward vae_forward(const ShipGenerator& gen,
                              const Eigen::VectorXd& x) {
  if (x.size() != gen.d) throw std::invalid_argument("vae_encode: dimension mismatch");
  VaeForward f;
  f.x = x;
  f.h_pre = affine(gen.params.value("vae.w1"), gen.params.value("vae.b1"), x);
  f.h = relu(f.h_pre);
  f.mu = affine(gen.params.value("vae.w_mu"), gen.params.value("vae.b_mu"), f.h);
  f.logvar = affine(gen.params.value("vae.w_logvar"),
                    gen.params.value("vae.b_logvar"), f.h);
  return f;
}

inline std::pair<Eigen::VectorXd, Eigen::VectorXd> vae_encode(
    const ShipGenerator& gen, const Eigen::VectorXd& x) {
  const double norm = x.norm();
  if (std::abs(norm - 1.0) > kNormTolerance)
    throw std::invalid_argument("vae_encode: input is not unit norm");
  VaeForward f = vae_forward(gen, x);
  return {f.mu, f.logvar};
}

inline Eigen::VectorXd reparameterize(const Eigen::VectorXd& mu,
                                      const Eigen::VectorXd& logvar,
                                      const Eigen::VectorXd& eps) {
  if (mu.size() != logvar.size() || mu.size() != eps.size())
    throw std::invalid_argument("reparameterize: shape mismatch");
  return mu.array() + (0.5 * logvar.array()).exp() * eps.array();
}

struct BiasForward {
  Eigen::VectorXd z, h_pre, h, r;
};

inline BiasForward bias_forward(const ShipGenerator& gen,
                                const Eigen::VectorXd& z) {
  BiasForward f;
  f.z = z;
  f.h_pre = affine(gen.params.value("bias.w1"), gen.params.value("bias.b1"), z);
  f.h = relu(f.h_pre);
  f.r = affine(gen.params.value("bias.w2"), gen.params.value("bias.b2"), f.h);
  return f;
}

// Prompt vectors from a local bias r: p_i + r (identical), p_i + r_i
// (sequential), or the bias alone when global prompts are disabled.
inline std::vector<Eigen::VectorXd> prompt_vectors(const ShipGenerator& gen,
                                                   const Eigen::VectorXd& r) {
  const int L = gen.prompt.length;
  std::vector<Eigen::VectorXd> out(static_cast<std::size_t>(L));
  for (int i = 0; i < L; ++i) {
    Eigen::VectorXd p = gen.prompt.sequential
                            ? r.segment(static_cast<Eigen::Index>(i) * gen.d_tok,
                                        gen.d_tok)
                            : r;
    if (gen.prompt.use_global)
      p += gen.params.value("prompts.global").row(i).transpose();
    out[static_cast<std::size_t>(i)] = std::move(p);
  }
  return out;
}

inline TokenSequence assemble_prompt(const ShipGenerator& gen,
                                     const Eigen::VectorXd& z) {
  if (z.size() != gen.latent_dim)
    throw std::invalid_argument("assemble_prompt: latent dimension mismatch");
  if (gen.kind != GeneratorKind::text_encoder)
    throw std::logic_error("assemble_prompt: generator has no prompt path");
  BiasForward bias = bias_forward(gen, z);
  TokenSequence seq;
  for (auto& p : prompt_vectors(gen, bias.r)) seq.vectors.push_back(std::move(p));
  return seq;
}

struct ScratchForward {
  Eigen::VectorXd input, h1_pre, h1, h2_pre, h2, out_pre;
};

inline ScratchForward scratch_forward(const ShipGenerator& gen,
                                      const Eigen::VectorXd& z,
                                      const Eigen::VectorXd& class_embed) {
  ScratchForward f;
  f.input.resize(gen.latent_dim + gen.d_tok);
  f.input << z, class_embed;
  f.h1_pre = affine(gen.params.value("scratch.w1"), gen.params.value("scratch.b1"),
                    f.input);
  f.h1 = relu(f.h1_pre);
  f.h2_pre = affine(gen.params.value("scratch.w2"), gen.params.value("scratch.b2"),
                    f.h1);
  f.h2 = relu(f.h2_pre);
  f.out_pre = affine(gen.params.value("scratch.w3"), gen.params.value("scratch.b3"),
                     f.h2);
  return f;
}

inline Eigen::VectorXd mean_token_embedding(const TokenSequence& tokens) {
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(tokens.vectors.front().size());
  for (const auto& v : tokens.vectors) mean += v;
  return mean / static_cast<double>(tokens.length());
}

struct ReconForward {
  BiasForward bias;          // text path
  TokenSequence tokens;      // prompts ++ class tokens
  ScratchForward scratch;    // scratch path
  Eigen::VectorXd y;         // unit-norm reconstruction
};

inline ReconForward reconstruct_forward(const ShipGenerator& gen,
                                        const DualEncoder& enc,
                                        const Eigen::VectorXd& z,
                                        const TokenSequence& class_tokens) {
  ReconForward f;
  if (gen.kind == GeneratorKind::text_encoder) {
    f.bias = bias_forward(gen, z);
    for (auto& p : prompt_vectors(gen, f.bias.r))
      f.tokens.vectors.push_back(std::move(p));
    for (const auto& t : class_tokens.vectors) f.tokens.vectors.push_back(t);
    f.y = enc.encode_text(f.tokens);
  } else {
    f.scratch = scratch_forward(gen, z, mean_token_embedding(class_tokens));
    const double norm = f.scratch.out_pre.norm();
    if (norm < 1e-12) throw std::runtime_error("degenerate scratch output");
    f.y = f.scratch.out_pre / norm;
  }
  return f;
}

inline Eigen::VectorXd reconstruct(const ShipGenerator& gen,
                                   const DualEncoder& enc,
                                   const Eigen::VectorXd& z,
                                   const std::string& class_name) {
  if (z.size() != gen.latent_dim)
    throw std::invalid_argument("reconstruct: latent dimension mismatch");
  return reconstruct_forward(gen, enc, z, enc.embed_tokens(class_name)).y;
}

// ---------------------------------------------------------------------------
// ELBO.

inline LossBreakdown elbo_loss(const Eigen::VectorXd& x,
                               const Eigen::VectorXd& x_recon,
                               const Eigen::VectorXd& mu,
                               const Eigen::VectorXd& logvar, double beta) {
  if (x.size() != x_recon.size())
    throw std::invalid_argument("elbo_loss: feature shape mismatch");
  if (mu.size() != logvar.size())
    throw std::invalid_argument("elbo_loss: latent shape mismatch");
  const double recon =
      (x - x_recon).squaredNorm() / static_cast<double>(x.size());
  // Closed-form KL(N(mu, diag(exp(logvar))) || N(0, I)).
  const double kl =
      0.5 * (mu.array().square() + logvar.array().exp() - 1.0 - logvar.array())
                .sum();
  return make_loss(recon, kl, beta);
}

struct StepForward {
  VaeForward vae;
  Eigen::VectorXd eps, z;
  ReconForward recon;
  LossBreakdown loss;
};

inline StepForward step_forward(const ShipGenerator& gen, const DualEncoder& enc,
                                const Eigen::VectorXd& x,
                                const TokenSequence& class_tokens,
                                const Eigen::VectorXd& eps, double beta) {
  StepForward f;
  f.vae = vae_forward(gen, x);
  f.eps = eps;
  f.z = reparameterize(f.vae.mu, f.vae.logvar, eps);
  f.recon = reconstruct_forward(gen, enc, f.z, class_tokens);
  f.loss = elbo_loss(x, f.recon.y, f.vae.mu, f.vae.logvar, beta);
  return f;
}

// Accumulates d(total)/d(params) * scale into the generator's grads.
inline void step_backward(ShipGenerator& gen, const DualEncoder& enc,
                          const StepForward& f, double beta, double scale) {
  const int L = gen.prompt.length;
  const int d_tok = gen.d_tok;

  // recon = |x - y|^2 / d
  const Eigen::VectorXd dy =
      (f.recon.y - f.vae.x) * (2.0 * scale / static_cast<double>(gen.d));

  Eigen::VectorXd dz = Eigen::VectorXd::Zero(gen.latent_dim);
  if (gen.kind == GeneratorKind::text_encoder) {
    const auto token_grads = enc.encode_text_vjp(f.recon.tokens, dy);
    Eigen::VectorXd dr = Eigen::VectorXd::Zero(gen.bias_out_dim());
    for (int i = 0; i < L; ++i) {
      const Eigen::VectorXd& dp = token_grads[static_cast<std::size_t>(i)];
      if (gen.prompt.use_global)
        gen.params.grad("prompts.global").row(i) += dp.transpose();
      if (gen.prompt.sequential)
        dr.segment(static_cast<Eigen::Index>(i) * d_tok, d_tok) += dp;
      else
        dr += dp;
    }
    // bias net backward
    const Eigen::VectorXd dh = affine_backward(
        gen.params.value("bias.w2"), f.recon.bias.h, dr,
        gen.params.grad("bias.w2"), gen.params.grad("bias.b2"));
    const Eigen::VectorXd dh_pre = relu_backward(f.recon.bias.h_pre, dh);
    dz = affine_backward(gen.params.value("bias.w1"), f.recon.bias.z, dh_pre,
                         gen.params.grad("bias.w1"), gen.params.grad("bias.b1"));
  } else {
    const auto& s = f.recon.scratch;
    const Eigen::VectorXd dout = normalize_backward(s.out_pre, dy);
    const Eigen::VectorXd dh2 = affine_backward(
        gen.params.value("scratch.w3"), s.h2, dout,
        gen.params.grad("scratch.w3"), gen.params.grad("scratch.b3"));
    const Eigen::VectorXd dh2_pre = relu_backward(s.h2_pre, dh2);
    const Eigen::VectorXd dh1 = affine_backward(
        gen.params.value("scratch.w2"), s.h1, dh2_pre,
        gen.params.grad("scratch.w2"), gen.params.grad("scratch.b2"));
    const Eigen::VectorXd dh1_pre = relu_backward(s.h1_pre, dh1);
    const Eigen::VectorXd dinput = affine_backward(
        gen.params.value("scratch.w1"), s.input, dh1_pre,
        gen.params.grad("scratch.w1"), gen.params.grad("scratch.b1"));
    dz = dinput.head(gen.latent_dim);
  }

  // z = mu + exp(logvar/2) * eps
  Eigen::VectorXd dmu = dz;
  Eigen::VectorXd dlogvar =
      (dz.array() * f.eps.array() * 0.5 * (0.5 * f.vae.logvar.array()).exp())
          .matrix();

  // KL term: d/dmu = mu, d/dlogvar = (exp(logvar) - 1) / 2
  dmu += (beta * scale) * f.vae.mu;
  dlogvar.array() += (beta * scale) * 0.5 * (f.vae.logvar.array().exp() - 1.0);

  const Eigen::VectorXd dh_mu = affine_backward(
      gen.params.value("vae.w_mu"), f.vae.h, dmu, gen.params.grad("vae.w_mu"),
      gen.params.grad("vae.b_mu"));
  const Eigen::VectorXd dh_lv = affine_backward(
      gen.params.value("vae.w_logvar"), f.vae.h, dlogvar,
      gen.params.grad("vae.w_logvar"), gen.params.grad("vae.b_logvar"));
  const Eigen::VectorXd dh_pre = relu_backward(f.vae.h_pre, dh_mu + dh_lv);
  affine_backward(gen.params.value("vae.w1"), f.vae.x, dh_pre,
                  gen.params.grad("vae.w1"), gen.params.grad("vae.b1"));
}

// ---------------------------------------------------------------------------
// Training and synthesis.

struct TrainLog {
  std::vector<LossBreakdown> epoch_mean;
};

inline ShipGenerator train_generator(const DualEncoder& enc,
                                     const LabeledFeatureSet& base,
                                     const PromptConfig& pcfg,
                                     const TrainConfig& tcfg,
                                     GeneratorKind kind = GeneratorKind::text_encoder,
                                     TrainLog* log = nullptr) {
  if (base.size() == 0) throw std::invalid_argument("empty base set");
  if (base.dim() != enc.dim())
    throw std::invalid_argument("train_generator: feature dimension mismatch");
  if (tcfg.epochs < 0 || tcfg.batch_size < 1 || tcfg.hidden_width < 1 ||
      tcfg.learning_rate < 0.0 || tcfg.weight_decay < 0.0 || tcfg.beta < 0.0 ||
      tcfg.kl_warmup < 0.0 || tcfg.kl_warmup > 1.0)
    throw std::invalid_argument("train_generator: invalid train config");

  ShipGenerator gen = make_generator(enc.dim(), enc.token_dim(),
                                     tcfg.hidden_width, pcfg, kind, tcfg.seed,
                                     tcfg.logvar_init);

  const std::size_t n = static_cast<std::size_t>(base.size());
  std::vector<Eigen::VectorXd> features(n);
  for (std::size_t i = 0; i < n; ++i)
    features[i] = base.row_as_double(static_cast<Eigen::Index>(i));

  std::map<std::string, TokenSequence> class_tokens;
  for (const auto& label : base.labels)
    if (!class_tokens.count(label))
      class_tokens.emplace(label, enc.embed_tokens(label));

  Rng rng(mix_seed({tcfg.seed, hash64("gen.train")}));
  AdamW opt(tcfg.learning_rate, tcfg.weight_decay);

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  const int warmup_epochs =
      static_cast<int>(tcfg.kl_warmup * static_cast<double>(tcfg.epochs));

  for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
    // KL weight and reparameterization noise ramp up together: the first
    // epochs train a plain autoencoder so the decoder couples to the latent
    // code, then the schedule tightens the posterior toward the prior.
    const double ramp =
        warmup_epochs > 0 ? std::min(1.0, static_cast<double>(epoch) /
                                              static_cast<double>(warmup_epochs))
                          : 1.0;
    const double beta_now = tcfg.beta * ramp;
    opt.set_learning_rate(cosine_lr(tcfg.learning_rate, epoch, tcfg.epochs));
    rng.shuffle(order);
    double recon_sum = 0.0, kl_sum = 0.0;
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(tcfg.batch_size)) {
      const std::size_t stop = std::min(n, start + static_cast<std::size_t>(tcfg.batch_size));
      const double scale = 1.0 / static_cast<double>(stop - start);
      gen.params.zero_grad();
      for (std::size_t at = start; at < stop; ++at) {
        const std::size_t idx = order[at];
        const Eigen::VectorXd eps = ramp * rng.gaussian_vector(gen.latent_dim);
        StepForward fwd = step_forward(gen, enc, features[idx],
                                       class_tokens.at(base.labels[idx]), eps,
                                       beta_now);
        if (!std::isfinite(fwd.loss.total))
          throw std::runtime_error(
              "non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
              std::to_string(start / static_cast<std::size_t>(tcfg.batch_size)) +
              ": recon=" + std::to_string(fwd.loss.recon) +
              " kl=" + std::to_string(fwd.loss.kl));
        recon_sum += fwd.loss.recon;
        kl_sum += fwd.loss.kl;
        step_backward(gen, enc, fwd, beta_now, scale);
      }
      opt.step(gen.params);
    }
    if (log)
      log->epoch_mean.push_back(make_loss(recon_sum / static_cast<double>(n),
                                          kl_sum / static_cast<double>(n),
                                          tcfg.beta));
  }
  return gen;
}

// Draws per_class latent codes per class from per-(class, sample) streams and
// decodes them. Adding classes or samples never perturbs other draws.
inline LabeledFeatureSet synthesize(const ShipGenerator& gen,
                                    const DualEncoder& enc,
                                    const ClassVocabulary& classes,
                                    int per_class, std::uint64_t seed) {
  if (classes.size() == 0) throw std::invalid_argument("synthesize: no classes");
  if (per_class < 0) throw std::invalid_argument("synthesize: negative per_class");

  LabeledFeatureSet out;
  out.features.resize(static_cast<Eigen::Index>(classes.size()) * per_class, gen.d);
  Eigen::Index row = 0;
  for (std::size_t ci = 0; ci < classes.size(); ++ci) {
    const std::string& name = classes.names[ci];
    const TokenSequence class_tokens = enc.embed_tokens(name);
    for (int k = 0; k < per_class; ++k) {
      Rng rng(mix_seed({seed, static_cast<std::uint64_t>(ci),
                        static_cast<std::uint64_t>(k)}));
      const Eigen::VectorXd z = rng.gaussian_vector(gen.latent_dim);
      const Eigen::VectorXd y = reconstruct_forward(gen, enc, z, class_tokens).y;
      out.features.row(row++) = y.cast<float>().transpose();
      out.labels.push_back(name);
      out.origin.push_back(Origin::synthetic);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints. Container: one line of UTF-8 JSON, then per-tensor blobs of
// (u32 name length, name, u32 element count, f32 LE row-major data) in
// sorted name order.

inline void write_tensor_blob(std::ostream& out, const std::string& name,
                              const Eigen::MatrixXd& value) {
  io::write_u32(out, static_cast<std::uint32_t>(name.size()));
  io::write_bytes(out, name.data(), name.size());
  io::write_u32(out, static_cast<std::uint32_t>(value.size()));
  for (Eigen::Index r = 0; r < value.rows(); ++r)
    for (Eigen::Index c = 0; c < value.cols(); ++c)
      io::write_f32(out, static_cast<float>(value(r, c)));
}

inline void read_tensor_blob_into(std::istream& in, const std::string& name,
                                  Eigen::MatrixXd& value) {
  const std::uint32_t count = io::read_u32(in, name.c_str());
  if (count != static_cast<std::uint32_t>(value.size()))
    throw std::runtime_error("dimension mismatch for parameter '" + name +
                             "': blob has " + std::to_string(count) +
                             " elements, expected " + std::to_string(value.size()));
  for (Eigen::Index r = 0; r < value.rows(); ++r)
    for (Eigen::Index c = 0; c < value.cols(); ++c)
      value(r, c) = static_cast<double>(io::read_f32(in, name.c_str()));
}

inline void save_generator(const ShipGenerator& gen, const std::string& path) {
  nlohmann::ordered_json header;
  header["format"] = "SHIPGEN1";
  header["d"] = gen.d;
  header["d_tok"] = gen.d_tok;
  header["L"] = gen.prompt.length;
  header["use_global"] = gen.prompt.use_global;
  header["sequential"] = gen.prompt.sequential;
  header["kind"] = generator_kind_name(gen.kind);
  header["hidden"] = gen.hidden;
  auto out = io::open_output(path);
  const std::string line = header.dump();
  io::write_bytes(out, line.data(), line.size());
  io::write_bytes(out, "\n", 1);
  for (const auto& t : gen.params) write_tensor_blob(out, t.name, t.value);
}

inline ShipGenerator load_generator(const std::string& path) {
  auto in = io::open_input(path);
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("truncated payload: checkpoint header");
  nlohmann::json header = nlohmann::json::parse(line);
  if (header.at("format").get<std::string>() != "SHIPGEN1")
    throw std::runtime_error("bad magic: expected SHIPGEN1 header");

  PromptConfig pcfg;
  pcfg.length = header.at("L").get<int>();
  pcfg.use_global = header.at("use_global").get<bool>();
  pcfg.sequential = header.at("sequential").get<bool>();
  ShipGenerator gen = make_generator(
      header.at("d").get<int>(), header.at("d_tok").get<int>(),
      header.at("hidden").get<int>(), pcfg,
      generator_kind_from_name(header.at("kind").get<std::string>()), 0);

  std::size_t loaded = 0;
  while (in.peek() != EOF) {
    const std::string name = io::read_string(in, "tensor name");
    if (!gen.params.has(name))
      throw std::runtime_error("unknown parameter in checkpoint: '" + name + "'");
    read_tensor_blob_into(in, name, gen.params.value(name));
    ++loaded;
  }
  if (loaded != gen.params.size())
    throw std::runtime_error("checkpoint is missing parameters: has " +
                             std::to_string(loaded) + ", expected " +
                             std::to_string(gen.params.size()));
  return gen;
}

}  // namespace ship
