#pragma once

// Classifier heads over the frozen dual encoder: the zero-shot baseline, a
// prompt tuner with shared learnable context vectors, a residual feature
// adapter, and a training-free cache head keyed on stored features. The
// gradient-based fitters optionally mix in synthetic features for classes
// that have no real training data; with synthesis disabled they are exactly
// their baseline counterparts, down to the parameter trajectory.

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "ship/encoder.hpp"
#include "ship/feature_set.hpp"
#include "ship/generator.hpp"
#include "ship/io.hpp"
#include "ship/manifest.hpp"
#include "ship/nn.hpp"
#include "ship/rng.hpp"

namespace ship {

enum class SynthMode { per_step, fixed };

inline const char* synth_mode_name(SynthMode m) {
  return m == SynthMode::per_step ? "per_step" : "fixed";
}

inline SynthMode synth_mode_from_name(const std::string& s) {
  if (s == "per_step") return SynthMode::per_step;
  if (s == "fixed") return SynthMode::fixed;
  throw std::runtime_error("unknown synth mode: '" + s + "'");
}

struct HeadTrainConfig {
  int epochs = 100;
  int batch_size = 32;
  double learning_rate = 2e-3;
  double weight_decay = 0.0;
  int synth_per_class = 4;        // fresh synthetic rows per label-only class
  SynthMode synth_mode = SynthMode::per_step;
  std::uint64_t seed = 0;
  double adapter_ratio = 0.2;
  double cache_alpha = 1.0;
  double cache_beta = 5.5;
  int context_length = 16;        // prompt-tuner context vectors
};

struct ZeroShotHead {
  PromptTemplate tmpl;
  std::vector<std::string> classes;
};

struct PromptTunerHead {
  Eigen::MatrixXd ctx;  // M x d_tok learned context vectors
  std::vector<std::string> classes;
};

struct AdapterHead {
  Eigen::MatrixXd w1, b1, w2, b2;  // d -> d/4 -> d bottleneck
  double ratio = 0.2;
  PromptTemplate tmpl;
  std::vector<std::string> classes;
};

struct CacheHead {
  Eigen::MatrixXd keys;    // n x d stored features
  Eigen::MatrixXd values;  // n x C one-hot labels over `classes`
  double alpha = 1.0;
  double beta = 5.5;
  PromptTemplate tmpl;
  std::vector<std::string> classes;
};

using ClassifierHead =
    std::variant<ZeroShotHead, PromptTunerHead, AdapterHead, CacheHead>;

inline const std::vector<std::string>& head_classes(const ClassifierHead& head) {
  return std::visit([](const auto& h) -> const std::vector<std::string>& {
    return h.classes;
  }, head);
}

inline std::string head_kind_name(const ClassifierHead& head) {
  if (std::holds_alternative<ZeroShotHead>(head)) return "zero_shot";
  if (std::holds_alternative<PromptTunerHead>(head)) return "prompt_tuner";
  if (std::holds_alternative<AdapterHead>(head)) return "adapter";
  return "cache";
}

// ---------------------------------------------------------------------------
// Logits.

inline Eigen::MatrixXd text_weights(const DualEncoder& enc,
                                    const PromptTemplate& tmpl,
                                    const std::vector<std::string>& classes) {
  Eigen::MatrixXd w(static_cast<Eigen::Index>(classes.size()), enc.dim());
  for (std::size_t c = 0; c < classes.size(); ++c)
    w.row(static_cast<Eigen::Index>(c)) =
        class_text_feature(enc, tmpl, classes[c]).transpose();
  return w;
}

inline TokenSequence tuner_tokens(const Eigen::MatrixXd& ctx,
                                  const TokenSequence& class_tokens) {
  TokenSequence seq;
  for (Eigen::Index i = 0; i < ctx.rows(); ++i)
    seq.vectors.push_back(ctx.row(i).transpose());
  for (const auto& t : class_tokens.vectors) seq.vectors.push_back(t);
  return seq;
}

inline Eigen::MatrixXd tuner_weights(const DualEncoder& enc,
                                     const Eigen::MatrixXd& ctx,
                                     const std::vector<std::string>& classes) {
  Eigen::MatrixXd w(static_cast<Eigen::Index>(classes.size()), enc.dim());
  for (std::size_t c = 0; c < classes.size(); ++c)
    w.row(static_cast<Eigen::Index>(c)) =
        enc.encode_text(tuner_tokens(ctx, enc.embed_tokens(classes[c])))
            .transpose();
  return w;
}

inline Eigen::VectorXd adapter_transform(const AdapterHead& h,
                                         const Eigen::VectorXd& x) {
  const Eigen::VectorXd a =
      h.w2 * relu(h.w1 * x + h.b1.col(0)) + h.b2.col(0);
  const Eigen::VectorXd v = h.ratio * a + (1.0 - h.ratio) * x;
  const double norm = v.norm();
  if (norm < 1e-12) throw std::runtime_error("adapter produced a zero feature");
  return v / norm;
}

// Rows of X are unit-norm features (double). Returns n x |eval_classes|.
inline Eigen::MatrixXd head_logits_matrix(
    const ClassifierHead& head, const DualEncoder& enc,
    const Eigen::MatrixXd& x_rows, const std::vector<std::string>& eval_classes) {
  if (eval_classes.empty()) throw std::invalid_argument("empty class list");
  const double scale = enc.logit_scale();

  if (const auto* zs = std::get_if<ZeroShotHead>(&head)) {
    return scale * x_rows * text_weights(enc, zs->tmpl, eval_classes).transpose();
  }
  if (const auto* pt = std::get_if<PromptTunerHead>(&head)) {
    return scale * x_rows * tuner_weights(enc, pt->ctx, eval_classes).transpose();
  }
  if (const auto* ad = std::get_if<AdapterHead>(&head)) {
    Eigen::MatrixXd adapted(x_rows.rows(), x_rows.cols());
    for (Eigen::Index i = 0; i < x_rows.rows(); ++i)
      adapted.row(i) = adapter_transform(*ad, x_rows.row(i).transpose()).transpose();
    return scale * adapted * text_weights(enc, ad->tmpl, eval_classes).transpose();
  }

  const auto& cache = std::get<CacheHead>(head);
  // affinity(i, k) = exp(-beta * (1 - x_i . key_k))
  const Eigen::MatrixXd affinity =
      (-cache.beta *
       (1.0 - (x_rows * cache.keys.transpose()).array()))
          .exp()
          .matrix();
  Eigen::MatrixXd logits =
      scale * x_rows * text_weights(enc, cache.tmpl, eval_classes).transpose();
  std::map<std::string, Eigen::Index> cache_index;
  for (std::size_t c = 0; c < cache.classes.size(); ++c)
    cache_index[cache.classes[c]] = static_cast<Eigen::Index>(c);
  for (std::size_t c = 0; c < eval_classes.size(); ++c) {
    auto it = cache_index.find(eval_classes[c]);
    if (it == cache_index.end() || cache.values.col(it->second).sum() == 0.0)
      throw std::runtime_error("head cannot score unseen classes: '" +
                               eval_classes[c] + "' has no cache keys");
    logits.col(static_cast<Eigen::Index>(c)) +=
        cache.alpha * affinity * cache.values.col(it->second);
  }
  return logits;
}

inline Eigen::VectorXd head_logits(const ClassifierHead& head,
                                   const DualEncoder& enc,
                                   const Eigen::VectorXd& x,
                                   const std::vector<std::string>& eval_classes) {
  return head_logits_matrix(head, enc, x.transpose(), eval_classes)
      .row(0)
      .transpose();
}

// Ties break toward the lowest class index.
inline Eigen::Index argmax_first(const Eigen::VectorXd& v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

inline std::vector<std::string> predict_labels(
    const ClassifierHead& head, const DualEncoder& enc,
    const Eigen::MatrixXd& x_rows, const std::vector<std::string>& eval_classes) {
  const Eigen::MatrixXd logits = head_logits_matrix(head, enc, x_rows, eval_classes);
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index i = 0; i < logits.rows(); ++i)
    out.push_back(eval_classes[static_cast<std::size_t>(
        argmax_first(logits.row(i).transpose()))]);
  return out;
}

inline std::string predict(const ClassifierHead& head, const DualEncoder& enc,
                           const Eigen::VectorXd& x) {
  const auto& classes = head_classes(head);
  return classes[static_cast<std::size_t>(
      argmax_first(head_logits(head, enc, x, classes)))];
}

// Classification probabilities of x against the class list (softmax over
// temperature-scaled cosines).
inline Eigen::VectorXd zero_shot_logits(const DualEncoder& enc,
                                        const PromptTemplate& tmpl,
                                        const std::vector<std::string>& classes,
                                        const Eigen::VectorXd& x) {
  if (classes.empty()) throw std::invalid_argument("empty class list");
  const double norm = x.norm();
  if (std::abs(norm - 1.0) > kNormTolerance)
    throw std::invalid_argument("zero_shot_logits: input is not unit norm");
  return softmax(enc.logit_scale() * text_weights(enc, tmpl, classes) * x);
}

// ---------------------------------------------------------------------------
// Fitting.

namespace detail {

struct TrainPool {
  std::vector<Eigen::VectorXd> features;
  std::vector<std::size_t> label_index;       // into `classes`
  std::vector<std::size_t> absent_classes;    // classes with no real rows
};

inline TrainPool build_pool(const std::vector<std::string>& classes,
                            const LabeledFeatureSet& train) {
  if (train.size() == 0) throw std::invalid_argument("empty training set");
  std::map<std::string, std::size_t> index;
  for (std::size_t c = 0; c < classes.size(); ++c) index[classes[c]] = c;
  TrainPool pool;
  std::vector<bool> present(classes.size(), false);
  for (Eigen::Index i = 0; i < train.size(); ++i) {
    auto it = index.find(train.labels[static_cast<std::size_t>(i)]);
    if (it == index.end())
      throw std::invalid_argument("training label outside class list: '" +
                                  train.labels[static_cast<std::size_t>(i)] + "'");
    pool.features.push_back(train.row_as_double(i));
    pool.label_index.push_back(it->second);
    present[it->second] = true;
  }
  for (std::size_t c = 0; c < classes.size(); ++c)
    if (!present[c]) pool.absent_classes.push_back(c);
  return pool;
}

// Appends fixed-mode synthetic rows to the pool before training begins.
inline void append_fixed_synthesis(TrainPool& pool,
                                   const std::vector<std::string>& classes,
                                   const ShipGenerator& gen,
                                   const DualEncoder& enc,
                                   const HeadTrainConfig& cfg) {
  ClassVocabulary absent;
  for (std::size_t c : pool.absent_classes) absent.names.push_back(classes[c]);
  if (absent.names.empty()) return;
  const LabeledFeatureSet synth =
      synthesize(gen, enc, absent, cfg.synth_per_class,
                 mix_seed({cfg.seed, hash64("head.fixed_synth")}));
  for (Eigen::Index i = 0; i < synth.size(); ++i) {
    pool.features.push_back(synth.row_as_double(i));
    auto it = std::find(classes.begin(), classes.end(),
                        synth.labels[static_cast<std::size_t>(i)]);
    pool.label_index.push_back(
        static_cast<std::size_t>(it - classes.begin()));
  }
}

struct Batch {
  std::vector<Eigen::VectorXd> features;
  std::vector<std::size_t> label_index;
};

// Fresh per-step synthesis for label-only classes, drawn from the fit rng so
// the whole trajectory is a pure function of the seed.
inline void append_step_synthesis(Batch& batch,
                                  const std::vector<std::string>& classes,
                                  const TrainPool& pool,
                                  const ShipGenerator* gen,
                                  const DualEncoder& enc,
                                  const HeadTrainConfig& cfg, Rng& rng,
                                  const std::map<std::string, TokenSequence>& tokens) {
  if (!gen || cfg.synth_per_class <= 0 || cfg.synth_mode != SynthMode::per_step)
    return;
  for (std::size_t c : pool.absent_classes) {
    for (int k = 0; k < cfg.synth_per_class; ++k) {
      const Eigen::VectorXd z = rng.gaussian_vector(gen->latent_dim);
      batch.features.push_back(
          reconstruct_forward(*gen, enc, z, tokens.at(classes[c])).y);
      batch.label_index.push_back(c);
    }
  }
}

inline void check_finite(double loss, int epoch, std::size_t batch_index,
                         const char* what) {
  if (!std::isfinite(loss))
    throw std::runtime_error(std::string(what) + ": non-finite loss at epoch " +
                             std::to_string(epoch) + ", batch " +
                             std::to_string(batch_index));
}

}  // namespace detail

// Mean cross-entropy of a batch against context-conditioned class weights,
// plus its gradient w.r.t. the context vectors.
struct TunerBatchGrad {
  double loss = 0.0;
  Eigen::MatrixXd dctx;
};

inline TunerBatchGrad tuner_loss_and_grad(
    const DualEncoder& enc, const Eigen::MatrixXd& ctx,
    const std::vector<TokenSequence>& class_tokens,
    const std::vector<Eigen::VectorXd>& xs,
    const std::vector<std::size_t>& label_index) {
  const double scale_logit = enc.logit_scale();
  std::vector<TokenSequence> class_seq(class_tokens.size());
  Eigen::MatrixXd w(static_cast<Eigen::Index>(class_tokens.size()), enc.dim());
  for (std::size_t c = 0; c < class_tokens.size(); ++c) {
    class_seq[c] = tuner_tokens(ctx, class_tokens[c]);
    w.row(static_cast<Eigen::Index>(c)) = enc.encode_text(class_seq[c]).transpose();
  }

  const double inv_batch = 1.0 / static_cast<double>(xs.size());
  Eigen::MatrixXd dw = Eigen::MatrixXd::Zero(w.rows(), w.cols());
  TunerBatchGrad out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const Eigen::VectorXd probs = softmax(scale_logit * w * xs[i]);
    out.loss -= inv_batch *
                std::log(std::max(probs[static_cast<Eigen::Index>(label_index[i])],
                                  1e-300));
    Eigen::VectorXd dlogits = probs;
    dlogits[static_cast<Eigen::Index>(label_index[i])] -= 1.0;
    dw.noalias() += (scale_logit * inv_batch) * dlogits * xs[i].transpose();
  }

  out.dctx = Eigen::MatrixXd::Zero(ctx.rows(), ctx.cols());
  for (std::size_t c = 0; c < class_tokens.size(); ++c) {
    const auto grads = enc.encode_text_vjp(
        class_seq[c], dw.row(static_cast<Eigen::Index>(c)).transpose());
    for (Eigen::Index m = 0; m < ctx.rows(); ++m)
      out.dctx.row(m) += grads[static_cast<std::size_t>(m)].transpose();
  }
  return out;
}

inline PromptTunerHead fit_prompt_tuner(const DualEncoder& enc,
                                        const std::vector<std::string>& classes,
                                        const LabeledFeatureSet& train,
                                        const ShipGenerator* gen,
                                        const HeadTrainConfig& cfg) {
  if (classes.empty()) throw std::invalid_argument("empty class list");
  detail::TrainPool pool = detail::build_pool(classes, train);

  std::map<std::string, TokenSequence> tokens;
  for (const auto& name : classes) tokens.emplace(name, enc.embed_tokens(name));
  std::vector<TokenSequence> class_tokens;
  for (const auto& name : classes) class_tokens.push_back(tokens.at(name));

  if (gen && cfg.synth_per_class > 0 && cfg.synth_mode == SynthMode::fixed)
    detail::append_fixed_synthesis(pool, classes, *gen, enc, cfg);

  ParameterSet params;
  {
    Eigen::MatrixXd& ctx = params.add("ctx", cfg.context_length, enc.token_dim());
    Rng init_rng(mix_seed({cfg.seed, hash64("head.ctx")}));
    init_rng.fill_gaussian(ctx, 0.02);
  }
  AdamW opt(cfg.learning_rate, cfg.weight_decay);
  Rng rng(mix_seed({cfg.seed, hash64("head.train")}));

  const std::size_t n = pool.features.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    opt.set_learning_rate(cosine_lr(cfg.learning_rate, epoch, cfg.epochs));
    rng.shuffle(order);
    for (std::size_t start = 0, bi = 0; start < n;
         start += static_cast<std::size_t>(cfg.batch_size), ++bi) {
      const std::size_t stop =
          std::min(n, start + static_cast<std::size_t>(cfg.batch_size));
      detail::Batch batch;
      for (std::size_t at = start; at < stop; ++at) {
        batch.features.push_back(pool.features[order[at]]);
        batch.label_index.push_back(pool.label_index[order[at]]);
      }
      detail::append_step_synthesis(batch, classes, pool, gen, enc, cfg, rng,
                                    tokens);

      const TunerBatchGrad step = tuner_loss_and_grad(
          enc, params.value("ctx"), class_tokens, batch.features,
          batch.label_index);
      detail::check_finite(step.loss, epoch, bi, "prompt tuner");
      params.zero_grad();
      params.grad("ctx") = step.dctx;
      opt.step(params);
    }
  }
  return PromptTunerHead{params.value("ctx"),
                         std::vector<std::string>(classes)};
}

// Mean cross-entropy of a batch through the residual adapter against fixed
// text weights; gradients accumulate into the adapter.* tensors.
inline double adapter_loss_and_grad(const DualEncoder& enc,
                                    ParameterSet& params, double ratio,
                                    const Eigen::MatrixXd& w_text,
                                    const std::vector<Eigen::VectorXd>& xs,
                                    const std::vector<std::size_t>& label_index) {
  const double scale_logit = enc.logit_scale();
  const Eigen::MatrixXd& w1 = params.value("adapter.w1");
  const Eigen::MatrixXd& b1 = params.value("adapter.b1");
  const Eigen::MatrixXd& w2 = params.value("adapter.w2");
  const Eigen::MatrixXd& b2 = params.value("adapter.b2");
  const double inv_batch = 1.0 / static_cast<double>(xs.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const Eigen::VectorXd& x = xs[i];
    const Eigen::VectorXd h_pre = w1 * x + b1.col(0);
    const Eigen::VectorXd h = relu(h_pre);
    const Eigen::VectorXd a = w2 * h + b2.col(0);
    const Eigen::VectorXd v = ratio * a + (1.0 - ratio) * x;
    const Eigen::VectorXd y = v / v.norm();
    const Eigen::VectorXd probs = softmax(scale_logit * w_text * y);
    loss -= inv_batch *
            std::log(std::max(probs[static_cast<Eigen::Index>(label_index[i])],
                              1e-300));
    Eigen::VectorXd dlogits = probs;
    dlogits[static_cast<Eigen::Index>(label_index[i])] -= 1.0;
    dlogits *= scale_logit * inv_batch;
    const Eigen::VectorXd dy = w_text.transpose() * dlogits;
    const Eigen::VectorXd dv = normalize_backward(v, dy);
    const Eigen::VectorXd da = ratio * dv;
    const Eigen::VectorXd dh = affine_backward(
        w2, h, da, params.grad("adapter.w2"), params.grad("adapter.b2"));
    const Eigen::VectorXd dh_pre = relu_backward(h_pre, dh);
    affine_backward(w1, x, dh_pre, params.grad("adapter.w1"),
                    params.grad("adapter.b1"));
  }
  return loss;
}

inline ParameterSet make_adapter_params(int d, std::uint64_t seed) {
  const int bottleneck = std::max(1, d / 4);
  ParameterSet params;
  Rng w1_rng(mix_seed({seed, hash64("adapter.w1")}));
  w1_rng.fill_gaussian(params.add("adapter.w1", bottleneck, d),
                       std::sqrt(2.0 / d));
  params.add("adapter.b1", bottleneck, 1);
  Rng w2_rng(mix_seed({seed, hash64("adapter.w2")}));
  w2_rng.fill_gaussian(params.add("adapter.w2", d, bottleneck),
                       std::sqrt(1.0 / bottleneck));
  params.add("adapter.b2", d, 1);
  return params;
}

inline AdapterHead fit_adapter(const DualEncoder& enc,
                               const PromptTemplate& tmpl,
                               const std::vector<std::string>& classes,
                               const LabeledFeatureSet& train,
                               const ShipGenerator* gen,
                               const HeadTrainConfig& cfg) {
  if (classes.empty()) throw std::invalid_argument("empty class list");
  detail::TrainPool pool = detail::build_pool(classes, train);

  std::map<std::string, TokenSequence> tokens;
  for (const auto& name : classes) tokens.emplace(name, enc.embed_tokens(name));

  if (gen && cfg.synth_per_class > 0 && cfg.synth_mode == SynthMode::fixed)
    detail::append_fixed_synthesis(pool, classes, *gen, enc, cfg);

  ParameterSet params = make_adapter_params(enc.dim(), cfg.seed);
  AdamW opt(cfg.learning_rate, cfg.weight_decay);
  Rng rng(mix_seed({cfg.seed, hash64("head.train")}));

  const Eigen::MatrixXd w_text = text_weights(enc, tmpl, classes);
  const double ratio = cfg.adapter_ratio;

  const std::size_t n = pool.features.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    opt.set_learning_rate(cosine_lr(cfg.learning_rate, epoch, cfg.epochs));
    rng.shuffle(order);
    for (std::size_t start = 0, bi = 0; start < n;
         start += static_cast<std::size_t>(cfg.batch_size), ++bi) {
      const std::size_t stop =
          std::min(n, start + static_cast<std::size_t>(cfg.batch_size));
      detail::Batch batch;
      for (std::size_t at = start; at < stop; ++at) {
        batch.features.push_back(pool.features[order[at]]);
        batch.label_index.push_back(pool.label_index[order[at]]);
      }
      detail::append_step_synthesis(batch, classes, pool, gen, enc, cfg, rng,
                                    tokens);

      params.zero_grad();
      const double loss = adapter_loss_and_grad(enc, params, ratio, w_text,
                                                batch.features,
                                                batch.label_index);
      detail::check_finite(loss, epoch, bi, "adapter");
      opt.step(params);
    }
  }
  return AdapterHead{params.value("adapter.w1"), params.value("adapter.b1"),
                     params.value("adapter.w2"), params.value("adapter.b2"),
                     ratio, tmpl, std::vector<std::string>(classes)};
}

// Training-free: keys are the stored rows (train first, then synth, each in
// input order), values their one-hot labels.
inline CacheHead build_cache_head(const DualEncoder& enc,
                                  const PromptTemplate& tmpl,
                                  const std::vector<std::string>& classes,
                                  const LabeledFeatureSet& train,
                                  const LabeledFeatureSet* synth,
                                  const HeadTrainConfig& cfg) {
  if (classes.empty()) throw std::invalid_argument("empty class list");
  const Eigen::Index n_train = train.size();
  const Eigen::Index n_synth = synth ? synth->size() : 0;
  if (n_train + n_synth == 0) throw std::invalid_argument("empty key set");

  std::map<std::string, Eigen::Index> index;
  for (std::size_t c = 0; c < classes.size(); ++c)
    index[classes[c]] = static_cast<Eigen::Index>(c);

  CacheHead head;
  head.alpha = cfg.cache_alpha;
  head.beta = cfg.cache_beta;
  head.tmpl = tmpl;
  head.classes = classes;
  head.keys.resize(n_train + n_synth, train.dim());
  head.values = Eigen::MatrixXd::Zero(n_train + n_synth,
                                      static_cast<Eigen::Index>(classes.size()));
  auto insert = [&](const LabeledFeatureSet& set, Eigen::Index offset) {
    for (Eigen::Index i = 0; i < set.size(); ++i) {
      auto it = index.find(set.labels[static_cast<std::size_t>(i)]);
      if (it == index.end())
        throw std::invalid_argument("cache label outside class list: '" +
                                    set.labels[static_cast<std::size_t>(i)] + "'");
      head.keys.row(offset + i) = set.features.row(i).cast<double>();
      head.values(offset + i, it->second) = 1.0;
    }
  };
  insert(train, 0);
  if (synth) insert(*synth, n_train);
  return head;
}

// ---------------------------------------------------------------------------
// Head checkpoints: same container as generator checkpoints, format tag
// SHIPHEAD1.

inline void save_head(const ClassifierHead& head, const std::string& path) {
  nlohmann::ordered_json header;
  header["format"] = "SHIPHEAD1";
  header["kind"] = head_kind_name(head);
  std::vector<std::pair<std::string, const Eigen::MatrixXd*>> blobs;

  if (const auto* zs = std::get_if<ZeroShotHead>(&head)) {
    header["template"] = zs->tmpl.pattern();
    header["classes"] = zs->classes;
  } else if (const auto* pt = std::get_if<PromptTunerHead>(&head)) {
    header["ctx_len"] = pt->ctx.rows();
    header["d_tok"] = pt->ctx.cols();
    header["classes"] = pt->classes;
    blobs.emplace_back("ctx", &pt->ctx);
  } else if (const auto* ad = std::get_if<AdapterHead>(&head)) {
    header["d"] = ad->w1.cols();
    header["bottleneck"] = ad->w1.rows();
    header["ratio"] = ad->ratio;
    header["template"] = ad->tmpl.pattern();
    header["classes"] = ad->classes;
    blobs.emplace_back("adapter.b1", &ad->b1);
    blobs.emplace_back("adapter.b2", &ad->b2);
    blobs.emplace_back("adapter.w1", &ad->w1);
    blobs.emplace_back("adapter.w2", &ad->w2);
  } else {
    const auto& cache = std::get<CacheHead>(head);
    header["rows"] = cache.keys.rows();
    header["d"] = cache.keys.cols();
    header["alpha"] = cache.alpha;
    header["beta"] = cache.beta;
    header["template"] = cache.tmpl.pattern();
    header["classes"] = cache.classes;
    blobs.emplace_back("cache.keys", &cache.keys);
    blobs.emplace_back("cache.values", &cache.values);
  }

  auto out = io::open_output(path);
  const std::string line = header.dump();
  io::write_bytes(out, line.data(), line.size());
  io::write_bytes(out, "\n", 1);
  for (const auto& [name, tensor] : blobs) write_tensor_blob(out, name, *tensor);
}

inline ClassifierHead load_head(const std::string& path) {
  auto in = io::open_input(path);
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("truncated payload: checkpoint header");
  nlohmann::json header = nlohmann::json::parse(line);
  if (header.at("format").get<std::string>() != "SHIPHEAD1")
    throw std::runtime_error("bad magic: expected SHIPHEAD1 header");
  const std::string kind = header.at("kind").get<std::string>();
  const auto classes = header.at("classes").get<std::vector<std::string>>();

  auto read_named = [&](const std::string& expected, Eigen::MatrixXd& value) {
    const std::string name = io::read_string(in, "tensor name");
    if (name != expected)
      throw std::runtime_error("unexpected tensor '" + name + "', wanted '" +
                               expected + "'");
    read_tensor_blob_into(in, name, value);
  };

  if (kind == "zero_shot") {
    return ZeroShotHead{parse_template(header.at("template").get<std::string>()),
                        classes};
  }
  if (kind == "prompt_tuner") {
    PromptTunerHead h;
    h.ctx.resize(header.at("ctx_len").get<Eigen::Index>(),
                 header.at("d_tok").get<Eigen::Index>());
    h.classes = classes;
    read_named("ctx", h.ctx);
    return h;
  }
  if (kind == "adapter") {
    AdapterHead h;
    const auto d = header.at("d").get<Eigen::Index>();
    const auto bottleneck = header.at("bottleneck").get<Eigen::Index>();
    h.w1.resize(bottleneck, d);
    h.b1.resize(bottleneck, 1);
    h.w2.resize(d, bottleneck);
    h.b2.resize(d, 1);
    h.ratio = header.at("ratio").get<double>();
    h.tmpl = parse_template(header.at("template").get<std::string>());
    h.classes = classes;
    read_named("adapter.b1", h.b1);
    read_named("adapter.b2", h.b2);
    read_named("adapter.w1", h.w1);
    read_named("adapter.w2", h.w2);
    return h;
  }
  if (kind == "cache") {
    CacheHead h;
    const auto rows = header.at("rows").get<Eigen::Index>();
    h.keys.resize(rows, header.at("d").get<Eigen::Index>());
    h.values.resize(rows, static_cast<Eigen::Index>(classes.size()));
    h.alpha = header.at("alpha").get<double>();
    h.beta = header.at("beta").get<double>();
    h.tmpl = parse_template(header.at("template").get<std::string>());
    h.classes = classes;
    read_named("cache.keys", h.keys);
    read_named("cache.values", h.values);
    return h;
  }
  throw std::runtime_error("unknown head kind: '" + kind + "'");
}

}  // namespace ship
