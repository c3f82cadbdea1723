#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "ship/encoder.hpp"
#include "ship/generator.hpp"
#include "ship/rng.hpp"
#include "ship/toy_world.hpp"

namespace {

using namespace ship;

Eigen::VectorXd unit_vector(int d, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::VectorXd v = rng.gaussian_vector(d);
  return v / v.norm();
}

TEST(Reparameterize, ClosedFormCases) {
  Eigen::VectorXd mu(2), logvar(2), eps(2);
  mu << 0.3, -1.2;
  logvar << 0.5, -0.25;
  EXPECT_TRUE((reparameterize(mu, logvar, Eigen::VectorXd::Zero(2)).array() ==
               mu.array())
                  .all());

  Eigen::VectorXd e(2);
  e << 0.7, -0.1;
  EXPECT_TRUE((reparameterize(Eigen::VectorXd::Zero(2),
                              Eigen::VectorXd::Zero(2), e)
                   .array() == e.array())
                  .all());

  Eigen::VectorXd mu1(1), lv1(1), e1(1);
  mu1 << 1.0;
  lv1 << std::log(4.0);
  e1 << 0.5;
  EXPECT_NEAR(reparameterize(mu1, lv1, e1)[0], 2.0, 1e-12);

  EXPECT_THROW(reparameterize(mu, logvar, e1), std::invalid_argument);
}

TEST(ElboLoss, ClosedFormCases) {
  const Eigen::VectorXd x = unit_vector(8, 1);
  const LossBreakdown identity =
      elbo_loss(x, x, Eigen::VectorXd::Zero(4), Eigen::VectorXd::Zero(4), 1.0);
  EXPECT_DOUBLE_EQ(identity.recon, 0.0);
  EXPECT_DOUBLE_EQ(identity.kl, 0.0);
  EXPECT_DOUBLE_EQ(identity.total, 0.0);

  Eigen::VectorXd mu(1), logvar(1);
  mu << 1.0;
  logvar << 0.0;
  const LossBreakdown kl_case = elbo_loss(x, x, mu, logvar, 2.0);
  EXPECT_NEAR(kl_case.kl, 0.5, 1e-12);
  EXPECT_NEAR(kl_case.total, kl_case.recon + 2.0 * kl_case.kl, 1e-12);

  // recon is mean squared error over dimensions.
  Eigen::VectorXd y = x;
  y[0] += 0.1;
  y /= y.norm();
  const LossBreakdown r = elbo_loss(x, y, mu, logvar, 1.0);
  EXPECT_NEAR(r.recon, (x - y).squaredNorm() / 8.0, 1e-15);
}

TEST(KlDivergence, ClosedFormMatchesMonteCarlo) {
  const int dim = 6;
  Rng rng(2024);
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::VectorXd mu(dim), logvar(dim);
    for (int j = 0; j < dim; ++j) {
      mu[j] = 2.0 * rng.uniform() - 1.0;
      logvar[j] = 2.0 * rng.uniform() - 1.0;
    }
    const double closed =
        elbo_loss(unit_vector(4, 0), unit_vector(4, 0), mu, logvar, 1.0).kl;

    const int draws = 100000;
    double acc = 0.0;
    for (int s = 0; s < draws; ++s) {
      const Eigen::VectorXd eps = rng.gaussian_vector(dim);
      const Eigen::VectorXd z = reparameterize(mu, logvar, eps);
      // log q(z|x) - log p(z)
      acc += (-0.5 * logvar.array() - 0.5 * eps.array().square() +
              0.5 * z.array().square())
                 .sum();
    }
    const double mc = acc / draws;
    EXPECT_NEAR(mc, closed, 0.01 * std::abs(closed))
        << "trial " << trial << " mu " << mu.transpose();
  }
}

TEST(VaeEncode, ShapeDeterminismFiniteness) {
  const auto enc = make_toy_encoder(0, 8, 8);
  const auto gen = make_generator(8, 8, 16, PromptConfig{},
                                  GeneratorKind::text_encoder, 3);
  const Eigen::VectorXd x = unit_vector(8, 5);
  const auto [mu1, lv1] = vae_encode(gen, x);
  const auto [mu2, lv2] = vae_encode(gen, x);
  EXPECT_EQ(mu1.size(), 8);
  EXPECT_EQ(lv1.size(), 8);
  EXPECT_TRUE((mu1.array() == mu2.array()).all());
  EXPECT_TRUE((lv1.array() == lv2.array()).all());
  EXPECT_TRUE(mu1.allFinite());
  EXPECT_TRUE(lv1.allFinite());
  EXPECT_THROW(vae_encode(gen, 2.0 * x), std::invalid_argument);
}

TEST(AssemblePrompt, ZeroBiasYieldsGlobalPrompts) {
  PromptConfig pcfg;
  pcfg.length = 3;
  auto gen = make_generator(8, 6, 16, pcfg, GeneratorKind::text_encoder, 1);
  gen.params.value("bias.w1").setZero();
  gen.params.value("bias.b1").setZero();
  gen.params.value("bias.w2").setZero();
  gen.params.value("bias.b2").setZero();
  const Eigen::VectorXd z = Rng(7).gaussian_vector(6);
  const TokenSequence seq = assemble_prompt(gen, z);
  ASSERT_EQ(seq.length(), 3u);
  for (int i = 0; i < 3; ++i)
    EXPECT_TRUE((seq.vectors[static_cast<std::size_t>(i)].array() ==
                 gen.params.value("prompts.global").row(i).transpose().array())
                    .all());
}

TEST(AssemblePrompt, LocalOnlyRepeatsSharedBias) {
  PromptConfig pcfg;
  pcfg.length = 4;
  pcfg.use_global = false;
  pcfg.sequential = false;
  const auto gen = make_generator(8, 6, 16, pcfg, GeneratorKind::text_encoder, 2);
  const TokenSequence seq = assemble_prompt(gen, Rng(9).gaussian_vector(6));
  for (std::size_t i = 1; i < 4; ++i)
    EXPECT_TRUE((seq.vectors[i].array() == seq.vectors[0].array()).all());
}

TEST(AssemblePrompt, SharedBiasCancelsAcrossPositions) {
  PromptConfig pcfg;
  pcfg.length = 3;
  const auto gen = make_generator(8, 6, 16, pcfg, GeneratorKind::text_encoder, 4);
  const Eigen::MatrixXd& globals = gen.params.value("prompts.global");
  for (std::uint64_t zs = 0; zs < 4; ++zs) {
    const TokenSequence seq = assemble_prompt(gen, Rng(zs).gaussian_vector(6));
    const Eigen::VectorXd diff = seq.vectors[2] - seq.vectors[0];
    const Eigen::VectorXd expected =
        (globals.row(2) - globals.row(0)).transpose();
    EXPECT_LT((diff - expected).norm(), 1e-12);
  }
}

TEST(AssemblePrompt, SequentialBiasVariesByPosition) {
  PromptConfig pcfg;
  pcfg.length = 3;
  pcfg.use_global = false;
  pcfg.sequential = true;
  const auto gen = make_generator(8, 6, 16, pcfg, GeneratorKind::text_encoder, 5);
  const TokenSequence seq = assemble_prompt(gen, Rng(3).gaussian_vector(6));
  EXPECT_GT((seq.vectors[1] - seq.vectors[0]).norm(), 1e-9);
}

TEST(Reconstruct, UnitNormAndDeterminism) {
  const auto enc = make_toy_encoder(1, 12, 8);
  for (GeneratorKind kind :
       {GeneratorKind::text_encoder, GeneratorKind::scratch_mlp}) {
    const auto gen = make_generator(12, 8, 16, PromptConfig{}, kind, 6);
    const Eigen::VectorXd z = Rng(11).gaussian_vector(8);
    const Eigen::VectorXd y1 = reconstruct(gen, *enc, z, "otter");
    const Eigen::VectorXd y2 = reconstruct(gen, *enc, z, "otter");
    EXPECT_NEAR(y1.norm(), 1.0, 1e-5);
    EXPECT_TRUE((y1.array() == y2.array()).all());
    EXPECT_GT((reconstruct(gen, *enc, z, "badger") - y1).norm(), 1e-9);
  }
}

// Exhaustive finite-difference check of the full loss gradient across every
// trainable tensor.
void check_gradients(GeneratorKind kind, const PromptConfig& pcfg,
                     std::uint64_t seed, double tolerance = 1e-4) {
  const int d = 8, d_tok = 8, hidden = 16;
  const auto enc = make_toy_encoder(seed, d, d_tok);
  ShipGenerator gen = make_generator(d, d_tok, hidden, pcfg, kind, seed + 17);

  Rng rng(seed + 100);
  Eigen::VectorXd x = rng.gaussian_vector(d);
  x /= x.norm();
  const TokenSequence class_tokens = enc->embed_tokens("gradient check class");
  const Eigen::VectorXd eps = rng.gaussian_vector(gen.latent_dim);
  const double beta = 0.7;

  auto loss_value = [&]() {
    return step_forward(gen, *enc, x, class_tokens, eps, beta).loss.total;
  };

  gen.params.zero_grad();
  const StepForward fwd = step_forward(gen, *enc, x, class_tokens, eps, beta);
  ASSERT_TRUE(std::isfinite(fwd.loss.total));
  step_backward(gen, *enc, fwd, beta, 1.0);

  const double h = 1e-5;
  for (auto& tensor : gen.params) {
    double fd_norm = 0.0, an_norm = 0.0, diff_norm = 0.0;
    for (Eigen::Index r = 0; r < tensor.value.rows(); ++r) {
      for (Eigen::Index c = 0; c < tensor.value.cols(); ++c) {
        const double saved = tensor.value(r, c);
        tensor.value(r, c) = saved + h;
        const double up = loss_value();
        tensor.value(r, c) = saved - h;
        const double down = loss_value();
        tensor.value(r, c) = saved;
        const double fd = (up - down) / (2.0 * h);
        const double an = tensor.grad(r, c);
        fd_norm += fd * fd;
        an_norm += an * an;
        diff_norm += (fd - an) * (fd - an);
      }
    }
    const double denom = std::sqrt(fd_norm) + std::sqrt(an_norm);
    ASSERT_GT(denom, 0.0) << tensor.name << " has all-zero gradients";
    EXPECT_LT(std::sqrt(diff_norm) / denom, tolerance)
        << "tensor " << tensor.name << " seed " << seed;
  }
}

TEST(Gradients, TextEncoderGeneratorAllForms) {
  PromptConfig base;
  base.length = 2;
  check_gradients(GeneratorKind::text_encoder, base, 1);

  PromptConfig sequential = base;
  sequential.sequential = true;
  check_gradients(GeneratorKind::text_encoder, sequential, 2);

  PromptConfig local_only = base;
  local_only.use_global = false;
  check_gradients(GeneratorKind::text_encoder, local_only, 3);

  PromptConfig local_sequential = sequential;
  local_sequential.use_global = false;
  check_gradients(GeneratorKind::text_encoder, local_sequential, 4);
}

TEST(Gradients, ScratchGenerator) {
  PromptConfig pcfg;
  pcfg.length = 2;
  check_gradients(GeneratorKind::scratch_mlp, pcfg, 5);
  check_gradients(GeneratorKind::scratch_mlp, pcfg, 6);
}

LabeledFeatureSet tiny_train_set(const DualEncoder& enc, int per_class,
                                 std::uint64_t seed) {
  Rng rng(seed);
  const auto tmpl = parse_template("a photo of a {}");
  FeatureMatrix rows(2 * per_class, enc.dim());
  std::vector<std::string> labels;
  for (int c = 0; c < 2; ++c) {
    const std::string name = c == 0 ? "ant" : "bee";
    const Eigen::VectorXd proto = class_text_feature(enc, tmpl, name);
    for (int k = 0; k < per_class; ++k) {
      Eigen::VectorXd v = proto + 0.1 * rng.gaussian_vector(enc.dim());
      rows.row(c * per_class + k) = (v / v.norm()).cast<float>().transpose();
      labels.push_back(name);
    }
  }
  return make_labeled_set(rows, labels,
                          std::vector<Origin>(labels.size(), Origin::real));
}

TEST(TrainGenerator, ZeroEpochsReturnsInitialization) {
  const auto enc = make_toy_encoder(0, 12, 10);
  const auto train = tiny_train_set(*enc, 4, 1);
  TrainConfig tcfg;
  tcfg.epochs = 0;
  tcfg.hidden_width = 16;
  tcfg.seed = 5;
  const auto trained =
      train_generator(*enc, train, PromptConfig{}, tcfg);
  const auto init = make_generator(12, 10, 16, PromptConfig{},
                                   GeneratorKind::text_encoder, 5);
  for (const auto& t : init.params) {
    const auto& got = trained.params.value(t.name);
    EXPECT_TRUE((got.array() == t.value.array()).all()) << t.name;
  }
}

TEST(TrainGenerator, SameSeedBitIdenticalParameters) {
  const auto enc = make_toy_encoder(0, 12, 10);
  const auto train = tiny_train_set(*enc, 4, 1);
  TrainConfig tcfg;
  tcfg.epochs = 5;
  tcfg.batch_size = 3;
  tcfg.hidden_width = 16;
  tcfg.seed = 5;
  const auto g1 = train_generator(*enc, train, PromptConfig{}, tcfg);
  const auto g2 = train_generator(*enc, train, PromptConfig{}, tcfg);
  for (const auto& t : g1.params) {
    const auto& other = g2.params.value(t.name);
    EXPECT_TRUE((t.value.array() == other.array()).all()) << t.name;
  }
}

TEST(TrainGenerator, EmptyBaseSetIsAnError) {
  const auto enc = make_toy_encoder(0, 12, 10);
  TrainConfig tcfg;
  tcfg.hidden_width = 16;
  EXPECT_THROW(train_generator(*enc, empty_set(12), PromptConfig{}, tcfg),
               std::invalid_argument);
}

TEST(TrainGenerator, EncoderIsFrozenThroughTraining) {
  const auto enc = make_toy_encoder(8, 12, 10);
  const Eigen::VectorXd before = enc->parameter_snapshot();
  const auto train = tiny_train_set(*enc, 4, 2);
  TrainConfig tcfg;
  tcfg.epochs = 3;
  tcfg.hidden_width = 16;
  (void)train_generator(*enc, train, PromptConfig{}, tcfg);
  EXPECT_TRUE((enc->parameter_snapshot().array() == before.array()).all());
}

TEST(TrainGenerator, LossDecreasesOnToyData) {
  // Epoch-mean total loss at epoch 10 strictly below epoch 0 for >= 4 of 5
  // seeds.
  ToyWorldConfig wcfg;
  wcfg.num_classes = 6;
  wcfg.d = 16;
  wcfg.d_tok = 16;
  wcfg.samples_per_class = 20;
  wcfg.noise_std = 0.15;
  const auto dir = std::filesystem::temp_directory_path() /
                   ("ship_gen_mono_" + std::to_string(::getpid()));
  const ToyWorld world = build_toy_world(wcfg, dir.string());
  const auto store = read_feature_store(world.manifest.feature_store_path);
  const auto train =
      sample_few_shot(world.manifest, store, world.manifest.vocabulary, 8, 0);

  int improved = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    TrainConfig tcfg;
    tcfg.epochs = 11;
    tcfg.batch_size = 16;
    tcfg.hidden_width = 64;
    tcfg.seed = seed;
    TrainLog log;
    (void)train_generator(*world.encoder, train, PromptConfig{}, tcfg,
                          GeneratorKind::text_encoder, &log);
    ASSERT_EQ(log.epoch_mean.size(), 11u);
    if (log.epoch_mean[10].total < log.epoch_mean[0].total) ++improved;
  }
  EXPECT_GE(improved, 4);
}

TEST(Synthesize, ContractAndDeterminism) {
  const auto enc = make_toy_encoder(2, 12, 10);
  const auto train = tiny_train_set(*enc, 4, 3);
  TrainConfig tcfg;
  tcfg.epochs = 3;
  tcfg.hidden_width = 16;
  const auto gen = train_generator(*enc, train, PromptConfig{}, tcfg);

  const auto vocab = make_vocabulary({"cat", "dog"});
  EXPECT_EQ(synthesize(gen, *enc, vocab, 0, 1).size(), 0);

  const auto s1 = synthesize(gen, *enc, vocab, 3, 1);
  const auto s2 = synthesize(gen, *enc, vocab, 3, 1);
  ASSERT_EQ(s1.size(), 6);
  EXPECT_TRUE((s1.features.array() == s2.features.array()).all());
  for (int i = 0; i < 6; ++i) {
    EXPECT_EQ(s1.labels[static_cast<std::size_t>(i)], i < 3 ? "cat" : "dog");
    EXPECT_EQ(s1.origin[static_cast<std::size_t>(i)], Origin::synthetic);
    EXPECT_NEAR(s1.features.row(i).cast<double>().norm(), 1.0, 1e-5);
  }

  // Per-(class, sample) streams: a different class list leaves the shared
  // class's draws untouched only via its own class index, so equal indices
  // reproduce equal rows.
  const auto cat_only = synthesize(gen, *enc, make_vocabulary({"cat"}), 3, 1);
  EXPECT_TRUE((cat_only.features.array() == s1.features.topRows(3).array()).all());
}

TEST(Checkpoint, RoundTripIsByteIdentical) {
  const auto enc = make_toy_encoder(2, 12, 10);
  const auto train = tiny_train_set(*enc, 4, 3);
  TrainConfig tcfg;
  tcfg.epochs = 2;
  tcfg.hidden_width = 16;
  const auto dir = std::filesystem::temp_directory_path() /
                   ("ship_gen_ckpt_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);

  for (GeneratorKind kind :
       {GeneratorKind::text_encoder, GeneratorKind::scratch_mlp}) {
    const auto gen =
        train_generator(*enc, train, PromptConfig{}, tcfg, kind);
    const auto p1 = (dir / ("g1_" + std::string(generator_kind_name(kind)))).string();
    const auto p2 = (dir / ("g2_" + std::string(generator_kind_name(kind)))).string();
    save_generator(gen, p1);
    const ShipGenerator loaded = load_generator(p1);
    EXPECT_EQ(loaded.kind, kind);
    EXPECT_EQ(loaded.d, gen.d);
    EXPECT_EQ(loaded.prompt.length, gen.prompt.length);
    save_generator(loaded, p2);
    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    const std::string b1((std::istreambuf_iterator<char>(f1)), {});
    const std::string b2((std::istreambuf_iterator<char>(f2)), {});
    EXPECT_EQ(b1, b2);
    // Loaded values are the float32-quantized originals.
    for (const auto& t : gen.params) {
      const auto& got = loaded.params.value(t.name);
      EXPECT_TRUE((got.array() ==
                   t.value.cast<float>().cast<double>().array())
                      .all())
          << t.name;
    }
  }
}

TEST(Checkpoint, BadHeaderIsRejected) {
  const auto dir = std::filesystem::temp_directory_path() /
                   ("ship_gen_badckpt_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  const auto path = (dir / "bad.ckpt").string();
  std::ofstream(path) << "{\"format\":\"NOTSHIP\"}\n";
  EXPECT_THROW(load_generator(path), std::runtime_error);
}

TEST(Checkpoint, TruncatedBlobIsRejected) {
  const auto enc = make_toy_encoder(2, 8, 8);
  const auto gen = make_generator(8, 8, 16, PromptConfig{},
                                  GeneratorKind::text_encoder, 0);
  const auto dir = std::filesystem::temp_directory_path() /
                   ("ship_gen_trunc_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  const auto full = (dir / "full.ckpt").string();
  save_generator(gen, full);
  std::ifstream in(full, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), {});
  const auto cut = (dir / "cut.ckpt").string();
  std::ofstream out(cut, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 9));
  out.close();
  EXPECT_THROW(load_generator(cut), std::runtime_error);
}

}  // namespace
