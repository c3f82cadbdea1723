#pragma once

// Desk-scale synthetic dataset builder. Class prototypes are the toy
// encoder's own text features, visual samples are noisy copies on the unit
// sphere, so every protocol can run end-to-end in seconds and zero noise
// collapses to a perfectly separable sanity case.

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "ship/encoder.hpp"
#include "ship/feature_set.hpp"
#include "ship/manifest.hpp"
#include "ship/rng.hpp"

namespace ship {

inline constexpr const char* kDefaultTemplate = "a photo of a {}";

struct ToyWorldConfig {
  int num_classes = 12;
  int d = 32;
  int d_tok = 32;
  int samples_per_class = 60;
  double noise_std = 0.15;
  std::uint64_t encoder_seed = 0;
  std::uint64_t data_seed = 1;
  int unseen_count = 0;  // trailing classes tagged unseen for GZSL runs
};

struct ToyWorld {
  DatasetManifest manifest;
  std::shared_ptr<ToyDualEncoder> encoder;
};

inline ToyWorld build_toy_world(const ToyWorldConfig& cfg,
                                const std::string& out_dir) {
  if (cfg.num_classes < 1 || cfg.d < 2 || cfg.d_tok < 2 ||
      cfg.samples_per_class < 1 || cfg.noise_std < 0.0)
    throw std::invalid_argument("toy world: invalid config");
  if (cfg.unseen_count < 0 || cfg.unseen_count >= cfg.num_classes)
    throw std::invalid_argument("toy world: unseen_count out of range");

  auto enc = make_toy_encoder(cfg.encoder_seed, cfg.d, cfg.d_tok);
  const PromptTemplate tmpl = parse_template(kDefaultTemplate);

  std::vector<std::string> names;
  for (int i = 0; i < cfg.num_classes; ++i)
    names.push_back("class_" + std::to_string(i));
  const ClassVocabulary vocab = make_vocabulary(names);

  const int per = cfg.samples_per_class;
  const Eigen::Index total = static_cast<Eigen::Index>(vocab.size()) * per;
  FeatureMatrix features(total, cfg.d);
  std::vector<std::string> labels;
  std::vector<ItemSplit> splits(static_cast<std::size_t>(total), ItemSplit::train);

  for (std::size_t ci = 0; ci < vocab.size(); ++ci) {
    const std::string& name = vocab.names[ci];
    const Eigen::VectorXf prototype =
        class_text_feature(*enc, tmpl, name).cast<float>();
    Rng sample_rng(mix_seed({cfg.data_seed, hash64("toy.samples"),
                             static_cast<std::uint64_t>(ci)}));
    for (int k = 0; k < per; ++k) {
      const Eigen::Index row = static_cast<Eigen::Index>(ci) * per + k;
      if (cfg.noise_std == 0.0) {
        features.row(row) = prototype.transpose();
      } else {
        Eigen::VectorXd v = prototype.cast<double>() +
                            cfg.noise_std * sample_rng.gaussian_vector(cfg.d);
        features.row(row) = (v / v.norm()).cast<float>().transpose();
      }
      labels.push_back(name);
    }
    // 70/30 train/test within the class, at least one of each when possible.
    std::vector<int> idx(static_cast<std::size_t>(per));
    for (int k = 0; k < per; ++k) idx[static_cast<std::size_t>(k)] = k;
    Rng split_rng(mix_seed({cfg.data_seed, hash64("toy.split"),
                            static_cast<std::uint64_t>(ci)}));
    split_rng.shuffle(idx);
    int train_count = per * 7 / 10;
    if (train_count == 0) train_count = 1;
    if (train_count == per && per > 1) train_count = per - 1;
    for (int k = train_count; k < per; ++k)
      splits[static_cast<std::size_t>(ci) * per +
             static_cast<std::size_t>(idx[static_cast<std::size_t>(k)])] =
          ItemSplit::test;
  }

  std::filesystem::create_directories(out_dir);
  const std::string store_path =
      (std::filesystem::path(out_dir) / "features.bin").string();
  write_feature_store(
      make_labeled_set(std::move(features), labels,
                       std::vector<Origin>(static_cast<std::size_t>(total),
                                           Origin::real)),
      store_path);

  DatasetManifest manifest;
  manifest.name = "toyworld";
  manifest.vocabulary = vocab;
  manifest.feature_store_path = store_path;
  manifest.item_labels = std::move(labels);
  manifest.item_splits = std::move(splits);
  if (cfg.unseen_count > 0)
    manifest.unseen_classes.assign(
        vocab.names.end() - cfg.unseen_count, vocab.names.end());
  const std::string manifest_path =
      (std::filesystem::path(out_dir) / "manifest.json").string();
  save_manifest(manifest, manifest_path, "features.bin");
  return ToyWorld{std::move(manifest), std::move(enc)};
}

}  // namespace ship
