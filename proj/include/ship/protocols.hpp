#pragma once

// Experiment runners: base-to-new generalization with separate label spaces,
// the mixed-test-set generalized setting, cross-dataset transfer, and GZSL
// with macro per-class accuracy. Each run is a pure function of (manifest
// bytes, seeds, configs); accuracies are averaged across seeds first and the
// harmonic mean is taken of the averages.

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "ship/encoder.hpp"
#include "ship/feature_set.hpp"
#include "ship/generator.hpp"
#include "ship/heads.hpp"
#include "ship/manifest.hpp"
#include "ship/metrics.hpp"

namespace ship {

struct ProtocolConfig {
  int shots = 16;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  std::string head_kind = "prompt_tuner";  // zero_shot|prompt_tuner|adapter|cache
  bool ship = true;
  PromptTemplate tmpl = parse_template("a photo of a {}");
  PromptConfig prompt;
  TrainConfig gen_train;
  GeneratorKind gen_kind = GeneratorKind::text_encoder;
  HeadTrainConfig head_train;
  int xd_per_class = 16;  // synthesized rows per target class in transfer runs
};

namespace detail {

inline Eigen::MatrixXd rows_as_double(const LabeledFeatureSet& store,
                                      const std::vector<std::size_t>& rows) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), store.dim());
  for (std::size_t i = 0; i < rows.size(); ++i)
    x.row(static_cast<Eigen::Index>(i)) =
        store.features.row(static_cast<Eigen::Index>(rows[i])).cast<double>();
  return x;
}

inline std::vector<std::string> labels_at(const DatasetManifest& manifest,
                                          const std::vector<std::size_t>& rows) {
  std::vector<std::string> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(manifest.item_labels[r]);
  return out;
}

inline std::vector<std::size_t> test_rows_for(
    const DatasetManifest& manifest, const std::set<std::string>& classes) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < manifest.item_count(); ++i)
    if (manifest.item_splits[i] == ItemSplit::test &&
        classes.count(manifest.item_labels[i]))
      rows.push_back(i);
  return rows;
}

// No test row may enter any training path.
inline void audit_row_disjointness(const std::vector<std::size_t>& train_rows,
                                   const std::vector<std::size_t>& test_rows) {
  std::set<std::size_t> train(train_rows.begin(), train_rows.end());
  for (std::size_t r : test_rows)
    if (train.count(r))
      throw std::logic_error("protocol audit: test row " + std::to_string(r) +
                             " appears in the training set");
}

struct FittedRun {
  std::optional<ShipGenerator> gen;
  ClassifierHead head;
};

// Shared by base-to-new and the generalized setting: sample shots on the
// base half, optionally train the generator on them, fit the head.
inline FittedRun fit_for_base_to_new(const DatasetManifest& manifest,
                                     const LabeledFeatureSet& store,
                                     const ClassSplit& split,
                                     const DualEncoder& enc,
                                     const ProtocolConfig& cfg,
                                     std::uint64_t seed,
                                     std::vector<std::size_t>* train_rows_out) {
  const auto train_rows = sample_few_shot_rows(manifest, split.base, cfg.shots, seed);
  if (train_rows_out) *train_rows_out = train_rows;
  const LabeledFeatureSet train = select_rows(store, train_rows);

  FittedRun run;
  if (cfg.ship) {
    TrainConfig tcfg = cfg.gen_train;
    tcfg.seed = mix_seed({seed, hash64("protocol.gen")});
    run.gen = train_generator(enc, train, cfg.prompt, tcfg, cfg.gen_kind);
  }

  HeadTrainConfig hcfg = cfg.head_train;
  hcfg.seed = mix_seed({seed, hash64("protocol.head")});
  const std::vector<std::string>& train_space =
      cfg.ship ? manifest.vocabulary.names : split.base.names;
  const ShipGenerator* gen = run.gen ? &*run.gen : nullptr;

  if (cfg.head_kind == "zero_shot") {
    run.head = ZeroShotHead{cfg.tmpl, manifest.vocabulary.names};
  } else if (cfg.head_kind == "prompt_tuner") {
    run.head = fit_prompt_tuner(enc, train_space, train, gen, hcfg);
  } else if (cfg.head_kind == "adapter") {
    run.head = fit_adapter(enc, cfg.tmpl, train_space, train, gen, hcfg);
  } else if (cfg.head_kind == "cache") {
    if (cfg.ship) {
      const LabeledFeatureSet synth =
          synthesize(*run.gen, enc, split.novel, hcfg.synth_per_class,
                     mix_seed({seed, hash64("protocol.synth")}));
      run.head = build_cache_head(enc, cfg.tmpl, train_space, train, &synth, hcfg);
    } else {
      run.head = build_cache_head(enc, cfg.tmpl, train_space, train, nullptr, hcfg);
    }
  } else {
    throw std::invalid_argument("unknown head kind: '" + cfg.head_kind + "'");
  }
  return run;
}

inline nlohmann::ordered_json fingerprint(const ProtocolConfig& cfg) {
  nlohmann::ordered_json j;
  j["shots"] = cfg.shots;
  j["seeds"] = cfg.seeds;
  j["head"] = cfg.head_kind;
  j["ship"] = cfg.ship;
  j["template"] = cfg.tmpl.pattern();
  j["prompt"] = {{"length", cfg.prompt.length},
                 {"use_global", cfg.prompt.use_global},
                 {"sequential", cfg.prompt.sequential},
                 {"init_std", cfg.prompt.init_std}};
  j["generator"] = {{"kind", generator_kind_name(cfg.gen_kind)},
                    {"epochs", cfg.gen_train.epochs},
                    {"batch_size", cfg.gen_train.batch_size},
                    {"learning_rate", cfg.gen_train.learning_rate},
                    {"weight_decay", cfg.gen_train.weight_decay},
                    {"hidden_width", cfg.gen_train.hidden_width},
                    {"beta", cfg.gen_train.beta}};
  j["head_train"] = {{"epochs", cfg.head_train.epochs},
                     {"batch_size", cfg.head_train.batch_size},
                     {"learning_rate", cfg.head_train.learning_rate},
                     {"weight_decay", cfg.head_train.weight_decay},
                     {"synth_per_class", cfg.head_train.synth_per_class},
                     {"synth_mode", synth_mode_name(cfg.head_train.synth_mode)},
                     {"adapter_ratio", cfg.head_train.adapter_ratio},
                     {"cache_alpha", cfg.head_train.cache_alpha},
                     {"cache_beta", cfg.head_train.cache_beta},
                     {"context_length", cfg.head_train.context_length}};
  return j;
}

}  // namespace detail

// Training on few-shot base classes; base and new halves are scored against
// their own label spaces.
inline EvalReport run_base_to_new(const DatasetManifest& manifest,
                                  const DualEncoder& enc,
                                  const ProtocolConfig& cfg) {
  const LabeledFeatureSet store = read_feature_store(manifest.feature_store_path);
  const ClassSplit split = split_base_new(manifest.vocabulary);

  const std::set<std::string> base_set(split.base.names.begin(), split.base.names.end());
  const std::set<std::string> novel_set(split.novel.names.begin(), split.novel.names.end());
  const auto base_test = detail::test_rows_for(manifest, base_set);
  const auto novel_test = detail::test_rows_for(manifest, novel_set);
  if (base_test.empty() || novel_test.empty())
    throw std::runtime_error("base-to-new: a split half has no test items");
  const Eigen::MatrixXd base_x = detail::rows_as_double(store, base_test);
  const Eigen::MatrixXd novel_x = detail::rows_as_double(store, novel_test);
  const auto base_truth = detail::labels_at(manifest, base_test);
  const auto novel_truth = detail::labels_at(manifest, novel_test);

  EvalReport report;
  report.protocol = "base_to_new";
  report.head_kind = cfg.head_kind;
  report.ship = cfg.ship;
  report.fingerprint = detail::fingerprint(cfg);

  double base_sum = 0.0, novel_sum = 0.0;
  for (std::uint64_t seed : cfg.seeds) {
    std::vector<std::size_t> train_rows;
    const detail::FittedRun run = detail::fit_for_base_to_new(
        manifest, store, split, enc, cfg, seed, &train_rows);
    detail::audit_row_disjointness(train_rows, base_test);
    detail::audit_row_disjointness(train_rows, novel_test);

    const double base_acc = instance_accuracy(
        predict_labels(run.head, enc, base_x, split.base.names), base_truth);
    const double novel_acc = instance_accuracy(
        predict_labels(run.head, enc, novel_x, split.novel.names), novel_truth);
    base_sum += base_acc;
    novel_sum += novel_acc;
    report.per_seed.push_back(
        {seed,
         {{"base", base_acc},
          {"new", novel_acc},
          {"H", harmonic_mean(base_acc, novel_acc)}}});
  }
  const double n_seeds = static_cast<double>(cfg.seeds.size());
  const double base_avg = base_sum / n_seeds;
  const double novel_avg = novel_sum / n_seeds;
  report.summary = {{"base", base_avg},
                    {"new", novel_avg},
                    {"H", harmonic_mean(base_avg, novel_avg)}};
  return report;
}

// Identical training; every test item is scored against the union label
// space and accuracies are split by the item's side.
inline EvalReport run_generalized_setting(const DatasetManifest& manifest,
                                          const DualEncoder& enc,
                                          const ProtocolConfig& cfg) {
  const LabeledFeatureSet store = read_feature_store(manifest.feature_store_path);
  const ClassSplit split = split_base_new(manifest.vocabulary);

  const std::set<std::string> base_set(split.base.names.begin(), split.base.names.end());
  const auto test_rows = manifest.rows_where(ItemSplit::test);
  if (test_rows.empty()) throw std::runtime_error("generalized setting: no test items");
  const Eigen::MatrixXd test_x = detail::rows_as_double(store, test_rows);
  const auto truth = detail::labels_at(manifest, test_rows);

  EvalReport report;
  report.protocol = "generalized_setting";
  report.head_kind = cfg.head_kind;
  report.ship = cfg.ship;
  report.fingerprint = detail::fingerprint(cfg);

  double base_sum = 0.0, novel_sum = 0.0;
  for (std::uint64_t seed : cfg.seeds) {
    std::vector<std::size_t> train_rows;
    const detail::FittedRun run = detail::fit_for_base_to_new(
        manifest, store, split, enc, cfg, seed, &train_rows);
    detail::audit_row_disjointness(train_rows, test_rows);

    const auto preds =
        predict_labels(run.head, enc, test_x, manifest.vocabulary.names);
    std::size_t base_total = 0, base_ok = 0, novel_total = 0, novel_ok = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (base_set.count(truth[i])) {
        ++base_total;
        if (preds[i] == truth[i]) ++base_ok;
      } else {
        ++novel_total;
        if (preds[i] == truth[i]) ++novel_ok;
      }
    }
    const double base_acc =
        100.0 * static_cast<double>(base_ok) / static_cast<double>(base_total);
    const double novel_acc =
        100.0 * static_cast<double>(novel_ok) / static_cast<double>(novel_total);
    base_sum += base_acc;
    novel_sum += novel_acc;
    report.per_seed.push_back(
        {seed,
         {{"base", base_acc},
          {"new", novel_acc},
          {"H", harmonic_mean(base_acc, novel_acc)}}});
  }
  const double n_seeds = static_cast<double>(cfg.seeds.size());
  const double base_avg = base_sum / n_seeds;
  const double novel_avg = novel_sum / n_seeds;
  report.summary = {{"base", base_avg},
                    {"new", novel_avg},
                    {"H", harmonic_mean(base_avg, novel_avg)}};
  return report;
}

// Train the generator on a few-shot sample of every source class, then
// fine-tune the prompt tuner on synthesized data only, per target.
inline std::vector<EvalReport> run_cross_dataset(
    const DatasetManifest& source, const std::vector<DatasetManifest>& targets,
    const DualEncoder& enc, const ProtocolConfig& cfg) {
  if (targets.empty()) throw std::invalid_argument("cross-dataset: no targets");
  const LabeledFeatureSet source_store =
      read_feature_store(source.feature_store_path);

  std::vector<EvalReport> reports(targets.size());
  for (std::size_t t = 0; t < targets.size(); ++t) {
    reports[t].protocol = "cross_dataset";
    reports[t].head_kind = "prompt_tuner";
    reports[t].ship = true;
    reports[t].fingerprint = detail::fingerprint(cfg);
    reports[t].fingerprint["source"] = source.name;
    reports[t].fingerprint["target"] = targets[t].name;
  }

  std::vector<double> acc_sum(targets.size(), 0.0);
  std::vector<double> zs_sum(targets.size(), 0.0);
  for (std::uint64_t seed : cfg.seeds) {
    const auto train_rows =
        sample_few_shot_rows(source, source.vocabulary, cfg.shots, seed);
    const LabeledFeatureSet train = select_rows(source_store, train_rows);
    TrainConfig tcfg = cfg.gen_train;
    tcfg.seed = mix_seed({seed, hash64("protocol.gen")});
    const ShipGenerator gen =
        train_generator(enc, train, cfg.prompt, tcfg, cfg.gen_kind);

    for (std::size_t t = 0; t < targets.size(); ++t) {
      const DatasetManifest& target = targets[t];
      const LabeledFeatureSet synth =
          synthesize(gen, enc, target.vocabulary, cfg.xd_per_class,
                     mix_seed({seed, hash64("protocol.synth")}));
      HeadTrainConfig hcfg = cfg.head_train;
      hcfg.seed = mix_seed({seed, hash64("protocol.head")});
      hcfg.synth_per_class = 0;  // the synthesized set itself is the train set
      const PromptTunerHead head =
          fit_prompt_tuner(enc, target.vocabulary.names, synth, nullptr, hcfg);

      const auto test_rows = target.rows_where(ItemSplit::test);
      if (test_rows.empty())
        throw std::runtime_error("cross-dataset: target has no test items");
      const LabeledFeatureSet target_store =
          read_feature_store(target.feature_store_path);
      const Eigen::MatrixXd test_x = detail::rows_as_double(target_store, test_rows);
      const auto truth = detail::labels_at(target, test_rows);
      const double acc = instance_accuracy(
          predict_labels(ClassifierHead{head}, enc, test_x,
                         target.vocabulary.names),
          truth);
      const double zs = instance_accuracy(
          predict_labels(ClassifierHead{ZeroShotHead{cfg.tmpl,
                                                     target.vocabulary.names}},
                         enc, test_x, target.vocabulary.names),
          truth);
      acc_sum[t] += acc;
      zs_sum[t] += zs;
      reports[t].per_seed.push_back(
          {seed, {{"accuracy", acc}, {"zero_shot", zs}}});
    }
  }
  const double n_seeds = static_cast<double>(cfg.seeds.size());
  for (std::size_t t = 0; t < targets.size(); ++t)
    reports[t].summary = {{"accuracy", acc_sum[t] / n_seeds},
                          {"zero_shot", zs_sum[t] / n_seeds}};
  return reports;
}

// Generator trained on the full seen training split; macro per-class top-1
// on seen and unseen test items against the union label space.
inline EvalReport run_gzsl(const DatasetManifest& manifest,
                           const DualEncoder& enc, const ProtocolConfig& cfg) {
  if (manifest.unseen_classes.empty())
    throw std::invalid_argument("gzsl: manifest declares no unseen classes");
  const LabeledFeatureSet store = read_feature_store(manifest.feature_store_path);

  const std::set<std::string> unseen(manifest.unseen_classes.begin(),
                                     manifest.unseen_classes.end());
  ClassVocabulary seen_vocab, unseen_vocab;
  for (const auto& name : manifest.vocabulary.names)
    (unseen.count(name) ? unseen_vocab : seen_vocab).names.push_back(name);
  if (seen_vocab.names.empty())
    throw std::invalid_argument("gzsl: every class is unseen");

  std::vector<std::size_t> seen_train;
  for (std::size_t i = 0; i < manifest.item_count(); ++i)
    if (manifest.item_splits[i] == ItemSplit::train &&
        !unseen.count(manifest.item_labels[i]))
      seen_train.push_back(i);
  if (seen_train.empty()) throw std::runtime_error("gzsl: no seen training items");
  const LabeledFeatureSet train = select_rows(store, seen_train);

  const std::set<std::string> seen_set(seen_vocab.names.begin(), seen_vocab.names.end());
  const auto seen_test = detail::test_rows_for(manifest, seen_set);
  const auto unseen_test = detail::test_rows_for(manifest, unseen);
  if (seen_test.empty() || unseen_test.empty())
    throw std::runtime_error("gzsl: a partition has no test items");
  const Eigen::MatrixXd seen_x = detail::rows_as_double(store, seen_test);
  const Eigen::MatrixXd unseen_x = detail::rows_as_double(store, unseen_test);
  const auto seen_truth = detail::labels_at(manifest, seen_test);
  const auto unseen_truth = detail::labels_at(manifest, unseen_test);

  EvalReport report;
  report.protocol = "gzsl";
  report.head_kind = cfg.head_kind;
  report.ship = cfg.ship;
  report.fingerprint = detail::fingerprint(cfg);

  double seen_sum = 0.0, unseen_sum = 0.0;
  std::map<std::string, double> class_acc_sum;
  for (std::uint64_t seed : cfg.seeds) {
    detail::audit_row_disjointness(seen_train, seen_test);
    detail::audit_row_disjointness(seen_train, unseen_test);

    std::optional<ShipGenerator> gen;
    if (cfg.ship) {
      TrainConfig tcfg = cfg.gen_train;
      tcfg.seed = mix_seed({seed, hash64("protocol.gen")});
      gen = train_generator(enc, train, cfg.prompt, tcfg, cfg.gen_kind);
    }
    HeadTrainConfig hcfg = cfg.head_train;
    hcfg.seed = mix_seed({seed, hash64("protocol.head")});
    const std::vector<std::string>& train_space =
        cfg.ship ? manifest.vocabulary.names : seen_vocab.names;
    const ShipGenerator* gen_ptr = gen ? &*gen : nullptr;

    ClassifierHead head;
    if (cfg.head_kind == "zero_shot") {
      head = ZeroShotHead{cfg.tmpl, manifest.vocabulary.names};
    } else if (cfg.head_kind == "prompt_tuner") {
      head = fit_prompt_tuner(enc, train_space, train, gen_ptr, hcfg);
    } else if (cfg.head_kind == "adapter") {
      head = fit_adapter(enc, cfg.tmpl, train_space, train, gen_ptr, hcfg);
    } else if (cfg.head_kind == "cache") {
      if (cfg.ship) {
        const LabeledFeatureSet synth =
            synthesize(*gen, enc, unseen_vocab, hcfg.synth_per_class,
                       mix_seed({seed, hash64("protocol.synth")}));
        head = build_cache_head(enc, cfg.tmpl, train_space, train, &synth, hcfg);
      } else {
        head = build_cache_head(enc, cfg.tmpl, train_space, train, nullptr, hcfg);
      }
    } else {
      throw std::invalid_argument("unknown head kind: '" + cfg.head_kind + "'");
    }

    const auto seen_preds =
        predict_labels(head, enc, seen_x, manifest.vocabulary.names);
    const auto unseen_preds =
        predict_labels(head, enc, unseen_x, manifest.vocabulary.names);
    const PerClassAccuracy seen_acc =
        per_class_accuracy(seen_preds, seen_truth, seen_vocab);
    const PerClassAccuracy unseen_acc =
        per_class_accuracy(unseen_preds, unseen_truth, unseen_vocab);
    seen_sum += seen_acc.macro;
    unseen_sum += unseen_acc.macro;
    for (const auto& [name, acc] : seen_acc.per_class) class_acc_sum[name] += acc;
    for (const auto& [name, acc] : unseen_acc.per_class) class_acc_sum[name] += acc;
    report.per_seed.push_back(
        {seed,
         {{"seen", seen_acc.macro},
          {"unseen", unseen_acc.macro},
          {"H", harmonic_mean(seen_acc.macro, unseen_acc.macro)}}});
  }
  const double n_seeds = static_cast<double>(cfg.seeds.size());
  const double seen_avg = seen_sum / n_seeds;
  const double unseen_avg = unseen_sum / n_seeds;
  report.summary = {{"seen", seen_avg},
                    {"unseen", unseen_avg},
                    {"H", harmonic_mean(seen_avg, unseen_avg)}};
  for (const auto& [name, sum] : class_acc_sum)
    report.per_class.emplace_back(name, sum / n_seeds);
  return report;
}

}  // namespace ship
