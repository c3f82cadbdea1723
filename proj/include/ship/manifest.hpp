#pragma once

// Dataset manifests, canonical class vocabularies, base/new splits, and
// deterministic few-shot sampling.
//
// Manifest file: UTF-8 JSON {"name", "classes": [str], "features": str
// (path relative to the manifest), "items": [{"label", "split"}]} with an
// optional "unseen_classes": [str] extension for seen/unseen protocols.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "ship/feature_set.hpp"
#include "ship/rng.hpp"

namespace ship {

struct ClassVocabulary {
  std::vector<std::string> names;  // unique, sorted ascending by byte value

  std::size_t size() const { return names.size(); }

  std::optional<std::size_t> index_of(const std::string& name) const {
    auto it = std::lower_bound(names.begin(), names.end(), name);
    if (it != names.end() && *it == name)
      return static_cast<std::size_t>(it - names.begin());
    return std::nullopt;
  }

  bool contains(const std::string& name) const {
    return index_of(name).has_value();
  }
};

inline ClassVocabulary make_vocabulary(std::vector<std::string> names) {
  std::sort(names.begin(), names.end());
  for (std::size_t i = 1; i < names.size(); ++i)
    if (names[i] == names[i - 1])
      throw std::runtime_error("duplicate class: '" + names[i] + "'");
  return ClassVocabulary{std::move(names)};
}

enum class ItemSplit : std::uint8_t { train, val, test };

inline ItemSplit split_from_name(const std::string& s) {
  if (s == "train") return ItemSplit::train;
  if (s == "val") return ItemSplit::val;
  if (s == "test") return ItemSplit::test;
  throw std::runtime_error("malformed field: split '" + s + "'");
}

struct DatasetManifest {
  std::string name;
  ClassVocabulary vocabulary;
  std::string feature_store_path;        // resolved against the manifest dir
  std::vector<std::string> item_labels;  // aligned with store rows
  std::vector<ItemSplit> item_splits;
  std::vector<std::string> unseen_classes;  // empty unless declared

  std::size_t item_count() const { return item_labels.size(); }

  std::vector<std::size_t> rows_where(ItemSplit split) const {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < item_splits.size(); ++i)
      if (item_splits[i] == split) rows.push_back(i);
    return rows;
  }
};

inline DatasetManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("missing file: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("malformed field: manifest is not valid JSON (" +
                             std::string(e.what()) + ")");
  }

  DatasetManifest m;
  try {
    m.name = j.at("name").get<std::string>();
    m.vocabulary = make_vocabulary(j.at("classes").get<std::vector<std::string>>());
    const auto rel = j.at("features").get<std::string>();
    m.feature_store_path =
        (std::filesystem::path(path).parent_path() / rel).string();
    for (const auto& item : j.at("items")) {
      m.item_labels.push_back(item.at("label").get<std::string>());
      m.item_splits.push_back(split_from_name(item.at("split").get<std::string>()));
    }
    if (j.contains("unseen_classes"))
      m.unseen_classes = j.at("unseen_classes").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("malformed field: " + std::string(e.what()));
  }

  for (const auto& label : m.item_labels)
    if (!m.vocabulary.contains(label))
      throw std::runtime_error("label not in vocabulary: '" + label + "'");
  for (const auto& name : m.unseen_classes)
    if (!m.vocabulary.contains(name))
      throw std::runtime_error("unseen class not in vocabulary: '" + name + "'");

  if (!std::filesystem::exists(m.feature_store_path))
    throw std::runtime_error("feature store not found: " + m.feature_store_path);
  const auto [rows, dim] = read_feature_store_header(m.feature_store_path);
  (void)dim;
  if (rows != m.item_count())
    throw std::runtime_error(
        "row-count mismatch: feature store has " + std::to_string(rows) +
        " rows, manifest lists " + std::to_string(m.item_count()) + " items");
  return m;
}

inline void save_manifest(const DatasetManifest& m, const std::string& path,
                          const std::string& features_relative) {
  nlohmann::ordered_json j;
  j["name"] = m.name;
  j["classes"] = m.vocabulary.names;
  j["features"] = features_relative;
  j["items"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < m.item_count(); ++i) {
    const char* split = m.item_splits[i] == ItemSplit::train ? "train"
                        : m.item_splits[i] == ItemSplit::val ? "val"
                                                             : "test";
    j["items"].push_back({{"label", m.item_labels[i]}, {"split", split}});
  }
  if (!m.unseen_classes.empty()) j["unseen_classes"] = m.unseen_classes;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << j.dump(2) << "\n";
}

struct ClassSplit {
  ClassVocabulary base;
  ClassVocabulary novel;  // the label-only half ("new" classes)
};

// First ceil(C/2) names in canonical order become base, the rest new.
inline ClassSplit split_base_new(const ClassVocabulary& vocab) {
  if (vocab.size() < 2)
    throw std::invalid_argument("base/new split needs at least 2 classes");
  const std::size_t base_count = (vocab.size() + 1) / 2;
  ClassSplit split;
  split.base.names.assign(vocab.names.begin(),
                          vocab.names.begin() + static_cast<long>(base_count));
  split.novel.names.assign(vocab.names.begin() + static_cast<long>(base_count),
                           vocab.names.end());
  return split;
}

// Row indices of a deterministic `shots`-per-class sample. Streams are
// per-class — seeded by (seed, class index in the manifest vocabulary) — so
// adding a class leaves other classes' samples unchanged.
inline std::vector<std::size_t> sample_few_shot_rows(
    const DatasetManifest& manifest, const ClassVocabulary& classes, int shots,
    std::uint64_t seed) {
  if (shots <= 0) throw std::invalid_argument("shots must be positive");
  std::vector<std::size_t> rows;
  for (const auto& name : classes.names) {
    const auto class_index = manifest.vocabulary.index_of(name);
    if (!class_index)
      throw std::runtime_error("label not in vocabulary: '" + name + "'");
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < manifest.item_count(); ++i)
      if (manifest.item_splits[i] == ItemSplit::train &&
          manifest.item_labels[i] == name)
        pool.push_back(i);
    if (pool.size() < static_cast<std::size_t>(shots))
      throw std::runtime_error("class '" + name + "' has only " +
                               std::to_string(pool.size()) +
                               " train items, need " + std::to_string(shots));
    Rng rng(mix_seed({seed, static_cast<std::uint64_t>(*class_index)}));
    rng.shuffle(pool);
    pool.resize(static_cast<std::size_t>(shots));
    std::sort(pool.begin(), pool.end());
    rows.insert(rows.end(), pool.begin(), pool.end());
  }
  return rows;
}

inline LabeledFeatureSet sample_few_shot(const DatasetManifest& manifest,
                                         const LabeledFeatureSet& store,
                                         const ClassVocabulary& classes,
                                         int shots, std::uint64_t seed) {
  if (static_cast<std::size_t>(store.size()) != manifest.item_count())
    throw std::invalid_argument("store row count does not match manifest");
  return select_rows(store, sample_few_shot_rows(manifest, classes, shots, seed));
}

inline LabeledFeatureSet sample_few_shot(const DatasetManifest& manifest,
                                         const ClassVocabulary& classes,
                                         int shots, std::uint64_t seed) {
  return sample_few_shot(manifest, read_feature_store(manifest.feature_store_path),
                         classes, shots, seed);
}

}  // namespace ship
