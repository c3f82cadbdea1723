#pragma once

// Accuracy metrics and the evaluation report emitted by the protocol runners.
// Reports serialize to JSON and to a Base/New/H-style Markdown table; both
// are byte-deterministic for a fixed run.

#include <nlohmann/json.hpp>

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "ship/manifest.hpp"

namespace ship {

// Percentages in, percentage out; 0 when both inputs are 0.
inline double harmonic_mean(double a, double b) {
  if (a < 0.0 || a > 100.0 || b < 0.0 || b > 100.0)
    throw std::invalid_argument("harmonic_mean: accuracy out of [0, 100]");
  if (a + b == 0.0) return 0.0;
  return 2.0 * a * b / (a + b);
}

inline double instance_accuracy(const std::vector<std::string>& preds,
                                const std::vector<std::string>& truth) {
  if (preds.size() != truth.size() || preds.empty())
    throw std::invalid_argument("accuracy: size mismatch or empty input");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i)
    if (preds[i] == truth[i]) ++correct;
  return 100.0 * static_cast<double>(correct) / static_cast<double>(preds.size());
}

struct PerClassAccuracy {
  std::vector<std::pair<std::string, double>> per_class;  // classes with items
  double macro = 0.0;  // unweighted mean over classes with >= 1 item
};

inline PerClassAccuracy per_class_accuracy(
    const std::vector<std::string>& preds, const std::vector<std::string>& truth,
    const ClassVocabulary& classes) {
  if (preds.size() != truth.size() || preds.empty())
    throw std::invalid_argument("per_class_accuracy: size mismatch or empty input");
  std::vector<std::size_t> total(classes.size(), 0), correct(classes.size(), 0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto idx = classes.index_of(truth[i]);
    if (!idx)
      throw std::invalid_argument("truth label outside vocabulary: '" +
                                  truth[i] + "'");
    ++total[*idx];
    if (preds[i] == truth[i]) ++correct[*idx];
  }
  PerClassAccuracy out;
  double sum = 0.0;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    if (total[c] == 0) continue;  // classes without test items are excluded
    const double acc =
        100.0 * static_cast<double>(correct[c]) / static_cast<double>(total[c]);
    out.per_class.emplace_back(classes.names[c], acc);
    sum += acc;
  }
  if (out.per_class.empty())
    throw std::invalid_argument("per_class_accuracy: no class has items");
  out.macro = sum / static_cast<double>(out.per_class.size());
  return out;
}

struct SeedMetrics {
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, double>> values;

  double value(const std::string& name) const {
    for (const auto& [k, v] : values)
      if (k == name) return v;
    throw std::out_of_range("no per-seed metric: " + name);
  }
};

struct EvalReport {
  std::string protocol;
  std::string head_kind;
  bool ship = false;
  std::vector<std::pair<std::string, double>> summary;  // e.g. base/new/H
  std::vector<SeedMetrics> per_seed;
  std::vector<std::pair<std::string, double>> per_class;  // macro protocols
  nlohmann::ordered_json fingerprint;

  double metric(const std::string& name) const {
    for (const auto& [k, v] : summary)
      if (k == name) return v;
    throw std::out_of_range("no summary metric: " + name);
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["protocol"] = protocol;
    j["head"] = head_kind;
    j["ship"] = ship;
    j["summary"] = nlohmann::ordered_json::object();
    for (const auto& [k, v] : summary) j["summary"][k] = v;
    j["per_seed"] = nlohmann::ordered_json::array();
    for (const auto& s : per_seed) {
      nlohmann::ordered_json row;
      row["seed"] = s.seed;
      for (const auto& [k, v] : s.values) row[k] = v;
      j["per_seed"].push_back(row);
    }
    if (!per_class.empty()) {
      j["per_class"] = nlohmann::ordered_json::object();
      for (const auto& [k, v] : per_class) j["per_class"][k] = v;
    }
    j["fingerprint"] = fingerprint;
    return j;
  }

  std::string to_markdown() const {
    std::string md = "| Method |";
    for (const auto& [k, v] : summary) md += " " + k + " |";
    md += "\n|---|";
    for (std::size_t i = 0; i < summary.size(); ++i) md += "---|";
    md += "\n| " + head_kind + (ship ? " + SHIP" : "") + " |";
    char buf[32];
    for (const auto& [k, v] : summary) {
      std::snprintf(buf, sizeof(buf), " %.2f |", v);
      md += buf;
    }
    md += "\n";
    return md;
  }
};

}  // namespace ship
