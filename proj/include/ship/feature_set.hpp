#pragma once

// Labeled feature sets and the on-disk feature store.
//
// Features live on the unit sphere of the joint embedding space. Storage is
// float32 row-major so that write/read round-trips are bit-identical; math
// that needs double precision converts per row at the call site.
//
// Store layout: magic "SHIPFS1\0" | u32 n | u32 d | n*d f32 LE row-major |
// u32 label-block length | UTF-8 JSON array of {"label","origin"}.

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

#include "ship/io.hpp"

namespace ship {

using FeatureMatrix =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr double kNormTolerance = 1e-5;

enum class Origin : std::uint8_t { real, synthetic };

inline const char* origin_name(Origin o) {
  return o == Origin::real ? "real" : "synthetic";
}

inline Origin origin_from_name(const std::string& s) {
  if (s == "real") return Origin::real;
  if (s == "synthetic") return Origin::synthetic;
  throw std::runtime_error("malformed field: origin '" + s + "'");
}

struct LabeledFeatureSet {
  FeatureMatrix features;            // n x d, rows unit norm
  std::vector<std::string> labels;   // n class names
  std::vector<Origin> origin;        // n tags

  Eigen::Index size() const { return features.rows(); }
  Eigen::Index dim() const { return features.cols(); }

  Eigen::VectorXd row_as_double(Eigen::Index i) const {
    return features.row(i).cast<double>().transpose();
  }
};

inline void validate_norms(const FeatureMatrix& features) {
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    const double norm = features.row(i).cast<double>().norm();
    if (std::abs(norm - 1.0) > kNormTolerance)
      throw std::runtime_error("feature row " + std::to_string(i) +
                               " is not unit norm (|x| = " +
                               std::to_string(norm) + ")");
  }
}

inline LabeledFeatureSet make_labeled_set(FeatureMatrix features,
                                          std::vector<std::string> labels,
                                          std::vector<Origin> origin) {
  if (static_cast<std::size_t>(features.rows()) != labels.size() ||
      labels.size() != origin.size())
    throw std::invalid_argument("labeled set: feature/label/origin sizes differ");
  validate_norms(features);
  return LabeledFeatureSet{std::move(features), std::move(labels),
                           std::move(origin)};
}

inline LabeledFeatureSet empty_set(Eigen::Index d) {
  return LabeledFeatureSet{FeatureMatrix(0, d), {}, {}};
}

inline LabeledFeatureSet concat_sets(const LabeledFeatureSet& a,
                                     const LabeledFeatureSet& b) {
  if (a.size() == 0) return b;
  if (b.size() == 0) return a;
  if (a.dim() != b.dim())
    throw std::invalid_argument("concat: dimension mismatch");
  LabeledFeatureSet out;
  out.features.resize(a.size() + b.size(), a.dim());
  out.features << a.features, b.features;
  out.labels = a.labels;
  out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
  out.origin = a.origin;
  out.origin.insert(out.origin.end(), b.origin.begin(), b.origin.end());
  return out;
}

inline LabeledFeatureSet select_rows(const LabeledFeatureSet& s,
                                     const std::vector<std::size_t>& rows) {
  LabeledFeatureSet out;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), s.dim());
  out.labels.reserve(rows.size());
  out.origin.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.features.row(static_cast<Eigen::Index>(i)) =
        s.features.row(static_cast<Eigen::Index>(rows[i]));
    out.labels.push_back(s.labels[rows[i]]);
    out.origin.push_back(s.origin[rows[i]]);
  }
  return out;
}

inline constexpr char kFeatureStoreMagic[8] = {'S', 'H', 'I', 'P',
                                               'F', 'S', '1', '\0'};

inline void write_feature_store(const LabeledFeatureSet& set,
                                const std::string& path) {
  validate_norms(set.features);
  auto out = io::open_output(path);
  io::write_bytes(out, kFeatureStoreMagic, 8);
  io::write_u32(out, static_cast<std::uint32_t>(set.size()));
  io::write_u32(out, static_cast<std::uint32_t>(set.dim()));
  if (set.size() > 0)
    io::write_f32_array(out, set.features.data(),
                        static_cast<std::size_t>(set.size() * set.dim()));
  nlohmann::json labels = nlohmann::json::array();
  for (Eigen::Index i = 0; i < set.size(); ++i)
    labels.push_back({{"label", set.labels[i]},
                      {"origin", origin_name(set.origin[i])}});
  io::write_string(out, labels.dump());
}

// Reads only (n, d) from the header; used for manifest validation.
inline std::pair<std::uint32_t, std::uint32_t> read_feature_store_header(
    const std::string& path) {
  auto in = io::open_input(path);
  char magic[8];
  io::read_bytes(in, magic, 8, "magic");
  if (std::memcmp(magic, kFeatureStoreMagic, 8) != 0)
    throw std::runtime_error("bad magic in feature store: " + path);
  const std::uint32_t n = io::read_u32(in, "row count");
  const std::uint32_t d = io::read_u32(in, "dimension");
  return {n, d};
}

inline LabeledFeatureSet read_feature_store(const std::string& path) {
  auto in = io::open_input(path);
  char magic[8];
  io::read_bytes(in, magic, 8, "magic");
  if (std::memcmp(magic, kFeatureStoreMagic, 8) != 0)
    throw std::runtime_error("bad magic in feature store: " + path);
  const std::uint32_t n = io::read_u32(in, "row count");
  const std::uint32_t d = io::read_u32(in, "dimension");
  LabeledFeatureSet set;
  set.features.resize(n, d);
  if (n > 0)
    io::read_f32_array(in, set.features.data(),
                       static_cast<std::size_t>(n) * d, "feature payload");
  const std::string label_block = io::read_string(in, "label block");
  nlohmann::json labels = nlohmann::json::parse(label_block);
  if (!labels.is_array() || labels.size() != n)
    throw std::runtime_error("dimension mismatch: label block has " +
                             std::to_string(labels.size()) + " entries, header says " +
                             std::to_string(n));
  set.labels.reserve(n);
  set.origin.reserve(n);
  for (const auto& entry : labels) {
    set.labels.push_back(entry.at("label").get<std::string>());
    set.origin.push_back(origin_from_name(entry.at("origin").get<std::string>()));
  }
  validate_norms(set.features);
  return set;
}

}  // namespace ship
