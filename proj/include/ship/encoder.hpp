#pragma once

// Frozen dual-encoder contract and the deterministic toy reference encoder.
//
// A DualEncoder maps items and token sequences into one unit-sphere embedding
// space. Training code never mutates an encoder; gradients w.r.t. the *input*
// token vectors flow through encode_text_vjp, which is the only hook the
// generator and the prompt tuner need. Any externally pretrained encoder can
// be injected behind this interface.

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ship/feature_set.hpp"
#include "ship/rng.hpp"

namespace ship {

struct TokenSequence {
  std::vector<Eigen::VectorXd> vectors;  // each of dimension d_tok

  std::size_t length() const { return vectors.size(); }
};

// A fixed natural-language template with exactly one class placeholder,
// e.g. "a photo of a {}".
struct PromptTemplate {
  std::vector<std::string> words;  // template words, placeholder excluded
  std::size_t placeholder_pos = 0;

  std::string render(const std::string& class_name) const {
    std::string out;
    for (std::size_t i = 0; i <= words.size(); ++i) {
      if (i == placeholder_pos) {
        if (!out.empty()) out += ' ';
        out += class_name;
      }
      if (i < words.size()) {
        if (!out.empty()) out += ' ';
        out += words[i];
      }
    }
    return out;
  }

  std::string pattern() const {
    std::string out;
    for (std::size_t i = 0; i <= words.size(); ++i) {
      if (i == placeholder_pos) {
        if (!out.empty()) out += ' ';
        out += "{}";
      }
      if (i < words.size()) {
        if (!out.empty()) out += ' ';
        out += words[i];
      }
    }
    return out;
  }
};

inline PromptTemplate parse_template(const std::string& pattern) {
  PromptTemplate t;
  std::istringstream in(pattern);
  std::string word;
  bool seen_placeholder = false;
  while (in >> word) {
    if (word == "{}") {
      if (seen_placeholder)
        throw std::invalid_argument("template has more than one placeholder");
      t.placeholder_pos = t.words.size();
      seen_placeholder = true;
    } else {
      t.words.push_back(word);
    }
  }
  if (!seen_placeholder)
    throw std::invalid_argument("template has no '{}' placeholder: " + pattern);
  return t;
}

class DualEncoder {
 public:
  virtual ~DualEncoder() = default;

  int dim() const { return d_; }
  int token_dim() const { return d_tok_; }
  double logit_scale() const { return logit_scale_; }

  // Token embeddings for a whitespace-separated word string.
  virtual TokenSequence embed_tokens(const std::string& text) const = 0;

  // Unit-norm text feature; deterministic and differentiable w.r.t. inputs.
  virtual Eigen::VectorXd encode_text(const TokenSequence& tokens) const = 0;

  // Vector-Jacobian product: gradients of (grad_out . encode_text(tokens))
  // with respect to each input token vector.
  virtual std::vector<Eigen::VectorXd> encode_text_vjp(
      const TokenSequence& tokens, const Eigen::VectorXd& grad_out) const = 0;

  // Unit-norm visual feature from a raw item.
  virtual Eigen::VectorXd encode_item(const Eigen::VectorXd& raw) const = 0;

  // Embedding-table row for a single word (prompt interpretation).
  virtual Eigen::VectorXd vocabulary_vector(const std::string& word) const = 0;

 protected:
  DualEncoder(int d, int d_tok, double logit_scale)
      : d_(d), d_tok_(d_tok), logit_scale_(logit_scale) {}

  int d_;
  int d_tok_;
  double logit_scale_;
};

// Desk-scale stand-in for a pretrained dual encoder. Text path: mean-pool
// token vectors, fixed seeded affine map d_tok -> d, tanh, L2 normalize.
// Mean pooling makes it position-insensitive, which is a documented
// simplification relative to transformer text encoders.
class ToyDualEncoder final : public DualEncoder {
 public:
  static constexpr int kTableRows = 4096;

  ToyDualEncoder(std::uint64_t seed, int d, int d_tok)
      : DualEncoder(d, d_tok, 100.0) {
    if (d < 2 || d_tok < 2)
      throw std::invalid_argument("toy encoder needs d, d_tok >= 2");
    table_.resize(kTableRows, d_tok);
    Rng table_rng(mix_seed({seed, hash64("toy.table")}));
    table_rng.fill_gaussian(table_, 1.0);
    proj_.resize(d, d_tok);
    Rng proj_rng(mix_seed({seed, hash64("toy.proj")}));
    proj_rng.fill_gaussian(proj_, 1.0 / std::sqrt(static_cast<double>(d_tok)));
    bias_.resize(d);
    Rng bias_rng(mix_seed({seed, hash64("toy.bias")}));
    for (int i = 0; i < d; ++i) bias_[i] = 0.1 * bias_rng.gaussian();
  }

  TokenSequence embed_tokens(const std::string& text) const override {
    TokenSequence seq;
    std::istringstream in(text);
    std::string word;
    while (in >> word)
      seq.vectors.push_back(table_.row(table_row(word)).transpose());
    if (seq.vectors.empty())
      throw std::invalid_argument("cannot embed empty token string");
    return seq;
  }

  Eigen::VectorXd encode_text(const TokenSequence& tokens) const override {
    Eigen::VectorXd u = squashed(tokens);
    const double norm = u.norm();
    if (norm < 1e-12) throw std::runtime_error("degenerate text embedding");
    return u / norm;
  }

  std::vector<Eigen::VectorXd> encode_text_vjp(
      const TokenSequence& tokens, const Eigen::VectorXd& grad_out) const override {
    if (grad_out.size() != d_)
      throw std::invalid_argument("vjp: grad dimension mismatch");
    const Eigen::VectorXd u = squashed(tokens);
    const double norm = u.norm();
    const Eigen::VectorXd y = u / norm;
    // y = u/|u| ; tanh ; affine ; mean-pool
    const Eigen::VectorXd du = (grad_out - y * y.dot(grad_out)) / norm;
    const Eigen::VectorXd da =
        du.cwiseProduct(Eigen::VectorXd::Ones(d_) - u.cwiseProduct(u));
    const Eigen::VectorXd dm = proj_.transpose() * da;
    const double n = static_cast<double>(tokens.length());
    return std::vector<Eigen::VectorXd>(tokens.length(), dm / n);
  }

  Eigen::VectorXd encode_item(const Eigen::VectorXd& raw) const override {
    if (raw.size() != d_)
      throw std::invalid_argument("encode_item: dimension mismatch");
    const double norm = raw.norm();
    if (norm < 1e-12) throw std::invalid_argument("encode_item: zero vector");
    return raw / norm;
  }

  Eigen::VectorXd vocabulary_vector(const std::string& word) const override {
    return table_.row(table_row(word)).transpose();
  }

  // Bitwise snapshot of every frozen parameter, for frozenness audits.
  Eigen::VectorXd parameter_snapshot() const {
    Eigen::VectorXd snap(table_.size() + proj_.size() + bias_.size());
    Eigen::Index at = 0;
    snap.segment(at, table_.size()) =
        Eigen::Map<const Eigen::VectorXd>(table_.data(), table_.size());
    at += table_.size();
    snap.segment(at, proj_.size()) =
        Eigen::Map<const Eigen::VectorXd>(proj_.data(), proj_.size());
    at += proj_.size();
    snap.segment(at, bias_.size()) = bias_;
    return snap;
  }

 private:
  // Words hash to table rows with FNV-1a; collisions are tolerated at toy
  // scale (two words may share an embedding).
  Eigen::Index table_row(const std::string& word) const {
    return static_cast<Eigen::Index>(hash64(word) % kTableRows);
  }

  Eigen::VectorXd squashed(const TokenSequence& tokens) const {
    if (tokens.length() == 0)
      throw std::invalid_argument("encode_text: empty token sequence");
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(d_tok_);
    for (const auto& v : tokens.vectors) {
      if (v.size() != d_tok_)
        throw std::invalid_argument("encode_text: token dimension mismatch");
      mean += v;
    }
    mean /= static_cast<double>(tokens.length());
    return (proj_ * mean + bias_).array().tanh().matrix();
  }

  Eigen::MatrixXd table_;
  Eigen::MatrixXd proj_;
  Eigen::VectorXd bias_;
};

inline std::shared_ptr<ToyDualEncoder> make_toy_encoder(std::uint64_t seed,
                                                        int d, int d_tok) {
  return std::make_shared<ToyDualEncoder>(seed, d, d_tok);
}

inline Eigen::VectorXd class_text_feature(const DualEncoder& enc,
                                          const PromptTemplate& tmpl,
                                          const std::string& class_name) {
  if (class_name.empty()) throw std::invalid_argument("empty class name");
  return enc.encode_text(enc.embed_tokens(tmpl.render(class_name)));
}

inline LabeledFeatureSet extract_features(
    const DualEncoder& enc, const std::vector<Eigen::VectorXd>& items,
    const std::vector<std::string>& labels) {
  if (items.size() != labels.size())
    throw std::invalid_argument("extract_features: item/label length mismatch");
  FeatureMatrix features(static_cast<Eigen::Index>(items.size()), enc.dim());
  for (std::size_t i = 0; i < items.size(); ++i)
    features.row(static_cast<Eigen::Index>(i)) =
        enc.encode_item(items[i]).cast<float>().transpose();
  return make_labeled_set(std::move(features), labels,
                          std::vector<Origin>(items.size(), Origin::real));
}

}  // namespace ship
