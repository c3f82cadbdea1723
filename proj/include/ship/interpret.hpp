#pragma once

// Nearest-word readout of prompt vectors: each position maps to the wordlist
// entry whose embedding minimizes Euclidean distance. Instance prompts are
// taken at the posterior mean, so interpretation is deterministic.

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "ship/encoder.hpp"
#include "ship/generator.hpp"

namespace ship {

struct Interpretation {
  struct Entry {
    std::string word;
    double distance = 0.0;
  };
  std::vector<Entry> positions;  // one per prompt position

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < positions.size(); ++i)
      j.push_back({{"position", i},
                   {"word", positions[i].word},
                   {"distance", positions[i].distance}});
    return j;
  }
};

// Ties break toward the earlier wordlist entry.
inline Interpretation nearest_words(const TokenSequence& prompt,
                                    const DualEncoder& enc,
                                    const std::vector<std::string>& wordlist) {
  if (wordlist.empty()) throw std::invalid_argument("empty wordlist");
  std::vector<Eigen::VectorXd> embeds;
  embeds.reserve(wordlist.size());
  for (const auto& word : wordlist) embeds.push_back(enc.vocabulary_vector(word));

  Interpretation out;
  for (const auto& p : prompt.vectors) {
    std::size_t best = 0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (std::size_t w = 0; w < wordlist.size(); ++w) {
      const double dist = (p - embeds[w]).norm();
      if (dist < best_dist) {
        best_dist = dist;
        best = w;
      }
    }
    out.positions.push_back({wordlist[best], best_dist});
  }
  return out;
}

inline Interpretation interpret_instance(const ShipGenerator& gen,
                                         const DualEncoder& enc,
                                         const Eigen::VectorXd& x,
                                         const std::vector<std::string>& wordlist) {
  const auto [mu, logvar] = vae_encode(gen, x);
  (void)logvar;
  return nearest_words(assemble_prompt(gen, mu), enc, wordlist);
}

inline std::vector<std::string> load_wordlist(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("missing file: " + path);
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' '))
      line.pop_back();
    if (!line.empty()) words.push_back(line);
  }
  return words;
}

}  // namespace ship
