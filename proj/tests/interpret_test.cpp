#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "ship/encoder.hpp"
#include "ship/generator.hpp"
#include "ship/interpret.hpp"
#include "ship/rng.hpp"

namespace {

using namespace ship;

TEST(NearestWords, ExactMatchHasZeroDistance) {
  const auto enc = make_toy_encoder(0, 12, 10);
  TokenSequence prompt;
  prompt.vectors.push_back(enc->vocabulary_vector("aerial"));
  const auto interp =
      nearest_words(prompt, *enc, {"ground", "aerial", "marine"});
  ASSERT_EQ(interp.positions.size(), 1u);
  EXPECT_EQ(interp.positions[0].word, "aerial");
  EXPECT_DOUBLE_EQ(interp.positions[0].distance, 0.0);
}

TEST(NearestWords, TieBreaksToEarlierEntry) {
  const auto enc = make_toy_encoder(0, 12, 10);
  // Identical words embed identically, so both are at equal distance.
  TokenSequence prompt;
  prompt.vectors.push_back(Eigen::VectorXd::Zero(10));
  const auto interp = nearest_words(prompt, *enc, {"same", "same"});
  EXPECT_EQ(interp.positions[0].word, "same");
  const auto two_words = nearest_words(prompt, *enc, {"alpha", "alpha"});
  EXPECT_EQ(two_words.positions[0].word, "alpha");

  EXPECT_THROW(nearest_words(prompt, *enc, {}), std::invalid_argument);
}

TEST(NearestWords, MatchesExhaustiveScan) {
  const auto enc = make_toy_encoder(3, 12, 10);
  std::vector<std::string> wordlist;
  for (int i = 0; i < 200; ++i) wordlist.push_back("word" + std::to_string(i));

  Rng rng(42);
  TokenSequence prompt;
  for (int i = 0; i < 4; ++i) prompt.vectors.push_back(rng.gaussian_vector(10));

  const auto interp = nearest_words(prompt, *enc, wordlist);
  for (std::size_t pos = 0; pos < 4; ++pos) {
    double best = std::numeric_limits<double>::infinity();
    std::string best_word;
    for (const auto& w : wordlist) {
      const double dist = (prompt.vectors[pos] - enc->vocabulary_vector(w)).norm();
      if (dist < best) {
        best = dist;
        best_word = w;
      }
    }
    EXPECT_EQ(interp.positions[pos].word, best_word);
    EXPECT_DOUBLE_EQ(interp.positions[pos].distance, best);
    // Minimality against every candidate.
    for (const auto& w : wordlist)
      EXPECT_LE(interp.positions[pos].distance,
                (prompt.vectors[pos] - enc->vocabulary_vector(w)).norm());
  }
}

TEST(InterpretInstance, DeterministicViaPosteriorMean) {
  const auto enc = make_toy_encoder(1, 12, 10);
  const auto gen = make_generator(12, 10, 16, PromptConfig{},
                                  GeneratorKind::text_encoder, 9);
  std::vector<std::string> wordlist;
  for (int i = 0; i < 50; ++i) wordlist.push_back("w" + std::to_string(i));

  Rng rng(8);
  Eigen::VectorXd x = rng.gaussian_vector(12);
  x /= x.norm();
  const auto i1 = interpret_instance(gen, *enc, x, wordlist);
  const auto i2 = interpret_instance(gen, *enc, x, wordlist);
  ASSERT_EQ(i1.positions.size(), static_cast<std::size_t>(gen.prompt.length));
  for (std::size_t p = 0; p < i1.positions.size(); ++p) {
    EXPECT_EQ(i1.positions[p].word, i2.positions[p].word);
    EXPECT_DOUBLE_EQ(i1.positions[p].distance, i2.positions[p].distance);
    EXPECT_GE(i1.positions[p].distance, 0.0);
  }

  const auto j = i1.to_json();
  ASSERT_EQ(j.size(), i1.positions.size());
  EXPECT_EQ(j[0].at("position").get<int>(), 0);
}

TEST(Wordlist, LoadsOneWordPerLine) {
  const auto dir = std::filesystem::temp_directory_path() /
                   ("ship_words_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  const auto path = (dir / "words.txt").string();
  std::ofstream(path) << "alpha\nbeta\r\n\ngamma \n";
  const auto words = load_wordlist(path);
  EXPECT_EQ(words, (std::vector<std::string>{"alpha", "beta", "gamma"}));
  EXPECT_THROW(load_wordlist((dir / "absent.txt").string()),
               std::runtime_error);
}

}  // namespace
