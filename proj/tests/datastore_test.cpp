#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "ship/feature_set.hpp"
#include "ship/manifest.hpp"
#include "ship/rng.hpp"

namespace {

using namespace ship;

std::filesystem::path temp_dir() {
  auto dir = std::filesystem::temp_directory_path() /
             ("ship_datastore_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  return dir;
}

FeatureMatrix random_unit_rows(int n, int d, std::uint64_t seed) {
  Rng rng(seed);
  FeatureMatrix m(n, d);
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd v = rng.gaussian_vector(d);
    m.row(i) = (v / v.norm()).cast<float>().transpose();
  }
  return m;
}

LabeledFeatureSet random_set(int n, int d, std::uint64_t seed) {
  std::vector<std::string> labels;
  std::vector<Origin> origin;
  for (int i = 0; i < n; ++i) {
    labels.push_back(i % 2 == 0 ? "ant" : "bee");
    origin.push_back(i % 3 == 0 ? Origin::synthetic : Origin::real);
  }
  return make_labeled_set(random_unit_rows(n, d, seed), labels, origin);
}

TEST(FeatureStore, RoundTripIsBitIdentical) {
  const auto dir = temp_dir();
  const auto path = (dir / "rt.bin").string();
  const LabeledFeatureSet s = random_set(5, 8, 42);
  write_feature_store(s, path);
  const LabeledFeatureSet r = read_feature_store(path);
  ASSERT_EQ(r.size(), s.size());
  ASSERT_EQ(r.dim(), s.dim());
  EXPECT_TRUE((r.features.array() == s.features.array()).all());
  EXPECT_EQ(r.labels, s.labels);
  EXPECT_EQ(r.origin, s.origin);
}

TEST(FeatureStore, EmptySetRoundTrips) {
  const auto dir = temp_dir();
  const auto path = (dir / "empty.bin").string();
  write_feature_store(empty_set(8), path);
  const LabeledFeatureSet r = read_feature_store(path);
  EXPECT_EQ(r.size(), 0);
  EXPECT_EQ(r.dim(), 8);
}

TEST(FeatureStore, WriteReadWriteProducesIdenticalBytes) {
  const auto dir = temp_dir();
  const auto p1 = (dir / "a.bin").string();
  const auto p2 = (dir / "b.bin").string();
  write_feature_store(random_set(7, 6, 7), p1);
  write_feature_store(read_feature_store(p1), p2);
  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  const std::string b1((std::istreambuf_iterator<char>(f1)), {});
  const std::string b2((std::istreambuf_iterator<char>(f2)), {});
  EXPECT_EQ(b1, b2);
}

TEST(FeatureStore, BadMagicIsRejected) {
  const auto dir = temp_dir();
  const auto path = (dir / "bad.bin").string();
  std::ofstream out(path, std::ios::binary);
  out << "XXXXXXXXsome trailing garbage";
  out.close();
  EXPECT_THROW(
      {
        try {
          read_feature_store(path);
        } catch (const std::runtime_error& e) {
          EXPECT_NE(std::string(e.what()).find("bad magic"), std::string::npos);
          throw;
        }
      },
      std::runtime_error);
}

TEST(FeatureStore, TruncatedPayloadIsRejected) {
  const auto dir = temp_dir();
  const auto full = (dir / "full.bin").string();
  const auto cut = (dir / "cut.bin").string();
  write_feature_store(random_set(4, 8, 3), full);
  std::ifstream in(full, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), {});
  std::ofstream out(cut, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  out.close();
  EXPECT_THROW(read_feature_store(cut), std::runtime_error);
}

TEST(FeatureStore, NonUnitRowsAreRejected) {
  FeatureMatrix m(1, 4);
  m << 1.0f, 1.0f, 0.0f, 0.0f;
  EXPECT_THROW(make_labeled_set(m, {"ant"}, {Origin::real}), std::runtime_error);
}

TEST(Vocabulary, CanonicalOrderAndDuplicates) {
  const auto v = make_vocabulary({"cat", "ant", "bee"});
  EXPECT_EQ(v.names, (std::vector<std::string>{"ant", "bee", "cat"}));
  EXPECT_THROW(make_vocabulary({"ant", "ant"}), std::runtime_error);
  EXPECT_EQ(*v.index_of("bee"), 1u);
  EXPECT_FALSE(v.index_of("dog").has_value());
}

TEST(ClassSplit, PartitionsWithCeilingRule) {
  std::vector<std::string> ten;
  for (int i = 0; i < 10; ++i) ten.push_back("c" + std::to_string(i));
  const auto s10 = split_base_new(make_vocabulary(ten));
  EXPECT_EQ(s10.base.size(), 5u);
  EXPECT_EQ(s10.novel.size(), 5u);

  std::vector<std::string> seven(ten.begin(), ten.begin() + 7);
  const auto s7 = split_base_new(make_vocabulary(seven));
  EXPECT_EQ(s7.base.size(), 4u);
  EXPECT_EQ(s7.novel.size(), 3u);
  for (const auto& n : s7.base.names) EXPECT_FALSE(s7.novel.contains(n));

  EXPECT_THROW(split_base_new(make_vocabulary({"only"})), std::invalid_argument);
}

class ManifestFixture : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = temp_dir() / ::testing::UnitTest::GetInstance()->current_test_info()->name();
    std::filesystem::create_directories(dir_);
    // 3 classes x 8 items, 6 train / 2 test each.
    std::vector<std::string> labels;
    std::vector<std::string> split_names;
    for (const char* cls : {"ant", "bee", "cat"})
      for (int i = 0; i < 8; ++i) {
        labels.push_back(cls);
        split_names.push_back(i < 6 ? "train" : "test");
      }
    write_feature_store(
        make_labeled_set(random_unit_rows(24, 8, 11), labels,
                         std::vector<Origin>(24, Origin::real)),
        (dir_ / "features.bin").string());
    nlohmann::ordered_json j;
    j["name"] = "toy";
    j["classes"] = {"cat", "ant", "bee"};  // deliberately unsorted
    j["features"] = "features.bin";
    j["items"] = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < labels.size(); ++i)
      j["items"].push_back({{"label", labels[i]}, {"split", split_names[i]}});
    std::ofstream out(dir_ / "manifest.json");
    out << j.dump(2);
  }

  std::filesystem::path dir_;
};

TEST_F(ManifestFixture, LoadsAndCanonicalizes) {
  const auto m = load_manifest((dir_ / "manifest.json").string());
  EXPECT_EQ(m.vocabulary.names, (std::vector<std::string>{"ant", "bee", "cat"}));
  EXPECT_EQ(m.item_count(), 24u);
}

TEST_F(ManifestFixture, MissingStoreIsReported) {
  std::filesystem::remove(dir_ / "features.bin");
  EXPECT_THROW(
      {
        try {
          load_manifest((dir_ / "manifest.json").string());
        } catch (const std::runtime_error& e) {
          EXPECT_NE(std::string(e.what()).find("feature store not found"),
                    std::string::npos);
          throw;
        }
      },
      std::runtime_error);
}

TEST_F(ManifestFixture, DuplicateClassIsReported) {
  auto j = nlohmann::json::parse(std::ifstream(dir_ / "manifest.json"));
  j["classes"] = {"ant", "ant", "bee"};
  std::ofstream(dir_ / "manifest.json") << j.dump();
  EXPECT_THROW(
      {
        try {
          load_manifest((dir_ / "manifest.json").string());
        } catch (const std::runtime_error& e) {
          EXPECT_NE(std::string(e.what()).find("duplicate class"),
                    std::string::npos);
          throw;
        }
      },
      std::runtime_error);
}

TEST_F(ManifestFixture, RowCountMismatchIsReported) {
  auto j = nlohmann::json::parse(std::ifstream(dir_ / "manifest.json"));
  j["items"].erase(0);
  std::ofstream(dir_ / "manifest.json") << j.dump();
  EXPECT_THROW(load_manifest((dir_ / "manifest.json").string()),
               std::runtime_error);
}

TEST_F(ManifestFixture, FewShotIsDeterministicAndSized) {
  const auto m = load_manifest((dir_ / "manifest.json").string());
  const auto rows1 = sample_few_shot_rows(m, m.vocabulary, 4, 9);
  const auto rows2 = sample_few_shot_rows(m, m.vocabulary, 4, 9);
  EXPECT_EQ(rows1, rows2);
  EXPECT_EQ(rows1.size(), 12u);
  const auto set = sample_few_shot(m, m.vocabulary, 4, 9);
  EXPECT_EQ(set.size(), 12);
  for (std::size_t r : rows1)
    EXPECT_EQ(m.item_splits[r], ItemSplit::train);

  const auto other = sample_few_shot_rows(m, m.vocabulary, 4, 10);
  EXPECT_NE(rows1, other);
}

TEST_F(ManifestFixture, FewShotPerClassStreamsAreStable) {
  // Sampling a subset of classes must reproduce the full run's per-class rows.
  const auto m = load_manifest((dir_ / "manifest.json").string());
  ClassVocabulary bee_only;
  bee_only.names = {"bee"};
  const auto all_rows = sample_few_shot_rows(m, m.vocabulary, 3, 5);
  const auto bee_rows = sample_few_shot_rows(m, bee_only, 3, 5);
  // "bee" is the second class of three; its block sits in the middle.
  const std::vector<std::size_t> middle(all_rows.begin() + 3, all_rows.begin() + 6);
  EXPECT_EQ(bee_rows, middle);
}

TEST_F(ManifestFixture, InsufficientShotsNameTheClass) {
  const auto m = load_manifest((dir_ / "manifest.json").string());
  EXPECT_THROW(
      {
        try {
          sample_few_shot_rows(m, m.vocabulary, 7, 0);
        } catch (const std::runtime_error& e) {
          EXPECT_NE(std::string(e.what()).find("ant"), std::string::npos);
          throw;
        }
      },
      std::runtime_error);
}

}  // namespace
