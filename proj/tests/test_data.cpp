#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <regex>
#include <set>

#include <nlohmann/json.hpp>

#include "lssa/data.hpp"
#include "lssa/io.hpp"
#include "test_support.hpp"

namespace lssa {
namespace {

using testing::TempDir;

// Test-side restatement of the caption grammar, written as regular
// expressions so it shares no code with the generator.
const std::vector<std::regex>& grammar_patterns() {
  static const std::string C = "(red|green|blue|yellow)";
  static const std::string S = "(circle|square|triangle)";
  static const std::string R = "(top|middle|bottom)";
  static const std::string K = "(left|center|right)";
  static const std::vector<std::regex> kPatterns = {
      std::regex("a " + C + " " + S + " in the " + R + " " + K),
      std::regex("the " + S + " in the " + R + " " + K + " is " + C),
      std::regex("there is a " + C + " " + S + " in the " + R + " " + K),
      std::regex("the " + C + " " + S + " is in the " + R + " " + K),
      std::regex("in the " + R + " " + K + " is a " + C + " " + S),
      std::regex("a " + C + " " + S + " is (above|below) a " + C + " " + S),
      std::regex("a " + C + " " + S + " is (left|right) of a " + C + " " + S),
      std::regex(C + " " + S + " " + R + " " + K + " and " + C + " " + S + " " + R + " " + K),
  };
  return kPatterns;
}

bool matches_grammar(const std::string& caption) {
  return std::any_of(grammar_patterns().begin(), grammar_patterns().end(),
                     [&](const std::regex& re) { return std::regex_match(caption, re); });
}

TEST(Vocabulary, IdsAreDenseAndPadIsZero) {
  const Vocabulary vocab = Vocabulary::grammar();
  EXPECT_EQ(vocab.pad_id(), 0);
  for (int i = 0; i < vocab.size(); ++i) EXPECT_EQ(vocab.id(vocab.token(i)), i);
  // 8 function words, 4 colors, 3 shapes, 3 rows, 3 columns, 2 relations
  EXPECT_EQ(vocab.size(), 23);
}

TEST(Vocabulary, WordClassesMatchTheGrammar) {
  const Vocabulary vocab = Vocabulary::grammar();
  EXPECT_EQ(vocab.class_members(WordClass::kColor).size(), 4u);
  EXPECT_EQ(vocab.class_members(WordClass::kShape).size(), 3u);
  EXPECT_EQ(vocab.word_class(vocab.id("red")), WordClass::kColor);
  EXPECT_EQ(vocab.word_class(vocab.id("triangle")), WordClass::kShape);
  EXPECT_EQ(vocab.word_class(vocab.id("the")), WordClass::kFunction);
}

TEST(Vocabulary, UnknownTokenIsRejected) {
  const Vocabulary vocab = Vocabulary::grammar();
  EXPECT_LSSA_ERROR(vocab.tokenize("a purple circle"), ErrorCode::kInvalidArgument);
  EXPECT_LSSA_ERROR(vocab.token(vocab.size()), ErrorCode::kInvalidArgument);
}

TEST(Vocabulary, HashChangesWithTokenOrder) {
  const Vocabulary vocab = Vocabulary::grammar();
  std::vector<std::string> tokens = vocab.tokens();
  std::vector<WordClass> classes = vocab.classes();
  std::swap(tokens[1], tokens[2]);
  std::swap(classes[1], classes[2]);
  EXPECT_NE(Vocabulary(tokens, classes).hash(), vocab.hash());
  EXPECT_EQ(Vocabulary::grammar().hash(), vocab.hash());
}

TEST(GenerateDataset, EmptyDatasetIsRejected) {
  DatasetSpec spec;
  spec.num_images = 0;
  EXPECT_LSSA_ERROR(generate_dataset(spec), ErrorCode::kInvalidArgument);
}

TEST(GenerateDataset, TooSmallImagesAreRejected) {
  DatasetSpec spec;
  spec.num_images = 4;
  spec.height = 12;
  spec.width = 32;
  EXPECT_LSSA_ERROR(generate_dataset(spec), ErrorCode::kInvalidArgument);
}

TEST(GenerateDataset, SameSeedGivesByteIdenticalDatasets) {
  DatasetSpec spec;
  spec.num_images = 40;
  spec.seed = 11;
  const Dataset a = generate_dataset(spec);
  const Dataset b = generate_dataset(spec);
  EXPECT_TRUE(a == b);
  TempDir da("det_a"), db("det_b");
  const DatasetManifest ma = save_dataset(a, da.path());
  const DatasetManifest mb = save_dataset(b, db.path());
  EXPECT_EQ(ma.checksums, mb.checksums);
}

TEST(GenerateDataset, DifferentSeedsDiffer) {
  DatasetSpec spec;
  spec.num_images = 20;
  spec.seed = 1;
  const Dataset a = generate_dataset(spec);
  spec.seed = 2;
  const Dataset b = generate_dataset(spec);
  EXPECT_FALSE(a == b);
}

TEST(GenerateDataset, TwoHundredImagesSeedSeven) {
  DatasetSpec spec;
  spec.num_images = 200;
  spec.seed = 7;
  const Dataset d = generate_dataset(spec);
  ASSERT_EQ(d.items.size(), 200u);

  // Every word the regular-expression grammar can emit.
  std::set<std::string> grammar_words = {"a",      "the",   "in",     "is",     "there", "above", "below",
                                         "left",   "right", "of",     "and",    "red",   "green", "blue",
                                         "yellow", "circle", "square", "triangle", "top", "middle", "bottom",
                                         "center"};
  int captions = 0;
  for (const auto& item : d.items) {
    for (const auto& caption : item.captions) {
      ++captions;
      for (TokenId t : caption) {
        ASSERT_TRUE(d.vocab.valid(t));
        EXPECT_TRUE(grammar_words.count(d.vocab.token(t))) << d.vocab.token(t);
      }
    }
  }
  EXPECT_EQ(captions, 1000);
}

TEST(GenerateDataset, CaptionsParseAndRoundTripThroughTheVocabulary) {
  const Dataset d = testing::tiny_dataset(120, 5);
  for (const auto& item : d.items) {
    ASSERT_EQ(static_cast<int>(item.captions.size()), kCaptionsPerImage);
    std::set<TokenSequence> distinct(item.captions.begin(), item.captions.end());
    EXPECT_EQ(distinct.size(), item.captions.size()) << "pair " << item.pair_id;
    for (const auto& caption : item.captions) {
      const std::string text = d.vocab.detokenize(caption);
      EXPECT_TRUE(matches_grammar(text)) << text;
      EXPECT_TRUE(parses_under_grammar(text)) << text;
      EXPECT_EQ(d.vocab.tokenize(text), caption);
      EXPECT_GE(caption.size(), 5u);
      EXPECT_LE(caption.size(), 9u);
    }
  }
}

TEST(GenerateDataset, ImagesAreInUnitRangeWithUniformBackground) {
  const Dataset d = testing::tiny_dataset(30, 9);
  for (const auto& item : d.items) {
    EXPECT_TRUE(within_unit_range(item.image));
    EXPECT_EQ(item.image.channels(), 3);
    EXPECT_EQ(item.image.height(), 32);
    // Corner pixel is background in every image; 1 to 3 cells are occupied.
    for (int c = 0; c < 3; ++c) EXPECT_EQ(item.image(c, 0, 0), d.items[0].image(c, 0, 0));
    const auto occupied = occupied_cells(item.image);
    const auto n = std::count(occupied.begin(), occupied.end(), true);
    EXPECT_GE(n, 1);
    EXPECT_LE(n, 3);
  }
}

TEST(GenerateDataset, SplitsAreDisjointAndCoverTheDataset) {
  for (int n : {1, 2, 7, 300}) {
    DatasetSpec spec;
    spec.num_images = n;
    spec.seed = static_cast<std::uint64_t>(n);
    const Dataset d = generate_dataset(spec);
    std::set<int> train(d.train_ids.begin(), d.train_ids.end());
    std::set<int> test(d.test_ids.begin(), d.test_ids.end());
    for (int id : test) EXPECT_FALSE(train.count(id)) << id;
    EXPECT_EQ(train.size() + test.size(), static_cast<std::size_t>(n));
    EXPECT_FALSE(train.empty());
    for (int i = 0; i < n; ++i) EXPECT_EQ(d.items[static_cast<std::size_t>(i)].pair_id, i);
  }
  DatasetSpec spec;
  const Dataset d = generate_dataset(spec);
  EXPECT_EQ(d.train_ids.size(), 200u);
  EXPECT_EQ(d.test_ids.size(), 100u);
}

TEST(GenerateDataset, CaptionPoolDescribesTheScene) {
  ShapeScene scene;
  scene.objects = {{ShapeKind::kCircle, ColorKind::kRed, 0}, {ShapeKind::kSquare, ColorKind::kBlue, 8}};
  const auto pool = caption_pool(scene);
  EXPECT_NE(std::find(pool.begin(), pool.end(), "a red circle in the top left"), pool.end());
  EXPECT_NE(std::find(pool.begin(), pool.end(), "a red circle is above a blue square"), pool.end());
  EXPECT_NE(std::find(pool.begin(), pool.end(), "a blue square is right of a red circle"), pool.end());
  EXPECT_EQ(std::find(pool.begin(), pool.end(), "a red circle is below a blue square"), pool.end());
  for (const auto& c : pool) EXPECT_TRUE(matches_grammar(c)) << c;
}

TEST(AugmentPair, MirrorAndPaletteKeepCaptionsTruthful) {
  ShapeScene scene;
  scene.objects = {{ShapeKind::kSquare, ColorKind::kRed, 3}};
  const Vocabulary vocab = Vocabulary::grammar();
  CaptionedImage item;
  item.image = render_scene(scene, 1);
  item.captions = {vocab.tokenize("a red square in the middle left")};

  Augmentation aug;
  aug.mirror = true;
  aug.color_permutation = {2, 0, 1, 3};  // red becomes blue
  const CaptionedImage out = augment_pair(item, vocab, aug);
  EXPECT_EQ(vocab.detokenize(out.captions[0]), "a blue square in the middle right");

  const auto occupied = occupied_cells(out.image);
  EXPECT_TRUE(occupied[5]);
  EXPECT_FALSE(occupied[3]);
  EXPECT_TRUE(within_unit_range(out.image));
}

TEST(AugmentPair, ShiftMovesCellWords) {
  ShapeScene scene;
  scene.objects = {{ShapeKind::kCircle, ColorKind::kGreen, 0}};
  const Vocabulary vocab = Vocabulary::grammar();
  CaptionedImage item;
  item.image = render_scene(scene, 2);
  item.captions = {vocab.tokenize("a green circle in the top left")};
  Augmentation aug;
  aug.shift_rows = 1;
  aug.shift_cols = 2;
  const CaptionedImage out = augment_pair(item, vocab, aug);
  EXPECT_EQ(vocab.detokenize(out.captions[0]), "a green circle in the middle right");
  EXPECT_TRUE(occupied_cells(out.image)[5]);
}

TEST(SaveLoadDataset, RoundTripIsExact) {
  const Dataset d = testing::tiny_dataset(15, 4);
  TempDir dir("roundtrip");
  const DatasetManifest manifest = save_dataset(d, dir.path());
  EXPECT_EQ(manifest.count, 15);
  EXPECT_EQ(manifest.schema_version, kDatasetSchemaVersion);
  EXPECT_EQ(manifest.checksums.size(), 17u);  // 15 images, captions, vocab
  const Dataset loaded = load_dataset(dir.path());
  EXPECT_TRUE(loaded == d);
}

TEST(SaveLoadDataset, MissingManifest) {
  TempDir dir("nomanifest");
  EXPECT_LSSA_ERROR(load_dataset(dir.path()), ErrorCode::kMissingManifest);
}

TEST(SaveLoadDataset, CorruptImageNamesTheFile) {
  const Dataset d = testing::tiny_dataset(6, 4);
  TempDir dir("corrupt");
  save_dataset(d, dir.path());
  const auto victim = dir.path() / "images" / "pair_00003.png";
  ASSERT_TRUE(std::filesystem::exists(victim));
  auto bytes = io::read_bytes(victim);
  bytes[bytes.size() / 2] ^= 0x5A;
  io::write_bytes(victim, bytes);
  const Error e = testing::catch_error([&] { load_dataset(dir.path()); });
  EXPECT_EQ(e.code(), ErrorCode::kChecksumMismatch);
  EXPECT_NE(std::string(e.what()).find("pair_00003.png"), std::string::npos) << e.what();
}

TEST(SaveLoadDataset, VersionMismatch) {
  const Dataset d = testing::tiny_dataset(3, 4);
  TempDir dir("version");
  save_dataset(d, dir.path());
  nlohmann::json manifest = nlohmann::json::parse(io::read_text(dir.path() / "manifest.json"));
  manifest["schema_version"] = 2;
  io::write_text(dir.path() / "manifest.json", manifest.dump(2));
  EXPECT_LSSA_ERROR(load_dataset(dir.path()), ErrorCode::kVersionMismatch);
}

}  // namespace
}  // namespace lssa
