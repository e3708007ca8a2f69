#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "lssa/image.hpp"

namespace lssa {

using TokenId = int;
using TokenSequence = std::vector<TokenId>;

enum class ShapeKind { kCircle, kSquare, kTriangle };
enum class ColorKind { kRed, kGreen, kBlue, kYellow };

/// Substitution class of a vocabulary token. Tokens in kFunction have no
/// legal substitute; every other class is closed under substitution.
enum class WordClass { kFunction, kColor, kShape, kRow, kColumn, kRelation };

std::string_view to_string(ShapeKind shape);
std::string_view to_string(ColorKind color);
std::string_view to_string(WordClass word_class);

struct SceneObject {
  ShapeKind shape;
  ColorKind color;
  int cell;  // row-major index into the 3x3 layout

  int row() const { return cell / 3; }
  int column() const { return cell % 3; }
  friend bool operator==(const SceneObject&, const SceneObject&) = default;
};

struct ShapeScene {
  std::vector<SceneObject> objects;
  int height = 32;
  int width = 32;
};

class Vocabulary {
 public:
  /// Token set of the caption grammar; id 0 is the pad token.
  static Vocabulary grammar();

  Vocabulary() = default;
  Vocabulary(std::vector<std::string> tokens, std::vector<WordClass> classes);

  int size() const { return static_cast<int>(tokens_.size()); }
  TokenId pad_id() const { return 0; }
  const std::string& token(TokenId id) const;
  TokenId id(std::string_view token) const;
  bool contains(std::string_view token) const;
  bool valid(TokenId id) const { return id >= 0 && id < size(); }
  WordClass word_class(TokenId id) const;
  /// All ids in the given class, ascending.
  std::vector<TokenId> class_members(WordClass word_class) const;

  TokenSequence tokenize(std::string_view text) const;
  std::string detokenize(const TokenSequence& tokens) const;

  /// sha256 over the ordered token list and classes.
  std::string hash() const;

  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::vector<WordClass>& classes() const { return classes_; }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.tokens_ == b.tokens_ && a.classes_ == b.classes_;
  }

 private:
  std::vector<std::string> tokens_;
  std::vector<WordClass> classes_;
  std::map<std::string, TokenId, std::less<>> index_;
};

inline constexpr int kCaptionsPerImage = 5;

struct CaptionedImage {
  Image image;
  std::vector<TokenSequence> captions;
  int pair_id = 0;

  friend bool operator==(const CaptionedImage&, const CaptionedImage&) = default;
};

struct DatasetSpec {
  int num_images = 300;
  int height = 32;
  int width = 32;
  std::uint64_t seed = 0;
  double test_fraction = 1.0 / 3.0;
};

struct Dataset {
  Vocabulary vocab;
  std::vector<CaptionedImage> items;  // items[i].pair_id == i
  std::vector<int> train_ids;
  std::vector<int> test_ids;
  DatasetSpec spec;

  const CaptionedImage& pair(int pair_id) const { return items.at(static_cast<std::size_t>(pair_id)); }

  friend bool operator==(const Dataset& a, const Dataset& b) {
    return a.vocab == b.vocab && a.items == b.items && a.train_ids == b.train_ids &&
           a.test_ids == b.test_ids && a.spec.seed == b.spec.seed;
  }
};

Image render_scene(const ShapeScene& scene, std::uint64_t seed);

struct Augmentation {
  bool mirror = false;
  std::array<int, 4> color_permutation = {0, 1, 2, 3};  // [i] replaces color i
  int shift_rows = 0;  // whole cells, applied after the mirror
  int shift_cols = 0;
};

/// Which of the 3x3 cells contain non-background pixels.
std::array<bool, 9> occupied_cells(const Image& image);

/// Label-preserving rewrite of a rendered pair: pixels and caption tokens
/// are transformed together. Shifts must keep every occupied cell inside
/// the grid.
CaptionedImage augment_pair(const CaptionedImage& item, const Vocabulary& vocab, const Augmentation& aug);

/// Every caption the grammar can produce for the scene, deduplicated, in a
/// fixed order.
std::vector<std::string> caption_pool(const ShapeScene& scene);

/// True when the caption is one the grammar can emit for some scene.
bool parses_under_grammar(std::string_view caption);

Dataset generate_dataset(const DatasetSpec& spec);

struct DatasetManifest {
  int schema_version = 1;
  std::uint64_t seed = 0;
  int count = 0;
  std::map<std::string, std::string> checksums;  // relative path -> sha256
};

inline constexpr int kDatasetSchemaVersion = 1;

/// Layout: manifest.json, vocab.tsv, captions.tsv, images/pair_NNNNN.png.
DatasetManifest save_dataset(const Dataset& dataset, const std::filesystem::path& directory);
Dataset load_dataset(const std::filesystem::path& directory);

}  // namespace lssa
