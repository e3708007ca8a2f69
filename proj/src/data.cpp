#include "lssa/data.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <set>
#include <sstream>

#include "lssa/error.hpp"
#include "lssa/io.hpp"
#include "lssa/rng.hpp"

namespace lssa {
namespace {

using nlohmann::json;

constexpr std::array<std::string_view, 3> kShapeNames = {"circle", "square", "triangle"};
constexpr std::array<std::string_view, 4> kColorNames = {"red", "green", "blue", "yellow"};
constexpr std::array<std::string_view, 3> kRowNames = {"top", "middle", "bottom"};
constexpr std::array<std::string_view, 3> kColumnNames = {"left", "center", "right"};

// 8-bit palette; every rendered value is byte / 255.
constexpr std::array<std::array<int, 3>, 4> kPalette = {{{230, 25, 25}, {25, 200, 40}, {30, 60, 230}, {240, 220, 20}}};
constexpr int kBackground = 51;

// Caption templates. "{C}" color, "{S}" shape, "{R}" row, "{K}" column;
// a second object uses "{C2}" / "{S2}". Everything else is literal.
const std::vector<std::vector<std::string_view>>& templates() {
  static const std::vector<std::vector<std::string_view>> kTemplates = {
      {"a", "{C}", "{S}", "in", "the", "{R}", "{K}"},
      {"the", "{S}", "in", "the", "{R}", "{K}", "is", "{C}"},
      {"there", "is", "a", "{C}", "{S}", "in", "the", "{R}", "{K}"},
      {"the", "{C}", "{S}", "is", "in", "the", "{R}", "{K}"},
      {"in", "the", "{R}", "{K}", "is", "a", "{C}", "{S}"},
      {"a", "{C}", "{S}", "is", "above", "a", "{C2}", "{S2}"},
      {"a", "{C}", "{S}", "is", "below", "a", "{C2}", "{S2}"},
      {"a", "{C}", "{S}", "is", "left", "of", "a", "{C2}", "{S2}"},
      {"a", "{C}", "{S}", "is", "right", "of", "a", "{C2}", "{S2}"},
      {"{C}", "{S}", "{R}", "{K}", "and", "{C2}", "{S2}", "{R2}", "{K2}"},
  };
  return kTemplates;
}

bool is_pair_template(std::size_t index) { return index >= 5; }

bool relation_holds(std::size_t template_index, const SceneObject& a, const SceneObject& b) {
  switch (template_index) {
    case 5: return a.row() < b.row();
    case 6: return a.row() > b.row();
    case 7: return a.column() < b.column();
    case 8: return a.column() > b.column();
    default: return true;
  }
}

std::string fill_template(std::size_t template_index, const SceneObject& a, const SceneObject* b) {
  std::string out;
  for (std::string_view slot : templates()[template_index]) {
    std::string_view word = slot;
    if (slot == "{C}") word = kColorNames[static_cast<int>(a.color)];
    else if (slot == "{S}") word = kShapeNames[static_cast<int>(a.shape)];
    else if (slot == "{R}") word = kRowNames[a.row()];
    else if (slot == "{K}") word = kColumnNames[a.column()];
    else if (slot == "{C2}") word = kColorNames[static_cast<int>(b->color)];
    else if (slot == "{S2}") word = kShapeNames[static_cast<int>(b->shape)];
    else if (slot == "{R2}") word = kRowNames[b->row()];
    else if (slot == "{K2}") word = kColumnNames[b->column()];
    if (!out.empty()) out.push_back(' ');
    out.append(word);
  }
  return out;
}

bool slot_accepts(std::string_view slot, std::string_view word) {
  auto in = [word](const auto& names) {
    return std::find(names.begin(), names.end(), word) != names.end();
  };
  if (slot == "{C}" || slot == "{C2}") return in(kColorNames);
  if (slot == "{S}" || slot == "{S2}") return in(kShapeNames);
  if (slot == "{R}" || slot == "{R2}") return in(kRowNames);
  if (slot == "{K}" || slot == "{K2}") return in(kColumnNames);
  return slot == word;
}

std::vector<std::string_view> split_words(std::string_view text) {
  std::vector<std::string_view> words;
  std::size_t start = 0;
  while (start < text.size()) {
    const std::size_t end = text.find(' ', start);
    const std::size_t stop = end == std::string_view::npos ? text.size() : end;
    words.push_back(text.substr(start, stop - start));
    start = stop + 1;
  }
  return words;
}

ShapeScene draw_scene(Rng& rng, int height, int width) {
  static constexpr std::array<double, 3> kCountCdf = {0.3, 0.7, 1.0};
  const double u = rng.uniform01();
  int count = 1;
  while (count < 3 && u >= kCountCdf[count - 1]) ++count;

  std::array<int, 9> cells = {0, 1, 2, 3, 4, 5, 6, 7, 8};
  for (int i = 8; i > 0; --i) std::swap(cells[i], cells[rng.below(i + 1)]);

  ShapeScene scene;
  scene.height = height;
  scene.width = width;
  for (int k = 0; k < count; ++k) {
    scene.objects.push_back({static_cast<ShapeKind>(rng.below(3)), static_cast<ColorKind>(rng.below(4)), cells[k]});
  }
  return scene;
}

std::string scene_key(const ShapeScene& scene) {
  std::vector<int> codes;
  for (const auto& o : scene.objects) {
    codes.push_back(o.cell * 100 + static_cast<int>(o.shape) * 10 + static_cast<int>(o.color));
  }
  std::sort(codes.begin(), codes.end());
  std::string key;
  for (int c : codes) key += std::to_string(c) + ",";
  return key;
}

std::string_view class_tag(WordClass c) { return to_string(c); }

WordClass parse_class(std::string_view tag) {
  for (WordClass c : {WordClass::kFunction, WordClass::kColor, WordClass::kShape, WordClass::kRow,
                      WordClass::kColumn, WordClass::kRelation}) {
    if (to_string(c) == tag) return c;
  }
  fail(ErrorCode::kIo, "unknown word class '" + std::string(tag) + "'");
}

std::string image_file_name(int pair_id) {
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "images/pair_%05d.png", pair_id);
  return buffer;
}

}  // namespace

std::string_view to_string(ShapeKind shape) { return kShapeNames[static_cast<int>(shape)]; }
std::string_view to_string(ColorKind color) { return kColorNames[static_cast<int>(color)]; }

std::string_view to_string(WordClass word_class) {
  switch (word_class) {
    case WordClass::kFunction: return "function";
    case WordClass::kColor: return "color";
    case WordClass::kShape: return "shape";
    case WordClass::kRow: return "row";
    case WordClass::kColumn: return "column";
    case WordClass::kRelation: return "relation";
  }
  return "?";
}

Vocabulary Vocabulary::grammar() {
  std::vector<std::string> tokens = {"<pad>", "a",     "the", "is",     "there", "in",
                                     "and",   "of"};
  std::vector<WordClass> classes(tokens.size(), WordClass::kFunction);
  auto add = [&](const auto& names, WordClass c) {
    for (std::string_view n : names) {
      tokens.emplace_back(n);
      classes.push_back(c);
    }
  };
  add(kColorNames, WordClass::kColor);
  add(kShapeNames, WordClass::kShape);
  add(kRowNames, WordClass::kRow);
  add(kColumnNames, WordClass::kColumn);
  add(std::array<std::string_view, 2>{"above", "below"}, WordClass::kRelation);
  return Vocabulary(std::move(tokens), std::move(classes));
}

Vocabulary::Vocabulary(std::vector<std::string> tokens, std::vector<WordClass> classes)
    : tokens_(std::move(tokens)), classes_(std::move(classes)) {
  require(tokens_.size() == classes_.size(), ErrorCode::kInvalidArgument,
          "vocabulary tokens and classes differ in length");
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    const bool inserted = index_.emplace(tokens_[i], static_cast<TokenId>(i)).second;
    require(inserted, ErrorCode::kInvalidArgument, "duplicate vocabulary token '" + tokens_[i] + "'");
  }
}

const std::string& Vocabulary::token(TokenId id) const {
  require(valid(id), ErrorCode::kInvalidArgument, "token id " + std::to_string(id) + " out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

TokenId Vocabulary::id(std::string_view token) const {
  const auto it = index_.find(token);
  require(it != index_.end(), ErrorCode::kInvalidArgument, "unknown token '" + std::string(token) + "'");
  return it->second;
}

bool Vocabulary::contains(std::string_view token) const { return index_.find(token) != index_.end(); }

WordClass Vocabulary::word_class(TokenId id) const {
  require(valid(id), ErrorCode::kInvalidArgument, "token id " + std::to_string(id) + " out of range");
  return classes_[static_cast<std::size_t>(id)];
}

std::vector<TokenId> Vocabulary::class_members(WordClass word_class) const {
  std::vector<TokenId> ids;
  for (std::size_t i = 0; i < classes_.size(); ++i) {
    if (classes_[i] == word_class) ids.push_back(static_cast<TokenId>(i));
  }
  return ids;
}

TokenSequence Vocabulary::tokenize(std::string_view text) const {
  TokenSequence ids;
  for (std::string_view word : split_words(text)) ids.push_back(id(word));
  return ids;
}

std::string Vocabulary::detokenize(const TokenSequence& tokens) const {
  std::string out;
  for (TokenId t : tokens) {
    if (!out.empty()) out.push_back(' ');
    out += token(t);
  }
  return out;
}

std::string Vocabulary::hash() const {
  std::string canonical;
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    canonical += tokens_[i];
    canonical.push_back('\t');
    canonical += class_tag(classes_[i]);
    canonical.push_back('\n');
  }
  return io::sha256_hex(canonical);
}

Image render_scene(const ShapeScene& scene, std::uint64_t seed) {
  require(scene.height >= 16 && scene.width >= 16, ErrorCode::kInvalidArgument,
          "image size must be at least 16x16 to render a 3x3 layout");
  Image image(3, scene.height, scene.width, kBackground / 255.0);
  Rng rng(seed);
  const double cell_h = scene.height / 3.0;
  const double cell_w = scene.width / 3.0;
  for (const auto& object : scene.objects) {
    const double jitter_y = static_cast<double>(rng.below(3)) - 1.0;
    const double jitter_x = static_cast<double>(rng.below(3)) - 1.0;
    const double cy = (object.row() + 0.5) * cell_h + jitter_y;
    const double cx = (object.column() + 0.5) * cell_w + jitter_x;
    const double r = 0.46 * std::min(cell_h, cell_w);
    const auto& rgb = kPalette[static_cast<int>(object.color)];
    for (int y = 0; y < scene.height; ++y) {
      for (int x = 0; x < scene.width; ++x) {
        const double dy = y + 0.5 - cy;
        const double dx = x + 0.5 - cx;
        bool inside = false;
        switch (object.shape) {
          case ShapeKind::kCircle: inside = dx * dx + dy * dy <= r * r; break;
          case ShapeKind::kSquare: inside = std::abs(dx) <= 0.9 * r && std::abs(dy) <= 0.9 * r; break;
          case ShapeKind::kTriangle: {
            // Apex up; half-width grows linearly from 0 at the apex to r at the base.
            const double t = (dy + r) / (2.0 * r);
            inside = t >= 0.0 && t <= 1.0 && std::abs(dx) <= r * t;
            break;
          }
        }
        if (inside) {
          for (int c = 0; c < 3; ++c) image(c, y, x) = rgb[c] / 255.0;
        }
      }
    }
  }
  return image;
}

std::array<bool, 9> occupied_cells(const Image& image) {
  std::array<bool, 9> occupied{};
  const double cell_h = image.height() / 3.0;
  const double cell_w = image.width() / 3.0;
  for (int cell = 0; cell < 9; ++cell) {
    // Inset by 2 px so jitter spill from a neighbour is not counted.
    const int y0 = static_cast<int>((cell / 3) * cell_h) + 2, y1 = static_cast<int>((cell / 3 + 1) * cell_h) - 2;
    const int x0 = static_cast<int>((cell % 3) * cell_w) + 2, x1 = static_cast<int>((cell % 3 + 1) * cell_w) - 2;
    for (int y = y0; y < y1 && !occupied[cell]; ++y) {
      for (int x = x0; x < x1 && !occupied[cell]; ++x) {
        for (int c = 0; c < image.channels(); ++c) {
          if (image(c, y, x) != kBackground / 255.0) occupied[cell] = true;
        }
      }
    }
  }
  return occupied;
}

CaptionedImage augment_pair(const CaptionedImage& item, const Vocabulary& vocab, const Augmentation& aug) {
  const Image& src = item.image;
  const int height = src.height();
  const int width = src.width();
  const int dy = static_cast<int>(std::lround(aug.shift_rows * height / 3.0));
  const int dx = static_cast<int>(std::lround(aug.shift_cols * width / 3.0));
  CaptionedImage out = item;
  Image& dst = out.image;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const int sy = y - dy;
      const int mx = x - dx;
      const int sx = aug.mirror ? width - 1 - mx : mx;
      if (sy < 0 || sy >= height || mx < 0 || mx >= width) {
        for (int c = 0; c < src.channels(); ++c) dst(c, y, x) = kBackground / 255.0;
        continue;
      }
      int matched = -1;
      if (src.channels() == 3) {
        for (int k = 0; k < 4 && matched < 0; ++k) {
          bool same = true;
          for (int c = 0; c < 3; ++c) same = same && src(c, sy, sx) == kPalette[k][c] / 255.0;
          if (same) matched = k;
        }
      }
      for (int c = 0; c < src.channels(); ++c) {
        dst(c, y, x) = matched < 0 ? src(c, sy, sx) : kPalette[aug.color_permutation[matched]][c] / 255.0;
      }
    }
  }

  std::array<TokenId, 4> color_ids{};
  for (int k = 0; k < 4; ++k) color_ids[k] = vocab.id(kColorNames[k]);
  std::array<TokenId, 3> row_ids{}, column_ids{};
  for (int k = 0; k < 3; ++k) {
    row_ids[k] = vocab.id(kRowNames[k]);
    column_ids[k] = vocab.id(kColumnNames[k]);
  }
  auto find = [](const auto& ids, TokenId t) {
    return static_cast<int>(std::find(ids.begin(), ids.end(), t) - ids.begin());
  };
  for (auto& caption : out.captions) {
    const TokenSequence before = caption;
    for (std::size_t i = 0; i < caption.size(); ++i) {
      const TokenId t = before[i];
      if (const int k = find(color_ids, t); k < 4) {
        caption[i] = color_ids[aug.color_permutation[k]];
      } else if (const int r = find(row_ids, t); r < 3) {
        caption[i] = row_ids[std::clamp(r + aug.shift_rows, 0, 2)];
      } else if (int k2 = find(column_ids, t); k2 < 3) {
        // A column word right after a row word names a cell; otherwise it is a relation.
        const bool names_cell = i > 0 && find(row_ids, before[i - 1]) < 3;
        if (aug.mirror) k2 = 2 - k2;
        if (names_cell) k2 = std::clamp(k2 + aug.shift_cols, 0, 2);
        caption[i] = column_ids[k2];
      }
    }
  }
  return out;
}

std::vector<std::string> caption_pool(const ShapeScene& scene) {
  std::vector<std::string> pool;
  auto push = [&pool](std::string caption) {
    if (std::find(pool.begin(), pool.end(), caption) == pool.end()) pool.push_back(std::move(caption));
  };
  for (std::size_t t = 0; t < templates().size(); ++t) {
    if (!is_pair_template(t)) {
      for (const auto& a : scene.objects) push(fill_template(t, a, nullptr));
      continue;
    }
    for (const auto& a : scene.objects) {
      for (const auto& b : scene.objects) {
        if (&a == &b || !relation_holds(t, a, b)) continue;
        push(fill_template(t, a, &b));
      }
    }
  }
  return pool;
}

bool parses_under_grammar(std::string_view caption) {
  const auto words = split_words(caption);
  for (const auto& tmpl : templates()) {
    if (tmpl.size() != words.size()) continue;
    bool ok = true;
    for (std::size_t i = 0; i < words.size() && ok; ++i) ok = slot_accepts(tmpl[i], words[i]);
    if (ok) return true;
  }
  return false;
}

Dataset generate_dataset(const DatasetSpec& spec) {
  require(spec.num_images >= 1, ErrorCode::kInvalidArgument, "dataset must contain at least one image");
  require(spec.height >= 16 && spec.width >= 16, ErrorCode::kInvalidArgument,
          "image size " + std::to_string(spec.height) + "x" + std::to_string(spec.width) +
              " is too small; need at least 16x16");
  require(spec.test_fraction >= 0.0 && spec.test_fraction < 1.0, ErrorCode::kInvalidArgument,
          "test_fraction must lie in [0, 1)");

  Dataset dataset;
  dataset.vocab = Vocabulary::grammar();
  dataset.spec = spec;

  Rng scene_rng(derive_seed(spec.seed, "scenes"));
  std::set<std::string> seen;
  for (int k = 0; k < spec.num_images; ++k) {
    ShapeScene scene = draw_scene(scene_rng, spec.height, spec.width);
    // Duplicate scenes would make retrieval ground truth ambiguous.
    for (int attempt = 0; attempt < 1000 && seen.count(scene_key(scene)) != 0; ++attempt) {
      scene = draw_scene(scene_rng, spec.height, spec.width);
    }
    seen.insert(scene_key(scene));

    CaptionedImage item;
    item.pair_id = k;
    item.image = render_scene(scene, derive_seed(derive_seed(spec.seed, "render"), static_cast<std::uint64_t>(k)));

    std::vector<std::string> pool = caption_pool(scene);
    Rng caption_rng(derive_seed(derive_seed(spec.seed, "captions"), static_cast<std::uint64_t>(k)));
    for (std::size_t i = pool.size(); i > 1; --i) std::swap(pool[i - 1], pool[caption_rng.below(i)]);
    // Multi-object scenes always get one caption naming two cells, which
    // keeps most images identifiable from their captions.
    const auto two_cells = std::find_if(pool.begin(), pool.end(), [](const std::string& c) {
      return std::find(kColorNames.begin(), kColorNames.end(), split_words(c).front()) != kColorNames.end();
    });
    if (two_cells != pool.end()) std::rotate(pool.begin(), two_cells, two_cells + 1);
    for (int c = 0; c < kCaptionsPerImage; ++c) item.captions.push_back(dataset.vocab.tokenize(pool[static_cast<std::size_t>(c)]));
    dataset.items.push_back(std::move(item));
  }

  std::vector<int> order(static_cast<std::size_t>(spec.num_images));
  for (int i = 0; i < spec.num_images; ++i) order[static_cast<std::size_t>(i)] = i;
  Rng split_rng(derive_seed(spec.seed, "split"));
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[split_rng.below(i)]);
  int num_test = static_cast<int>(std::lround(spec.num_images * spec.test_fraction));
  num_test = std::clamp(num_test, 0, spec.num_images - 1);
  dataset.test_ids.assign(order.begin(), order.begin() + num_test);
  dataset.train_ids.assign(order.begin() + num_test, order.end());
  std::sort(dataset.test_ids.begin(), dataset.test_ids.end());
  std::sort(dataset.train_ids.begin(), dataset.train_ids.end());
  return dataset;
}

DatasetManifest save_dataset(const Dataset& dataset, const std::filesystem::path& directory) {
  namespace fs = std::filesystem;
  fs::create_directories(directory / "images");

  DatasetManifest manifest;
  manifest.schema_version = kDatasetSchemaVersion;
  manifest.seed = dataset.spec.seed;
  manifest.count = static_cast<int>(dataset.items.size());

  for (const auto& item : dataset.items) {
    const std::string name = image_file_name(item.pair_id);
    const auto bytes = io::encode_png(item.image);
    io::write_bytes(directory / name, bytes);
    manifest.checksums[name] = io::sha256_hex(bytes);
  }

  std::ostringstream captions;
  for (const auto& item : dataset.items) {
    for (std::size_t c = 0; c < item.captions.size(); ++c) {
      captions << item.pair_id << '\t' << c << '\t' << dataset.vocab.detokenize(item.captions[c]) << '\n';
    }
  }
  io::write_text(directory / "captions.tsv", captions.str());
  manifest.checksums["captions.tsv"] = io::sha256_hex(captions.str());

  std::ostringstream vocab;
  for (int i = 0; i < dataset.vocab.size(); ++i) {
    vocab << i << '\t' << dataset.vocab.token(i) << '\t' << to_string(dataset.vocab.word_class(i)) << '\n';
  }
  io::write_text(directory / "vocab.tsv", vocab.str());
  manifest.checksums["vocab.tsv"] = io::sha256_hex(vocab.str());

  json doc;
  doc["schema_version"] = manifest.schema_version;
  doc["seed"] = manifest.seed;
  doc["count"] = manifest.count;
  doc["height"] = dataset.spec.height;
  doc["width"] = dataset.spec.width;
  doc["test_fraction"] = dataset.spec.test_fraction;
  doc["vocab_hash"] = dataset.vocab.hash();
  doc["train_ids"] = dataset.train_ids;
  doc["test_ids"] = dataset.test_ids;
  doc["checksums"] = manifest.checksums;
  io::write_text(directory / "manifest.json", doc.dump(2) + "\n");
  return manifest;
}

Dataset load_dataset(const std::filesystem::path& directory) {
  const auto manifest_path = directory / "manifest.json";
  require(std::filesystem::exists(manifest_path), ErrorCode::kMissingManifest,
          "missing dataset manifest " + manifest_path.string());
  json doc;
  try {
    doc = json::parse(io::read_text(manifest_path));
  } catch (const json::exception& e) {
    fail(ErrorCode::kMissingManifest, "unreadable manifest " + manifest_path.string() + ": " + e.what());
  }
  const int version = doc.value("schema_version", -1);
  require(version == kDatasetSchemaVersion, ErrorCode::kVersionMismatch,
          "dataset schema_version " + std::to_string(version) + " is not supported (reader supports " +
              std::to_string(kDatasetSchemaVersion) + ")");

  const auto checksums = doc.at("checksums").get<std::map<std::string, std::string>>();
  std::map<std::string, std::vector<std::uint8_t>> files;
  for (const auto& [name, expected] : checksums) {
    const auto path = directory / name;
    require(std::filesystem::exists(path), ErrorCode::kChecksumMismatch, "checksum mismatch: missing file " + name);
    auto bytes = io::read_bytes(path);
    const std::string actual = io::sha256_hex(bytes);
    require(actual == expected, ErrorCode::kChecksumMismatch,
            "checksum mismatch in " + name + ": expected " + expected + ", got " + actual);
    files.emplace(name, std::move(bytes));
  }
  auto text_of = [&files](const std::string& name) {
    const auto it = files.find(name);
    require(it != files.end(), ErrorCode::kChecksumMismatch, "manifest has no checksum for " + name);
    return std::string(it->second.begin(), it->second.end());
  };

  Dataset dataset;
  dataset.spec.seed = doc.at("seed").get<std::uint64_t>();
  dataset.spec.num_images = doc.at("count").get<int>();
  dataset.spec.height = doc.at("height").get<int>();
  dataset.spec.width = doc.at("width").get<int>();
  dataset.spec.test_fraction = doc.at("test_fraction").get<double>();
  dataset.train_ids = doc.at("train_ids").get<std::vector<int>>();
  dataset.test_ids = doc.at("test_ids").get<std::vector<int>>();

  std::vector<std::string> tokens;
  std::vector<WordClass> classes;
  std::istringstream vocab(text_of("vocab.tsv"));
  for (std::string line; std::getline(vocab, line);) {
    const auto first = line.find('\t');
    const auto second = line.find('\t', first + 1);
    require(first != std::string::npos && second != std::string::npos, ErrorCode::kIo, "malformed vocab.tsv line");
    tokens.push_back(line.substr(first + 1, second - first - 1));
    classes.push_back(parse_class(line.substr(second + 1)));
  }
  dataset.vocab = Vocabulary(std::move(tokens), std::move(classes));

  dataset.items.resize(static_cast<std::size_t>(dataset.spec.num_images));
  for (int k = 0; k < dataset.spec.num_images; ++k) {
    auto& item = dataset.items[static_cast<std::size_t>(k)];
    item.pair_id = k;
    const std::string name = image_file_name(k);
    const auto it = files.find(name);
    require(it != files.end(), ErrorCode::kChecksumMismatch, "manifest has no checksum for " + name);
    item.image = io::decode_png(it->second);
  }

  std::istringstream captions(text_of("captions.tsv"));
  for (std::string line; std::getline(captions, line);) {
    const auto first = line.find('\t');
    const auto second = line.find('\t', first + 1);
    require(first != std::string::npos && second != std::string::npos, ErrorCode::kIo, "malformed captions.tsv line");
    const int pair_id = std::stoi(line.substr(0, first));
    require(pair_id >= 0 && pair_id < dataset.spec.num_images, ErrorCode::kIo, "caption pair_id out of range");
    dataset.items[static_cast<std::size_t>(pair_id)].captions.push_back(dataset.vocab.tokenize(line.substr(second + 1)));
  }
  return dataset;
}

}  // namespace lssa
