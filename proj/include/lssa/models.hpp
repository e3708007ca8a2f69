#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lssa/data.hpp"
#include "lssa/image.hpp"
#include "lssa/nn.hpp"

namespace lssa {

using Embedding = Eigen::VectorXd;
/// d x K matrix, one embedding per column.
using EmbeddingSet = Eigen::MatrixXd;

enum class Architecture { kConv, kPatch };

std::string_view to_string(Architecture arch);
Architecture parse_architecture(std::string_view name);

struct ModelConfig {
  Architecture arch = Architecture::kConv;
  std::uint64_t seed = 0;
  int embed_dim = 64;
  int channels = 3;
  int height = 32;
  int width = 32;
  int vocab_size = 0;
  int max_tokens = 12;
};

/// Aligned dual encoder: image and text towers emitting L2-normalized
/// embeddings of the same dimension. Inference is deterministic and const,
/// so one instance may be shared by concurrent readers.
class EncoderPair {
 public:
  static EncoderPair initialize(const ModelConfig& config, const Vocabulary& vocab);
  static EncoderPair initialize(const ModelConfig& config, int vocab_size, std::string vocab_hash);

  const ModelConfig& config() const { return config_; }
  Architecture architecture() const { return config_.arch; }
  int embed_dim() const { return config_.embed_dim; }
  const std::string& vocab_hash() const { return vocab_hash_; }
  std::string tag() const;

  Embedding encode_image(const Image& v) const;
  Embedding encode_text(const TokenSequence& t) const;
  EmbeddingSet encode_texts(const std::vector<TokenSequence>& captions) const;
  EmbeddingSet encode_images(const std::vector<Image>& images) const;

  /// dJ/dv for J = mean_k (1 - cos(f_I(v), texts[:, k])). The loss value is
  /// written to `loss` when non-null.
  Image input_gradient(const Image& v, const EmbeddingSet& texts, double* loss = nullptr) const;

  /// Rows are token ids; used to rank substitution candidates.
  const nn::Matrix& token_embeddings() const { return token_table_; }

  // Training and serialization access.
  nn::Sequential& image_net() { return image_net_; }
  const nn::Sequential& image_net() const { return image_net_; }
  nn::Sequential& text_head() { return text_head_; }
  const nn::Sequential& text_head() const { return text_head_; }
  nn::Matrix& token_table() { return token_table_; }
  nn::Matrix& position_table() { return position_table_; }
  const nn::Matrix& position_table() const { return position_table_; }

  std::vector<nn::Matrix*> parameters();
  std::vector<const nn::Matrix*> parameters() const;

  struct TextTape {
    TokenSequence tokens;
    nn::Matrix pooled_inputs;  // L x e, tanh outputs, concatenated into fixed slots
    nn::Tape head;
  };

  nn::FeatureMap image_features(const Image& v) const;
  void check_image(const Image& v) const;
  void check_tokens(const TokenSequence& t) const;
  /// Unnormalized image tower output; fills the tape.
  Embedding image_forward(const Image& v, nn::Tape& tape) const;
  Embedding text_forward(const TokenSequence& t, TextTape& tape) const;
  /// Back-propagates d(loss)/d(unnormalized output). Parameter gradients are
  /// accumulated into `grads` (layout of parameters()) when non-null.
  Image image_backward(const nn::Tape& tape, const Embedding& grad_out, std::vector<nn::Matrix>* grads) const;
  void text_backward(const TextTape& tape, const Embedding& grad_out, std::vector<nn::Matrix>* grads) const;

 private:
  ModelConfig config_;
  std::string vocab_hash_;
  nn::Sequential image_net_;
  nn::Matrix token_table_;
  nn::Matrix position_table_;
  nn::Sequential text_head_;
};

/// L2 normalization; rejects a zero vector.
Embedding normalize(const Embedding& z);
/// Gradient through normalize: maps dL/de to dL/dz at z.
Embedding normalize_backward(const Embedding& z, const Embedding& grad_e);

enum class LossKind { kCosineDissimilarity };
enum class LossReduction { kMean };

struct LossSpec {
  LossKind kind = LossKind::kCosineDissimilarity;
  LossReduction reduction = LossReduction::kMean;
};

/// mean_k (1 - cos(e_img, e_txt[:, k])), in [0, 2].
double loss(const LossSpec& spec, const Embedding& e_img, const EmbeddingSet& e_txt);
/// dJ/d(e_img) of the loss above.
Embedding loss_gradient(const LossSpec& spec, const Embedding& e_img, const EmbeddingSet& e_txt);

Image input_gradient(const EncoderPair& pair, const LossSpec& spec, const Image& v, const EmbeddingSet& texts);

struct TrainConfig {
  Architecture arch = Architecture::kConv;
  std::uint64_t seed = 0;
  int epochs = 300;
  int batch = 32;
  double learning_rate = 2e-3;
  int embed_dim = 64;
  double temperature = 0.1;
  /// Random mirror and palette permutation of each training pair.
  bool augment = true;
};

struct TrainResult {
  EncoderPair model;
  std::vector<double> epoch_losses;
};

/// Symmetric in-batch InfoNCE over (image, one sampled caption) pairs of
/// the training split. Deterministic given config.seed.
TrainResult train_contrastive(const Dataset& dataset, const TrainConfig& config);

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  EncoderPair model;
  TrainConfig train;
  int probe_pair_id = -1;
  std::vector<double> probe_embedding;  // encode_image of the probe at save time
};

/// Header line "LSSA-CKPT <version>", one JSON line, then raw float64 weights.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);
/// Also verifies the vocabulary hash against the dataset's.
Checkpoint load_checkpoint(const std::filesystem::path& path, const Vocabulary& expected_vocab);

}  // namespace lssa
