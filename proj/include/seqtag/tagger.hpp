#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "seqtag/config.hpp"
#include "seqtag/corpus.hpp"
#include "seqtag/embeddings.hpp"
#include "seqtag/nncore.hpp"

namespace seqtag {

// One task output layer, reading the BiLSTM layer `level` (1-based).
struct HeadSpec {
  std::string task;
  Vocabulary labels;
  TagScheme scheme = TagScheme::BIO;
  std::size_t level = 1;
};

struct OutputHead {
  HeadSpec spec;
  Dense dense;
  std::optional<Crf> crf;
};

struct Prediction {
  std::vector<std::size_t> raw_ids;  // classifier output before repair
  TagSequence tags;                  // repaired, scheme-valid
  std::size_t repairs = 0;
};

// Word embedding, one-hot casing, optional character encoder, stacked
// BiLSTMs, and one output head per task.
class TaggerModel {
 public:
  TaggerModel(NetworkConfig config, Vocabulary word_vocab, Vocabulary char_vocab, const EmbeddingTable& embeddings,
              std::vector<HeadSpec> heads);

  const NetworkConfig& config() const { return config_; }
  const Vocabulary& word_vocab() const { return word_vocab_; }
  const Vocabulary& char_vocab() const { return char_vocab_; }
  std::size_t num_heads() const { return heads_.size(); }
  const OutputHead& head(std::size_t h) const { return heads_.at(h); }
  std::size_t head_index(const std::string& task) const;

  std::size_t word_dim() const { return word_embedding_.value.cols(); }
  std::size_t char_dim() const;
  std::size_t token_dim() const { return word_dim() + kCapCategories + char_dim(); }

  // All parameters in a fixed order.
  std::vector<Parameter*> parameters();
  // Shared parameters up to the head's supervision level, then the head.
  std::vector<Parameter*> parameters_for_head(std::size_t h);
  std::size_t parameter_count();
  void zero_grad();

  // Sentence loss; adds scale * d loss into the gradient buffers.
  // `dropout_rng` == nullptr disables dropout.
  double accumulate_gradients(const Sentence& sentence, std::size_t h, double scale, Rng* dropout_rng);
  double loss(const Sentence& sentence, std::size_t h, Rng* dropout_rng) const;
  Prediction predict(const Sentence& sentence, std::size_t h = 0) const;

  // Emissions (crf) or logits (softmax) of the head for a sentence.
  Matrix scores(const Sentence& sentence, std::size_t h) const;

  Parameter& word_embedding() { return word_embedding_; }
  Parameter& char_embedding() { return char_embedding_; }
  std::vector<BiLstm>& layers() { return layers_; }
  OutputHead& mutable_head(std::size_t h) { return heads_.at(h); }

 private:
  struct Cache;

  Cache forward(const Sentence& sentence, std::size_t h, Rng* dropout_rng) const;
  void backward(const Sentence& sentence, std::size_t h, Cache& cache, const Matrix& d_scores);
  double head_loss(std::size_t h, const Matrix& scores, const std::vector<std::size_t>& gold,
                   Matrix* d_scores, bool accumulate_crf);

  NetworkConfig config_;
  Vocabulary word_vocab_;
  Vocabulary char_vocab_;
  Parameter word_embedding_;
  Parameter char_embedding_;
  CharCnn char_cnn_;
  CharBiLstm char_lstm_;
  std::vector<BiLstm> layers_;
  std::vector<OutputHead> heads_;
};

// Single-task model for the corpus' task, head at the top layer.
TaggerModel build_model(const NetworkConfig& config, const TaggedCorpus& corpus, const EmbeddingTable& embeddings);

enum class Supervision { same_level, different_level };
std::string to_string(Supervision s);
Supervision parse_supervision(std::string_view name);

// Shared encoder with a main head at the top layer and an auxiliary head at the
// top (same_level) or at layer 1 (different_level). Corpora must share vocabularies.
TaggerModel build_multitask_model(const NetworkConfig& config, const TaggedCorpus& main, const TaggedCorpus& aux,
                                  const EmbeddingTable& embeddings, Supervision supervision);

// Embedding table sized to the corpus vocabulary. Rows beyond `loaded` (or all
// rows when no file was loaded) are random in [-0.25, 0.25].
EmbeddingTable prepare_embeddings(const NetworkConfig& config, const Vocabulary& word_vocab,
                                  const EmbeddingTable* loaded);

struct SentenceLoss {
  double loss = 0.0;
};

// Loss of one sentence with gradients accumulated into the model buffers.
SentenceLoss sentence_loss_and_gradients(TaggerModel& model, const Sentence& sentence, std::size_t head = 0);

struct Evaluation {
  double score = 0.0;  // entity F1, or accuracy for scheme NONE
  double accuracy = 0.0;
  PrfScore prf;
  std::size_t repaired_tags = 0;
  std::size_t sentences_repaired = 0;
  std::size_t sentences = 0;
  std::vector<TagSequence> predictions;
};

Evaluation evaluate(const TaggerModel& model, const std::vector<Sentence>& sentences, std::size_t head = 0);

// Binary checkpoint: "SQTL", format version, config JSON, vocabulary JSON,
// manifest of (name, rows, cols), then little-endian float64 row-major blocks.
inline constexpr std::uint32_t kCheckpointVersion = 1;
void save_checkpoint(TaggerModel& model, const std::filesystem::path& path);
TaggerModel load_checkpoint(const std::filesystem::path& path);

}  // namespace seqtag
