#include "seqtag/tagger.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include "seqtag/error.hpp"

namespace seqtag {

using nlohmann::json;

struct TaggerModel::Cache {
  std::vector<std::size_t> word_ids;
  Matrix rep_mask;  // T x token_dim inverted-dropout mask, empty when unused
  std::vector<Matrix> char_rows;
  std::vector<CharCnn::Cache> cnn;
  std::vector<CharBiLstm::Cache> char_lstm;
  Matrix reps;  // input of the first BiLSTM
  std::vector<BiLstm::Cache> layers;
  Matrix scores;
};

std::string to_string(Supervision s) { return s == Supervision::same_level ? "same_level" : "different_level"; }

Supervision parse_supervision(std::string_view name) {
  if (name == "same_level") return Supervision::same_level;
  if (name == "different_level") return Supervision::different_level;
  throw ConfigError("unknown supervision '" + std::string(name) + "'; allowed: {same_level, different_level}");
}

TaggerModel::TaggerModel(NetworkConfig config, Vocabulary word_vocab, Vocabulary char_vocab,
                         const EmbeddingTable& embeddings, std::vector<HeadSpec> heads)
    : config_(std::move(config)), word_vocab_(std::move(word_vocab)), char_vocab_(std::move(char_vocab)) {
  validate(config_);
  if (heads.empty()) throw Error("model needs at least one output head");
  if (embeddings.rows() != word_vocab_.size()) {
    throw Error("embedding table has " + std::to_string(embeddings.rows()) + " rows for a vocabulary of " +
                std::to_string(word_vocab_.size()));
  }
  Rng rng = Rng::derive(config_.seed, 1);

  word_embedding_ = Parameter("word_embedding", embeddings.rows(), embeddings.dim());
  word_embedding_.value = embeddings.matrix;
  if (config_.freeze_embeddings) word_embedding_.frozen_rows = embeddings.pretrained;

  if (config_.char_rep != CharRepresentation::none) {
    char_embedding_ = Parameter("char_embedding", std::max<std::size_t>(char_vocab_.size(), 1), kCharEmbeddingDim);
    for (auto& v : char_embedding_.value.values()) v = rng.uniform(-kEmbeddingInitRange, kEmbeddingInitRange);
  }
  if (config_.char_rep == CharRepresentation::cnn) {
    char_cnn_ = CharCnn("char_cnn");
    char_cnn_.initialize(rng);
  } else if (config_.char_rep == CharRepresentation::lstm) {
    char_lstm_ = CharBiLstm("char_lstm");
    char_lstm_.initialize(rng);
  }

  std::size_t in = token_dim();
  for (std::size_t l = 0; l < config_.units.size(); ++l) {
    layers_.emplace_back("bilstm" + std::to_string(l + 1), in, config_.units[l]);
    layers_.back().initialize(rng);
    in = layers_.back().output_dim();
  }

  for (auto& spec : heads) {
    if (spec.level < 1 || spec.level > layers_.size()) {
      throw Error("head '" + spec.task + "' reads layer " + std::to_string(spec.level) + " of " +
                  std::to_string(layers_.size()));
    }
    if (spec.labels.size() == 0) throw Error("head '" + spec.task + "' has an empty label vocabulary");
    OutputHead head;
    const std::string prefix = "head." + spec.task;
    head.dense = Dense(prefix + ".dense", layers_[spec.level - 1].output_dim(), spec.labels.size());
    head.dense.initialize(rng);
    if (config_.classifier == Classifier::crf) head.crf = Crf(prefix + ".crf", spec.labels.size());
    head.spec = std::move(spec);
    heads_.push_back(std::move(head));
  }
}

std::size_t TaggerModel::head_index(const std::string& task) const {
  for (std::size_t h = 0; h < heads_.size(); ++h) {
    if (heads_[h].spec.task == task) return h;
  }
  throw Error("model has no head for task '" + task + "'");
}

std::size_t TaggerModel::char_dim() const {
  switch (config_.char_rep) {
    case CharRepresentation::none: return 0;
    case CharRepresentation::cnn: return kCharCnnFilters;
    case CharRepresentation::lstm: return 2 * kCharLstmUnits;
  }
  return 0;
}

std::vector<Parameter*> TaggerModel::parameters() {
  std::vector<Parameter*> p{&word_embedding_};
  if (config_.char_rep != CharRepresentation::none) p.push_back(&char_embedding_);
  if (config_.char_rep == CharRepresentation::cnn) {
    for (auto* q : char_cnn_.parameters()) p.push_back(q);
  } else if (config_.char_rep == CharRepresentation::lstm) {
    for (auto* q : char_lstm_.parameters()) p.push_back(q);
  }
  for (auto& layer : layers_) {
    for (auto* q : layer.parameters()) p.push_back(q);
  }
  for (auto& head : heads_) {
    for (auto* q : head.dense.parameters()) p.push_back(q);
    if (head.crf) p.push_back(&head.crf->transitions);
  }
  return p;
}

std::vector<Parameter*> TaggerModel::parameters_for_head(std::size_t h) {
  std::vector<Parameter*> p{&word_embedding_};
  if (config_.char_rep != CharRepresentation::none) p.push_back(&char_embedding_);
  if (config_.char_rep == CharRepresentation::cnn) {
    for (auto* q : char_cnn_.parameters()) p.push_back(q);
  } else if (config_.char_rep == CharRepresentation::lstm) {
    for (auto* q : char_lstm_.parameters()) p.push_back(q);
  }
  auto& head = heads_.at(h);
  for (std::size_t l = 0; l < head.spec.level; ++l) {
    for (auto* q : layers_[l].parameters()) p.push_back(q);
  }
  for (auto* q : head.dense.parameters()) p.push_back(q);
  if (head.crf) p.push_back(&head.crf->transitions);
  return p;
}

std::size_t TaggerModel::parameter_count() {
  std::size_t n = 0;
  for (auto* p : parameters()) n += p->value.size();
  return n;
}

void TaggerModel::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

TaggerModel::Cache TaggerModel::forward(const Sentence& sentence, std::size_t h, Rng* dropout_rng) const {
  const std::size_t T = sentence.tokens.size();
  if (T == 0) throw Error("cannot tag an empty sentence");
  const auto& head = heads_.at(h);
  Cache c;
  c.word_ids.reserve(T);
  for (const auto& tok : sentence.tokens) c.word_ids.push_back(tok.normalized_id);
  const Matrix words = lookup(word_embedding_.value, c.word_ids);

  const std::size_t wd = word_dim(), dim = token_dim();
  c.reps = Matrix(T, dim);
  for (std::size_t t = 0; t < T; ++t) {
    auto rep = c.reps.row(t);
    const auto w = words.row(t);
    std::copy(w.begin(), w.end(), rep.begin());
    rep[wd + static_cast<std::size_t>(sentence.tokens[t].cap)] = 1.0;
  }
  if (config_.char_rep != CharRepresentation::none) {
    for (std::size_t t = 0; t < T; ++t) {
      std::vector<std::size_t> ids = sentence.tokens[t].char_ids;
      if (ids.empty()) ids.push_back(0);
      c.char_rows.push_back(lookup(char_embedding_.value, ids));
      std::vector<double> encoded;
      if (config_.char_rep == CharRepresentation::cnn) {
        c.cnn.push_back(char_cnn_.forward(c.char_rows.back()));
        encoded = c.cnn.back().output;
      } else {
        c.char_lstm.push_back(char_lstm_.forward(c.char_rows.back()));
        encoded = c.char_lstm.back().output;
      }
      std::copy(encoded.begin(), encoded.end(), c.reps.row(t).begin() + static_cast<std::ptrdiff_t>(wd + kCapCategories));
    }
  }

  // Dropout on the concatenated token representation.
  const auto& d = config_.dropout;
  if (dropout_rng && d.kind != DropoutKind::none && d.p_output > 0.0) {
    c.rep_mask = Matrix(T, dim);
    std::vector<double> shared;
    if (d.kind == DropoutKind::variational) shared = dropout_mask(dim, d.p_output, *dropout_rng);
    for (std::size_t t = 0; t < T; ++t) {
      const auto m = d.kind == DropoutKind::variational ? shared : dropout_mask(dim, d.p_output, *dropout_rng);
      std::copy(m.begin(), m.end(), c.rep_mask.row(t).begin());
    }
    auto r = c.reps.values();
    const auto m = c.rep_mask.values();
    for (std::size_t k = 0; k < r.size(); ++k) r[k] *= m[k];
  }

  const Matrix* input = &c.reps;
  for (std::size_t l = 0; l < head.spec.level; ++l) {
    c.layers.push_back(layers_[l].forward(*input, d, dropout_rng));
    input = &c.layers.back().outputs;
  }
  c.scores = head.dense.forward(*input);
  return c;
}

void TaggerModel::backward(const Sentence& sentence, std::size_t h, Cache& c, const Matrix& d_scores) {
  auto& head = heads_.at(h);
  const Matrix& top = c.layers.back().outputs;
  Matrix d = head.dense.backward(top, d_scores);
  for (std::size_t l = head.spec.level; l-- > 0;) d = layers_[l].backward(c.layers[l], d);

  if (!c.rep_mask.empty()) {
    auto dv = d.values();
    const auto m = c.rep_mask.values();
    for (std::size_t k = 0; k < dv.size(); ++k) dv[k] *= m[k];
  }
  const std::size_t T = sentence.tokens.size(), wd = word_dim();
  Matrix d_words(T, wd);
  for (std::size_t t = 0; t < T; ++t) std::copy_n(d.row(t).begin(), wd, d_words.row(t).begin());
  lookup_backward(word_embedding_, c.word_ids, d_words);

  if (config_.char_rep == CharRepresentation::none) return;
  const std::size_t offset = wd + kCapCategories;
  for (std::size_t t = 0; t < T; ++t) {
    const auto d_char_vec = d.row(t).subspan(offset, char_dim());
    const Matrix d_rows = config_.char_rep == CharRepresentation::cnn ? char_cnn_.backward(c.cnn[t], d_char_vec)
                                                                      : char_lstm_.backward(c.char_lstm[t], d_char_vec);
    std::vector<std::size_t> ids = sentence.tokens[t].char_ids;
    if (ids.empty()) ids.push_back(0);
    lookup_backward(char_embedding_, ids, d_rows);
  }
}

double TaggerModel::head_loss(std::size_t h, const Matrix& scores, const std::vector<std::size_t>& gold,
                              Matrix* d_scores, bool accumulate_crf) {
  auto& head = heads_.at(h);
  if (head.crf) {
    if (!accumulate_crf) {
      // Forward-only: no gradient bookkeeping.
      return head.crf->log_partition(scores) - head.crf->path_score(scores, gold);
    }
    auto r = head.crf->negative_log_likelihood(scores, gold, d_scores ? 1.0 : 0.0);
    if (d_scores) *d_scores = std::move(r.d_emissions);
    return r.loss;
  }
  auto r = softmax_cross_entropy(scores, gold);
  if (d_scores) *d_scores = std::move(r.d_logits);
  return r.loss;
}

namespace {

const std::vector<std::size_t>& gold_labels(const Sentence& s, const std::string& task) {
  auto it = s.labels.find(task);
  if (it == s.labels.end()) throw Error("sentence has no labels for task '" + task + "'");
  if (it->second.size() != s.tokens.size()) throw Error("label count differs from token count");
  return it->second;
}

}  // namespace

double TaggerModel::accumulate_gradients(const Sentence& sentence, std::size_t h, double scale, Rng* dropout_rng) {
  const auto& gold = gold_labels(sentence, heads_.at(h).spec.task);
  try {
    Cache c = forward(sentence, h, dropout_rng);
    Matrix d_scores;
    // The CRF adds transition gradients directly; pre-scale them via a temporary.
    double loss;
    if (heads_[h].crf) {
      auto r = heads_[h].crf->negative_log_likelihood(c.scores, gold, scale);
      loss = r.loss;
      d_scores = std::move(r.d_emissions);
    } else {
      loss = head_loss(h, c.scores, gold, &d_scores, true);
    }
    if (!std::isfinite(loss)) throw NumericError("non-finite loss");
    for (auto& v : d_scores.values()) v *= scale;
    backward(sentence, h, c, d_scores);
    return loss;
  } catch (const NumericError& e) {
    throw NumericError(std::string(e.what()) + " [config " + fingerprint(config_) + "]");
  }
}

double TaggerModel::loss(const Sentence& sentence, std::size_t h, Rng* dropout_rng) const {
  const auto& gold = gold_labels(sentence, heads_.at(h).spec.task);
  Cache c = forward(sentence, h, dropout_rng);
  if (heads_[h].crf) return heads_[h].crf->log_partition(c.scores) - heads_[h].crf->path_score(c.scores, gold);
  return softmax_cross_entropy(c.scores, gold).loss;
}

Matrix TaggerModel::scores(const Sentence& sentence, std::size_t h) const {
  return forward(sentence, h, nullptr).scores;
}

Prediction TaggerModel::predict(const Sentence& sentence, std::size_t h) const {
  const auto& head = heads_.at(h);
  const Matrix s = scores(sentence, h);
  Prediction p;
  p.raw_ids = head.crf ? head.crf->viterbi(s).path : softmax_cross_entropy(s, {}).predictions;
  TagSequence tags;
  tags.reserve(p.raw_ids.size());
  for (auto id : p.raw_ids) tags.push_back(head.spec.labels.at(id));
  auto repaired = repair_invalid(tags, head.spec.scheme, config_.repair);
  p.tags = std::move(repaired.tags);
  p.repairs = repaired.repairs;
  return p;
}

EmbeddingTable prepare_embeddings(const NetworkConfig& config, const Vocabulary& word_vocab,
                                  const EmbeddingTable* loaded) {
  EmbeddingTable table;
  if (loaded && loaded->rows() > 0) {
    if (loaded->rows() > word_vocab.size()) throw Error("embedding table larger than the corpus vocabulary");
    table = *loaded;
  }
  Rng rng = Rng::derive(config.seed, 2);
  extend_embeddings(table, word_vocab.size(), config.word_dim, rng);
  return table;
}

TaggerModel build_model(const NetworkConfig& config, const TaggedCorpus& corpus, const EmbeddingTable& embeddings) {
  HeadSpec head{corpus.task_name, corpus.labels(), corpus.scheme, config.layers()};
  return TaggerModel(config, corpus.word_vocab, corpus.char_vocab,
                     prepare_embeddings(config, corpus.word_vocab, &embeddings), {std::move(head)});
}

TaggerModel build_multitask_model(const NetworkConfig& config, const TaggedCorpus& main, const TaggedCorpus& aux,
                                  const EmbeddingTable& embeddings, Supervision supervision) {
  if (!(main.word_vocab == aux.word_vocab) || !(main.char_vocab == aux.char_vocab)) {
    throw Error("multi-task corpora must share word and character vocabularies");
  }
  if (main.task_name == aux.task_name) throw Error("main and auxiliary task need distinct names");
  if (supervision == Supervision::different_level && config.layers() < 2) {
    throw ConfigError("different-level supervision needs at least 2 BiLSTM layers");
  }
  const std::size_t aux_level = supervision == Supervision::same_level ? config.layers() : 1;
  std::vector<HeadSpec> heads{{main.task_name, main.labels(), main.scheme, config.layers()},
                              {aux.task_name, aux.labels(), aux.scheme, aux_level}};
  return TaggerModel(config, main.word_vocab, main.char_vocab,
                     prepare_embeddings(config, main.word_vocab, &embeddings), std::move(heads));
}

SentenceLoss sentence_loss_and_gradients(TaggerModel& model, const Sentence& sentence, std::size_t head) {
  return {model.accumulate_gradients(sentence, head, 1.0, nullptr)};
}

Evaluation evaluate(const TaggerModel& model, const std::vector<Sentence>& sentences, std::size_t head) {
  const auto& spec = model.head(head).spec;
  Evaluation ev;
  std::vector<TagSequence> gold;
  for (const auto& s : sentences) {
    auto p = model.predict(s, head);
    ev.repaired_tags += p.repairs;
    ev.sentences_repaired += p.repairs > 0;
    ev.predictions.push_back(std::move(p.tags));
    TagSequence g;
    for (auto id : gold_labels(s, spec.task)) g.push_back(spec.labels.at(id));
    gold.push_back(std::move(g));
  }
  ev.sentences = sentences.size();
  ev.accuracy = token_accuracy(gold, ev.predictions);
  if (spec.scheme == TagScheme::NONE) {
    ev.score = ev.accuracy;
  } else {
    ev.prf = entity_f1(gold, ev.predictions, spec.scheme);
    ev.score = ev.prf.f1;
  }
  return ev;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[4] = {'S', 'Q', 'T', 'L'};

template <typename T>
void write_le(std::ostream& out, T value) {
  static_assert(std::is_integral_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.put(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xFF));
}

template <typename T>
T read_le(std::istream& in) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    const int b = in.get();
    if (b == EOF) throw Error("checkpoint truncated");
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b)) << (8 * i);
  }
  return static_cast<T>(v);
}

void write_string(std::ostream& out, const std::string& s) {
  write_le<std::uint64_t>(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in) {
  const auto n = read_le<std::uint64_t>(in);
  if (n > (1ULL << 34)) throw Error("checkpoint string length is implausible");
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw Error("checkpoint truncated");
  return s;
}

void write_double(std::ostream& out, double v) { write_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v)); }
double read_double(std::istream& in) { return std::bit_cast<double>(read_le<std::uint64_t>(in)); }

}  // namespace

void save_checkpoint(TaggerModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(kMagic, 4);
  write_le<std::uint32_t>(out, kCheckpointVersion);
  write_string(out, canonical_json(model.config()));

  json vocab;
  vocab["words"] = model.word_vocab().items();
  vocab["chars"] = model.char_vocab().items();
  json heads = json::array();
  for (std::size_t h = 0; h < model.num_heads(); ++h) {
    const auto& spec = model.head(h).spec;
    heads.push_back({{"task", spec.task},
                     {"scheme", to_string(spec.scheme)},
                     {"level", spec.level},
                     {"labels", spec.labels.items()}});
  }
  vocab["heads"] = heads;
  write_string(out, vocab.dump());

  const auto params = model.parameters();
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto* p : params) {
    write_string(out, p->name);
    write_le<std::uint64_t>(out, p->value.rows());
    write_le<std::uint64_t>(out, p->value.cols());
  }
  for (const auto* p : params) {
    for (double v : p->value.values()) write_double(out, v);
  }
  if (!out) throw Error("error writing " + path.string());
}

TaggerModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw Error(path.string() + ": not a checkpoint file");
  const auto version = read_le<std::uint32_t>(in);
  if (version != kCheckpointVersion) throw Error(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  const NetworkConfig config = config_from_string(read_string(in));
  const json vocab = json::parse(read_string(in));

  auto make_vocab = [](const json& items) {
    Vocabulary v;
    for (const auto& s : items) v.add(s.get<std::string>());
    v.freeze();
    return v;
  };
  Vocabulary words = make_vocab(vocab.at("words"));
  Vocabulary chars = make_vocab(vocab.at("chars"));
  std::vector<HeadSpec> heads;
  for (const auto& h : vocab.at("heads")) {
    heads.push_back({h.at("task").get<std::string>(), make_vocab(h.at("labels")),
                     parse_tag_scheme(h.at("scheme").get<std::string>()), h.at("level").get<std::size_t>()});
  }
  EmbeddingTable placeholder;
  const std::size_t dim = config.embedding_path.empty() ? config.word_dim : 1;
  placeholder.matrix = Matrix(words.size(), dim);
  placeholder.pretrained.assign(words.size(), false);

  const auto count = read_le<std::uint32_t>(in);
  struct Entry {
    std::string name;
    std::uint64_t rows, cols;
  };
  std::vector<Entry> manifest;
  for (std::uint32_t i = 0; i < count; ++i) {
    Entry e;
    e.name = read_string(in);
    e.rows = read_le<std::uint64_t>(in);
    e.cols = read_le<std::uint64_t>(in);
    manifest.push_back(e);
  }
  // The word embedding width comes from the manifest (pre-trained files fix it).
  for (const auto& e : manifest) {
    if (e.name == "word_embedding") placeholder.matrix = Matrix(e.rows, e.cols);
  }
  TaggerModel model(config, std::move(words), std::move(chars), placeholder, std::move(heads));
  auto params = model.parameters();
  if (params.size() != manifest.size()) throw Error(path.string() + ": parameter manifest does not match the model");
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    if (p.name != manifest[i].name || p.value.rows() != manifest[i].rows || p.value.cols() != manifest[i].cols) {
      throw Error(path.string() + ": manifest entry '" + manifest[i].name + "' does not match the model");
    }
  }
  for (auto* p : params) {
    for (auto& v : p->value.values()) v = read_double(in);
  }
  return model;
}

}  // namespace seqtag
