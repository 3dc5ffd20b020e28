#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "seqtag/rng.hpp"
#include "seqtag/tagscheme.hpp"

namespace seqtag {

enum class CapCategory {
  numeric,
  mainly_numeric,
  all_lower,
  all_upper,
  initial_upper,
  contains_digit,
  other
};
inline constexpr std::size_t kCapCategories = 7;

std::string to_string(CapCategory c);
CapCategory capitalization_feature(std::string_view surface);

// Bidirectional text <-> dense index map. Once frozen, lookups never insert.
class Vocabulary {
 public:
  std::size_t size() const { return items_.size(); }
  bool frozen() const { return frozen_; }
  void freeze() { frozen_ = true; }

  // Index of `item`, inserting it when not frozen. Throws if frozen and absent.
  std::size_t add(const std::string& item);
  std::optional<std::size_t> find(std::string_view item) const;
  bool contains(std::string_view item) const { return find(item).has_value(); }
  const std::string& at(std::size_t index) const { return items_.at(index); }
  const std::vector<std::string>& items() const { return items_; }

  // One "token<TAB>index" line per entry.
  void dump(std::ostream& out) const;

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.items_ == b.items_; }

 private:
  std::vector<std::string> items_;
  std::unordered_map<std::string, std::size_t> index_;
  bool frozen_ = false;
};

inline constexpr std::string_view kUnknownToken = "<UNKNOWN>";
inline constexpr std::string_view kNumberToken = "<NUMBER>";
inline constexpr std::string_view kPaddingToken = "<PADDING>";
inline constexpr std::string_view kCharUnknown = "<CHAR_UNKNOWN>";

// Adds UNKNOWN, NUMBER and PADDING if missing.
void add_special_tokens(Vocabulary& vocab);

// One sentence as read from a column file, labels untouched.
struct RawSentence {
  std::vector<std::string> tokens;
  std::vector<std::string> labels;
};

std::vector<RawSentence> read_conll(std::istream& in, std::size_t token_column,
                                    std::size_t label_column, const std::string& source = "<stream>");
std::vector<RawSentence> read_conll(const std::filesystem::path& path, std::size_t token_column,
                                    std::size_t label_column);
// Two tab-separated columns per token, blank line after each sentence.
void write_conll(std::ostream& out, const std::vector<RawSentence>& sentences);

// Optional sign, digits, optionally separated by '.' or ',' groups.
bool is_numeric_pattern(std::string_view surface);

// UTF-8 aware split into characters; invalid bytes are kept as single units.
std::vector<std::string> split_characters(std::string_view surface);

using TokenCounts = std::unordered_map<std::string, std::size_t>;

// Resolution order: exact, lowercased, NUMBER, promotion (count >= min_count,
// only while the vocabulary is not frozen), UNKNOWN.
std::size_t normalize_token(std::string_view surface, Vocabulary& vocab, const TokenCounts& train_counts,
                            std::size_t min_count = 50);

struct Token {
  std::string surface;
  std::size_t normalized_id = 0;
  CapCategory cap = CapCategory::other;
  std::vector<std::size_t> char_ids;
};

struct Sentence {
  std::vector<Token> tokens;
  std::map<std::string, std::vector<std::size_t>> labels;
};

struct CorpusOptions {
  TagScheme source_scheme = TagScheme::BIO;  // scheme of the label column on disk
  TagScheme target_scheme = TagScheme::BIO;  // scheme the model is trained on
  std::size_t min_count = 50;                // OOV promotion threshold
};

struct TaggedCorpus {
  std::string task_name;
  TagScheme scheme = TagScheme::BIO;
  std::vector<Sentence> train, dev, test;
  Vocabulary word_vocab;
  Vocabulary char_vocab;
  std::map<std::string, Vocabulary> label_vocab;

  const Vocabulary& labels() const { return label_vocab.at(task_name); }
};

struct RawSplits {
  std::vector<RawSentence> train, dev, test;
};

struct TaskData {
  std::string name;
  RawSplits raw;
  CorpusOptions options;
};

// Builds one corpus per task on top of `word_vocab` (usually the embedding
// vocabulary; may be empty). Word and character vocabularies are shared by all
// returned corpora: promotion counts pool every task's training split and the
// character vocabulary is collected from the training splits. Promoted tokens
// are appended to the word vocabulary, which is frozen on return.
std::vector<TaggedCorpus> build_corpora(const std::vector<TaskData>& tasks, Vocabulary word_vocab);

TaggedCorpus build_corpus(const std::string& task_name, const RawSplits& raw, Vocabulary word_vocab,
                          const CorpusOptions& options);

// Encode one raw sentence against frozen vocabularies (used for new data at eval time).
Sentence encode_sentence(const RawSentence& raw, Vocabulary& word_vocab, const Vocabulary& char_vocab,
                         const std::string& task, const Vocabulary* label_vocab);

// Epoch-wise shuffled mini-batches of sentence indices.
class BatchIterator {
 public:
  BatchIterator(std::size_t split_size, std::size_t batch_size, std::uint64_t seed);
  std::vector<std::vector<std::size_t>> next_epoch();

 private:
  std::size_t split_size_;
  std::size_t batch_size_;
  Rng rng_;
};

}  // namespace seqtag
