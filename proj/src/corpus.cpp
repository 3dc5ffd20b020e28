#include "seqtag/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "seqtag/error.hpp"

namespace seqtag {

namespace {

bool is_ascii_digit(unsigned char c) { return c >= '0' && c <= '9'; }
bool is_ascii_upper(unsigned char c) { return c >= 'A' && c <= 'Z'; }
bool is_ascii_lower(unsigned char c) { return c >= 'a' && c <= 'z'; }

std::string lowercase(std::string_view s) {
  std::string out(s);
  for (auto& c : out) {
    if (is_ascii_upper(static_cast<unsigned char>(c))) c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> cols;
  std::string col;
  while (in >> col) cols.push_back(col);
  return cols;
}

}  // namespace

std::string to_string(CapCategory c) {
  switch (c) {
    case CapCategory::numeric: return "numeric";
    case CapCategory::mainly_numeric: return "mainly_numeric";
    case CapCategory::all_lower: return "all_lower";
    case CapCategory::all_upper: return "all_upper";
    case CapCategory::initial_upper: return "initial_upper";
    case CapCategory::contains_digit: return "contains_digit";
    case CapCategory::other: return "other";
  }
  return "other";
}

CapCategory capitalization_feature(std::string_view surface) {
  if (surface.empty()) throw Error("capitalization_feature: empty token");
  const auto chars = split_characters(surface);
  std::size_t digits = 0, upper = 0, lower = 0;
  for (const auto& ch : chars) {
    if (ch.size() != 1) continue;  // non-ASCII: neither digit nor cased
    const auto c = static_cast<unsigned char>(ch[0]);
    digits += is_ascii_digit(c);
    upper += is_ascii_upper(c);
    lower += is_ascii_lower(c);
  }
  const std::size_t n = chars.size();
  if (digits == n) return CapCategory::numeric;
  if (2 * digits > n) return CapCategory::mainly_numeric;
  // Letters decide the case; punctuation is ignored, digits disqualify.
  if (digits == 0 && lower > 0 && upper == 0) return CapCategory::all_lower;
  if (digits == 0 && upper > 0 && lower == 0) return CapCategory::all_upper;
  if (chars.front().size() == 1 && is_ascii_upper(static_cast<unsigned char>(chars.front()[0]))) {
    return CapCategory::initial_upper;
  }
  if (digits > 0) return CapCategory::contains_digit;
  return CapCategory::other;
}

std::size_t Vocabulary::add(const std::string& item) {
  if (auto it = index_.find(item); it != index_.end()) return it->second;
  if (frozen_) throw Error("vocabulary is frozen; cannot add '" + item + "'");
  items_.push_back(item);
  index_.emplace(item, items_.size() - 1);
  return items_.size() - 1;
}

std::optional<std::size_t> Vocabulary::find(std::string_view item) const {
  if (auto it = index_.find(std::string(item)); it != index_.end()) return it->second;
  return std::nullopt;
}

void Vocabulary::dump(std::ostream& out) const {
  for (std::size_t i = 0; i < items_.size(); ++i) out << items_[i] << '\t' << i << '\n';
}

void add_special_tokens(Vocabulary& vocab) {
  for (auto tok : {kUnknownToken, kNumberToken, kPaddingToken}) {
    if (!vocab.contains(tok)) vocab.add(std::string(tok));
  }
}

std::vector<RawSentence> read_conll(std::istream& in, std::size_t token_column,
                                    std::size_t label_column, const std::string& source) {
  std::vector<RawSentence> sentences;
  RawSentence current;
  std::string line;
  std::size_t line_no = 0;
  const std::size_t needed = std::max(token_column, label_column) + 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto cols = split_ws(line);
    if (cols.empty()) {
      if (!current.tokens.empty()) sentences.push_back(std::move(current));
      current = {};
      continue;
    }
    if (cols[0] == "-DOCSTART-") continue;
    if (cols.size() < needed) {
      throw ParseError(source, line_no,
                       "expected at least " + std::to_string(needed) + " columns, found " +
                           std::to_string(cols.size()));
    }
    current.tokens.push_back(cols[token_column]);
    current.labels.push_back(cols[label_column]);
  }
  if (!current.tokens.empty()) sentences.push_back(std::move(current));
  return sentences;
}

std::vector<RawSentence> read_conll(const std::filesystem::path& path, std::size_t token_column,
                                    std::size_t label_column) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return read_conll(in, token_column, label_column, path.string());
}

void write_conll(std::ostream& out, const std::vector<RawSentence>& sentences) {
  for (const auto& s : sentences) {
    for (std::size_t i = 0; i < s.tokens.size(); ++i) out << s.tokens[i] << '\t' << s.labels[i] << '\n';
    out << '\n';
  }
}

bool is_numeric_pattern(std::string_view s) {
  std::size_t i = 0;
  if (i < s.size() && (s[i] == '+' || s[i] == '-')) ++i;
  bool need_digit = true;
  bool any = false;
  for (; i < s.size(); ++i) {
    const auto c = static_cast<unsigned char>(s[i]);
    if (is_ascii_digit(c)) {
      need_digit = false;
      any = true;
    } else if ((c == '.' || c == ',') && !need_digit) {
      need_digit = true;
    } else {
      return false;
    }
  }
  return any && !need_digit;
}

std::vector<std::string> split_characters(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t len = 1;
    if (c >= 0xF0) len = 4;
    else if (c >= 0xE0) len = 3;
    else if (c >= 0xC0) len = 2;
    if (i + len > s.size()) len = 1;
    for (std::size_t k = 1; k < len; ++k) {
      if ((static_cast<unsigned char>(s[i + k]) & 0xC0) != 0x80) {
        len = 1;
        break;
      }
    }
    out.emplace_back(s.substr(i, len));
    i += len;
  }
  return out;
}

std::size_t normalize_token(std::string_view surface, Vocabulary& vocab, const TokenCounts& train_counts,
                            std::size_t min_count) {
  if (auto id = vocab.find(surface)) return *id;
  const std::string lower = lowercase(surface);
  if (auto id = vocab.find(lower)) return *id;
  if (is_numeric_pattern(surface)) {
    if (auto id = vocab.find(kNumberToken)) return *id;
  }
  if (!vocab.frozen()) {
    if (auto it = train_counts.find(std::string(surface)); it != train_counts.end() && it->second >= min_count) {
      return vocab.add(std::string(surface));
    }
  }
  if (auto id = vocab.find(kUnknownToken)) return *id;
  throw Error("normalize_token: vocabulary lacks the UNKNOWN token");
}

Sentence encode_sentence(const RawSentence& raw, Vocabulary& word_vocab, const Vocabulary& char_vocab,
                         const std::string& task, const Vocabulary* label_vocab) {
  static const TokenCounts no_counts;
  const std::size_t char_unknown = char_vocab.find(kCharUnknown).value_or(0);
  Sentence s;
  for (const auto& surface : raw.tokens) {
    Token tok;
    tok.surface = surface;
    tok.normalized_id = normalize_token(surface, word_vocab, no_counts);
    tok.cap = capitalization_feature(surface);
    for (const auto& ch : split_characters(surface)) {
      tok.char_ids.push_back(char_vocab.find(ch).value_or(char_unknown));
    }
    s.tokens.push_back(std::move(tok));
  }
  if (label_vocab) {
    auto& ids = s.labels[task];
    for (const auto& label : raw.labels) {
      auto id = label_vocab->find(label);
      if (!id) throw Error("label '" + label + "' missing from the " + task + " label vocabulary");
      ids.push_back(*id);
    }
  }
  return s;
}

std::vector<TaggedCorpus> build_corpora(const std::vector<TaskData>& tasks, Vocabulary word_vocab) {
  add_special_tokens(word_vocab);

  // Labels in the target scheme.
  std::vector<RawSplits> converted;
  for (const auto& task : tasks) {
    RawSplits c = task.raw;
    for (auto* split : {&c.train, &c.dev, &c.test}) {
      for (auto& s : *split) {
        if (s.tokens.empty()) throw Error(task.name + ": empty sentence");
        if (task.options.source_scheme != TagScheme::NONE || task.options.target_scheme != TagScheme::NONE) {
          s.labels = convert_scheme(s.labels, task.options.source_scheme, task.options.target_scheme);
        }
      }
    }
    converted.push_back(std::move(c));
  }

  TokenCounts counts;
  for (const auto& c : converted) {
    for (const auto& s : c.train) {
      for (const auto& t : s.tokens) ++counts[t];
    }
  }
  Vocabulary char_vocab;
  char_vocab.add(std::string(kCharUnknown));
  for (std::size_t k = 0; k < tasks.size(); ++k) {
    for (const auto& s : converted[k].train) {
      for (const auto& t : s.tokens) {
        normalize_token(t, word_vocab, counts, tasks[k].options.min_count);
        for (const auto& ch : split_characters(t)) char_vocab.add(ch);
      }
    }
  }
  word_vocab.freeze();
  char_vocab.freeze();

  std::vector<TaggedCorpus> corpora;
  for (std::size_t k = 0; k < tasks.size(); ++k) {
    TaggedCorpus corpus;
    corpus.task_name = tasks[k].name;
    corpus.scheme = tasks[k].options.target_scheme;
    Vocabulary labels;
    for (const auto* split : {&converted[k].train, &converted[k].dev, &converted[k].test}) {
      for (const auto& s : *split) {
        for (const auto& l : s.labels) labels.add(l);
      }
    }
    labels.freeze();
    auto encode_split = [&](const std::vector<RawSentence>& raw) {
      std::vector<Sentence> out;
      out.reserve(raw.size());
      for (const auto& s : raw) out.push_back(encode_sentence(s, word_vocab, char_vocab, corpus.task_name, &labels));
      return out;
    };
    corpus.train = encode_split(converted[k].train);
    corpus.dev = encode_split(converted[k].dev);
    corpus.test = encode_split(converted[k].test);
    corpus.word_vocab = word_vocab;
    corpus.char_vocab = char_vocab;
    corpus.label_vocab.emplace(corpus.task_name, std::move(labels));
    corpora.push_back(std::move(corpus));
  }
  return corpora;
}

TaggedCorpus build_corpus(const std::string& task_name, const RawSplits& raw, Vocabulary word_vocab,
                          const CorpusOptions& options) {
  return std::move(build_corpora({TaskData{task_name, raw, options}}, std::move(word_vocab)).front());
}

BatchIterator::BatchIterator(std::size_t split_size, std::size_t batch_size, std::uint64_t seed)
    : split_size_(split_size), batch_size_(batch_size), rng_(seed) {
  if (batch_size == 0) throw Error("batch size must be at least 1");
}

std::vector<std::vector<std::size_t>> BatchIterator::next_epoch() {
  std::vector<std::size_t> order(split_size_);
  for (std::size_t i = 0; i < split_size_; ++i) order[i] = i;
  rng_.shuffle(std::span<std::size_t>(order));
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size_) {
    const std::size_t end = std::min(order.size(), start + batch_size_);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

}  // namespace seqtag
