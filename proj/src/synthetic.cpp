#include "seqtag/synthetic.hpp"

#include <algorithm>
#include <array>
#include <string>
#include <vector>

#include "seqtag/rng.hpp"

namespace seqtag {

namespace {

constexpr std::array<const char*, 24> kWords{
    "the", "a",    "cat",   "dog",  "runs", "sees",  "quickly", "red",
    "big", "on",   "under", "Paris", "Bob",  "eats", "7",       "42",
    "and", "blue", "tree",  "jumps", "Mary", "over", "small",   "."};
constexpr std::array<const char*, 5> kWordTags{"DET", "NOUN", "VERB", "ADJ", "OTHER"};

std::size_t word_tag(std::size_t w) { return (w * 7 + 3) % kWordTags.size(); }

RawSentence random_token_sentence(Rng& rng) {
  RawSentence s;
  const std::size_t len = 3 + rng.below(6);
  for (std::size_t i = 0; i < len; ++i) {
    const std::size_t w = rng.below(kWords.size());
    s.tokens.emplace_back(kWords[w]);
    s.labels.emplace_back(kWordTags[word_tag(w)]);
  }
  return s;
}

struct Mention {
  const char* cls;
  std::vector<const char*> words;
};

// Shared words ("New", "York", "Bank") appear at different mention positions.
const std::vector<Mention>& mentions() {
  static const std::vector<Mention> m{
      {"PER", {"John"}},           {"PER", {"John", "Smith"}},        {"PER", {"Mary", "Ann", "Smith"}},
      {"PER", {"Ann"}},            {"LOC", {"York"}},                 {"LOC", {"New", "York"}},
      {"LOC", {"New", "York", "City"}}, {"LOC", {"Paris"}},           {"ORG", {"York", "Bank"}},
      {"ORG", {"Bank"}},           {"ORG", {"City", "Bank", "Group"}}, {"ORG", {"New", "Bank"}}};
  return m;
}

constexpr std::array<const char*, 14> kFiller{"the",  "visited", "said", "in",  "met", "near", "from",
                                              "with", "today",   "and",  "a",   "new", "city", "."};

RawSentence random_segment_sentence(Rng& rng) {
  RawSentence s;
  const std::size_t parts = 3 + rng.below(5);
  bool last_was_mention = false;
  for (std::size_t p = 0; p < parts; ++p) {
    if (!last_was_mention && rng.bernoulli(0.4)) {
      const auto& m = mentions()[rng.below(mentions().size())];
      for (std::size_t i = 0; i < m.words.size(); ++i) {
        s.tokens.emplace_back(m.words[i]);
        s.labels.push_back(std::string(i == 0 ? "B-" : "I-") + m.cls);
      }
      last_was_mention = true;
    } else {
      s.tokens.emplace_back(kFiller[rng.below(kFiller.size())]);
      s.labels.emplace_back("O");
      last_was_mention = false;
    }
  }
  return s;
}

}  // namespace

RawSplits surface_function_corpus(std::size_t train_sentences, std::uint64_t seed) {
  Rng rng(seed);
  RawSplits out;
  const std::size_t held_out = std::max<std::size_t>(train_sentences / 4, 1);
  for (std::size_t i = 0; i < train_sentences; ++i) out.train.push_back(random_token_sentence(rng));
  for (std::size_t i = 0; i < held_out; ++i) out.dev.push_back(random_token_sentence(rng));
  for (std::size_t i = 0; i < held_out; ++i) out.test.push_back(random_token_sentence(rng));
  return out;
}

RawSplits segment_corpus(std::size_t sentences, std::uint64_t seed) {
  Rng rng(seed);
  RawSplits out;
  const std::size_t n_dev = sentences / 10, n_test = sentences / 5;
  const std::size_t n_train = sentences - n_dev - n_test;
  for (std::size_t i = 0; i < n_train; ++i) out.train.push_back(random_segment_sentence(rng));
  for (std::size_t i = 0; i < n_dev; ++i) out.dev.push_back(random_segment_sentence(rng));
  for (std::size_t i = 0; i < n_test; ++i) out.test.push_back(random_segment_sentence(rng));
  return out;
}

}  // namespace seqtag
