#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace seqtag {

enum class TagScheme { BIO, IOB, IOBES, NONE };
enum class RepairStrategy { to_outside, to_begin };

std::string to_string(TagScheme s);
TagScheme parse_tag_scheme(std::string_view name);
std::string to_string(RepairStrategy s);
RepairStrategy parse_repair_strategy(std::string_view name);

using TagSequence = std::vector<std::string>;

// Inclusive token span [start, end] labelled with `cls`.
struct SegmentSpan {
  std::size_t start = 0;
  std::size_t end = 0;
  std::string cls;

  friend auto operator<=>(const SegmentSpan&, const SegmentSpan&) = default;
};

// Index of the first tag that is not valid under `scheme` given the tags
// before it, or tags.size() if the whole sequence is valid. An IOBES segment
// left open at the end reports the position of its last tag.
std::size_t first_invalid_position(const TagSequence& tags, TagScheme scheme);
bool is_valid(const TagSequence& tags, TagScheme scheme);

// Throws Error naming the first offending position when `tags` is invalid.
std::vector<SegmentSpan> extract_segments(const TagSequence& tags, TagScheme scheme);

// Tags for `length` tokens encoding the (sorted, non-overlapping) segments.
TagSequence encode_segments(const std::vector<SegmentSpan>& segments, std::size_t length,
                            TagScheme scheme);

TagSequence convert_scheme(const TagSequence& tags, TagScheme from, TagScheme to);

struct RepairResult {
  TagSequence tags;
  std::size_t repairs = 0;
};

// Left-to-right repair; each position is judged against the already repaired
// prefix. to_outside turns invalid tags into O, to_begin makes them open a
// new segment. The result is always valid under `scheme`.
RepairResult repair_invalid(const TagSequence& tags, TagScheme scheme, RepairStrategy strategy);

struct PrfScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t true_positives = 0;
  std::size_t predicted = 0;
  std::size_t gold = 0;
};

// CoNLL-style exact-match span F1 over a corpus of sentences.
PrfScore entity_f1(const std::vector<TagSequence>& gold, const std::vector<TagSequence>& pred,
                   TagScheme scheme);

double token_accuracy(const std::vector<TagSequence>& gold, const std::vector<TagSequence>& pred);

}  // namespace seqtag
