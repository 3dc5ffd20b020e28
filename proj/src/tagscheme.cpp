#include "seqtag/tagscheme.hpp"

#include <algorithm>
#include <optional>

#include "seqtag/error.hpp"

namespace seqtag {

namespace {

struct Tag {
  char prefix = 'O';  // O, B, I, E, S, or '?' for anything unparseable
  std::string cls;
};

Tag parse_tag(std::string_view tag) {
  if (tag == "O") return {'O', {}};
  if (tag.size() >= 3 && tag[1] == '-') {
    const char p = tag[0];
    if (p == 'B' || p == 'I' || p == 'E' || p == 'S') return {p, std::string(tag.substr(2))};
  }
  return {'?', std::string(tag)};
}

bool allowed_prefix(char p, TagScheme scheme) {
  switch (scheme) {
    case TagScheme::BIO:
    case TagScheme::IOB:
      return p == 'O' || p == 'B' || p == 'I';
    case TagScheme::IOBES:
      return p == 'O' || p == 'B' || p == 'I' || p == 'E' || p == 'S';
    case TagScheme::NONE:
      return true;
  }
  return false;
}

// Class of the segment still open after `prev` (BIO/IOB), or nullopt.
std::optional<std::string> open_class(const Tag& prev) {
  if (prev.prefix == 'B' || prev.prefix == 'I') return prev.cls;
  return std::nullopt;
}

// Validity of `cur` under BIO/IOB given the tag before it (nullptr at start).
bool valid_after(const Tag* prev, const Tag& cur, TagScheme scheme) {
  if (!allowed_prefix(cur.prefix, scheme)) return false;
  const auto open = prev ? open_class(*prev) : std::nullopt;
  if (scheme == TagScheme::BIO) {
    if (cur.prefix == 'I') return open && *open == cur.cls;
    return true;
  }
  // IOB: B- only separates two adjacent segments of the same class.
  if (cur.prefix == 'B') return open && *open == cur.cls;
  return true;
}

void require_segmented(TagScheme scheme, const char* op) {
  if (scheme == TagScheme::NONE) {
    throw Error(std::string(op) + ": scheme NONE has no segment semantics");
  }
}

}  // namespace

std::string to_string(TagScheme s) {
  switch (s) {
    case TagScheme::BIO: return "BIO";
    case TagScheme::IOB: return "IOB";
    case TagScheme::IOBES: return "IOBES";
    case TagScheme::NONE: return "NONE";
  }
  return "?";
}

TagScheme parse_tag_scheme(std::string_view name) {
  if (name == "BIO") return TagScheme::BIO;
  if (name == "IOB") return TagScheme::IOB;
  if (name == "IOBES") return TagScheme::IOBES;
  if (name == "NONE") return TagScheme::NONE;
  throw ConfigError("unknown tag scheme '" + std::string(name) + "'; allowed: {BIO, IOB, IOBES, NONE}");
}

std::string to_string(RepairStrategy s) {
  return s == RepairStrategy::to_outside ? "to_outside" : "to_begin";
}

RepairStrategy parse_repair_strategy(std::string_view name) {
  if (name == "to_outside") return RepairStrategy::to_outside;
  if (name == "to_begin") return RepairStrategy::to_begin;
  throw ConfigError("unknown repair strategy '" + std::string(name) +
                    "'; allowed: {to_outside, to_begin}");
}

std::size_t first_invalid_position(const TagSequence& tags, TagScheme scheme) {
  if (scheme == TagScheme::NONE) return tags.size();
  std::vector<Tag> parsed;
  parsed.reserve(tags.size());
  for (const auto& t : tags) parsed.push_back(parse_tag(t));

  if (scheme != TagScheme::IOBES) {
    for (std::size_t i = 0; i < parsed.size(); ++i) {
      if (!valid_after(i ? &parsed[i - 1] : nullptr, parsed[i], scheme)) return i;
    }
    return parsed.size();
  }

  std::optional<std::string> open;
  for (std::size_t i = 0; i < parsed.size(); ++i) {
    const Tag& t = parsed[i];
    if (!allowed_prefix(t.prefix, scheme)) return i;
    if (open) {
      if ((t.prefix != 'I' && t.prefix != 'E') || t.cls != *open) return i;
      if (t.prefix == 'E') open.reset();
    } else {
      if (t.prefix == 'I' || t.prefix == 'E') return i;
      if (t.prefix == 'B') open = t.cls;
    }
  }
  if (open) return parsed.size() - 1;
  return parsed.size();
}

bool is_valid(const TagSequence& tags, TagScheme scheme) {
  return first_invalid_position(tags, scheme) == tags.size();
}

std::vector<SegmentSpan> extract_segments(const TagSequence& tags, TagScheme scheme) {
  require_segmented(scheme, "extract_segments");
  const std::size_t bad = first_invalid_position(tags, scheme);
  if (bad != tags.size()) {
    throw Error("invalid " + to_string(scheme) + " tag '" + tags[bad] + "' at position " +
                std::to_string(bad));
  }
  std::vector<SegmentSpan> spans;
  std::optional<SegmentSpan> cur;
  auto close = [&] {
    if (cur) spans.push_back(*cur);
    cur.reset();
  };
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const Tag t = parse_tag(tags[i]);
    switch (t.prefix) {
      case 'O':
        close();
        break;
      case 'S':
        close();
        spans.push_back({i, i, t.cls});
        break;
      case 'B':
        close();
        cur = SegmentSpan{i, i, t.cls};
        break;
      case 'I':
        if (cur && cur->cls == t.cls) {
          cur->end = i;
        } else {  // IOB segment start
          close();
          cur = SegmentSpan{i, i, t.cls};
        }
        break;
      case 'E':
        cur->end = i;
        close();
        break;
      default:
        break;
    }
  }
  close();
  return spans;
}

TagSequence encode_segments(const std::vector<SegmentSpan>& segments, std::size_t length,
                            TagScheme scheme) {
  require_segmented(scheme, "encode_segments");
  TagSequence tags(length, "O");
  std::optional<SegmentSpan> prev;
  for (const auto& s : segments) {
    if (s.start > s.end || s.end >= length || (prev && s.start <= prev->end)) {
      throw Error("encode_segments: segments must be sorted, disjoint and in range");
    }
    const bool adjacent_same = prev && prev->end + 1 == s.start && prev->cls == s.cls;
    for (std::size_t i = s.start; i <= s.end; ++i) tags[i] = "I-" + s.cls;
    switch (scheme) {
      case TagScheme::BIO:
        tags[s.start] = "B-" + s.cls;
        break;
      case TagScheme::IOB:
        if (adjacent_same) tags[s.start] = "B-" + s.cls;
        break;
      case TagScheme::IOBES:
        if (s.start == s.end) {
          tags[s.start] = "S-" + s.cls;
        } else {
          tags[s.start] = "B-" + s.cls;
          tags[s.end] = "E-" + s.cls;
        }
        break;
      case TagScheme::NONE:
        break;
    }
    prev = s;
  }
  return tags;
}

TagSequence convert_scheme(const TagSequence& tags, TagScheme from, TagScheme to) {
  if (from == to) {
    if (from != TagScheme::NONE) extract_segments(tags, from);  // validates
    return tags;
  }
  return encode_segments(extract_segments(tags, from), tags.size(), to);
}

RepairResult repair_invalid(const TagSequence& tags, TagScheme scheme, RepairStrategy strategy) {
  RepairResult result{tags, 0};
  if (scheme == TagScheme::NONE) return result;
  auto& out = result.tags;
  auto set = [&](std::size_t i, std::string tag) {
    if (out[i] != tag) {
      out[i] = std::move(tag);
      ++result.repairs;
    }
  };

  if (scheme != TagScheme::IOBES) {
    for (std::size_t i = 0; i < out.size(); ++i) {
      const Tag prev = i ? parse_tag(out[i - 1]) : Tag{};
      const Tag cur = parse_tag(out[i]);
      if (valid_after(i ? &prev : nullptr, cur, scheme)) continue;
      if (strategy == RepairStrategy::to_outside || cur.prefix == '?') {
        set(i, "O");
        continue;
      }
      // Start a new segment of the same class in the scheme's own notation.
      const auto open = i ? open_class(prev) : std::nullopt;
      if (scheme == TagScheme::BIO || (open && *open == cur.cls)) {
        set(i, "B-" + cur.cls);
      } else {
        set(i, "I-" + cur.cls);
      }
    }
    return result;
  }

  // IOBES: track the open segment so an unterminated one can be resolved.
  std::optional<std::size_t> open_start;
  std::string open_cls;
  auto resolve_unterminated = [&](std::size_t end) {
    // Segment [*open_start, end] was never closed.
    if (strategy == RepairStrategy::to_outside) {
      for (std::size_t k = *open_start; k <= end; ++k) set(k, "O");
    } else if (*open_start == end) {
      set(end, "S-" + open_cls);
    } else {
      set(end, "E-" + open_cls);
    }
    open_start.reset();
  };

  for (std::size_t i = 0; i < out.size(); ++i) {
    const Tag cur = parse_tag(out[i]);
    if (open_start) {
      if ((cur.prefix == 'I' || cur.prefix == 'E') && cur.cls == open_cls) {
        if (cur.prefix == 'E') open_start.reset();
        continue;
      }
      resolve_unterminated(i - 1);
    }
    if (cur.prefix == '?' ) {
      set(i, "O");
    } else if (cur.prefix == 'I' || cur.prefix == 'E') {
      if (strategy == RepairStrategy::to_outside) {
        set(i, "O");
      } else if (cur.prefix == 'I') {
        set(i, "B-" + cur.cls);
        open_start = i;
        open_cls = cur.cls;
      } else {
        set(i, "S-" + cur.cls);
      }
    } else if (cur.prefix == 'B') {
      open_start = i;
      open_cls = cur.cls;
    }
  }
  if (open_start) resolve_unterminated(out.size() - 1);
  return result;
}

PrfScore entity_f1(const std::vector<TagSequence>& gold, const std::vector<TagSequence>& pred,
                   TagScheme scheme) {
  require_segmented(scheme, "entity_f1");
  if (gold.size() != pred.size()) throw Error("entity_f1: sentence count mismatch");
  PrfScore s;
  for (std::size_t k = 0; k < gold.size(); ++k) {
    if (gold[k].size() != pred[k].size()) {
      throw Error("entity_f1: length mismatch in sentence " + std::to_string(k));
    }
    const auto g = extract_segments(gold[k], scheme);
    const auto p = extract_segments(pred[k], scheme);
    s.gold += g.size();
    s.predicted += p.size();
    for (const auto& span : p) {
      if (std::binary_search(g.begin(), g.end(), span)) ++s.true_positives;
    }
  }
  s.precision = s.predicted ? double(s.true_positives) / double(s.predicted) : 0.0;
  s.recall = s.gold ? double(s.true_positives) / double(s.gold) : 0.0;
  s.f1 = s.precision + s.recall > 0.0
             ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
             : 0.0;
  return s;
}

double token_accuracy(const std::vector<TagSequence>& gold, const std::vector<TagSequence>& pred) {
  if (gold.size() != pred.size()) throw Error("token_accuracy: sentence count mismatch");
  std::size_t total = 0, correct = 0;
  for (std::size_t k = 0; k < gold.size(); ++k) {
    if (gold[k].size() != pred[k].size()) {
      throw Error("token_accuracy: length mismatch in sentence " + std::to_string(k));
    }
    for (std::size_t i = 0; i < gold[k].size(); ++i) correct += gold[k][i] == pred[k][i];
    total += gold[k].size();
  }
  return total ? double(correct) / double(total) : 0.0;
}

}  // namespace seqtag
