#pragma once

#include <cstddef>
#include <cstdint>

#include "seqtag/corpus.hpp"

namespace seqtag {

// Token-labelling corpus (scheme NONE): every word type has one fixed tag, so
// the labels are a deterministic function of the surface form.
RawSplits surface_function_corpus(std::size_t train_sentences, std::uint64_t seed);

// BIO segment corpus with PER / LOC / ORG mentions of 1-3 tokens. Several
// words occur both at the start and inside of mentions, so the boundary
// decision needs context.
RawSplits segment_corpus(std::size_t sentences, std::uint64_t seed);

}  // namespace seqtag
