#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "seqtag/corpus.hpp"
#include "seqtag/matrix.hpp"

namespace seqtag {

struct EmbeddingTable {
  Matrix matrix;                // one row per vocabulary index
  std::vector<bool> pretrained;  // rows that came from the embedding file

  std::size_t dim() const { return matrix.cols(); }
  std::size_t rows() const { return matrix.rows(); }
};

struct LoadedEmbeddings {
  EmbeddingTable table;
  Vocabulary vocab;
  std::vector<std::string> warnings;
};

inline constexpr double kEmbeddingInitRange = 0.25;

struct EmbeddingLoadOptions {
  const Vocabulary* limit_to = nullptr;  // keep only these words (matched exactly or lowercased)
  bool lowercase = false;                // lowercase words while loading
  std::uint64_t seed = 0;                // for the special-token rows
};

// Text format: "word v1 ... vD" per line, optional "count dim" header. Files
// ending in .gz are decompressed transparently. UNKNOWN, NUMBER and PADDING rows
// are appended, drawn uniformly from [-0.25, 0.25].
LoadedEmbeddings load_text_embeddings(const std::filesystem::path& path, const EmbeddingLoadOptions& options = {});
LoadedEmbeddings load_text_embeddings(std::istream& in, const EmbeddingLoadOptions& options = {},
                                      const std::string& source = "<stream>");

// Grows the table to `vocab_size` rows with random [-0.25, 0.25] rows; used
// for promoted OOV tokens and for training without pre-trained vectors.
void extend_embeddings(EmbeddingTable& table, std::size_t vocab_size, std::size_t dim_if_empty, Rng& rng);

// Rows of `embedding` selected by `ids`, as an ids.size() x dim matrix.
Matrix lookup(const Matrix& embedding, std::span<const std::size_t> ids);
// Scatter-adds `d_rows` into the gradient rows of `embedding` (skipping frozen rows).
void lookup_backward(Parameter& embedding, std::span<const std::size_t> ids, const Matrix& d_rows);

}  // namespace seqtag
