#include "seqtag/embeddings.hpp"

#include <zlib.h>

#include <algorithm>
#include <fstream>
#include <istream>
#include <memory>
#include <sstream>

#include "seqtag/error.hpp"

namespace seqtag {

namespace {

std::string lowercase_ascii(std::string s) {
  for (auto& c : s) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return s;
}

bool wanted(const std::string& word, const Vocabulary* limit) {
  if (!limit) return true;
  return limit->contains(word) || limit->contains(lowercase_ascii(word));
}

// Reads all lines of a gzip file.
std::string read_gzip(const std::filesystem::path& path) {
  std::unique_ptr<gzFile_s, decltype(&gzclose)> file(gzopen(path.string().c_str(), "rb"), &gzclose);
  if (!file) throw Error("cannot open " + path.string());
  std::string data;
  char buf[1 << 16];
  int n;
  while ((n = gzread(file.get(), buf, sizeof buf)) > 0) data.append(buf, static_cast<std::size_t>(n));
  if (n < 0) throw Error("gzip read error in " + path.string());
  return data;
}

}  // namespace

LoadedEmbeddings load_text_embeddings(std::istream& in, const EmbeddingLoadOptions& options,
                                      const std::string& source) {
  LoadedEmbeddings out;
  std::vector<double> values;
  std::size_t dim = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream fields(line);
    std::string word;
    if (!(fields >> word)) continue;
    std::vector<double> row;
    std::string tok;
    while (fields >> tok) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw ParseError(source, line_no, "not a number: '" + tok + "'");
      }
    }
    if (line_no == 1 && row.size() == 1 &&
        std::all_of(word.begin(), word.end(), [](char c) { return c >= '0' && c <= '9'; })) {
      continue;  // "count dim" header
    }
    if (row.empty()) throw ParseError(source, line_no, "word without vector");
    if (dim == 0) dim = row.size();
    if (row.size() != dim) {
      throw ParseError(source, line_no,
                       "expected " + std::to_string(dim) + " values, found " + std::to_string(row.size()));
    }
    if (options.lowercase) word = lowercase_ascii(word);
    if (!wanted(word, options.limit_to)) continue;
    if (out.vocab.contains(word)) {
      out.warnings.push_back(source + ":" + std::to_string(line_no) + ": duplicate word '" + word +
                             "', keeping first");
      continue;
    }
    out.vocab.add(word);
    values.insert(values.end(), row.begin(), row.end());
  }
  if (dim == 0) throw Error(source + ": no embedding vectors found");

  const std::size_t words = out.vocab.size();
  add_special_tokens(out.vocab);
  out.table.matrix = Matrix(out.vocab.size(), dim);
  std::copy(values.begin(), values.end(), out.table.matrix.values().begin());
  out.table.pretrained.assign(out.vocab.size(), false);
  std::fill(out.table.pretrained.begin(), out.table.pretrained.begin() + static_cast<std::ptrdiff_t>(words), true);
  Rng rng = Rng::derive(options.seed, 0xE3B);
  for (std::size_t r = words; r < out.vocab.size(); ++r) {
    for (auto& v : out.table.matrix.row(r)) v = rng.uniform(-kEmbeddingInitRange, kEmbeddingInitRange);
  }
  return out;
}

LoadedEmbeddings load_text_embeddings(const std::filesystem::path& path, const EmbeddingLoadOptions& options) {
  if (path.extension() == ".gz") {
    std::istringstream in(read_gzip(path));
    return load_text_embeddings(in, options, path.string());
  }
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return load_text_embeddings(in, options, path.string());
}

void extend_embeddings(EmbeddingTable& table, std::size_t vocab_size, std::size_t dim_if_empty, Rng& rng) {
  const std::size_t old_rows = table.rows();
  if (vocab_size < old_rows) throw Error("extend_embeddings: vocabulary shrank");
  const std::size_t dim = old_rows ? table.dim() : dim_if_empty;
  if (dim == 0) throw Error("extend_embeddings: dimension must be positive");
  Matrix grown(vocab_size, dim);
  if (old_rows) std::copy(table.matrix.values().begin(), table.matrix.values().end(), grown.values().begin());
  for (std::size_t r = old_rows; r < vocab_size; ++r) {
    for (auto& v : grown.row(r)) v = rng.uniform(-kEmbeddingInitRange, kEmbeddingInitRange);
  }
  table.matrix = std::move(grown);
  table.pretrained.resize(vocab_size, false);
}

Matrix lookup(const Matrix& embedding, std::span<const std::size_t> ids) {
  Matrix out(ids.size(), embedding.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= embedding.rows()) {
      throw Error("embedding lookup: id " + std::to_string(ids[i]) + " out of range " +
                  std::to_string(embedding.rows()));
    }
    std::copy_n(embedding.row(ids[i]).begin(), embedding.cols(), out.row(i).begin());
  }
  return out;
}

void lookup_backward(Parameter& embedding, std::span<const std::size_t> ids, const Matrix& d_rows) {
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!embedding.row_trainable(ids[i])) continue;
    auto g = embedding.grad.row(ids[i]);
    const auto d = d_rows.row(i);
    for (std::size_t j = 0; j < g.size(); ++j) g[j] += d[j];
  }
}

}  // namespace seqtag
