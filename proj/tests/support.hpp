// Shared helpers for the unit tests and the acceptance runner.
#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "seqtag/corpus.hpp"
#include "seqtag/matrix.hpp"
#include "seqtag/rng.hpp"
#include "seqtag/synthetic.hpp"
#include "seqtag/tagger.hpp"

namespace testing {

using namespace seqtag;

inline Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (auto& v : m.values()) v = rng.uniform(-scale, scale);
  return m;
}

// Scalar loss sum(R .* Y) used to probe a layer with upstream gradient R.
inline double dot(const Matrix& a, const Matrix& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.values()[i] * b.values()[i];
  return s;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Gradients below 1e-5 are compared absolutely: central differences carry
// round-off of order eps * |loss| / h.
inline double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-5});
  return std::abs(analytic - numeric) / scale;
}

struct GradTarget {
  Matrix* value;
  const Matrix* grad;
};

// Largest relative error between the stored analytic gradients and central
// differences of `loss` over every entry of every target.
inline double gradient_error(const std::vector<GradTarget>& targets, const std::function<double()>& loss,
                             double h = 1e-5) {
  double worst = 0.0;
  for (const auto& t : targets) {
    auto v = t.value->values();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double keep = v[i];
      v[i] = keep + h;
      const double up = loss();
      v[i] = keep - h;
      const double down = loss();
      v[i] = keep;
      worst = std::max(worst, relative_error(t.grad->values()[i], (up - down) / (2 * h)));
    }
  }
  return worst;
}

inline std::vector<GradTarget> param_targets(const std::vector<Parameter*>& params) {
  std::vector<GradTarget> out;
  for (auto* p : params) out.push_back({&p->value, &p->grad});
  return out;
}

// Replaces the BiLSTM stack and head with `units`-wide fresh layers so that
// finite differences stay cheap; the forward pass reads sizes from the layers.
inline void shrink(TaggerModel& model, std::size_t units, Rng& rng) {
  auto& layers = model.layers();
  const std::size_t in = layers.front().fwd.input_dim();
  layers.front() = BiLstm("bilstm1", in, units);
  layers.front().initialize(rng);
  auto& head = model.mutable_head(0);
  const std::size_t k = head.dense.output_dim();
  head.dense = Dense("dense", 2 * units, k);
  head.dense.initialize(rng);
  for (auto& v : head.dense.bias.value.values()) v = rng.uniform(-0.5, 0.5);
  if (head.crf) {
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = 0; j < k; ++j) head.crf->transitions.value(i, j) = rng.uniform(-1, 1);
    }
  }
}

inline TaggedCorpus surface_corpus(std::size_t sentences, std::uint64_t seed) {
  CorpusOptions o;
  o.source_scheme = TagScheme::NONE;
  o.target_scheme = TagScheme::NONE;
  o.min_count = 1;
  return build_corpus("pos", surface_function_corpus(sentences, seed), Vocabulary{}, o);
}

inline TaggedCorpus segments(std::size_t sentences, std::uint64_t seed, TagScheme scheme = TagScheme::BIO) {
  CorpusOptions o;
  o.source_scheme = TagScheme::BIO;
  o.target_scheme = scheme;
  o.min_count = 1;
  return build_corpus("ner", segment_corpus(sentences, seed), Vocabulary{}, o);
}

inline void write_task_dir(const std::filesystem::path& dir, const RawSplits& splits) {
  std::filesystem::create_directories(dir);
  const std::pair<const char*, const std::vector<RawSentence>*> files[] = {
      {"train.txt", &splits.train}, {"dev.txt", &splits.dev}, {"test.txt", &splits.test}};
  for (const auto& [name, data] : files) {
    std::ofstream f(dir / name);
    write_conll(f, *data);
  }
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("seqtag_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing
