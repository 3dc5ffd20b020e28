#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "seqtag/matrix.hpp"
#include "seqtag/rng.hpp"

namespace seqtag {

// ---------------------------------------------------------------------------
// Dropout

enum class DropoutKind { none, naive, variational };

std::string to_string(DropoutKind k);
DropoutKind parse_dropout_kind(std::string_view name);

struct DropoutSpec {
  DropoutKind kind = DropoutKind::none;
  double p_output = 0.0;
  double p_recurrent = 0.0;  // variational only

  friend bool operator==(const DropoutSpec&, const DropoutSpec&) = default;
};

// Inverted-dropout mask: each entry is 0 with probability p, else 1/(1-p).
std::vector<double> dropout_mask(std::size_t n, double p, Rng& rng);

// ---------------------------------------------------------------------------
// Numerics

double log_sum_exp(std::span<const double> xs);
double sigmoid(double x);

// ---------------------------------------------------------------------------
// LSTM

// Gate blocks in the packed weight columns.
enum LstmGate : std::size_t { kInputGate = 0, kForgetGate = 1, kOutputGate = 2, kCandidate = 3 };

struct LstmCache {
  Matrix inputs;        // T x in
  Matrix prev_hidden;   // T x units, h_{t-1} entering the gates (after recurrent mask)
  Matrix gates;         // T x 4*units, post-activation [i f o g]
  Matrix cells;         // T x units
  Matrix hidden;        // T x units, h_t before output dropout
  Matrix output_mask;   // T x units, empty when no output dropout
  std::vector<double> recurrent_mask;  // empty when no recurrent dropout
  Matrix outputs;       // T x units, what the layer emits
};

// i, f, o = logistic; candidate = tanh; c_t = f*c_{t-1} + i*g; h_t = o*tanh(c_t).
class Lstm {
 public:
  Lstm() = default;
  Lstm(const std::string& name, std::size_t input_dim, std::size_t units);

  std::size_t input_dim() const { return w_input.value.rows(); }
  std::size_t units() const { return w_recurrent.value.rows(); }

  // Glorot-uniform input weights, orthogonal recurrent blocks, forget bias 1.
  void initialize(Rng& rng);

  // `dropout_rng` == nullptr means inference: no masks are drawn.
  LstmCache forward(const Matrix& inputs, const DropoutSpec& dropout, Rng* dropout_rng) const;
  // Accumulates parameter gradients; returns d inputs.
  Matrix backward(const LstmCache& cache, const Matrix& d_outputs);

  std::vector<Parameter*> parameters() { return {&w_input, &w_recurrent, &bias}; }

  Parameter w_input;      // in x 4*units
  Parameter w_recurrent;  // units x 4*units
  Parameter bias;         // 1 x 4*units
};

// Forward and backward LSTMs over the same sequence, outputs concatenated.
class BiLstm {
 public:
  struct Cache {
    LstmCache forward;
    LstmCache backward;  // over the reversed sequence
    Matrix outputs;      // T x 2*units
  };

  BiLstm() = default;
  BiLstm(const std::string& name, std::size_t input_dim, std::size_t units);

  std::size_t units() const { return fwd.units(); }
  std::size_t output_dim() const { return 2 * fwd.units(); }

  void initialize(Rng& rng);
  Cache forward(const Matrix& inputs, const DropoutSpec& dropout, Rng* dropout_rng) const;
  Matrix backward(const Cache& cache, const Matrix& d_outputs);
  std::vector<Parameter*> parameters();

  Lstm fwd;
  Lstm bwd;
};

Matrix reverse_rows(const Matrix& m);

// ---------------------------------------------------------------------------
// Character encoders

inline constexpr std::size_t kCharEmbeddingDim = 30;
inline constexpr std::size_t kCharCnnFilters = 30;
inline constexpr std::size_t kCharCnnWidth = 3;
inline constexpr std::size_t kCharLstmUnits = 25;

// Convolution over character trigrams followed by max-over-time pooling.
class CharCnn {
 public:
  struct Cache {
    Matrix padded;                 // max(L, width) x dim
    std::size_t length = 0;        // original L
    std::vector<std::size_t> argmax;  // winning window per filter
    std::vector<double> output;
  };

  CharCnn() = default;
  CharCnn(const std::string& name, std::size_t char_dim = kCharEmbeddingDim,
          std::size_t filters = kCharCnnFilters, std::size_t width = kCharCnnWidth);

  std::size_t output_dim() const { return filters.value.cols(); }
  std::size_t width() const { return width_; }

  void initialize(Rng& rng);
  Cache forward(const Matrix& chars) const;
  Matrix backward(const Cache& cache, std::span<const double> d_output);
  std::vector<Parameter*> parameters() { return {&filters, &bias}; }

  Parameter filters;  // (width*dim) x n_filters
  Parameter bias;     // 1 x n_filters

 private:
  std::size_t width_ = kCharCnnWidth;
};

// Final forward state and final backward state (position 0) of a character BiLSTM.
class CharBiLstm {
 public:
  struct Cache {
    BiLstm::Cache bilstm;
    std::vector<double> output;
  };

  CharBiLstm() = default;
  CharBiLstm(const std::string& name, std::size_t char_dim = kCharEmbeddingDim,
             std::size_t units = kCharLstmUnits);

  std::size_t output_dim() const { return lstm.output_dim(); }
  void initialize(Rng& rng) { lstm.initialize(rng); }
  Cache forward(const Matrix& chars) const;
  Matrix backward(const Cache& cache, std::span<const double> d_output);
  std::vector<Parameter*> parameters() { return lstm.parameters(); }

  BiLstm lstm;
};

// ---------------------------------------------------------------------------
// Output layers

class Dense {
 public:
  Dense() = default;
  Dense(const std::string& name, std::size_t input_dim, std::size_t output_dim);

  std::size_t input_dim() const { return weights.value.rows(); }
  std::size_t output_dim() const { return weights.value.cols(); }

  void initialize(Rng& rng);
  Matrix forward(const Matrix& inputs) const;
  Matrix backward(const Matrix& inputs, const Matrix& d_outputs);
  std::vector<Parameter*> parameters() { return {&weights, &bias}; }

  Parameter weights;  // in x out
  Parameter bias;     // 1 x out
};

struct SoftmaxResult {
  double loss = 0.0;          // mean per-token cross-entropy
  Matrix probabilities;       // T x K
  Matrix d_logits;            // gradient of `loss`
  std::vector<std::size_t> predictions;
};

// Row-wise softmax; labels may be empty (inference: no loss or gradient).
SoftmaxResult softmax_cross_entropy(const Matrix& logits, std::span<const std::size_t> labels);

struct ViterbiResult {
  std::vector<std::size_t> path;
  double score = 0.0;
};

struct CrfLossResult {
  double loss = 0.0;  // log Z - score(gold)
  double log_partition = 0.0;
  Matrix d_emissions;
};

// Linear-chain CRF over K tags with virtual START (index K) and END (K+1)
// states; transitions(i, j) scores moving from tag i to tag j.
class Crf {
 public:
  static constexpr double kImpossible = -1e4;

  Crf() = default;
  Crf(const std::string& name, std::size_t num_tags);

  std::size_t num_tags() const { return num_tags_; }
  std::size_t start() const { return num_tags_; }
  std::size_t end() const { return num_tags_ + 1; }

  // Zero for real transitions, kImpossible for into-START and out-of-END.
  void initialize();

  double path_score(const Matrix& emissions, std::span<const std::size_t> path) const;
  double log_partition(const Matrix& emissions) const;
  // Adds grad_scale * d loss / d transitions into the transition gradient.
  CrfLossResult negative_log_likelihood(const Matrix& emissions, std::span<const std::size_t> gold,
                                        double grad_scale = 1.0);
  // Ties resolve toward the lower tag index.
  ViterbiResult viterbi(const Matrix& emissions) const;

  std::vector<Parameter*> parameters() { return {&transitions}; }

  Parameter transitions;  // (K+2) x (K+2)

 private:
  std::size_t num_tags_ = 0;
};

// Fills `m` with Glorot-uniform values for the given fan-in / fan-out.
void glorot_uniform(Matrix& m, std::size_t fan_in, std::size_t fan_out, Rng& rng);
// Fills an n x n block of `m` starting at column `col` with a random orthogonal matrix.
void orthogonal_block(Matrix& m, std::size_t col, Rng& rng);

}  // namespace seqtag
