#include "seqtag/nncore.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "seqtag/error.hpp"

namespace seqtag {

std::string to_string(DropoutKind k) {
  switch (k) {
    case DropoutKind::none: return "none";
    case DropoutKind::naive: return "naive";
    case DropoutKind::variational: return "variational";
  }
  return "none";
}

DropoutKind parse_dropout_kind(std::string_view name) {
  if (name == "none") return DropoutKind::none;
  if (name == "naive") return DropoutKind::naive;
  if (name == "variational") return DropoutKind::variational;
  throw ConfigError("unknown dropout kind '" + std::string(name) + "'; allowed: {none, naive, variational}");
}

std::vector<double> dropout_mask(std::size_t n, double p, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw ConfigError("dropout fraction must lie in [0, 1)");
  const double keep = 1.0 / (1.0 - p);
  std::vector<double> mask(n);
  for (auto& m : mask) m = rng.bernoulli(p) ? 0.0 : keep;
  return mask;
}

double log_sum_exp(std::span<const double> xs) {
  if (xs.empty()) return -std::numeric_limits<double>::infinity();
  const double m = *std::max_element(xs.begin(), xs.end());
  if (!std::isfinite(m)) return m;
  double acc = 0.0;
  for (double x : xs) acc += std::exp(x - m);
  return m + std::log(acc);
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void glorot_uniform(Matrix& m, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (auto& v : m.values()) v = rng.uniform(-limit, limit);
}

void orthogonal_block(Matrix& m, std::size_t col, Rng& rng) {
  const std::size_t n = m.rows();
  // Gram-Schmidt on Gaussian columns; redraw the (measure-zero) degenerate ones.
  std::vector<std::vector<double>> basis;
  while (basis.size() < n) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.normal();
    for (const auto& b : basis) {
      double dot = 0.0;
      for (std::size_t i = 0; i < n; ++i) dot += v[i] * b[i];
      for (std::size_t i = 0; i < n; ++i) v[i] -= dot * b[i];
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-8) continue;
    for (auto& x : v) x /= norm;
    basis.push_back(std::move(v));
  }
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < n; ++i) m(i, col + j) = basis[j][i];
  }
}

// ---------------------------------------------------------------------------

Lstm::Lstm(const std::string& name, std::size_t input_dim, std::size_t units)
    : w_input(name + ".W", input_dim, 4 * units),
      w_recurrent(name + ".U", units, 4 * units),
      bias(name + ".b", 1, 4 * units) {
  if (units == 0 || input_dim == 0) throw Error("LSTM dimensions must be positive");
}

void Lstm::initialize(Rng& rng) {
  const std::size_t u = units();
  glorot_uniform(w_input.value, input_dim(), 4 * u, rng);
  for (std::size_t g = 0; g < 4; ++g) orthogonal_block(w_recurrent.value, g * u, rng);
  bias.value.fill(0.0);
  for (std::size_t j = 0; j < u; ++j) bias.value(0, kForgetGate * u + j) = 1.0;
}

LstmCache Lstm::forward(const Matrix& inputs, const DropoutSpec& dropout, Rng* dropout_rng) const {
  const std::size_t T = inputs.rows();
  const std::size_t u = units();
  if (T == 0) throw Error("LSTM forward: empty sequence");
  if (inputs.cols() != input_dim()) {
    throw Error("LSTM forward: input width " + std::to_string(inputs.cols()) + ", expected " +
                std::to_string(input_dim()));
  }
  LstmCache c;
  c.inputs = inputs;
  c.prev_hidden = Matrix(T, u);
  c.gates = Matrix(T, 4 * u);
  c.cells = Matrix(T, u);
  c.hidden = Matrix(T, u);

  const bool train = dropout_rng != nullptr;
  const bool naive = train && dropout.kind == DropoutKind::naive && dropout.p_output > 0.0;
  const bool variational = train && dropout.kind == DropoutKind::variational;
  if (variational && dropout.p_recurrent > 0.0) {
    c.recurrent_mask = dropout_mask(u, dropout.p_recurrent, *dropout_rng);
  }
  std::vector<double> fixed_output_mask;
  if (variational && dropout.p_output > 0.0) fixed_output_mask = dropout_mask(u, dropout.p_output, *dropout_rng);
  if (naive || !fixed_output_mask.empty()) c.output_mask = Matrix(T, u);

  std::vector<double> z(4 * u);
  for (std::size_t t = 0; t < T; ++t) {
    auto hp = c.prev_hidden.row(t);
    if (t > 0) {
      const auto h = c.hidden.row(t - 1);
      std::copy(h.begin(), h.end(), hp.begin());
      if (!c.recurrent_mask.empty()) {
        for (std::size_t j = 0; j < u; ++j) hp[j] *= c.recurrent_mask[j];
      }
    }
    std::copy_n(bias.value.row(0).begin(), 4 * u, z.begin());
    add_vec_mat(inputs.row(t), w_input.value, z);
    add_vec_mat(hp, w_recurrent.value, z);

    auto g = c.gates.row(t);
    auto cell = c.cells.row(t);
    auto h = c.hidden.row(t);
    for (std::size_t j = 0; j < u; ++j) {
      const double ig = sigmoid(z[kInputGate * u + j]);
      const double fg = sigmoid(z[kForgetGate * u + j]);
      const double og = sigmoid(z[kOutputGate * u + j]);
      const double cand = std::tanh(z[kCandidate * u + j]);
      g[kInputGate * u + j] = ig;
      g[kForgetGate * u + j] = fg;
      g[kOutputGate * u + j] = og;
      g[kCandidate * u + j] = cand;
      const double c_prev = t > 0 ? c.cells(t - 1, j) : 0.0;
      cell[j] = fg * c_prev + ig * cand;
      h[j] = og * std::tanh(cell[j]);
    }
    if (naive) {
      const auto m = dropout_mask(u, dropout.p_output, *dropout_rng);
      std::copy(m.begin(), m.end(), c.output_mask.row(t).begin());
    } else if (!fixed_output_mask.empty()) {
      std::copy(fixed_output_mask.begin(), fixed_output_mask.end(), c.output_mask.row(t).begin());
    }
  }
  require_finite(c.hidden, "LSTM hidden state");
  c.outputs = c.hidden;
  if (!c.output_mask.empty()) {
    auto out = c.outputs.values();
    const auto m = c.output_mask.values();
    for (std::size_t k = 0; k < out.size(); ++k) out[k] *= m[k];
  }
  return c;
}

Matrix Lstm::backward(const LstmCache& c, const Matrix& d_outputs) {
  const std::size_t T = c.inputs.rows();
  const std::size_t u = units();
  if (d_outputs.rows() != T || d_outputs.cols() != u) throw Error("LSTM backward: gradient shape mismatch");
  Matrix d_inputs(T, input_dim());
  std::vector<double> dh_rec(u, 0.0), dc_next(u, 0.0), dz(4 * u), dh_prev(u);
  for (std::size_t t = T; t-- > 0;) {
    const auto g = c.gates.row(t);
    const auto cell = c.cells.row(t);
    for (std::size_t j = 0; j < u; ++j) {
      double dh = d_outputs(t, j);
      if (!c.output_mask.empty()) dh *= c.output_mask(t, j);
      dh += dh_rec[j];
      const double ig = g[kInputGate * u + j];
      const double fg = g[kForgetGate * u + j];
      const double og = g[kOutputGate * u + j];
      const double cand = g[kCandidate * u + j];
      const double tc = std::tanh(cell[j]);
      const double dc = dh * og * (1.0 - tc * tc) + dc_next[j];
      const double c_prev = t > 0 ? c.cells(t - 1, j) : 0.0;
      dz[kInputGate * u + j] = dc * cand * ig * (1.0 - ig);
      dz[kForgetGate * u + j] = dc * c_prev * fg * (1.0 - fg);
      dz[kOutputGate * u + j] = dh * tc * og * (1.0 - og);
      dz[kCandidate * u + j] = dc * ig * (1.0 - cand * cand);
      dc_next[j] = dc * fg;
    }
    add_outer(c.inputs.row(t), dz, w_input.grad);
    add_outer(c.prev_hidden.row(t), dz, w_recurrent.grad);
    auto db = bias.grad.row(0);
    for (std::size_t k = 0; k < 4 * u; ++k) db[k] += dz[k];
    add_mat_vec(w_input.value, dz, d_inputs.row(t));
    std::fill(dh_prev.begin(), dh_prev.end(), 0.0);
    add_mat_vec(w_recurrent.value, dz, dh_prev);
    for (std::size_t j = 0; j < u; ++j) {
      dh_rec[j] = c.recurrent_mask.empty() ? dh_prev[j] : dh_prev[j] * c.recurrent_mask[j];
    }
  }
  return d_inputs;
}

Matrix reverse_rows(const Matrix& m) {
  Matrix r(m.rows(), m.cols());
  for (std::size_t t = 0; t < m.rows(); ++t) {
    const auto src = m.row(m.rows() - 1 - t);
    std::copy(src.begin(), src.end(), r.row(t).begin());
  }
  return r;
}

BiLstm::BiLstm(const std::string& name, std::size_t input_dim, std::size_t units)
    : fwd(name + ".fwd", input_dim, units), bwd(name + ".bwd", input_dim, units) {}

void BiLstm::initialize(Rng& rng) {
  fwd.initialize(rng);
  bwd.initialize(rng);
}

BiLstm::Cache BiLstm::forward(const Matrix& inputs, const DropoutSpec& dropout, Rng* dropout_rng) const {
  Cache c;
  c.forward = fwd.forward(inputs, dropout, dropout_rng);
  c.backward = bwd.forward(reverse_rows(inputs), dropout, dropout_rng);
  const std::size_t T = inputs.rows(), u = units();
  c.outputs = Matrix(T, 2 * u);
  for (std::size_t t = 0; t < T; ++t) {
    auto out = c.outputs.row(t);
    const auto f = c.forward.outputs.row(t);
    const auto b = c.backward.outputs.row(T - 1 - t);
    std::copy(f.begin(), f.end(), out.begin());
    std::copy(b.begin(), b.end(), out.begin() + static_cast<std::ptrdiff_t>(u));
  }
  return c;
}

Matrix BiLstm::backward(const Cache& c, const Matrix& d_outputs) {
  const std::size_t T = d_outputs.rows(), u = units();
  Matrix d_fwd(T, u), d_bwd(T, u);
  for (std::size_t t = 0; t < T; ++t) {
    const auto d = d_outputs.row(t);
    std::copy_n(d.begin(), u, d_fwd.row(t).begin());
    std::copy_n(d.begin() + static_cast<std::ptrdiff_t>(u), u, d_bwd.row(T - 1 - t).begin());
  }
  Matrix dx = fwd.backward(c.forward, d_fwd);
  const Matrix dx_rev = bwd.backward(c.backward, d_bwd);
  for (std::size_t t = 0; t < T; ++t) {
    auto a = dx.row(t);
    const auto b = dx_rev.row(T - 1 - t);
    for (std::size_t k = 0; k < a.size(); ++k) a[k] += b[k];
  }
  return dx;
}

std::vector<Parameter*> BiLstm::parameters() {
  auto p = fwd.parameters();
  for (auto* q : bwd.parameters()) p.push_back(q);
  return p;
}

// ---------------------------------------------------------------------------

CharCnn::CharCnn(const std::string& name, std::size_t char_dim, std::size_t n_filters, std::size_t width)
    : filters(name + ".filters", width * char_dim, n_filters), bias(name + ".b", 1, n_filters), width_(width) {}

void CharCnn::initialize(Rng& rng) {
  const std::size_t dim = filters.value.rows() / width_;
  glorot_uniform(filters.value, width_ * dim, filters.value.cols(), rng);
  bias.value.fill(0.0);
}

CharCnn::Cache CharCnn::forward(const Matrix& chars) const {
  const std::size_t dim = filters.value.rows() / width_;
  if (chars.rows() == 0) throw Error("char CNN: empty word");
  if (chars.cols() != dim) throw Error("char CNN: embedding width mismatch");
  Cache c;
  c.length = chars.rows();
  c.padded = Matrix(std::max(chars.rows(), width_), dim);
  std::copy(chars.values().begin(), chars.values().end(), c.padded.values().begin());
  const std::size_t windows = c.padded.rows() - width_ + 1;
  const std::size_t nf = output_dim();
  c.output.assign(nf, -std::numeric_limits<double>::infinity());
  c.argmax.assign(nf, 0);
  std::vector<double> conv(nf);
  for (std::size_t w = 0; w < windows; ++w) {
    std::copy_n(bias.value.row(0).begin(), nf, conv.begin());
    // Rows w..w+width-1 are contiguous in row-major storage: one flat window.
    const std::span<const double> window(c.padded.values().data() + w * dim, width_ * dim);
    add_vec_mat(window, filters.value, conv);
    for (std::size_t f = 0; f < nf; ++f) {
      if (conv[f] > c.output[f]) {
        c.output[f] = conv[f];
        c.argmax[f] = w;
      }
    }
  }
  return c;
}

Matrix CharCnn::backward(const Cache& c, std::span<const double> d_output) {
  const std::size_t dim = filters.value.rows() / width_;
  const std::size_t nf = output_dim();
  Matrix d_padded(c.padded.rows(), dim);
  for (std::size_t f = 0; f < nf; ++f) {
    const double d = d_output[f];
    if (d == 0.0) continue;
    const std::size_t w = c.argmax[f];
    const double* window = c.padded.values().data() + w * dim;
    double* d_window = d_padded.values().data() + w * dim;
    for (std::size_t k = 0; k < width_ * dim; ++k) {
      filters.grad(k, f) += window[k] * d;
      d_window[k] += filters.value(k, f) * d;
    }
    bias.grad(0, f) += d;
  }
  Matrix d_chars(c.length, dim);
  std::copy_n(d_padded.values().begin(), c.length * dim, d_chars.values().begin());
  return d_chars;
}

CharBiLstm::CharBiLstm(const std::string& name, std::size_t char_dim, std::size_t units)
    : lstm(name, char_dim, units) {}

CharBiLstm::Cache CharBiLstm::forward(const Matrix& chars) const {
  Cache c;
  c.bilstm = lstm.forward(chars, DropoutSpec{}, nullptr);
  const std::size_t L = chars.rows(), u = lstm.units();
  c.output.resize(2 * u);
  // Forward direction's last state, backward direction's last state (= position 0).
  const auto f = c.bilstm.forward.outputs.row(L - 1);
  const auto b = c.bilstm.backward.outputs.row(L - 1);
  std::copy(f.begin(), f.end(), c.output.begin());
  std::copy(b.begin(), b.end(), c.output.begin() + static_cast<std::ptrdiff_t>(u));
  return c;
}

Matrix CharBiLstm::backward(const Cache& c, std::span<const double> d_output) {
  const std::size_t L = c.bilstm.forward.outputs.rows(), u = lstm.units();
  // In BiLstm output coordinates: forward half at row L-1, backward half at row 0.
  Matrix d_out(L, 2 * u);
  for (std::size_t j = 0; j < u; ++j) {
    d_out(L - 1, j) += d_output[j];
    d_out(0, u + j) += d_output[u + j];
  }
  return lstm.backward(c.bilstm, d_out);
}

// ---------------------------------------------------------------------------

Dense::Dense(const std::string& name, std::size_t input_dim, std::size_t output_dim)
    : weights(name + ".W", input_dim, output_dim), bias(name + ".b", 1, output_dim) {}

void Dense::initialize(Rng& rng) {
  glorot_uniform(weights.value, input_dim(), output_dim(), rng);
  bias.value.fill(0.0);
}

Matrix Dense::forward(const Matrix& inputs) const {
  if (inputs.cols() != input_dim()) throw Error("dense layer: input width mismatch");
  Matrix out(inputs.rows(), output_dim());
  for (std::size_t t = 0; t < inputs.rows(); ++t) {
    auto o = out.row(t);
    std::copy_n(bias.value.row(0).begin(), output_dim(), o.begin());
    add_vec_mat(inputs.row(t), weights.value, o);
  }
  return out;
}

Matrix Dense::backward(const Matrix& inputs, const Matrix& d_outputs) {
  Matrix d_inputs(inputs.rows(), input_dim());
  for (std::size_t t = 0; t < inputs.rows(); ++t) {
    const auto d = d_outputs.row(t);
    add_outer(inputs.row(t), d, weights.grad);
    auto db = bias.grad.row(0);
    for (std::size_t k = 0; k < d.size(); ++k) db[k] += d[k];
    add_mat_vec(weights.value, d, d_inputs.row(t));
  }
  return d_inputs;
}

SoftmaxResult softmax_cross_entropy(const Matrix& logits, std::span<const std::size_t> labels) {
  const std::size_t T = logits.rows(), K = logits.cols();
  if (!labels.empty() && labels.size() != T) throw Error("softmax: label count mismatch");
  require_finite(logits, "softmax logits");
  SoftmaxResult r;
  r.probabilities = Matrix(T, K);
  r.predictions.resize(T);
  for (std::size_t t = 0; t < T; ++t) {
    const auto z = logits.row(t);
    const double lse = log_sum_exp(z);
    auto p = r.probabilities.row(t);
    std::size_t best = 0;
    for (std::size_t k = 0; k < K; ++k) {
      p[k] = std::exp(z[k] - lse);
      if (z[k] > z[best]) best = k;
    }
    r.predictions[t] = best;
    if (!labels.empty()) {
      if (labels[t] >= K) throw Error("softmax: label out of range");
      r.loss += lse - z[labels[t]];
    }
  }
  if (!labels.empty() && T > 0) {
    r.loss /= static_cast<double>(T);
    r.d_logits = r.probabilities;
    const double scale = 1.0 / static_cast<double>(T);
    for (std::size_t t = 0; t < T; ++t) {
      r.d_logits(t, labels[t]) -= 1.0;
      for (auto& v : r.d_logits.row(t)) v *= scale;
    }
  }
  return r;
}

// ---------------------------------------------------------------------------

Crf::Crf(const std::string& name, std::size_t num_tags)
    : transitions(name + ".transitions", num_tags + 2, num_tags + 2), num_tags_(num_tags) {
  if (num_tags == 0) throw Error("CRF needs at least one tag");
  initialize();
}

void Crf::initialize() {
  transitions.value.fill(0.0);
  for (std::size_t i = 0; i < num_tags_ + 2; ++i) {
    transitions.value(i, start()) = kImpossible;
    transitions.value(end(), i) = kImpossible;
  }
}

double Crf::path_score(const Matrix& emissions, std::span<const std::size_t> path) const {
  const auto& tr = transitions.value;
  double s = tr(start(), path[0]) + tr(path.back(), end());
  for (std::size_t t = 0; t < path.size(); ++t) {
    s += emissions(t, path[t]);
    if (t > 0) s += tr(path[t - 1], path[t]);
  }
  return s;
}

namespace {

// alpha(t, j): log-sum of all prefixes ending in tag j at position t.
Matrix forward_scores(const Matrix& e, const Matrix& tr, std::size_t start) {
  const std::size_t T = e.rows(), K = e.cols();
  Matrix alpha(T, K);
  std::vector<double> terms(K);
  for (std::size_t j = 0; j < K; ++j) alpha(0, j) = tr(start, j) + e(0, j);
  for (std::size_t t = 1; t < T; ++t) {
    for (std::size_t j = 0; j < K; ++j) {
      for (std::size_t i = 0; i < K; ++i) terms[i] = alpha(t - 1, i) + tr(i, j);
      alpha(t, j) = log_sum_exp(terms) + e(t, j);
    }
  }
  return alpha;
}

}  // namespace

double Crf::log_partition(const Matrix& emissions) const {
  if (emissions.rows() == 0) throw Error("CRF: empty sequence");
  const Matrix alpha = forward_scores(emissions, transitions.value, start());
  const std::size_t T = emissions.rows(), K = num_tags_;
  std::vector<double> terms(K);
  for (std::size_t j = 0; j < K; ++j) terms[j] = alpha(T - 1, j) + transitions.value(j, end());
  return log_sum_exp(terms);
}

CrfLossResult Crf::negative_log_likelihood(const Matrix& e, std::span<const std::size_t> gold,
                                            double grad_scale) {
  const std::size_t T = e.rows(), K = num_tags_;
  if (T == 0) throw Error("CRF: empty sequence");
  if (e.cols() != K) throw Error("CRF: emission width mismatch");
  if (gold.size() != T) throw Error("CRF: gold length mismatch");
  for (auto y : gold) {
    if (y >= K) throw Error("CRF: gold tag out of range");
  }
  require_finite(e, "CRF emissions");
  const auto& tr = transitions.value;
  const Matrix alpha = forward_scores(e, tr, start());

  // beta(t, i): log-sum of all suffixes after position t given tag i at t.
  Matrix beta(T, K);
  std::vector<double> terms(K);
  for (std::size_t i = 0; i < K; ++i) beta(T - 1, i) = tr(i, end());
  for (std::size_t t = T - 1; t-- > 0;) {
    for (std::size_t i = 0; i < K; ++i) {
      for (std::size_t j = 0; j < K; ++j) terms[j] = tr(i, j) + e(t + 1, j) + beta(t + 1, j);
      beta(t, i) = log_sum_exp(terms);
    }
  }
  for (std::size_t j = 0; j < K; ++j) terms[j] = alpha(T - 1, j) + tr(j, end());
  const double log_z = log_sum_exp(terms);

  CrfLossResult r;
  r.log_partition = log_z;
  r.loss = log_z - path_score(e, gold);
  if (!std::isfinite(r.loss)) throw NumericError("non-finite CRF loss");

  // Expected counts minus observed counts.
  auto& g = transitions.grad;
  r.d_emissions = Matrix(T, K);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t j = 0; j < K; ++j) r.d_emissions(t, j) = std::exp(alpha(t, j) + beta(t, j) - log_z);
  }
  const double s = grad_scale;
  for (std::size_t j = 0; j < K; ++j) {
    g(start(), j) += s * r.d_emissions(0, j);
    g(j, end()) += s * r.d_emissions(T - 1, j);
  }
  for (std::size_t t = 0; t + 1 < T; ++t) {
    for (std::size_t i = 0; i < K; ++i) {
      for (std::size_t j = 0; j < K; ++j) {
        g(i, j) += s * std::exp(alpha(t, i) + tr(i, j) + e(t + 1, j) + beta(t + 1, j) - log_z);
      }
    }
  }
  g(start(), gold[0]) -= s;
  g(gold[T - 1], end()) -= s;
  for (std::size_t t = 0; t < T; ++t) {
    r.d_emissions(t, gold[t]) -= 1.0;
    if (t > 0) g(gold[t - 1], gold[t]) -= s;
  }
  return r;
}

ViterbiResult Crf::viterbi(const Matrix& e) const {
  const std::size_t T = e.rows(), K = num_tags_;
  if (T == 0) throw Error("CRF: empty sequence");
  const auto& tr = transitions.value;
  Matrix score(T, K);
  std::vector<std::size_t> back(T * K, 0);
  for (std::size_t j = 0; j < K; ++j) score(0, j) = tr(start(), j) + e(0, j);
  for (std::size_t t = 1; t < T; ++t) {
    for (std::size_t j = 0; j < K; ++j) {
      std::size_t best = 0;
      double best_s = score(t - 1, 0) + tr(0, j);
      for (std::size_t i = 1; i < K; ++i) {
        const double s = score(t - 1, i) + tr(i, j);
        if (s > best_s) {
          best_s = s;
          best = i;
        }
      }
      score(t, j) = best_s + e(t, j);
      back[t * K + j] = best;
    }
  }
  std::size_t last = 0;
  double best_s = score(T - 1, 0) + tr(0, end());
  for (std::size_t j = 1; j < K; ++j) {
    const double s = score(T - 1, j) + tr(j, end());
    if (s > best_s) {
      best_s = s;
      last = j;
    }
  }
  ViterbiResult r;
  r.score = best_s;
  r.path.resize(T);
  r.path[T - 1] = last;
  for (std::size_t t = T - 1; t > 0; --t) r.path[t - 1] = back[t * K + r.path[t]];
  return r;
}

}  // namespace seqtag
