#include "seqtag/optim.hpp"

#include <algorithm>
#include <cmath>

#include "seqtag/error.hpp"

namespace seqtag {

std::string to_string(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::sgd: return "sgd";
    case OptimizerKind::adagrad: return "adagrad";
    case OptimizerKind::adadelta: return "adadelta";
    case OptimizerKind::rmsprop: return "rmsprop";
    case OptimizerKind::adam: return "adam";
    case OptimizerKind::nadam: return "nadam";
  }
  return "sgd";
}

OptimizerKind parse_optimizer_kind(std::string_view name) {
  for (auto k : {OptimizerKind::sgd, OptimizerKind::adagrad, OptimizerKind::adadelta, OptimizerKind::rmsprop,
                 OptimizerKind::adam, OptimizerKind::nadam}) {
    if (name == to_string(k)) return k;
  }
  throw ConfigError("unknown optimizer '" + std::string(name) +
                    "'; allowed: {sgd, adagrad, adadelta, rmsprop, adam, nadam}");
}

OptimizerSettings OptimizerSettings::defaults(OptimizerKind kind) {
  OptimizerSettings s;
  s.kind = kind;
  switch (kind) {
    case OptimizerKind::sgd:
      s.learning_rate = 0.1;
      break;
    case OptimizerKind::adagrad:
      s.learning_rate = 0.01;
      break;
    case OptimizerKind::adadelta:
      s.learning_rate = 1.0;
      s.rho = 0.95;
      s.epsilon = 1e-6;
      break;
    case OptimizerKind::rmsprop:
      s.learning_rate = 0.001;
      s.rho = 0.9;
      break;
    case OptimizerKind::adam:
      s.learning_rate = 0.001;
      break;
    case OptimizerKind::nadam:
      s.learning_rate = 0.002;
      break;
  }
  return s;
}

void Optimizer::step(const std::vector<Parameter*>& params, double lr) {
  if (!(lr > 0.0)) throw Error("learning rate must be positive");
  if (slots_.empty()) {
    for (const auto* p : params) {
      slots_.push_back({Matrix(p->value.rows(), p->value.cols()), Matrix(p->value.rows(), p->value.cols())});
    }
  }
  if (slots_.size() != params.size()) throw Error("optimizer: parameter list changed between steps");
  ++step_;
  const auto& s = settings_;
  const double t = static_cast<double>(step_);
  const double bias1 = 1.0 - std::pow(s.beta1, t);
  const double bias1_next = 1.0 - std::pow(s.beta1, t + 1.0);
  const double bias2 = 1.0 - std::pow(s.beta2, t);

  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    auto& first = slots_[k].first;
    auto& second = slots_[k].second;
    if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols() ||
        first.rows() != p.value.rows() || first.cols() != p.value.cols()) {
      throw Error("optimizer: shape mismatch for " + p.name);
    }
    const std::size_t cols = p.value.cols();
    for (std::size_t r = 0; r < p.value.rows(); ++r) {
      if (!p.row_trainable(r)) continue;
      for (std::size_t c = r * cols; c < (r + 1) * cols; ++c) {
        double& w = p.value.values()[c];
        const double g = p.grad.values()[c];
        double& m = first.values()[c];
        double& v = second.values()[c];
        switch (s.kind) {
          case OptimizerKind::sgd:
            w -= lr * g;
            break;
          case OptimizerKind::adagrad:
            m += g * g;
            w -= lr * g / (std::sqrt(m) + s.epsilon);
            break;
          case OptimizerKind::adadelta: {
            m = s.rho * m + (1.0 - s.rho) * g * g;
            const double dx = std::sqrt(v + s.epsilon) / std::sqrt(m + s.epsilon) * g;
            v = s.rho * v + (1.0 - s.rho) * dx * dx;
            w -= lr * dx;
            break;
          }
          case OptimizerKind::rmsprop:
            m = s.rho * m + (1.0 - s.rho) * g * g;
            w -= lr * g / (std::sqrt(m) + s.epsilon);
            break;
          case OptimizerKind::adam: {
            m = s.beta1 * m + (1.0 - s.beta1) * g;
            v = s.beta2 * v + (1.0 - s.beta2) * g * g;
            w -= lr * (m / bias1) / (std::sqrt(v / bias2) + s.epsilon);
            break;
          }
          case OptimizerKind::nadam: {
            m = s.beta1 * m + (1.0 - s.beta1) * g;
            v = s.beta2 * v + (1.0 - s.beta2) * g * g;
            // Nesterov look-ahead: next step's momentum plus the current gradient.
            const double m_bar = s.beta1 * m / bias1_next + (1.0 - s.beta1) * g / bias1;
            w -= lr * m_bar / (std::sqrt(v / bias2) + s.epsilon);
            break;
          }
        }
      }
    }
  }
}

std::string to_string(GradientPolicyKind k) {
  switch (k) {
    case GradientPolicyKind::none: return "none";
    case GradientPolicyKind::clip_elementwise: return "clip";
    case GradientPolicyKind::normalize_l2: return "normalize";
  }
  return "none";
}

GradientPolicyKind parse_gradient_policy_kind(std::string_view name) {
  if (name == "none") return GradientPolicyKind::none;
  if (name == "clip") return GradientPolicyKind::clip_elementwise;
  if (name == "normalize") return GradientPolicyKind::normalize_l2;
  throw ConfigError("unknown gradient policy '" + std::string(name) + "'; allowed: {none, clip, normalize}");
}

double global_l2_norm(const std::vector<Matrix*>& grads) {
  double sq = 0.0;
  for (const auto* g : grads) {
    for (double v : g->values()) sq += v * v;
  }
  return std::sqrt(sq);
}

void apply_policy(std::vector<Matrix*> grads, const GradientPolicy& policy) {
  for (const auto* g : grads) require_finite(*g, "gradient");
  if (policy.kind != GradientPolicyKind::none && !(policy.threshold > 0.0)) {
    throw ConfigError("gradient threshold must be positive");
  }
  switch (policy.kind) {
    case GradientPolicyKind::none:
      return;
    case GradientPolicyKind::clip_elementwise:
      for (auto* g : grads) {
        for (auto& v : g->values()) v = std::max(-policy.threshold, std::min(policy.threshold, v));
      }
      return;
    case GradientPolicyKind::normalize_l2: {
      const double norm = global_l2_norm(grads);
      if (norm > policy.threshold) {
        const double scale = policy.threshold / norm;
        for (auto* g : grads) {
          for (auto& v : g->values()) v *= scale;
        }
      }
      return;
    }
  }
}

void apply_policy(const std::vector<Parameter*>& params, const GradientPolicy& policy) {
  std::vector<Matrix*> grads;
  grads.reserve(params.size());
  for (auto* p : params) grads.push_back(&p->grad);
  apply_policy(std::move(grads), policy);
}

LrSchedule::LrSchedule(std::vector<LrScheduleEntry> entries) : entries_(std::move(entries)) {
  std::sort(entries_.begin(), entries_.end(),
            [](const auto& a, const auto& b) { return a.first_epoch < b.first_epoch; });
  std::size_t expected = 1;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& e = entries_[i];
    if (e.first_epoch != expected) throw ConfigError("learning-rate schedule must cover epochs contiguously from 1");
    if (!(e.learning_rate > 0.0)) throw ConfigError("learning-rate schedule entries must be positive");
    const bool last = i + 1 == entries_.size();
    if (last != !e.last_epoch.has_value()) {
      throw ConfigError("learning-rate schedule must end with exactly one open-ended range");
    }
    if (e.last_epoch) {
      if (*e.last_epoch < e.first_epoch) throw ConfigError("learning-rate schedule range is empty");
      expected = *e.last_epoch + 1;
    }
  }
}

LrSchedule LrSchedule::adam_increased() {
  return LrSchedule({{1, 3, 0.01}, {4, 6, 0.005}, {7, std::nullopt, 0.001}});
}

double LrSchedule::at(std::size_t epoch) const {
  if (epoch < 1) throw Error("epochs are numbered from 1");
  for (const auto& e : entries_) {
    if (epoch >= e.first_epoch && (!e.last_epoch || epoch <= *e.last_epoch)) return e.learning_rate;
  }
  throw Error("learning-rate schedule is empty");
}

}  // namespace seqtag
