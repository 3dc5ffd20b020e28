#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "seqtag/matrix.hpp"

namespace seqtag {

enum class OptimizerKind { sgd, adagrad, adadelta, rmsprop, adam, nadam };

std::string to_string(OptimizerKind k);
OptimizerKind parse_optimizer_kind(std::string_view name);

struct OptimizerSettings {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 0.001;
  double beta1 = 0.9;    // adam, nadam
  double beta2 = 0.999;  // adam, nadam
  double rho = 0.9;      // rmsprop, adadelta
  double epsilon = 1e-8;

  // Recommended settings of the method's original description. SGD has none;
  // it gets 0.1.
  static OptimizerSettings defaults(OptimizerKind kind);

  friend bool operator==(const OptimizerSettings&, const OptimizerSettings&) = default;
};

class Optimizer {
 public:
  explicit Optimizer(OptimizerSettings settings) : settings_(settings) {}

  const OptimizerSettings& settings() const { return settings_; }
  std::uint64_t steps() const { return step_; }

  // One update of every parameter from its `grad` buffer; rows frozen on a
  // parameter are left untouched.
  void step(const std::vector<Parameter*>& params, double learning_rate);
  void step(const std::vector<Parameter*>& params) { step(params, settings_.learning_rate); }

 private:
  struct Slots {
    Matrix first;   // momentum / accumulated squares
    Matrix second;  // second moment / accumulated updates
  };

  OptimizerSettings settings_;
  std::uint64_t step_ = 0;
  std::vector<Slots> slots_;  // parallel to the parameter list
};

enum class GradientPolicyKind { none, clip_elementwise, normalize_l2 };

std::string to_string(GradientPolicyKind k);
GradientPolicyKind parse_gradient_policy_kind(std::string_view name);

struct GradientPolicy {
  GradientPolicyKind kind = GradientPolicyKind::none;
  double threshold = 1.0;

  friend bool operator==(const GradientPolicy&, const GradientPolicy&) = default;
};

// clip: every component into [-tau, tau]. normalize: if the global L2 norm over
// all gradients exceeds tau, scale every gradient by tau / norm.
void apply_policy(const std::vector<Parameter*>& params, const GradientPolicy& policy);
void apply_policy(std::vector<Matrix*> grads, const GradientPolicy& policy);

double global_l2_norm(const std::vector<Matrix*>& grads);

struct LrScheduleEntry {
  std::size_t first_epoch = 1;
  std::optional<std::size_t> last_epoch;  // nullopt = open-ended
  double learning_rate = 0.0;

  friend bool operator==(const LrScheduleEntry&, const LrScheduleEntry&) = default;
};

class LrSchedule {
 public:
  LrSchedule() = default;
  explicit LrSchedule(std::vector<LrScheduleEntry> entries);

  // 0.01 for epochs 1-3, 0.005 for 4-6, then 0.001.
  static LrSchedule adam_increased();

  double at(std::size_t epoch) const;
  const std::vector<LrScheduleEntry>& entries() const { return entries_; }

  friend bool operator==(const LrSchedule&, const LrSchedule&) = default;

 private:
  std::vector<LrScheduleEntry> entries_;
};

}  // namespace seqtag
