#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "seqtag/nncore.hpp"
#include "seqtag/optim.hpp"
#include "seqtag/tagscheme.hpp"

namespace seqtag {

enum class CharRepresentation { none, cnn, lstm };
enum class Classifier { softmax, crf };

std::string to_string(CharRepresentation c);
std::string to_string(Classifier c);
CharRepresentation parse_char_representation(std::string_view name);
Classifier parse_classifier(std::string_view name);

// Candidate sets of the evaluated hyperparameter space.
namespace space {
inline const std::vector<double> kDropoutFractions{0.0, 0.05, 0.1, 0.25, 0.5};
inline const std::vector<std::size_t> kUnits{25, 50, 75, 100, 125};
inline const std::vector<std::size_t> kLayers{1, 2, 3};
inline const std::vector<std::size_t> kBatchSizes{1, 8, 16, 32, 64};
inline const std::vector<double> kGradientThresholds{1, 3, 5, 10};
// Depth sweeps draw a total u in this range (divisible by 2 and 3) and use u / layers per LSTM.
inline constexpr std::size_t kDepthTotalMin = 60;
inline constexpr std::size_t kDepthTotalMax = 300;
}  // namespace space

// One point of the hyperparameter space plus the run seed.
struct NetworkConfig {
  std::string embedding_path;       // empty: random word embeddings of `word_dim`
  std::size_t word_dim = 50;
  bool freeze_embeddings = false;   // keep pre-trained rows fixed
  bool lowercase_embeddings = false;
  CharRepresentation char_rep = CharRepresentation::cnn;
  Classifier classifier = Classifier::crf;
  DropoutSpec dropout{DropoutKind::variational, 0.25, 0.25};
  std::vector<std::size_t> units{100, 75};  // per BiLSTM layer, bottom first
  OptimizerSettings optimizer = OptimizerSettings::defaults(OptimizerKind::nadam);
  GradientPolicy gradient_policy{GradientPolicyKind::normalize_l2, 1.0};
  std::size_t batch_size = 32;
  TagScheme tag_scheme = TagScheme::BIO;
  RepairStrategy repair = RepairStrategy::to_outside;
  std::uint64_t seed = 1;
  std::optional<LrSchedule> lr_schedule;
  std::size_t max_epochs = 100;
  std::size_t patience = 5;

  std::size_t layers() const { return units.size(); }

  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

// Throws ConfigError naming the field and its allowed set.
void validate(const NetworkConfig& config);

nlohmann::json to_json(const NetworkConfig& config);
// Missing fields take their defaults; unknown fields are rejected. Validates.
NetworkConfig config_from_json(const nlohmann::json& j);
// Sorted keys, no insignificant whitespace.
std::string canonical_json(const NetworkConfig& config);
NetworkConfig config_from_string(const std::string& text);

// Stable 64-bit FNV-1a of the canonical JSON, as 16 hex digits.
std::string fingerprint(const NetworkConfig& config);

}  // namespace seqtag
