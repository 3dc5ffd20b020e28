#include "seqtag/config.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>

#include "seqtag/error.hpp"

namespace seqtag {

using nlohmann::json;

std::string to_string(CharRepresentation c) {
  switch (c) {
    case CharRepresentation::none: return "none";
    case CharRepresentation::cnn: return "cnn";
    case CharRepresentation::lstm: return "lstm";
  }
  return "none";
}

std::string to_string(Classifier c) { return c == Classifier::softmax ? "softmax" : "crf"; }

CharRepresentation parse_char_representation(std::string_view name) {
  if (name == "none") return CharRepresentation::none;
  if (name == "cnn") return CharRepresentation::cnn;
  if (name == "lstm") return CharRepresentation::lstm;
  throw ConfigError("field 'char_rep' = '" + std::string(name) + "' not in {none, cnn, lstm}");
}

Classifier parse_classifier(std::string_view name) {
  if (name == "softmax") return Classifier::softmax;
  if (name == "crf") return Classifier::crf;
  throw ConfigError("field 'classifier' = '" + std::string(name) + "' not in {softmax, crf}");
}

namespace {

template <typename T>
std::string set_string(const std::vector<T>& values) {
  std::ostringstream out;
  out << '{';
  for (std::size_t i = 0; i < values.size(); ++i) out << (i ? ", " : "") << values[i];
  out << '}';
  return out.str();
}

template <typename T>
void require_in(const char* field, T value, const std::vector<T>& allowed) {
  if (std::find(allowed.begin(), allowed.end(), value) == allowed.end()) {
    std::ostringstream msg;
    msg << "field '" << field << "' = " << value << " not in " << set_string(allowed);
    throw ConfigError(msg.str());
  }
}

// Equal units per layer summing to a total in the depth-sweep range.
bool is_depth_sweep_units(const std::vector<std::size_t>& units) {
  if (units.empty()) return false;
  if (!std::all_of(units.begin(), units.end(), [&](std::size_t u) { return u == units[0]; })) return false;
  const std::size_t total = units[0] * units.size();
  return total >= space::kDepthTotalMin && total <= space::kDepthTotalMax && total % 6 == 0;
}

}  // namespace

void validate(const NetworkConfig& c) {
  require_in("layers", c.layers(), space::kLayers);
  if (!is_depth_sweep_units(c.units)) {
    for (auto u : c.units) require_in("units", u, space::kUnits);
  }
  for (std::size_t i = 1; i < c.units.size(); ++i) {
    if (c.units[i] > c.units[i - 1]) {
      throw ConfigError("field 'units': increasing layer sizes are not allowed");
    }
  }
  require_in("dropout_output", c.dropout.p_output, space::kDropoutFractions);
  require_in("dropout_recurrent", c.dropout.p_recurrent, space::kDropoutFractions);
  require_in("batch_size", c.batch_size, space::kBatchSizes);
  if (c.gradient_policy.kind != GradientPolicyKind::none) {
    if (!(c.gradient_policy.threshold > 0.0)) throw ConfigError("field 'gradient_threshold' must be positive");
  }
  if (!(c.optimizer.learning_rate > 0.0)) throw ConfigError("field 'learning_rate' must be positive");
  if (c.embedding_path.empty() && c.word_dim == 0) throw ConfigError("field 'word_dim' must be positive");
  if (c.max_epochs == 0) throw ConfigError("field 'max_epochs' must be positive");
  if (c.patience == 0) throw ConfigError("field 'patience' must be positive");
}

json to_json(const NetworkConfig& c) {
  json j;
  j["embedding_path"] = c.embedding_path;
  j["word_dim"] = c.word_dim;
  j["freeze_embeddings"] = c.freeze_embeddings;
  j["lowercase_embeddings"] = c.lowercase_embeddings;
  j["char_rep"] = to_string(c.char_rep);
  j["classifier"] = to_string(c.classifier);
  j["dropout"] = to_string(c.dropout.kind);
  j["dropout_output"] = c.dropout.p_output;
  j["dropout_recurrent"] = c.dropout.p_recurrent;
  j["layers"] = c.layers();
  j["units"] = c.units;
  j["optimizer"] = to_string(c.optimizer.kind);
  j["learning_rate"] = c.optimizer.learning_rate;
  j["gradient_policy"] = to_string(c.gradient_policy.kind);
  j["gradient_threshold"] = c.gradient_policy.threshold;
  j["batch_size"] = c.batch_size;
  j["tag_scheme"] = to_string(c.tag_scheme);
  j["repair"] = to_string(c.repair);
  j["seed"] = c.seed;
  if (c.lr_schedule) {
    json entries = json::array();
    for (const auto& e : c.lr_schedule->entries()) {
      json item{{"first", e.first_epoch}, {"lr", e.learning_rate}};
      item["last"] = e.last_epoch ? json(*e.last_epoch) : json(nullptr);
      entries.push_back(item);
    }
    j["lr_schedule"] = entries;
  } else {
    j["lr_schedule"] = nullptr;
  }
  j["max_epochs"] = c.max_epochs;
  j["patience"] = c.patience;
  return j;
}

NetworkConfig config_from_json(const json& j) {
  static const std::set<std::string> known{
      "embedding_path", "word_dim",      "freeze_embeddings", "lowercase_embeddings", "char_rep",
      "classifier",     "dropout",       "dropout_output",    "dropout_recurrent",    "layers",
      "units",          "optimizer",     "learning_rate",     "gradient_policy",      "gradient_threshold",
      "batch_size",     "tag_scheme",    "repair",            "seed",                 "lr_schedule",
      "max_epochs",     "patience"};
  if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw ConfigError("unknown configuration field '" + key + "'");
  }
  NetworkConfig c;
  try {
    if (j.contains("embedding_path")) c.embedding_path = j["embedding_path"].get<std::string>();
    if (j.contains("word_dim")) c.word_dim = j["word_dim"].get<std::size_t>();
    if (j.contains("freeze_embeddings")) c.freeze_embeddings = j["freeze_embeddings"].get<bool>();
    if (j.contains("lowercase_embeddings")) c.lowercase_embeddings = j["lowercase_embeddings"].get<bool>();
    if (j.contains("char_rep")) c.char_rep = parse_char_representation(j["char_rep"].get<std::string>());
    if (j.contains("classifier")) c.classifier = parse_classifier(j["classifier"].get<std::string>());
    if (j.contains("dropout")) c.dropout.kind = parse_dropout_kind(j["dropout"].get<std::string>());
    if (j.contains("dropout_output")) c.dropout.p_output = j["dropout_output"].get<double>();
    if (j.contains("dropout_recurrent")) c.dropout.p_recurrent = j["dropout_recurrent"].get<double>();
    if (j.contains("units")) c.units = j["units"].get<std::vector<std::size_t>>();
    if (j.contains("layers")) {
      const auto layers = j["layers"].get<std::size_t>();
      require_in("layers", layers, space::kLayers);
      if (!j.contains("units")) c.units.assign(layers, 100);
      if (layers != c.units.size()) {
        throw ConfigError("field 'layers' = " + std::to_string(layers) + " disagrees with " +
                          std::to_string(c.units.size()) + " entries in 'units'");
      }
    }
    if (j.contains("optimizer")) {
      c.optimizer = OptimizerSettings::defaults(parse_optimizer_kind(j["optimizer"].get<std::string>()));
    }
    if (j.contains("learning_rate")) c.optimizer.learning_rate = j["learning_rate"].get<double>();
    if (j.contains("gradient_policy")) {
      c.gradient_policy.kind = parse_gradient_policy_kind(j["gradient_policy"].get<std::string>());
    }
    if (j.contains("gradient_threshold")) c.gradient_policy.threshold = j["gradient_threshold"].get<double>();
    if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<std::size_t>();
    if (j.contains("tag_scheme")) c.tag_scheme = parse_tag_scheme(j["tag_scheme"].get<std::string>());
    if (j.contains("repair")) c.repair = parse_repair_strategy(j["repair"].get<std::string>());
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("lr_schedule") && !j["lr_schedule"].is_null()) {
      const auto& s = j["lr_schedule"];
      if (s.is_string()) {
        if (s.get<std::string>() != "adam_increased") {
          throw ConfigError("field 'lr_schedule': unknown named schedule '" + s.get<std::string>() + "'");
        }
        c.lr_schedule = LrSchedule::adam_increased();
      } else {
        std::vector<LrScheduleEntry> entries;
        for (const auto& item : s) {
          LrScheduleEntry e;
          e.first_epoch = item.at("first").get<std::size_t>();
          if (item.contains("last") && !item["last"].is_null()) e.last_epoch = item["last"].get<std::size_t>();
          e.learning_rate = item.at("lr").get<double>();
          entries.push_back(e);
        }
        c.lr_schedule = LrSchedule(std::move(entries));
      }
    }
    if (j.contains("max_epochs")) c.max_epochs = j["max_epochs"].get<std::size_t>();
    if (j.contains("patience")) c.patience = j["patience"].get<std::size_t>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed configuration: ") + e.what());
  }
  validate(c);
  return c;
}

std::string canonical_json(const NetworkConfig& config) { return to_json(config).dump(); }

NetworkConfig config_from_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("configuration is not valid JSON: ") + e.what());
  }
  return config_from_json(j);
}

std::string fingerprint(const NetworkConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : canonical_json(config)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace seqtag
