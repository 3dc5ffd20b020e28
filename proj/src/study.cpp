#include "seqtag/study.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

#include "seqtag/error.hpp"

namespace seqtag {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Space and sampling

HyperparameterSpace HyperparameterSpace::full() {
  HyperparameterSpace s;
  auto list = [](const auto& values) {
    std::vector<json> out;
    for (const auto& v : values) out.emplace_back(v);
    return out;
  };
  s.knobs["char_rep"] = list(std::vector<std::string>{"none", "cnn", "lstm"});
  s.knobs["classifier"] = list(std::vector<std::string>{"softmax", "crf"});
  s.knobs["dropout"] = list(std::vector<std::string>{"none", "naive", "variational"});
  s.knobs["dropout_output"] = list(space::kDropoutFractions);
  s.knobs["dropout_recurrent"] = list(space::kDropoutFractions);
  s.knobs["layers"] = list(space::kLayers);
  s.knobs["units"] = list(space::kUnits);
  s.knobs["optimizer"] = list(std::vector<std::string>{"sgd", "adagrad", "adadelta", "rmsprop", "adam", "nadam"});
  s.knobs["gradient_policy"] = list(std::vector<std::string>{"none", "clip", "normalize"});
  s.knobs["gradient_threshold"] = list(space::kGradientThresholds);
  s.knobs["batch_size"] = list(space::kBatchSizes);
  s.knobs["tag_scheme"] = list(std::vector<std::string>{"BIO", "IOB", "IOBES"});
  return s;
}

HyperparameterSpace HyperparameterSpace::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("space: expected a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (key != "base" && key != "knobs") throw ConfigError("space: unknown field '" + key + "'");
  }
  HyperparameterSpace s = j.contains("knobs") ? HyperparameterSpace{} : full();
  if (j.contains("base")) s.base = config_from_json(j["base"]);
  if (j.contains("knobs")) {
    for (const auto& [knob, values] : j["knobs"].items()) {
      if (!values.is_array() || values.empty()) throw ConfigError("space: knob '" + knob + "' needs a non-empty list");
      s.knobs[knob] = values.get<std::vector<json>>();
    }
  }
  for (const auto& [knob, values] : s.knobs) {
    for (const auto& v : values) apply_knob(s.base, knob, v);
  }
  return s;
}

HyperparameterSpace HyperparameterSpace::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

json HyperparameterSpace::to_json() const {
  json k = json::object();
  for (const auto& [knob, values] : knobs) k[knob] = values;
  return {{"base", seqtag::to_json(base)}, {"knobs", k}};
}

std::string option_label(const json& value) {
  if (value.is_string()) return value.get<std::string>();
  if (value.is_number_float()) {
    std::ostringstream out;
    out << value.get<double>();
    return out.str();
  }
  return value.dump();
}

NetworkConfig apply_knob(const NetworkConfig& config, const std::string& knob, const json& value) {
  if (knob == "seed") return config;
  json j = to_json(config);
  try {
    if (knob == "layers") {
      const auto layers = value.get<std::size_t>();
      auto units = config.units;
      units.resize(layers, units.empty() ? 100 : units.back());
      j["units"] = units;
      j["layers"] = layers;
    } else if (knob == "units") {
      std::vector<std::size_t> units =
          value.is_array() ? value.get<std::vector<std::size_t>>() : std::vector<std::size_t>(config.layers(), value.get<std::size_t>());
      j["layers"] = units.size();
      j["units"] = units;
    } else if (knob == "optimizer") {
      j["optimizer"] = value;
      j.erase("learning_rate");
    } else {
      if (!j.contains(knob)) throw ConfigError("unknown knob '" + knob + "'");
      j[knob] = value;
    }
  } catch (const json::exception& e) {
    throw ConfigError("knob '" + knob + "': bad value " + value.dump());
  }
  return config_from_json(j);
}

NetworkConfig sample_config(const HyperparameterSpace& space, Rng& rng) {
  auto draw = [&](const std::vector<json>& values) -> const json& { return values[rng.below(values.size())]; };
  NetworkConfig c = space.base;
  for (const auto& [knob, values] : space.knobs) {
    if (knob == "units" || knob == "layers" || knob == "seed") continue;
    c = apply_knob(c, knob, draw(values));
  }
  const auto layers_it = space.knobs.find("layers");
  if (layers_it != space.knobs.end()) c = apply_knob(c, "layers", draw(layers_it->second));
  const auto units_it = space.knobs.find("units");
  if (units_it != space.knobs.end()) {
    std::vector<std::size_t> units(c.layers());
    for (;;) {
      for (auto& u : units) u = draw(units_it->second).get<std::size_t>();
      if (std::is_sorted(units.rbegin(), units.rend())) break;
    }
    c = apply_knob(c, "units", json(units));
  }
  return c;
}

std::uint64_t run_seed(std::uint64_t base_seed, std::size_t group, std::size_t option) {
  return base_seed + static_cast<std::uint64_t>(group) * 64 + option;
}

PairedGroup make_paired_group(const HyperparameterSpace& space, const std::string& vary, std::size_t group_id,
                              std::uint64_t base_seed) {
  const auto it = space.knobs.find(vary);
  if (it == space.knobs.end()) throw ConfigError("unknown knob '" + vary + "' (not in the space)");
  if (it->second.size() < 2) throw ConfigError("knob '" + vary + "' needs at least 2 candidates");
  if (it->second.size() > 64) throw ConfigError("knob '" + vary + "' has more than 64 candidates");
  Rng rng = Rng::derive(base_seed, 0x6000 + group_id);
  const NetworkConfig sampled = sample_config(space, rng);

  PairedGroup g;
  g.group_id = group_id;
  std::size_t depth_total = 0;
  if (vary == "layers") {
    const std::size_t choices = (space::kDepthTotalMax - space::kDepthTotalMin) / 6 + 1;
    depth_total = space::kDepthTotalMin + 6 * rng.below(choices);
  }
  for (std::size_t o = 0; o < it->second.size(); ++o) {
    const json& v = it->second[o];
    NetworkConfig c;
    if (vary == "layers") {
      const auto layers = v.get<std::size_t>();
      c = apply_knob(sampled, "units", json(std::vector<std::size_t>(layers, depth_total / layers)));
    } else {
      c = apply_knob(sampled, vary, v);
    }
    c.seed = run_seed(base_seed, group_id, o);
    g.options.push_back(option_label(v));
    g.configs.push_back(std::move(c));
  }
  return g;
}

bool is_paired(const std::vector<NetworkConfig>& configs, const std::string& vary) {
  auto strip = [&](const NetworkConfig& c) {
    json j = to_json(c);
    j.erase("seed");
    if (vary == "layers" || vary == "units") {
      j.erase("layers");
      j.erase("units");
    } else if (vary == "optimizer") {
      j.erase("optimizer");
      j.erase("learning_rate");
    } else {
      j.erase(vary);
    }
    return j;
  };
  for (std::size_t i = 1; i < configs.size(); ++i) {
    if (strip(configs[i]) != strip(configs[0])) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// CSV

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_field(const std::string& value) {
  if (value.find_first_of(",\"\r\n") == std::string::npos) return value;
  std::string out = "\"";
  for (char ch : value) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + '"';
}

std::vector<std::vector<std::string>> parse_csv(std::istream& in, const std::string& source) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, any = false;
  std::size_t line = 1;
  char ch;
  auto end_row = [&] {
    row.push_back(std::move(field));
    field.clear();
    rows.push_back(std::move(row));
    row.clear();
    any = false;
  };
  while (in.get(ch)) {
    if (quoted) {
      if (ch == '"') {
        if (in.peek() == '"') {
          in.get(ch);
          field += '"';
        } else {
          quoted = false;
        }
      } else {
        if (ch == '\n') ++line;
        field += ch;
      }
      continue;
    }
    if (ch == '"') {
      if (!field.empty()) throw ParseError(source, line, "quote inside an unquoted field");
      quoted = any = true;
    } else if (ch == ',') {
      row.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (ch == '\r') {
      continue;
    } else if (ch == '\n') {
      if (any || !field.empty()) end_row();
      ++line;
    } else {
      field += ch;
      any = true;
    }
  }
  if (quoted) throw ParseError(source, line, "unterminated quoted field");
  if (any || !field.empty()) end_row();
  return rows;
}

namespace {

const std::vector<std::string> kResultColumns{"group_id", "option", "seed",     "task",  "score",
                                              "dev_score", "epochs", "diverged", "config"};

template <typename T>
T parse_number(const std::string& text, const std::string& source, std::size_t line, const char* column) {
  try {
    std::size_t used = 0;
    T v;
    if constexpr (std::is_same_v<T, double>) {
      v = std::stod(text, &used);
    } else {
      if (!text.empty() && text[0] == '-') throw std::invalid_argument("negative");
      v = static_cast<T>(std::stoull(text, &used));
    }
    if (used != text.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ParseError(source, line, std::string("bad ") + column + " value '" + text + "'");
  }
}

}  // namespace

void write_results_header(std::ostream& out) {
  for (std::size_t i = 0; i < kResultColumns.size(); ++i) out << (i ? "," : "") << kResultColumns[i];
  out << '\n';
}

void write_result_row(std::ostream& out, const StudyRecord& r) {
  out << r.group_id << ',' << csv_field(r.option) << ',' << r.seed << ',' << csv_field(r.task) << ','
      << format_double(r.score) << ',' << format_double(r.dev_score) << ',' << r.epochs << ','
      << (r.diverged ? 1 : 0) << ',' << csv_field(r.config) << '\n';
}

void write_results(std::ostream& out, const std::vector<StudyRecord>& records) {
  write_results_header(out);
  for (const auto& r : records) write_result_row(out, r);
}

std::vector<StudyRecord> read_results(std::istream& in, const std::string& source) {
  const auto rows = parse_csv(in, source);
  if (rows.empty()) throw ParseError(source, 1, "missing header");
  if (rows[0] != kResultColumns) throw ParseError(source, 1, "unexpected header");
  std::vector<StudyRecord> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& f = rows[i];
    const std::size_t line = i + 1;
    if (f.size() != kResultColumns.size()) {
      throw ParseError(source, line, "expected 9 fields, got " + std::to_string(f.size()));
    }
    StudyRecord r;
    r.group_id = parse_number<std::size_t>(f[0], source, line, "group_id");
    r.option = f[1];
    r.seed = parse_number<std::uint64_t>(f[2], source, line, "seed");
    r.task = f[3];
    r.score = parse_number<double>(f[4], source, line, "score");
    r.dev_score = parse_number<double>(f[5], source, line, "dev_score");
    r.epochs = parse_number<std::size_t>(f[6], source, line, "epochs");
    if (f[7] != "0" && f[7] != "1") throw ParseError(source, line, "bad diverged value '" + f[7] + "'");
    r.diverged = f[7] == "1";
    r.config = f[8];
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<StudyRecord> read_results(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return read_results(in, path.string());
}

ResultsAppender::ResultsAppender(std::filesystem::path path) : path_(std::move(path)) {}

void ResultsAppender::append(const std::vector<StudyRecord>& rows) {
  std::lock_guard lock(mutex_);
  std::error_code ec;
  const bool fresh = !std::filesystem::exists(path_, ec) || std::filesystem::file_size(path_, ec) == 0;
  std::ostringstream buf;
  if (fresh) write_results_header(buf);
  for (const auto& r : rows) write_result_row(buf, r);
  std::ofstream out(path_, std::ios::binary | std::ios::app);
  if (!out) throw Error("cannot write " + path_.string());
  out << buf.str();
  out.flush();
  if (!out) throw Error("error writing " + path_.string());
}

std::set<std::size_t> ResultsAppender::existing_groups() const {
  std::lock_guard lock(mutex_);
  std::set<std::size_t> ids;
  std::error_code ec;
  if (!std::filesystem::exists(path_, ec) || std::filesystem::file_size(path_, ec) == 0) return ids;
  for (const auto& r : read_results(path_)) ids.insert(r.group_id);
  return ids;
}

// ---------------------------------------------------------------------------
// Comparison

GroupedScores group_records(const std::vector<StudyRecord>& records, const std::string& task,
                            std::vector<std::string> options) {
  GroupedScores g;
  if (options.empty()) {
    for (const auto& r : records) {
      if (r.task == task && std::find(options.begin(), options.end(), r.option) == options.end()) {
        options.push_back(r.option);
      }
    }
  }
  g.options = options;
  std::map<std::size_t, std::map<std::string, std::vector<const StudyRecord*>>> by_group;
  for (const auto& r : records) {
    if (r.task == task) by_group[r.group_id][r.option].push_back(&r);
  }
  for (const auto& [id, opts] : by_group) {
    bool complete = true;
    for (const auto& o : options) {
      const auto it = opts.find(o);
      if (it == opts.end() || it->second.size() != 1) complete = false;
    }
    if (!complete || opts.size() != options.size()) {
      g.warnings.push_back("task '" + task + "': group " + std::to_string(id) + " is incomplete and was excluded");
      continue;
    }
    g.group_ids.push_back(id);
    std::vector<double> s;
    std::vector<std::size_t> e;
    for (const auto& o : options) {
      s.push_back(opts.at(o)[0]->score);
      e.push_back(opts.at(o)[0]->epochs);
    }
    g.scores.push_back(std::move(s));
    g.epochs.push_back(std::move(e));
  }
  return g;
}

std::vector<double> win_fractions(const GroupedScores& g) {
  if (g.scores.empty()) throw Error("no complete groups");
  std::vector<double> wins(g.options.size(), 0.0);
  for (const auto& s : g.scores) {
    const double top = *std::max_element(s.begin(), s.end());
    const auto tied = static_cast<double>(std::count(s.begin(), s.end(), top));
    for (std::size_t o = 0; o < s.size(); ++o) {
      if (s[o] == top) wins[o] += 1.0 / tied;
    }
  }
  for (auto& w : wins) w /= static_cast<double>(g.scores.size());
  return wins;
}

std::vector<double> median_delta(const GroupedScores& g, std::size_t best) {
  if (g.scores.empty()) throw Error("no complete groups");
  std::vector<double> out;
  for (std::size_t o = 0; o < g.options.size(); ++o) {
    std::vector<double> d;
    for (const auto& s : g.scores) d.push_back(s[o] - s[best]);
    out.push_back(median(d));
  }
  return out;
}

namespace {

std::vector<double> column(const GroupedScores& g, std::size_t o) {
  std::vector<double> v;
  for (const auto& s : g.scores) v.push_back(s[o]);
  return v;
}

}  // namespace

ComparisonTable compare_options(const GroupedScores& g, const std::string& task) {
  ComparisonTable t;
  t.task = task;
  t.groups = g.scores.size();
  t.warnings = g.warnings;
  const auto wins = win_fractions(g);
  const std::size_t k = g.options.size();
  std::vector<double> medians(k), sigmas(k);
  for (std::size_t o = 0; o < k; ++o) {
    const auto v = column(g, o);
    medians[o] = median(v);
    sigmas[o] = population_stddev(v);
  }
  for (std::size_t o = 1; o < k; ++o) {
    if (wins[o] > wins[t.best] || (wins[o] == wins[t.best] && medians[o] > medians[t.best])) t.best = o;
    if (sigmas[o] < sigmas[t.lowest_sigma]) t.lowest_sigma = o;
  }
  const auto deltas = median_delta(g, t.best);

  bool any_worse = false, any_sigma_worse = false;
  for (std::size_t o = 0; o < k; ++o) {
    OptionRow row;
    row.option = g.options[o];
    row.win_fraction = wins[o];
    const auto v = column(g, o);
    row.mean_score = mean(v);
    row.median_score = medians[o];
    row.sigma = sigmas[o];
    std::vector<double> ep;
    for (const auto& e : g.epochs) ep.push_back(static_cast<double>(e[o]));
    row.median_epochs = median(ep);
    if (o != t.best) {
      row.median_delta = deltas[o];
      std::size_t better = 0, worse = 0;
      for (const auto& s : g.scores) {
        better += s[o] > s[t.best];
        worse += s[o] < s[t.best];
      }
      row.p_binomial = binomial_sign_test(better, better + worse);
      any_worse |= *row.p_binomial < kSignificance;
    }
    if (o != t.lowest_sigma && t.groups >= 2) {
      row.p_brown_forsythe = brown_forsythe({column(g, t.lowest_sigma), v}).p_value;
      any_sigma_worse |= *row.p_brown_forsythe < kSignificance;
    }
    t.rows.push_back(std::move(row));
  }
  for (std::size_t o = 0; o < k; ++o) {
    auto& row = t.rows[o];
    row.dagger = any_worse && (o == t.best || *row.p_binomial >= kSignificance);
    row.sigma_dagger = any_sigma_worse && (o == t.lowest_sigma || *row.p_brown_forsythe >= kSignificance);
  }
  return t;
}

std::vector<ComparisonTable> compare_all(const std::vector<StudyRecord>& records) {
  std::vector<std::string> tasks;
  for (const auto& r : records) {
    if (std::find(tasks.begin(), tasks.end(), r.task) == tasks.end()) tasks.push_back(r.task);
  }
  std::vector<ComparisonTable> out;
  for (const auto& task : tasks) {
    const auto g = group_records(records, task);
    if (g.scores.empty()) continue;
    out.push_back(compare_options(g, task));
  }
  return out;
}

namespace {

std::string percent(double fraction, int decimals) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f%%", decimals, fraction * 100.0);
  return buf;
}

std::string fixed(double v, int decimals) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

const char* kDagger = "\xE2\x80\xA0";

}  // namespace

void write_comparison_csv(std::ostream& out, const std::vector<ComparisonTable>& tables) {
  for (const auto& t : tables) {
    auto line = [&](const std::string& metric, auto cell) {
      out << csv_field(t.task) << ',' << metric;
      for (std::size_t o = 0; o < t.rows.size(); ++o) out << ',' << csv_field(cell(o));
      out << '\n';
    };
    line("option", [&](std::size_t o) { return t.rows[o].option; });
    line("groups", [&](std::size_t) { return std::to_string(t.groups); });
    line("wins", [&](std::size_t o) {
      return percent(t.rows[o].win_fraction, 1) + (t.rows[o].dagger ? kDagger : "");
    });
    line("median_delta", [&](std::size_t o) {
      const auto& d = t.rows[o].median_delta;
      return d ? percent(*d, 2) : std::string();
    });
    line("sigma", [&](std::size_t o) { return fixed(t.rows[o].sigma, 4) + (t.rows[o].sigma_dagger ? kDagger : ""); });
    line("median_epochs", [&](std::size_t o) { return fixed(t.rows[o].median_epochs, 1); });
  }
}

void write_comparison_stats(std::ostream& out, const std::vector<ComparisonTable>& tables) {
  out << "task,option,groups,win_fraction,median_delta,sigma,mean_score,median_score,p_binomial,"
         "p_brown_forsythe,dagger,sigma_dagger,best,median_epochs\n";
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  for (const auto& t : tables) {
    for (std::size_t o = 0; o < t.rows.size(); ++o) {
      const auto& r = t.rows[o];
      out << csv_field(t.task) << ',' << csv_field(r.option) << ',' << t.groups << ',' << format_double(r.win_fraction)
          << ',' << opt(r.median_delta) << ',' << format_double(r.sigma) << ',' << format_double(r.mean_score) << ','
          << format_double(r.median_score) << ',' << opt(r.p_binomial) << ',' << opt(r.p_brown_forsythe) << ','
          << (r.dagger ? 1 : 0) << ',' << (r.sigma_dagger ? 1 : 0) << ',' << (o == t.best ? 1 : 0) << ','
          << format_double(r.median_epochs) << '\n';
    }
  }
}

void print_comparison(std::ostream& out, const std::vector<ComparisonTable>& tables) {
  for (const auto& t : tables) {
    out << t.task << " (" << t.groups << " groups)\n";
    out << std::left << std::setw(16) << "option" << std::setw(12) << "wins" << std::setw(12) << "median d"
        << std::setw(12) << "sigma" << std::setw(12) << "p(sign)" << std::setw(12) << "p(BF)"
        << "epochs\n";
    for (std::size_t o = 0; o < t.rows.size(); ++o) {
      const auto& r = t.rows[o];
      std::string name = r.option + (o == t.best ? " *" : "");
      out << std::setw(16) << name << std::setw(12) << (percent(r.win_fraction, 1) + (r.dagger ? "+" : ""))
          << std::setw(12) << (r.median_delta ? percent(*r.median_delta, 2) : "-") << std::setw(12)
          << (fixed(r.sigma, 4) + (r.sigma_dagger ? "+" : "")) << std::setw(12)
          << (r.p_binomial ? fixed(*r.p_binomial, 4) : "-") << std::setw(12)
          << (r.p_brown_forsythe ? fixed(*r.p_brown_forsythe, 4) : "-") << fixed(r.median_epochs, 1) << '\n';
    }
    for (const auto& w : t.warnings) out << "warning: " << w << '\n';
    out << "(* best option, + best or not significantly different at p < 0.01)\n\n";
  }
}

void write_violin_csv(std::ostream& out, const std::vector<StudyRecord>& records) {
  std::vector<const StudyRecord*> sorted;
  for (const auto& r : records) sorted.push_back(&r);
  std::stable_sort(sorted.begin(), sorted.end(), [](const StudyRecord* a, const StudyRecord* b) {
    return std::tie(a->task, a->option, a->group_id) < std::tie(b->task, b->option, b->group_id);
  });
  out << "task,option,group_id,score\n";
  for (const auto* r : sorted) {
    out << csv_field(r->task) << ',' << csv_field(r->option) << ',' << r->group_id << ',' << format_double(r->score)
        << '\n';
  }
}

// ---------------------------------------------------------------------------
// Units analysis

UnitsAnalysis analyze_units(const std::vector<StudyRecord>& records, std::size_t layers) {
  std::vector<std::pair<double, double>> points;
  std::map<double, std::vector<double>> bins;
  for (const auto& r : records) {
    if (r.diverged) continue;
    const auto c = config_from_string(r.config);
    if (c.layers() != layers) continue;
    double total = 0.0;
    for (auto u : c.units) total += static_cast<double>(u);
    const double x = total / static_cast<double>(c.layers());
    points.emplace_back(x, r.score);
    bins[x].push_back(r.score);
  }
  UnitsAnalysis a;
  a.points = points.size();
  a.fit = poly_fit(points);
  for (const auto& [x, ys] : bins) a.binned_medians.emplace_back(x, median(ys));
  return a;
}

json to_json(const UnitsAnalysis& a) {
  json bins = json::array();
  for (const auto& [x, y] : a.binned_medians) bins.push_back({{"units", x}, {"median_score", y}});
  return {{"a", a.fit.a},
          {"b", a.fit.b},
          {"c", a.fit.c},
          {"x_opt", a.fit.x_opt ? json(*a.fit.x_opt) : json(nullptr)},
          {"x_opt_out_of_range", a.fit.x_opt_out_of_range},
          {"gamma25", a.fit.gamma25},
          {"gamma25_points", a.fit.gamma25 * 100.0},
          {"residual", a.fit.residual},
          {"points", a.points},
          {"binned_medians", bins}};
}

}  // namespace seqtag
