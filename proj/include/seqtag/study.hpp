#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "seqtag/config.hpp"
#include "seqtag/rng.hpp"
#include "seqtag/stats.hpp"

namespace seqtag {

// Candidate values per knob. A knob is a NetworkConfig JSON field name
// ("classifier", "units", "optimizer", ...); "seed" names replicate runs.
struct HyperparameterSpace {
  NetworkConfig base;                               // values of knobs not sampled
  std::map<std::string, std::vector<nlohmann::json>> knobs;

  // Every knob with the full candidate sets of the evaluated space.
  static HyperparameterSpace full();
  static HyperparameterSpace from_json(const nlohmann::json& j);
  static HyperparameterSpace load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
};

// Returns `config` with `knob` set to `value`. "layers" keeps the per-layer
// units pattern, "optimizer" resets the optimizer's settings to its defaults,
// and "seed" is a replicate label that leaves the config unchanged.
NetworkConfig apply_knob(const NetworkConfig& config, const std::string& knob, const nlohmann::json& value);

// Human-readable option label of a knob value ("crf", "2", "0.25").
std::string option_label(const nlohmann::json& value);

// Independent uniform draw per knob; increasing unit sequences are rejected.
NetworkConfig sample_config(const HyperparameterSpace& space, Rng& rng);

// One configuration per candidate of `vary`, identical elsewhere. Varying
// "layers" draws a total u in [60, 300] (divisible by 6) and gives each of the
// L layers u / L units.
struct PairedGroup {
  std::size_t group_id = 0;
  std::vector<std::string> options;
  std::vector<NetworkConfig> configs;
};
PairedGroup make_paired_group(const HyperparameterSpace& space, const std::string& vary, std::size_t group_id,
                              std::uint64_t base_seed);

// Seed of the run for option `o` of group `g`.
std::uint64_t run_seed(std::uint64_t base_seed, std::size_t group, std::size_t option);

// True when the configs differ only in the varied knob (and the run seed).
bool is_paired(const std::vector<NetworkConfig>& configs, const std::string& vary);

struct StudyRecord {
  std::size_t group_id = 0;
  std::string option;
  std::uint64_t seed = 0;
  std::string task;
  double score = 0.0;
  double dev_score = 0.0;
  std::size_t epochs = 0;
  bool diverged = false;
  std::string config;  // canonical JSON

  friend bool operator==(const StudyRecord&, const StudyRecord&) = default;
};

// RFC 4180 CSV with the column order group_id, option, seed, task, score,
// dev_score, epochs, diverged, config.
void write_results_header(std::ostream& out);
void write_result_row(std::ostream& out, const StudyRecord& r);
void write_results(std::ostream& out, const std::vector<StudyRecord>& records);
std::vector<StudyRecord> read_results(std::istream& in, const std::string& source = "<stream>");
std::vector<StudyRecord> read_results(const std::filesystem::path& path);

std::vector<std::vector<std::string>> parse_csv(std::istream& in, const std::string& source = "<stream>");
std::string csv_field(const std::string& value);

// Serialized appends of whole groups to a results file; writes the header
// when the file is new or empty.
class ResultsAppender {
 public:
  explicit ResultsAppender(std::filesystem::path path);
  void append(const std::vector<StudyRecord>& rows);
  std::set<std::size_t> existing_groups() const;

 private:
  std::filesystem::path path_;
  mutable std::mutex mutex_;
};

// Records of one task arranged as complete groups (one score per option).
struct GroupedScores {
  std::vector<std::string> options;
  std::vector<std::size_t> group_ids;
  std::vector<std::vector<double>> scores;  // [group][option]
  std::vector<std::vector<std::size_t>> epochs;
  std::vector<std::string> warnings;
};

// `options` empty: options in order of first appearance.
GroupedScores group_records(const std::vector<StudyRecord>& records, const std::string& task,
                            std::vector<std::string> options = {});

// Per-group winner takes 1; exact ties split equally.
std::vector<double> win_fractions(const GroupedScores& g);
// Median over groups of score(option) - score(best) for every option.
std::vector<double> median_delta(const GroupedScores& g, std::size_t best);

struct OptionRow {
  std::string option;
  double win_fraction = 0.0;
  std::optional<double> median_delta;  // empty for the best option
  double mean_score = 0.0;
  double median_score = 0.0;
  double sigma = 0.0;
  std::optional<double> p_binomial;        // vs the best option
  std::optional<double> p_brown_forsythe;  // vs the lowest-sigma option
  bool dagger = false;
  bool sigma_dagger = false;
  double median_epochs = 0.0;
};

inline constexpr double kSignificance = 0.01;

// The best option and every option not significantly different from it carry
// a dagger, provided at least one option is significantly worse. The same rule
// marks sigmas, with the lowest sigma as reference.
struct ComparisonTable {
  std::string task;
  std::size_t groups = 0;
  std::size_t best = 0;
  std::size_t lowest_sigma = 0;
  std::vector<OptionRow> rows;
  std::vector<std::string> warnings;
};

ComparisonTable compare_options(const GroupedScores& g, const std::string& task);
std::vector<ComparisonTable> compare_all(const std::vector<StudyRecord>& records);

// Table-layout CSV: win %, median delta and sigma rows per task, daggers appended.
void write_comparison_csv(std::ostream& out, const std::vector<ComparisonTable>& tables);
// One row per (task, option) with full-precision numbers.
void write_comparison_stats(std::ostream& out, const std::vector<ComparisonTable>& tables);
void print_comparison(std::ostream& out, const std::vector<ComparisonTable>& tables);
// task, option, group_id, score for violin plots.
void write_violin_csv(std::ostream& out, const std::vector<StudyRecord>& records);

struct UnitsAnalysis {
  PolyFit fit;
  std::vector<std::pair<double, double>> binned_medians;  // (units, median score)
  std::size_t points = 0;
};

// Mean units per LSTM against score for runs with `layers` layers.
UnitsAnalysis analyze_units(const std::vector<StudyRecord>& records, std::size_t layers);
nlohmann::json to_json(const UnitsAnalysis& a);

// %.17g
std::string format_double(double v);

}  // namespace seqtag
