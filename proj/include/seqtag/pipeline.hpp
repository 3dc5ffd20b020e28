#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "seqtag/config.hpp"
#include "seqtag/corpus.hpp"
#include "seqtag/embeddings.hpp"
#include "seqtag/study.hpp"
#include "seqtag/trainer.hpp"

namespace seqtag {

// A task directory holding train.txt, dev.txt and test.txt column files.
struct TaskSource {
  std::string name;
  std::filesystem::path dir;
  TagScheme scheme = TagScheme::BIO;  // scheme of the label column; NONE for plain tags
  std::size_t token_column = 0;
  std::size_t label_column = 1;
};

// "dir" or "dir:SCHEME"; the task name is the directory's last component.
TaskSource parse_task_source(const std::string& spec);
RawSplits load_splits(const TaskSource& task);

// Embeddings for a config (empty table when no file is configured).
LoadedEmbeddings load_config_embeddings(const NetworkConfig& config);

// OOV promotion threshold: 50 with pre-trained embeddings, 1 without.
std::size_t promotion_threshold(const NetworkConfig& config);

// Corpus for `task` in the scheme the config trains on.
TaggedCorpus prepare_corpus(const NetworkConfig& config, const std::string& task_name, const RawSplits& raw,
                            TagScheme source_scheme, const LoadedEmbeddings& embeddings);

struct SweepOptions {
  HyperparameterSpace space;
  std::string vary;
  std::size_t groups = 0;
  std::vector<TaskSource> tasks;
  std::size_t jobs = 1;
  std::filesystem::path out;
  std::uint64_t base_seed = 1;
  std::function<void(const std::string&)> log;
};

struct SweepSummary {
  std::size_t groups_run = 0;
  std::size_t groups_skipped = 0;
  std::size_t runs = 0;
  std::size_t diverged = 0;
};

// Runs groups 0..groups-1 not already present in `out`; each group's rows
// (options x tasks) are appended together once all its runs finished.
SweepSummary run_sweep(const SweepOptions& options);

// Jobs default: SEQTAG_THREADS when set to a positive integer, else 1.
std::size_t default_jobs();

}  // namespace seqtag
