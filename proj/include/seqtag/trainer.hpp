#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "seqtag/corpus.hpp"
#include "seqtag/tagger.hpp"

namespace seqtag {

// Stops once `patience` epochs have passed without a strictly better dev
// score, or at the epoch cap.
class EarlyStopping {
 public:
  EarlyStopping(std::size_t patience, std::size_t max_epochs);

  // Records the dev score of `epoch` (1-based, consecutive); true = stop now.
  bool update(double dev_score);

  std::size_t epochs_seen() const { return epoch_; }
  std::size_t best_epoch() const { return best_epoch_; }
  double best_score() const { return best_score_; }
  bool improved_last() const { return best_epoch_ == epoch_; }

 private:
  std::size_t patience_;
  std::size_t max_epochs_;
  std::size_t epoch_ = 0;
  std::size_t best_epoch_ = 0;
  double best_score_ = 0.0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double learning_rate = 0.0;
  double train_loss = 0.0;  // mean sentence loss over the epoch's main-task batches
  double dev_score = 0.0;
  double test_score = 0.0;
  std::optional<double> train_accuracy;  // only with TrainOptions::track_train_accuracy
};

struct TrainReport {
  std::string task;
  std::vector<EpochRecord> epochs;
  std::size_t best_dev_epoch = 0;
  double best_dev_score = 0.0;
  double test_at_best_dev = 0.0;
  std::size_t epochs_run = 0;
  double wall_seconds = 0.0;
  bool diverged = false;
  std::string divergence;  // error text when diverged
  std::string config_fingerprint;
};

// `with_time` = false drops wall time so reports of repeated runs compare byte-equal.
nlohmann::json to_json(const TrainReport& report, bool with_time = true);

struct TrainOptions {
  bool track_train_accuracy = false;
  std::function<void(const EpochRecord&)> on_epoch;
};

// Mini-batch training of head 0 on `corpus` with early stopping on dev; the
// parameters of the best dev epoch are restored on return.
TrainReport train_single(TaggerModel& model, const TaggedCorpus& corpus, const TrainOptions& options = {});

enum class MtlTask { main, aux };

struct ScheduledBatch {
  MtlTask task = MtlTask::main;
  std::vector<std::size_t> indices;
};

// Alternating main/aux batches. An epoch covers the main training split once;
// each aux batch takes as many sentences as the main batch before it from a
// reshuffled aux stream that cycles across epochs.
class MtlScheduler {
 public:
  MtlScheduler(std::size_t main_size, std::size_t aux_size, std::size_t batch_size, std::uint64_t seed);
  std::vector<ScheduledBatch> next_epoch();

 private:
  std::size_t next_aux();

  BatchIterator main_;
  std::size_t aux_size_;
  Rng rng_;
  std::vector<std::size_t> aux_order_;
  std::size_t aux_cursor_ = 0;
};

std::vector<ScheduledBatch> mtl_schedule(std::size_t main_size, std::size_t aux_size, std::size_t batch_size,
                                         std::uint64_t seed);

// Model with heads "main" task (head 0) and "aux" task (head 1). Every batch
// updates only that head's parameters and the shared layers below it; model
// selection and early stopping use the main dev score.
TrainReport train_multi(TaggerModel& model, const TaggedCorpus& main, const TaggedCorpus& aux,
                        const TrainOptions& options = {});

struct SeedSensitivity {
  std::vector<std::uint64_t> seeds;
  std::vector<double> scores;  // test score at best dev per seed
  double max_difference = 0.0;
  double median_difference = 0.0;
  double p95_difference = 0.0;
};

// Trains `config` once per seed and summarizes the pairwise score differences.
SeedSensitivity seed_sensitivity(const NetworkConfig& config, const TaggedCorpus& corpus,
                                 const EmbeddingTable& embeddings, const std::vector<std::uint64_t>& seeds);

// Pairwise absolute differences of `scores`, summarized (max, median, p95).
SeedSensitivity summarize_pairwise(std::vector<double> scores);

}  // namespace seqtag
