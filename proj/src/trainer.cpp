#include "seqtag/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "seqtag/error.hpp"
#include "seqtag/optim.hpp"

namespace seqtag {

namespace {

// Stream ids for Rng::derive; 1 and 2 are used by model construction.
constexpr std::uint64_t kShuffleStream = 3;
constexpr std::uint64_t kDropoutStream = 4;
constexpr std::uint64_t kAuxStream = 5;

double interpolated_quantile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

std::vector<Matrix> snapshot(TaggerModel& model) {
  std::vector<Matrix> values;
  for (auto* p : model.parameters()) values.push_back(p->value);
  return values;
}

void restore(TaggerModel& model, const std::vector<Matrix>& values) {
  auto params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = values[i];
}

double learning_rate_for(const NetworkConfig& config, std::size_t epoch) {
  return config.lr_schedule ? config.lr_schedule->at(epoch) : config.optimizer.learning_rate;
}

// One optimizer update of head `h` on a batch; returns the summed sentence loss.
double train_batch(TaggerModel& model, const std::vector<Sentence>& split, const std::vector<std::size_t>& batch,
                   std::size_t h, const std::vector<Parameter*>& params, Optimizer& optimizer, double lr,
                   Rng& dropout_rng) {
  for (auto* p : params) p->zero_grad();
  const double scale = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (auto i : batch) total += model.accumulate_gradients(split[i], h, scale, &dropout_rng);
  apply_policy(params, model.config().gradient_policy);
  optimizer.step(params, lr);
  return total;
}

class EpochLoop {
 public:
  EpochLoop(TaggerModel& model, const TaggedCorpus& corpus, const TrainOptions& options)
      : model_(model), corpus_(corpus), options_(options), stopper_(model.config().patience, model.config().max_epochs) {
    if (corpus.train.empty()) throw Error("training split is empty");
    if (corpus.dev.empty() || corpus.test.empty()) throw Error("training needs dev and test splits");
    report_.task = corpus.task_name;
    report_.config_fingerprint = fingerprint(model.config());
  }

  // `run_epoch(epoch, lr)` trains one epoch and returns the mean main loss.
  template <typename F>
  TrainReport run(F&& run_epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<Matrix> best;
    try {
      for (;;) {
        const std::size_t epoch = stopper_.epochs_seen() + 1;
        EpochRecord rec;
        rec.epoch = epoch;
        rec.learning_rate = learning_rate_for(model_.config(), epoch);
        rec.train_loss = run_epoch(epoch, rec.learning_rate);
        if (!std::isfinite(rec.train_loss)) throw NumericError("non-finite epoch loss");
        rec.dev_score = evaluate(model_, corpus_.dev, 0).score;
        rec.test_score = evaluate(model_, corpus_.test, 0).score;
        if (options_.track_train_accuracy) rec.train_accuracy = evaluate(model_, corpus_.train, 0).accuracy;
        report_.epochs.push_back(rec);
        if (options_.on_epoch) options_.on_epoch(rec);
        const bool stop = stopper_.update(rec.dev_score);
        if (stopper_.improved_last()) {
          best = snapshot(model_);
          report_.test_at_best_dev = rec.test_score;
        }
        if (stop) break;
      }
      report_.best_dev_epoch = stopper_.best_epoch();
      report_.best_dev_score = stopper_.best_score();
      if (!best.empty()) restore(model_, best);
    } catch (const NumericError& e) {
      report_.diverged = true;
      report_.divergence = e.what();
      report_.best_dev_epoch = 0;
      report_.best_dev_score = 0.0;
      report_.test_at_best_dev = 0.0;
    }
    report_.epochs_run = report_.epochs.size();
    report_.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report_;
  }

 private:
  TaggerModel& model_;
  const TaggedCorpus& corpus_;
  const TrainOptions& options_;
  EarlyStopping stopper_;
  TrainReport report_;
};

}  // namespace

EarlyStopping::EarlyStopping(std::size_t patience, std::size_t max_epochs)
    : patience_(patience), max_epochs_(max_epochs) {
  if (patience == 0 || max_epochs == 0) throw ConfigError("patience and max_epochs must be positive");
}

bool EarlyStopping::update(double dev_score) {
  ++epoch_;
  if (best_epoch_ == 0 || dev_score > best_score_) {
    best_score_ = dev_score;
    best_epoch_ = epoch_;
  }
  return epoch_ - best_epoch_ >= patience_ || epoch_ >= max_epochs_;
}

nlohmann::json to_json(const TrainReport& r, bool with_time) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : r.epochs) {
    nlohmann::json j{{"epoch", e.epoch},
                     {"learning_rate", e.learning_rate},
                     {"train_loss", e.train_loss},
                     {"dev_score", e.dev_score},
                     {"test_score", e.test_score}};
    if (e.train_accuracy) j["train_accuracy"] = *e.train_accuracy;
    epochs.push_back(std::move(j));
  }
  nlohmann::json j{{"task", r.task},
                   {"epochs", epochs},
                   {"best_dev_epoch", r.best_dev_epoch},
                   {"best_dev_score", r.best_dev_score},
                   {"test_at_best_dev", r.test_at_best_dev},
                   {"epochs_run", r.epochs_run},
                   {"diverged", r.diverged},
                   {"config_fingerprint", r.config_fingerprint}};
  if (r.diverged) j["divergence"] = r.divergence;
  if (with_time) j["wall_seconds"] = r.wall_seconds;
  return j;
}

TrainReport train_single(TaggerModel& model, const TaggedCorpus& corpus, const TrainOptions& options) {
  if (model.head(0).spec.task != corpus.task_name) throw Error("model head 0 does not match the corpus task");
  const auto& config = model.config();
  BatchIterator batches(corpus.train.size(), config.batch_size, Rng::derive(config.seed, kShuffleStream).next());
  Rng dropout_rng = Rng::derive(config.seed, kDropoutStream);
  Optimizer optimizer(config.optimizer);
  const auto params = model.parameters_for_head(0);

  EpochLoop loop(model, corpus, options);
  return loop.run([&](std::size_t, double lr) {
    double total = 0.0;
    for (const auto& batch : batches.next_epoch()) {
      total += train_batch(model, corpus.train, batch, 0, params, optimizer, lr, dropout_rng);
    }
    return total / static_cast<double>(corpus.train.size());
  });
}

MtlScheduler::MtlScheduler(std::size_t main_size, std::size_t aux_size, std::size_t batch_size, std::uint64_t seed)
    : main_(main_size, batch_size, Rng::derive(seed, kShuffleStream).next()),
      aux_size_(aux_size),
      rng_(Rng::derive(seed, kAuxStream)) {
  if (main_size == 0 || aux_size == 0) throw Error("multi-task schedule needs non-empty training splits");
}

std::size_t MtlScheduler::next_aux() {
  if (aux_cursor_ == aux_order_.size()) {
    aux_order_.resize(aux_size_);
    for (std::size_t i = 0; i < aux_size_; ++i) aux_order_[i] = i;
    rng_.shuffle(std::span<std::size_t>(aux_order_));
    aux_cursor_ = 0;
  }
  return aux_order_[aux_cursor_++];
}

std::vector<ScheduledBatch> MtlScheduler::next_epoch() {
  std::vector<ScheduledBatch> out;
  for (auto& batch : main_.next_epoch()) {
    ScheduledBatch aux{MtlTask::aux, {}};
    for (std::size_t i = 0; i < batch.size(); ++i) aux.indices.push_back(next_aux());
    out.push_back({MtlTask::main, std::move(batch)});
    out.push_back(std::move(aux));
  }
  return out;
}

std::vector<ScheduledBatch> mtl_schedule(std::size_t main_size, std::size_t aux_size, std::size_t batch_size,
                                         std::uint64_t seed) {
  return MtlScheduler(main_size, aux_size, batch_size, seed).next_epoch();
}

TrainReport train_multi(TaggerModel& model, const TaggedCorpus& main, const TaggedCorpus& aux,
                        const TrainOptions& options) {
  if (model.num_heads() != 2) throw Error("multi-task training needs a model with two heads");
  if (model.head(0).spec.task != main.task_name || model.head(1).spec.task != aux.task_name) {
    throw Error("model heads do not match the main and auxiliary tasks");
  }
  const auto& config = model.config();
  MtlScheduler scheduler(main.train.size(), aux.train.size(), config.batch_size, config.seed);
  Rng dropout_rng = Rng::derive(config.seed, kDropoutStream);
  // Separate optimizer state per task, each over that task's parameter subset.
  Optimizer main_opt(config.optimizer), aux_opt(config.optimizer);
  const auto main_params = model.parameters_for_head(0);
  const auto aux_params = model.parameters_for_head(1);

  EpochLoop loop(model, main, options);
  return loop.run([&](std::size_t, double lr) {
    double total = 0.0;
    for (const auto& sb : scheduler.next_epoch()) {
      if (sb.task == MtlTask::main) {
        total += train_batch(model, main.train, sb.indices, 0, main_params, main_opt, lr, dropout_rng);
      } else {
        train_batch(model, aux.train, sb.indices, 1, aux_params, aux_opt, lr, dropout_rng);
      }
    }
    return total / static_cast<double>(main.train.size());
  });
}

SeedSensitivity summarize_pairwise(std::vector<double> scores) {
  SeedSensitivity s;
  std::vector<double> diffs;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    for (std::size_t j = i + 1; j < scores.size(); ++j) diffs.push_back(std::abs(scores[i] - scores[j]));
  }
  s.scores = std::move(scores);
  if (!diffs.empty()) {
    s.max_difference = *std::max_element(diffs.begin(), diffs.end());
    s.median_difference = interpolated_quantile(diffs, 0.5);
    s.p95_difference = interpolated_quantile(diffs, 0.95);
  }
  return s;
}

SeedSensitivity seed_sensitivity(const NetworkConfig& config, const TaggedCorpus& corpus,
                                 const EmbeddingTable& embeddings, const std::vector<std::uint64_t>& seeds) {
  std::vector<double> scores;
  for (auto seed : seeds) {
    NetworkConfig c = config;
    c.seed = seed;
    TaggerModel model = build_model(c, corpus, embeddings);
    scores.push_back(train_single(model, corpus).test_at_best_dev);
  }
  auto s = summarize_pairwise(std::move(scores));
  s.seeds = seeds;
  return s;
}

}  // namespace seqtag
