#include "seqtag/pipeline.hpp"

#include <atomic>
#include <cstdlib>
#include <exception>
#include <map>
#include <mutex>
#include <thread>

#include "seqtag/error.hpp"

namespace seqtag {

TaskSource parse_task_source(const std::string& spec) {
  TaskSource t;
  std::string path = spec;
  const auto colon = spec.rfind(':');
  if (colon != std::string::npos && colon + 1 < spec.size()) {
    path = spec.substr(0, colon);
    t.scheme = parse_tag_scheme(spec.substr(colon + 1));
  }
  t.dir = path;
  t.name = std::filesystem::path(path).lexically_normal().filename().string();
  if (t.name.empty()) t.name = std::filesystem::path(path).lexically_normal().parent_path().filename().string();
  if (t.name.empty()) throw Error("cannot derive a task name from '" + spec + "'");
  return t;
}

RawSplits load_splits(const TaskSource& task) {
  RawSplits s;
  s.train = read_conll(task.dir / "train.txt", task.token_column, task.label_column);
  s.dev = read_conll(task.dir / "dev.txt", task.token_column, task.label_column);
  s.test = read_conll(task.dir / "test.txt", task.token_column, task.label_column);
  return s;
}

LoadedEmbeddings load_config_embeddings(const NetworkConfig& config) {
  if (config.embedding_path.empty()) return {};
  EmbeddingLoadOptions options;
  options.lowercase = config.lowercase_embeddings;
  return load_text_embeddings(config.embedding_path, options);
}

std::size_t promotion_threshold(const NetworkConfig& config) { return config.embedding_path.empty() ? 1 : 50; }

TaggedCorpus prepare_corpus(const NetworkConfig& config, const std::string& task_name, const RawSplits& raw,
                            TagScheme source_scheme, const LoadedEmbeddings& embeddings) {
  CorpusOptions options;
  options.source_scheme = source_scheme;
  options.target_scheme = source_scheme == TagScheme::NONE ? TagScheme::NONE : config.tag_scheme;
  options.min_count = promotion_threshold(config);
  return build_corpus(task_name, raw, embeddings.vocab, options);
}

std::size_t default_jobs() {
  if (const char* env = std::getenv("SEQTAG_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  return 1;
}

namespace {

// Corpora and embeddings shared read-only between concurrent runs.
class DataCache {
 public:
  explicit DataCache(const std::vector<TaskSource>& tasks) {
    for (const auto& t : tasks) raw_.emplace(t.name, load_splits(t));
  }

  std::shared_ptr<const LoadedEmbeddings> embeddings(const NetworkConfig& c) {
    std::lock_guard lock(mutex_);
    const std::string key = c.embedding_path + (c.lowercase_embeddings ? "|lower" : "");
    auto& slot = embeddings_[key];
    if (!slot) slot = std::make_shared<const LoadedEmbeddings>(load_config_embeddings(c));
    return slot;
  }

  std::shared_ptr<const TaggedCorpus> corpus(const NetworkConfig& c, const TaskSource& task) {
    auto emb = embeddings(c);
    std::lock_guard lock(mutex_);
    const std::string key = task.name + "|" + to_string(c.tag_scheme) + "|" + c.embedding_path +
                            (c.lowercase_embeddings ? "|lower" : "");
    auto& slot = corpora_[key];
    if (!slot) slot = std::make_shared<const TaggedCorpus>(prepare_corpus(c, task.name, raw_.at(task.name), task.scheme, *emb));
    return slot;
  }

 private:
  std::mutex mutex_;
  std::map<std::string, RawSplits> raw_;
  std::map<std::string, std::shared_ptr<const LoadedEmbeddings>> embeddings_;
  std::map<std::string, std::shared_ptr<const TaggedCorpus>> corpora_;
};

}  // namespace

SweepSummary run_sweep(const SweepOptions& options) {
  if (options.groups == 0) throw ConfigError("sweep needs at least one group");
  if (options.tasks.empty()) throw ConfigError("sweep needs at least one task");
  // Fails early on an unknown knob.
  make_paired_group(options.space, options.vary, 0, options.base_seed);

  ResultsAppender appender(options.out);
  const auto existing = appender.existing_groups();
  std::vector<std::size_t> pending;
  SweepSummary summary;
  for (std::size_t g = 0; g < options.groups; ++g) {
    if (existing.count(g)) {
      ++summary.groups_skipped;
    } else {
      pending.push_back(g);
    }
  }
  DataCache cache(options.tasks);

  std::atomic<std::size_t> next{0};
  std::mutex state_mutex;
  std::exception_ptr failure;
  auto worker = [&] {
    for (;;) {
      {
        std::lock_guard lock(state_mutex);
        if (failure) return;
      }
      const std::size_t i = next.fetch_add(1);
      if (i >= pending.size()) return;
      try {
        const auto group = make_paired_group(options.space, options.vary, pending[i], options.base_seed);
        std::vector<StudyRecord> rows;
        std::size_t diverged = 0;
        for (std::size_t o = 0; o < group.configs.size(); ++o) {
          const auto& config = group.configs[o];
          for (const auto& task : options.tasks) {
            const auto corpus = cache.corpus(config, task);
            const auto emb = cache.embeddings(config);
            TaggerModel model = build_model(config, *corpus, emb->table);
            const TrainReport report = train_single(model, *corpus);
            StudyRecord r;
            r.group_id = group.group_id;
            r.option = group.options[o];
            r.seed = config.seed;
            r.task = task.name;
            r.score = report.diverged ? 0.0 : report.test_at_best_dev;
            r.dev_score = report.diverged ? 0.0 : report.best_dev_score;
            r.epochs = report.epochs_run;
            r.diverged = report.diverged;
            r.config = canonical_json(config);
            diverged += report.diverged;
            rows.push_back(std::move(r));
          }
        }
        appender.append(rows);
        std::lock_guard lock(state_mutex);
        ++summary.groups_run;
        summary.runs += rows.size();
        summary.diverged += diverged;
        if (options.log) options.log("group " + std::to_string(group.group_id) + " done (" + std::to_string(rows.size()) + " runs)");
      } catch (...) {
        std::lock_guard lock(state_mutex);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };

  const std::size_t jobs = std::max<std::size_t>(1, std::min(options.jobs, pending.size()));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (std::size_t j = 0; j < jobs; ++j) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return summary;
}

}  // namespace seqtag
