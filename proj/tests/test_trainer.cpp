#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "seqtag/error.hpp"
#include "seqtag/trainer.hpp"
#include "support.hpp"

using namespace seqtag;

namespace {

NetworkConfig fast_config() {
  NetworkConfig c;
  c.word_dim = 10;
  c.char_rep = CharRepresentation::none;
  c.classifier = Classifier::crf;
  c.units = {25};
  c.dropout = {DropoutKind::variational, 0.0, 0.0};
  c.optimizer = OptimizerSettings::defaults(OptimizerKind::adam);
  c.batch_size = 8;
  c.seed = 5;
  return c;
}

TaggedCorpus with_task_name(const TaggedCorpus& c, const std::string& name) {
  TaggedCorpus out = c;
  out.task_name = name;
  out.label_vocab.clear();
  out.label_vocab[name] = c.labels();
  for (auto* split : {&out.train, &out.dev, &out.test}) {
    for (auto& s : *split) {
      const auto labels = s.labels.at(c.task_name);
      s.labels.clear();
      s.labels[name] = labels;
    }
  }
  return out;
}

double max_train_accuracy(const TrainReport& r) {
  double best = 0.0;
  for (const auto& e : r.epochs) best = std::max(best, e.train_accuracy.value_or(0.0));
  return best;
}

}  // namespace

TEST_CASE("early stopping: plateau after epoch 2") {
  EarlyStopping es(5, 100);
  const std::vector<double> dev{.5, .6, .6, .6, .6, .6, .6};
  for (std::size_t i = 0; i < dev.size(); ++i) CHECK(es.update(dev[i]) == (i + 1 == dev.size()));
  CHECK(es.best_epoch() == 2);
  CHECK(es.epochs_seen() == 7);
  CHECK(es.best_score() == .6);
}

TEST_CASE("early stopping: rising dev runs to the cap") {
  EarlyStopping es(5, 12);
  for (int e = 1; e <= 12; ++e) CHECK(es.update(0.01 * e) == (e == 12));
  CHECK(es.best_epoch() == 12);
  CHECK(es.improved_last());
}

TEST_CASE("early stopping gap stays within the patience window") {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    EarlyStopping es(5, 1000);
    while (!es.update(rng.uniform())) {
    }
    CHECK(es.epochs_seen() - es.best_epoch() >= 1);
    CHECK(es.epochs_seen() - es.best_epoch() <= 6);
  }
}

TEST_CASE("mtl schedule: small aux set is cycled") {
  const auto s = mtl_schedule(64, 16, 32, 1);
  REQUIRE(s.size() == 4);
  std::multiset<std::size_t> aux;
  for (std::size_t i = 0; i < s.size(); ++i) {
    CHECK(s[i].task == (i % 2 == 0 ? MtlTask::main : MtlTask::aux));
    CHECK(s[i].indices.size() == 32);
    if (s[i].task == MtlTask::aux) aux.insert(s[i].indices.begin(), s[i].indices.end());
  }
  for (std::size_t i = 0; i < 16; ++i) CHECK(aux.count(i) >= 1);
}

TEST_CASE("mtl schedule: large aux set is sampled") {
  const auto s = mtl_schedule(64, 640, 32, 2);
  REQUIRE(s.size() == 4);
  std::set<std::size_t> aux;
  for (const auto& b : s) {
    if (b.task == MtlTask::aux) aux.insert(b.indices.begin(), b.indices.end());
  }
  CHECK(aux.size() == 64);
  CHECK(*aux.rbegin() < 640);
}

TEST_CASE("mtl schedule: equal sizes consume both once") {
  const auto s = mtl_schedule(50, 50, 16, 3);
  std::multiset<std::size_t> main, aux;
  std::size_t main_batches = 0, aux_batches = 0;
  for (const auto& b : s) {
    auto& dst = b.task == MtlTask::main ? main : aux;
    (b.task == MtlTask::main ? main_batches : aux_batches)++;
    dst.insert(b.indices.begin(), b.indices.end());
  }
  CHECK(main_batches == 4);
  CHECK(main_batches == aux_batches);
  for (std::size_t i = 0; i < 50; ++i) {
    CHECK(main.count(i) == 1);
    CHECK(aux.count(i) == 1);
  }
}

TEST_CASE("mtl scheduler continues the aux stream across epochs") {
  MtlScheduler sched(8, 12, 4, 4);
  std::multiset<std::size_t> seen;
  for (int epoch = 0; epoch < 3; ++epoch) {
    for (const auto& b : sched.next_epoch()) {
      if (b.task == MtlTask::aux) seen.insert(b.indices.begin(), b.indices.end());
    }
  }
  // 3 epochs x 8 aux sentences = 24 = two full passes over 12.
  for (std::size_t i = 0; i < 12; ++i) CHECK(seen.count(i) == 2);
  CHECK_THROWS_AS(MtlScheduler(0, 3, 4, 1), Error);
}

TEST_CASE("training report invariants and determinism") {
  const auto corpus = testing::segments(60, 3);
  auto cfg = fast_config();
  cfg.max_epochs = 8;
  cfg.patience = 2;
  auto run = [&] {
    auto model = build_model(cfg, corpus, EmbeddingTable{});
    return train_single(model, corpus);
  };
  const auto a = run(), b = run();
  CHECK(to_json(a, false).dump() == to_json(b, false).dump());
  CHECK_FALSE(a.diverged);
  REQUIRE(a.best_dev_epoch >= 1);
  CHECK(a.epochs.size() == a.epochs_run);
  CHECK(a.test_at_best_dev == a.epochs[a.best_dev_epoch - 1].test_score);
  CHECK(a.best_dev_score == a.epochs[a.best_dev_epoch - 1].dev_score);
  for (const auto& e : a.epochs) CHECK(e.dev_score <= a.best_dev_score);
  if (a.epochs_run < cfg.max_epochs) CHECK(a.epochs_run - a.best_dev_epoch == cfg.patience);
  CHECK(a.epochs.back().train_loss < a.epochs.front().train_loss);
  CHECK(a.config_fingerprint == fingerprint(cfg));

  cfg.seed = 6;
  auto other = build_model(cfg, corpus, EmbeddingTable{});
  const auto c = train_single(other, corpus);
  CHECK(to_json(a, false).dump() != to_json(c, false).dump());
}

TEST_CASE("best dev parameters are restored") {
  const auto corpus = testing::segments(60, 4);
  auto cfg = fast_config();
  cfg.max_epochs = 6;
  cfg.patience = 2;
  auto model = build_model(cfg, corpus, EmbeddingTable{});
  const auto report = train_single(model, corpus);
  CHECK(evaluate(model, corpus.dev).score == report.best_dev_score);
  CHECK(evaluate(model, corpus.test).score == report.test_at_best_dev);
}

TEST_CASE("non-finite loss marks the run diverged") {
  const auto corpus = testing::segments(40, 5);
  auto model = build_model(fast_config(), corpus, EmbeddingTable{});
  model.mutable_head(0).dense.bias.value(0, 0) = std::nan("");
  TrainReport report;
  CHECK_NOTHROW(report = train_single(model, corpus));
  CHECK(report.diverged);
  CHECK(report.test_at_best_dev == 0.0);
  CHECK(report.divergence.find(fingerprint(model.config())) != std::string::npos);
  CHECK(to_json(report, false).at("diverged").get<bool>());
}

TEST_CASE("accumulating an aux sentence leaves main-only parameters untouched") {
  const auto main = testing::segments(40, 6);
  const auto aux = with_task_name(main, "chunk");
  auto cfg = fast_config();
  cfg.units = {25, 25, 25};
  auto model = build_multitask_model(cfg, main, aux, EmbeddingTable{}, Supervision::different_level);
  model.zero_grad();
  model.accumulate_gradients(aux.train.front(), 1, 1.0, nullptr);
  auto all_zero = [](const std::vector<Parameter*>& ps) {
    for (auto* p : ps) {
      for (double g : p->grad.values()) {
        if (g != 0.0) return false;
      }
    }
    return true;
  };
  CHECK(all_zero(model.layers()[1].parameters()));
  CHECK(all_zero(model.layers()[2].parameters()));
  CHECK(all_zero(model.mutable_head(0).dense.parameters()));
  CHECK(all_zero(model.mutable_head(0).crf->parameters()));
  CHECK_FALSE(all_zero(model.layers()[0].parameters()));
  CHECK_FALSE(all_zero(model.mutable_head(1).dense.parameters()));
}

TEST_CASE("multi-task training runs and selects on main dev") {
  const auto main = testing::segments(60, 7);
  const auto aux = with_task_name(testing::segments(60, 7), "chunk");
  auto cfg = fast_config();
  cfg.units = {25, 25};
  cfg.max_epochs = 4;
  cfg.patience = 2;
  auto run = [&] {
    auto model = build_multitask_model(cfg, main, aux, EmbeddingTable{}, Supervision::different_level);
    return train_multi(model, main, aux);
  };
  const auto a = run(), b = run();
  CHECK(a.task == "ner");
  CHECK(to_json(a, false).dump() == to_json(b, false).dump());
  CHECK(a.best_dev_score == a.epochs[a.best_dev_epoch - 1].dev_score);
}

TEST_CASE("multi-task training with identical labels matches single-task train accuracy") {
  const auto main = testing::surface_corpus(20, 8);
  const auto aux = with_task_name(main, "pos2");
  auto cfg = fast_config();
  cfg.word_dim = 50;
  cfg.units = {100, 75};
  cfg.max_epochs = 50;
  cfg.patience = 50;
  TrainOptions opts;
  opts.track_train_accuracy = true;
  auto stl_model = build_model(cfg, main, EmbeddingTable{});
  const auto stl = train_single(stl_model, main, opts);
  auto mtl_model = build_multitask_model(cfg, main, aux, EmbeddingTable{}, Supervision::same_level);
  const auto mtl = train_multi(mtl_model, main, aux, opts);
  CHECK(max_train_accuracy(stl) == 1.0);
  CHECK(max_train_accuracy(mtl) == 1.0);
}

TEST_CASE("pairwise seed differences") {
  const auto s = summarize_pairwise({0.5, 0.7, 0.6});
  CHECK(s.max_difference == doctest::Approx(0.2));
  CHECK(s.median_difference == doctest::Approx(0.1));
  CHECK(s.p95_difference <= s.max_difference);
  CHECK(s.p95_difference >= s.median_difference);

  const auto corpus = testing::segments(40, 9);
  auto cfg = fast_config();
  cfg.max_epochs = 2;
  const auto r = seed_sensitivity(cfg, corpus, EmbeddingTable{}, {1, 2, 3});
  CHECK(r.scores.size() == 3);
  CHECK(r.max_difference >= 0.0);
  CHECK(r.median_difference >= 0.0);
}
