#include <algorithm>
#include <cmath>
#include <sstream>
#include <thread>

#include "doctest.h"
#include "seqtag/error.hpp"
#include "seqtag/study.hpp"
#include "support.hpp"

using namespace seqtag;
using nlohmann::json;

namespace {

GroupedScores grouped(std::vector<std::string> options, std::vector<std::vector<double>> scores) {
  GroupedScores g;
  g.options = std::move(options);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    g.group_ids.push_back(i);
    g.epochs.emplace_back(g.options.size(), 10);
  }
  g.scores = std::move(scores);
  return g;
}

StudyRecord record(std::size_t group, const std::string& option, double score, const std::string& task = "ner") {
  StudyRecord r;
  r.group_id = group;
  r.option = option;
  r.seed = group * 64;
  r.task = task;
  r.score = score;
  r.dev_score = score;
  r.epochs = 7;
  r.config = canonical_json(NetworkConfig{});
  return r;
}

}  // namespace

TEST_CASE("sampling is reproducible and respects the space") {
  const auto space = HyperparameterSpace::full();
  Rng a(1), b(1);
  for (int i = 0; i < 200; ++i) {
    const auto x = sample_config(space, a);
    CHECK(x == sample_config(space, b));
    CHECK_NOTHROW(validate(x));
    CHECK(std::is_sorted(x.units.rbegin(), x.units.rend()));
  }
}

TEST_CASE("sampled knob frequencies are uniform") {
  const auto space = HyperparameterSpace::full();
  Rng rng(2);
  const int n = 10000;
  std::map<std::string, int> classifier, optimizer;
  std::map<std::size_t, int> layers;
  for (int i = 0; i < n; ++i) {
    const auto c = sample_config(space, rng);
    classifier[to_string(c.classifier)]++;
    optimizer[to_string(c.optimizer.kind)]++;
    layers[c.layers()]++;
  }
  auto within = [&](int count, double p) {
    const double sd = std::sqrt(n * p * (1 - p));
    return std::abs(count - n * p) < 5 * sd;
  };
  CHECK(classifier.size() == 2);
  for (auto [k, v] : classifier) CHECK(within(v, 0.5));
  CHECK(optimizer.size() == 6);
  for (auto [k, v] : optimizer) CHECK(within(v, 1.0 / 6));
  CHECK(layers.size() == 3);
  for (auto [k, v] : layers) CHECK(within(v, 1.0 / 3));
}

TEST_CASE("optimizer knob uses each method's default rate") {
  const auto c = apply_knob(NetworkConfig{}, "optimizer", "sgd");
  CHECK(c.optimizer.kind == OptimizerKind::sgd);
  CHECK(c.optimizer.learning_rate == 0.1);
  const auto d = apply_knob(NetworkConfig{}, "layers", 3);
  CHECK(d.layers() == 3);
  CHECK(apply_knob(NetworkConfig{}, "seed", 9) == NetworkConfig{});
  CHECK_THROWS_AS(apply_knob(NetworkConfig{}, "colour", "red"), ConfigError);
  CHECK_THROWS_AS(apply_knob(NetworkConfig{}, "batch_size", 7), ConfigError);
}

TEST_CASE("paired groups differ only in the varied knob") {
  const auto space = HyperparameterSpace::full();
  for (const std::string vary : {"classifier", "optimizer", "char_rep", "dropout", "tag_scheme", "batch_size"}) {
    for (std::size_t gid = 0; gid < 20; ++gid) {
      const auto g = make_paired_group(space, vary, gid, 100);
      CHECK(g.options.size() == space.knobs.at(vary).size());
      CHECK(is_paired(g.configs, vary));
      for (std::size_t o = 0; o < g.configs.size(); ++o) CHECK(g.configs[o].seed == run_seed(100, gid, o));
    }
  }
  CHECK(make_paired_group(space, "classifier", 4, 100).configs == make_paired_group(space, "classifier", 4, 100).configs);
  CHECK_THROWS_AS(make_paired_group(space, "colour", 0, 1), ConfigError);
}

TEST_CASE("depth groups keep the total units") {
  const auto space = HyperparameterSpace::full();
  for (std::size_t gid = 0; gid < 30; ++gid) {
    const auto g = make_paired_group(space, "layers", gid, 7);
    REQUIRE(g.configs.size() == 3);
    const std::size_t total = g.configs[0].units[0];
    CHECK(total >= 60);
    CHECK(total <= 300);
    CHECK(total % 6 == 0);
    for (const auto& c : g.configs) {
      CHECK(c.layers() * c.units[0] == total);
      CHECK(std::adjacent_find(c.units.begin(), c.units.end(), std::not_equal_to<>()) == c.units.end());
      CHECK_NOTHROW(validate(c));
    }
    CHECK(is_paired(g.configs, "layers"));
  }
}

TEST_CASE("seed replicates share the configuration") {
  HyperparameterSpace space = HyperparameterSpace::full();
  space.knobs["seed"] = {1, 2, 3};
  const auto g = make_paired_group(space, "seed", 0, 5);
  CHECK(g.options == std::vector<std::string>{"1", "2", "3"});
  CHECK(is_paired(g.configs, "seed"));
  CHECK(g.configs[0].seed != g.configs[1].seed);
}

TEST_CASE("space JSON") {
  const auto s = HyperparameterSpace::from_json(json::parse(R"({"knobs": {"classifier": ["softmax", "crf"]}})"));
  CHECK(s.knobs.size() == 1);
  CHECK(HyperparameterSpace::from_json(json::object()).knobs.size() == HyperparameterSpace::full().knobs.size());
  CHECK_THROWS_AS(HyperparameterSpace::from_json(json::parse(R"({"knobs": {"units": [7]}})")), ConfigError);
  CHECK_THROWS_AS(HyperparameterSpace::from_json(json::parse(R"({"extra": 1})")), ConfigError);
  const auto full = HyperparameterSpace::full();
  CHECK(HyperparameterSpace::from_json(full.to_json()).knobs == full.knobs);
}

TEST_CASE("win fractions") {
  std::vector<std::vector<double>> s;
  for (int i = 0; i < 219; ++i) s.push_back({0.9, 0.8});
  for (int i = 0; i < 11; ++i) s.push_back({0.8, 0.9});
  const auto w = win_fractions(grouped({"crf", "softmax"}, s));
  CHECK(w[0] == doctest::Approx(219.0 / 230.0));
  CHECK(std::round(w[0] * 1000) / 10 == 95.2);
  CHECK(w[0] + w[1] == doctest::Approx(1.0));

  const auto t = win_fractions(grouped({"a", "b", "c"}, {{1, 1, 0}, {0, 1, 0}, {0.5, 0.5, 0.5}}));
  CHECK(t[0] == doctest::Approx(0.5 / 3 + 1.0 / 9));
  CHECK(t[1] == doctest::Approx(0.5 / 3 + 1.0 / 3 + 1.0 / 9));
  CHECK(t[2] == doctest::Approx(1.0 / 9));
  CHECK(t[0] + t[1] + t[2] == doctest::Approx(1.0));
}

TEST_CASE("median delta") {
  const auto g = grouped({"a", "b"}, {{.9, .8}, {.85, .86}, {.7, .6}});
  const auto d = median_delta(g, 0);
  CHECK(d[0] == 0.0);
  CHECK(d[1] == doctest::Approx(-0.1));
  const auto e = median_delta(grouped({"a", "b"}, {{.9, .8}, {.8, .9}}), 0);
  CHECK(e[1] == doctest::Approx(0.0));
}

TEST_CASE("comparison daggers") {
  Rng rng(3);
  std::vector<std::vector<double>> s;
  for (int i = 0; i < 40; ++i) {
    const double base = rng.uniform(0.7, 0.9);
    const double c = base + (i % 2 ? 0.01 : -0.01);
    s.push_back({base, base - 0.05, c});
  }
  const auto t = compare_options(grouped({"a", "b", "c"}, s), "ner");
  CHECK(t.groups == 40);
  CHECK(t.rows[t.best].dagger);
  CHECK_FALSE(t.rows[t.best].median_delta);
  CHECK_FALSE(t.rows[1].dagger);
  CHECK(*t.rows[1].p_binomial < kSignificance);
  const std::size_t other = t.best == 0 ? 2 : 0;
  CHECK(t.rows[other].dagger);
  CHECK(*t.rows[other].p_binomial >= kSignificance);
  double total = 0.0;
  for (const auto& r : t.rows) total += r.win_fraction;
  CHECK(total == doctest::Approx(1.0));

  const auto ties = compare_options(grouped({"a", "b"}, {{.5, .5}, {.6, .6}, {.7, .7}}), "ner");
  CHECK(ties.best == 0);
  for (const auto& r : ties.rows) {
    CHECK_FALSE(r.dagger);
    CHECK_FALSE(r.sigma_dagger);
  }
  CHECK(*ties.rows[1].p_binomial == 1.0);
}

TEST_CASE("grouping drops incomplete groups with a warning") {
  std::vector<StudyRecord> rs{record(0, "crf", .9), record(0, "softmax", .8), record(1, "crf", .7),
                              record(2, "crf", .6), record(2, "softmax", .65)};
  const auto g = group_records(rs, "ner");
  CHECK(g.options == std::vector<std::string>{"crf", "softmax"});
  CHECK(g.group_ids == std::vector<std::size_t>{0, 2});
  CHECK_FALSE(g.warnings.empty());
  const auto tables = compare_all(rs);
  REQUIRE(tables.size() == 1);
  CHECK(tables[0].groups == 2);
}

TEST_CASE("results CSV round trip") {
  std::vector<StudyRecord> rs{record(0, "crf", 0.1 + 0.2), record(0, "soft,max \"q\"", 1.0 / 3.0, "pos")};
  rs[1].diverged = true;
  rs[1].config = "{\"a\":\"x,y\"}\nline";
  std::stringstream ss;
  write_results(ss, rs);
  CHECK(read_results(ss) == rs);
  std::stringstream empty;
  write_results(empty, {});
  const std::string text = empty.str();
  CHECK(std::count(text.begin(), text.end(), '\n') == 1);
  CHECK(text.rfind("group_id,option,seed,task,score", 0) == 0);
  std::stringstream bad("group_id,option\n1,2\n");
  CHECK_THROWS_AS(read_results(bad), ParseError);
}

TEST_CASE("format_double round trips") {
  Rng rng(4);
  for (int i = 0; i < 1000; ++i) {
    const double v = rng.normal() * std::pow(10.0, rng.uniform(-10, 10));
    CHECK(std::stod(format_double(v)) == v);
  }
}

TEST_CASE("concurrent appends keep groups whole") {
  const auto path = testing::scratch_dir("appender") / "results.csv";
  ResultsAppender app(path);
  std::vector<std::thread> threads;
  for (std::size_t t = 0; t < 8; ++t) {
    threads.emplace_back([&, t] {
      for (std::size_t i = 0; i < 20; ++i) {
        const std::size_t gid = t * 100 + i;
        app.append({record(gid, "a", 0.5), record(gid, "b", 0.6), record(gid, "c", 0.7)});
      }
    });
  }
  for (auto& th : threads) th.join();
  const auto rs = read_results(path);
  REQUIRE(rs.size() == 480);
  for (std::size_t i = 0; i < rs.size(); i += 3) {
    CHECK(rs[i].group_id == rs[i + 1].group_id);
    CHECK(rs[i].group_id == rs[i + 2].group_id);
  }
  CHECK(app.existing_groups().size() == 160);
}

TEST_CASE("units analysis fits score against units") {
  std::vector<StudyRecord> rs;
  std::size_t gid = 0;
  for (std::size_t u : space::kUnits) {
    NetworkConfig c;
    c.units = {u, u};
    for (int rep = 0; rep < 3; ++rep) {
      StudyRecord r = record(gid++, "x", 0.9 - 1e-5 * (double(u) - 80) * (double(u) - 80));
      r.config = canonical_json(c);
      rs.push_back(r);
    }
  }
  StudyRecord single = rs.front();
  single.config = canonical_json(NetworkConfig{.units = {100}});
  rs.push_back(single);
  StudyRecord dead = rs.front();
  dead.diverged = true;
  dead.score = 0;
  rs.push_back(dead);
  const auto a = analyze_units(rs, 2);
  CHECK(a.points == 15);
  REQUIRE(a.fit.x_opt);
  CHECK(*a.fit.x_opt == doctest::Approx(80.0).epsilon(1e-8));
  CHECK(a.binned_medians.size() == 5);
  const auto j = to_json(a);
  CHECK(j.at("gamma25").get<double>() == doctest::Approx(625 * a.fit.a));
}
