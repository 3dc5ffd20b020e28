#include <algorithm>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "seqtag/cli.hpp"
#include "seqtag/study.hpp"
#include "support.hpp"

using namespace seqtag;
using nlohmann::json;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

const json kTinyConfig = {{"word_dim", 10},  {"char_rep", "none"}, {"units", {25}},     {"layers", 1},
                          {"max_epochs", 2}, {"batch_size", 8},    {"optimizer", "adam"}};

struct Fixture {
  std::filesystem::path dir;
  std::filesystem::path data;
  std::filesystem::path config;

  explicit Fixture(const std::string& name) : dir(testing::scratch_dir(name)) {
    data = dir / "ner";
    testing::write_task_dir(data, segment_corpus(40, 1));
    config = dir / "cfg.json";
    std::ofstream(config) << kTinyConfig.dump();
  }

  std::filesystem::path write(const std::string& name, const std::string& text) const {
    std::ofstream(dir / name) << text;
    return dir / name;
  }
};

std::vector<std::string> sorted_rows(const std::filesystem::path& p) {
  std::vector<std::string> rows;
  for (const auto& r : read_results(p)) {
    std::ostringstream s;
    write_result_row(s, r);
    rows.push_back(s.str());
  }
  std::sort(rows.begin(), rows.end());
  return rows;
}

std::string space_json() {
  return json{{"base", kTinyConfig}, {"knobs", {{"classifier", {"softmax", "crf"}}}}}.dump();
}

}  // namespace

TEST_CASE("train then eval") {
  Fixture f("cli_train");
  const auto ckpt = f.dir / "m.sqtl";
  const auto r = run({"train", "--config", f.config.string(), "--data", f.data.string(), "--out", ckpt.string(),
                      "--report", (f.dir / "report.json").string()});
  REQUIRE(r.code == kExitOk);
  const auto report = json::parse(r.out);
  CHECK(report.at("task") == "ner");
  CHECK(report.at("epochs_run") == 2);
  CHECK(json::parse(testing::slurp(f.dir / "report.json")) == report);
  CHECK(std::filesystem::exists(ckpt));

  const auto e = run({"eval", "--model", ckpt.string(), "--data", (f.data / "test.txt").string(), "--predictions",
                      (f.dir / "pred.txt").string()});
  REQUIRE(e.code == kExitOk);
  const auto ev = json::parse(e.out);
  CHECK(ev.at("f1").get<double>() >= 0.0);
  CHECK(ev.at("score") == report.at("test_at_best_dev"));
  CHECK(std::filesystem::file_size(f.dir / "pred.txt") > 0);
}

TEST_CASE("train rejects bad configs and inputs") {
  Fixture f("cli_bad");
  json bad = kTinyConfig;
  bad["batch_size"] = 7;
  const auto cfg = f.write("bad.json", bad.dump());
  auto r = run({"train", "--config", cfg.string(), "--data", f.data.string()});
  CHECK(r.code == kExitError);
  CHECK(r.err.find("batch_size") != std::string::npos);
  CHECK(r.err.find("{1, 8, 16, 32, 64}") != std::string::npos);

  r = run({"train", "--config", f.config.string(), "--data", f.data.string(), "--embeddings",
           (f.dir / "missing.txt").string()});
  CHECK(r.code == kExitError);
  CHECK(r.err.find("missing.txt") != std::string::npos);

  r = run({"train", "--config", f.config.string(), "--data", (f.dir / "nowhere").string()});
  CHECK(r.code == kExitError);
  r = run({"train", "--config", f.config.string()});
  CHECK(r.code == kExitError);
}

TEST_CASE("a diverging run exits with its own code") {
  Fixture f("cli_diverge");
  json cfg = kTinyConfig;
  cfg["optimizer"] = "sgd";
  cfg["learning_rate"] = 1e300;
  cfg["gradient_policy"] = "none";
  const auto path = f.write("diverge.json", cfg.dump());
  const auto r = run({"train", "--config", path.string(), "--data", f.data.string()});
  CHECK(r.code == kExitDiverged);
  CHECK(json::parse(r.out).at("diverged") == true);
}

TEST_CASE("help and usage") {
  CHECK(run({"--help"}).code == kExitOk);
  CHECK(run({"train", "--help"}).code == kExitOk);
  CHECK(run({}).code == kExitError);
  CHECK(run({"frobnicate"}).code == kExitError);
}

TEST_CASE("sweep, resume, and parallel equivalence") {
  Fixture f("cli_sweep");
  const auto space = f.write("space.json", space_json());
  const auto out = f.dir / "results.csv";
  auto sweep = [&](const std::string& n, const std::string& jobs, const std::filesystem::path& file) {
    return run({"sweep", "--space", space.string(), "--vary", "classifier", "--n", n, "--tasks", f.data.string(),
                "--jobs", jobs, "--out", file.string()});
  };
  auto r = sweep("3", "1", out);
  REQUIRE(r.code == kExitOk);
  CHECK(read_results(out).size() == 6);
  CHECK(json::parse(r.out).at("groups_run") == 3);

  r = sweep("3", "1", out);
  CHECK(json::parse(r.out).at("groups_skipped") == 3);
  CHECK(read_results(out).size() == 6);
  r = sweep("4", "1", out);
  CHECK(json::parse(r.out).at("groups_run") == 1);
  CHECK(read_results(out).size() == 8);

  const auto parallel = f.dir / "parallel.csv";
  REQUIRE(sweep("4", "4", parallel).code == kExitOk);
  CHECK(sorted_rows(parallel) == sorted_rows(out));

  CHECK(run({"sweep", "--space", space.string(), "--vary", "colour", "--n", "1", "--tasks", f.data.string(), "--out",
             (f.dir / "x.csv").string()})
            .code == kExitError);
}

TEST_CASE("compare") {
  Fixture f("cli_compare");
  std::vector<StudyRecord> rs;
  for (std::size_t g = 0; g < 20; ++g) {
    for (auto [opt, score] : {std::pair{"crf", 0.9}, std::pair{"softmax", 0.8}}) {
      StudyRecord r;
      r.group_id = g;
      r.option = opt;
      r.task = "ner";
      r.score = score + 0.001 * static_cast<double>(g);
      r.epochs = 5;
      r.config = canonical_json(NetworkConfig{});
      rs.push_back(r);
    }
  }
  {
    std::ofstream o(f.dir / "results.csv");
    write_results(o, rs);
  }
  const auto r = run({"compare", "--results", (f.dir / "results.csv").string(), "--vary", "classifier", "--out",
                      (f.dir / "table.csv").string(), "--stats", (f.dir / "stats.csv").string(), "--violin",
                      (f.dir / "violin.csv").string()});
  REQUIRE(r.code == kExitOk);
  CHECK(r.out.find("crf") != std::string::npos);
  const auto table = testing::slurp(f.dir / "table.csv");
  CHECK(table.find("100.0%†") != std::string::npos);
  CHECK(testing::slurp(f.dir / "stats.csv").find("ner,crf,20,1,") != std::string::npos);

  {
    std::ofstream o(f.dir / "empty.csv");
    write_results(o, {});
  }
  CHECK(run({"compare", "--results", (f.dir / "empty.csv").string()}).code == kExitError);
  CHECK(run({"compare", "--results", (f.dir / "absent.csv").string()}).code == kExitError);
}

TEST_CASE("analyze-units") {
  Fixture f("cli_units");
  std::vector<StudyRecord> rs;
  std::size_t g = 0;
  for (std::size_t u : {25, 50, 75, 100, 125}) {
    NetworkConfig c;
    c.units = {u};
    StudyRecord r;
    r.group_id = g++;
    r.option = "x";
    r.task = "ner";
    r.score = 0.9 - 1e-5 * (static_cast<double>(u) - 90) * (static_cast<double>(u) - 90);
    r.config = canonical_json(c);
    rs.push_back(r);
  }
  {
    std::ofstream o(f.dir / "results.csv");
    write_results(o, rs);
  }
  const auto r = run({"analyze-units", "--results", (f.dir / "results.csv").string(), "--layers", "1"});
  REQUIRE(r.code == kExitOk);
  CHECK(json::parse(r.out).at("x_opt").get<double>() == doctest::Approx(90.0));
  CHECK(run({"analyze-units", "--results", (f.dir / "results.csv").string(), "--layers", "3"}).code == kExitError);
}

TEST_CASE("convert") {
  Fixture f("cli_convert");
  const auto in = f.write("in.txt", "John B-PER\nSmith I-PER\nvisits O\nParis B-LOC\n\n");
  const auto out = f.dir / "out.txt";
  REQUIRE(run({"convert", "--in", in.string(), "--out", out.string(), "--from", "BIO", "--to", "IOBES"}).code ==
          kExitOk);
  CHECK(testing::slurp(out) == "John\tB-PER\nSmith\tE-PER\nvisits\tO\nParis\tS-LOC\n\n");
  const auto bad = f.write("bad.txt", "a I-PER\nb O\n\n");
  CHECK(run({"convert", "--in", bad.string(), "--out", out.string(), "--from", "BIO", "--to", "IOBES"}).code ==
        kExitError);
  const auto r = run({"convert", "--in", bad.string(), "--out", out.string(), "--from", "BIO", "--to", "BIO",
                      "--repair", "to_begin"});
  CHECK(r.code == kExitOk);
  CHECK(testing::slurp(out) == "a\tB-PER\nb\tO\n\n");
}
