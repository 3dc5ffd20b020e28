#include "seqtag/cli.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "seqtag/error.hpp"
#include "seqtag/pipeline.hpp"
#include "seqtag/study.hpp"
#include "seqtag/tagger.hpp"
#include "seqtag/trainer.hpp"

namespace seqtag {

namespace {

using nlohmann::json;

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

struct TrainArgs {
  std::string config, data, embeddings, out, report, aux_data, supervision = "same_level";
  std::string data_scheme = "BIO", aux_scheme = "BIO";
  std::size_t token_column = 0, label_column = 1;
  std::optional<std::uint64_t> seed;
};

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  NetworkConfig config = config_from_string(read_file(a.config));
  if (!a.embeddings.empty()) config.embedding_path = a.embeddings;
  if (a.seed) config.seed = *a.seed;
  validate(config);
  if (!config.embedding_path.empty() && !std::filesystem::exists(config.embedding_path)) {
    throw Error("embeddings file not found: " + config.embedding_path);
  }
  TaskSource main = parse_task_source(a.data);
  main.scheme = parse_tag_scheme(a.data_scheme);
  main.token_column = a.token_column;
  main.label_column = a.label_column;
  const LoadedEmbeddings embeddings = load_config_embeddings(config);
  for (const auto& w : embeddings.warnings) err << "warning: " << w << '\n';

  std::optional<TaggerModel> model;
  TrainReport report;
  if (a.aux_data.empty()) {
    const TaggedCorpus corpus = prepare_corpus(config, main.name, load_splits(main), main.scheme, embeddings);
    model.emplace(build_model(config, corpus, embeddings.table));
    report = train_single(*model, corpus);
  } else {
    TaskSource aux = parse_task_source(a.aux_data);
    aux.scheme = parse_tag_scheme(a.aux_scheme);
    aux.token_column = a.token_column;
    aux.label_column = a.label_column;
    if (aux.name == main.name) aux.name += "_aux";
    auto target = [&](TagScheme s) { return s == TagScheme::NONE ? TagScheme::NONE : config.tag_scheme; };
    std::vector<TaskData> tasks{
        {main.name, load_splits(main), {main.scheme, target(main.scheme), promotion_threshold(config)}},
        {aux.name, load_splits(aux), {aux.scheme, target(aux.scheme), promotion_threshold(config)}}};
    auto corpora = build_corpora(tasks, embeddings.vocab);
    model.emplace(build_multitask_model(config, corpora[0], corpora[1], embeddings.table,
                                        parse_supervision(a.supervision)));
    report = train_multi(*model, corpora[0], corpora[1]);
  }
  const json j = to_json(report);
  out << j.dump(2) << '\n';
  if (!a.report.empty()) open_out(a.report) << j.dump(2) << '\n';
  if (report.diverged) {
    err << "training diverged: " << report.divergence << '\n';
    return kExitDiverged;
  }
  if (!a.out.empty()) save_checkpoint(*model, a.out);
  return kExitOk;
}

struct EvalArgs {
  std::string model, data, predictions, data_scheme = "BIO";
  std::size_t token_column = 0, label_column = 1;
  std::size_t head = 0;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const TaggerModel model = load_checkpoint(a.model);
  if (a.head >= model.num_heads()) throw Error("model has no head " + std::to_string(a.head));
  const auto& spec = model.head(a.head).spec;
  auto raw = read_conll(std::filesystem::path(a.data), a.token_column, a.label_column);
  const TagScheme source = parse_tag_scheme(a.data_scheme);
  Vocabulary words = model.word_vocab();
  std::vector<Sentence> sentences;
  for (auto& s : raw) {
    if (source != TagScheme::NONE || spec.scheme != TagScheme::NONE) {
      s.labels = convert_scheme(s.labels, source, spec.scheme);
    }
    sentences.push_back(encode_sentence(s, words, model.char_vocab(), spec.task, &spec.labels));
  }
  const Evaluation ev = evaluate(model, sentences, a.head);
  json j{{"task", spec.task},
         {"scheme", to_string(spec.scheme)},
         {"sentences", ev.sentences},
         {"score", ev.score},
         {"accuracy", ev.accuracy},
         {"repaired_tags", ev.repaired_tags},
         {"sentences_repaired", ev.sentences_repaired}};
  if (spec.scheme != TagScheme::NONE) {
    j["precision"] = ev.prf.precision;
    j["recall"] = ev.prf.recall;
    j["f1"] = ev.prf.f1;
  }
  out << j.dump(2) << '\n';
  if (!a.predictions.empty()) {
    std::vector<RawSentence> pred;
    for (std::size_t i = 0; i < raw.size(); ++i) pred.push_back({raw[i].tokens, ev.predictions[i]});
    auto f = open_out(a.predictions);
    write_conll(f, pred);
  }
  return kExitOk;
}

struct SweepArgs {
  std::string space, vary, out;
  std::vector<std::string> tasks;
  std::size_t n = 0;
  std::size_t jobs = default_jobs();
  std::optional<std::uint64_t> seed;
};

int cmd_sweep(const SweepArgs& a, std::ostream& out, std::ostream& err) {
  SweepOptions o;
  o.space = a.space.empty() ? HyperparameterSpace::full() : HyperparameterSpace::load(a.space);
  o.vary = a.vary;
  o.groups = a.n;
  for (const auto& list : a.tasks) {
    std::stringstream ss(list);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!item.empty()) o.tasks.push_back(parse_task_source(item));
    }
  }
  o.jobs = a.jobs;
  o.out = a.out;
  o.base_seed = a.seed.value_or(o.space.base.seed);
  o.log = [&err](const std::string& msg) { err << msg << '\n'; };
  const auto s = run_sweep(o);
  out << json{{"groups_run", s.groups_run}, {"groups_skipped", s.groups_skipped}, {"runs", s.runs},
              {"diverged", s.diverged}}
             .dump()
      << '\n';
  return kExitOk;
}

struct CompareArgs {
  std::string results, vary, out, stats, violin;
};

int cmd_compare(const CompareArgs& a, std::ostream& out, std::ostream& err) {
  const auto records = read_results(a.results);
  const auto tables = compare_all(records);
  if (tables.empty()) throw Error(a.results + ": no complete groups to compare");
  for (const auto& t : tables) {
    for (const auto& w : t.warnings) err << "warning: " << w << '\n';
  }
  if (!a.vary.empty()) out << "varied knob: " << a.vary << "\n\n";
  print_comparison(out, tables);
  if (!a.out.empty()) {
    auto f = open_out(a.out);
    write_comparison_csv(f, tables);
  }
  if (!a.stats.empty()) {
    auto f = open_out(a.stats);
    write_comparison_stats(f, tables);
  }
  if (!a.violin.empty()) {
    auto f = open_out(a.violin);
    write_violin_csv(f, records);
  }
  return kExitOk;
}

struct UnitsArgs {
  std::string results, out;
  std::size_t layers = 1;
};

int cmd_analyze_units(const UnitsArgs& a, std::ostream& out) {
  const auto analysis = analyze_units(read_results(a.results), a.layers);
  const auto j = to_json(analysis).dump(2);
  out << j << '\n';
  if (!a.out.empty()) open_out(a.out) << j << '\n';
  return kExitOk;
}

struct ConvertArgs {
  std::string in, out, from = "BIO", to = "IOBES", repair;
  std::size_t token_column = 0, label_column = 1;
};

int cmd_convert(const ConvertArgs& a, std::ostream& err) {
  auto sentences = read_conll(std::filesystem::path(a.in), a.token_column, a.label_column);
  const TagScheme from = parse_tag_scheme(a.from), to = parse_tag_scheme(a.to);
  std::size_t repaired = 0;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    auto& s = sentences[i];
    if (!a.repair.empty()) {
      auto r = repair_invalid(s.labels, from, parse_repair_strategy(a.repair));
      repaired += r.repairs;
      s.labels = std::move(r.tags);
    }
    try {
      s.labels = convert_scheme(s.labels, from, to);
    } catch (const Error& e) {
      throw Error(a.in + ": sentence " + std::to_string(i + 1) + ": " + e.what());
    }
  }
  auto f = open_out(a.out);
  write_conll(f, sentences);
  if (repaired) err << "repaired " << repaired << " tags\n";
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"BiLSTM sequence tagger and hyperparameter study tool", "seqtag"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train a model and print its report as JSON");
  t->add_option("--config", train.config, "Network config JSON")->required();
  t->add_option("--data", train.data, "Directory with train.txt, dev.txt, test.txt")->required();
  t->add_option("--embeddings", train.embeddings, "Pre-trained embeddings (text, optionally .gz)");
  t->add_option("--out", train.out, "Checkpoint path");
  t->add_option("--report", train.report, "Also write the JSON report here");
  t->add_option("--data-scheme", train.data_scheme, "Scheme of the label column (BIO, IOB, IOBES, NONE)");
  t->add_option("--token-column", train.token_column, "0-based token column");
  t->add_option("--label-column", train.label_column, "0-based label column");
  t->add_option("--seed", train.seed, "Override the config seed");
  t->add_option("--aux-data", train.aux_data, "Auxiliary task directory (multi-task training)");
  t->add_option("--aux-scheme", train.aux_scheme, "Scheme of the auxiliary label column");
  t->add_option("--supervision", train.supervision, "same_level or different_level");

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint on a column file");
  e->add_option("--model", eval.model, "Checkpoint path")->required();
  e->add_option("--data", eval.data, "Column file")->required();
  e->add_option("--data-scheme", eval.data_scheme, "Scheme of the label column");
  e->add_option("--token-column", eval.token_column, "0-based token column");
  e->add_option("--label-column", eval.label_column, "0-based label column");
  e->add_option("--head", eval.head, "Output head index");
  e->add_option("--predictions", eval.predictions, "Write predicted tags here");

  SweepArgs sweep;
  auto* s = app.add_subcommand("sweep", "Run paired randomized configurations");
  s->add_option("--space", sweep.space, "Space JSON (default: full space)");
  s->add_option("--vary", sweep.vary, "Knob to compare")->required();
  s->add_option("--n", sweep.n, "Number of paired groups")->required();
  s->add_option("--tasks", sweep.tasks, "Task directories, comma separated, optional :SCHEME suffix")->required();
  s->add_option("--jobs", sweep.jobs, "Concurrent runs (default: SEQTAG_THREADS or 1)");
  s->add_option("--out", sweep.out, "Results CSV (appended, resumable)")->required();
  s->add_option("--seed", sweep.seed, "Base seed (default: base config seed)");

  CompareArgs cmp;
  auto* c = app.add_subcommand("compare", "Comparison table from a results CSV");
  c->add_option("--results", cmp.results, "Results CSV")->required();
  c->add_option("--vary", cmp.vary, "Name of the varied knob (for the heading)");
  c->add_option("--out", cmp.out, "Comparison CSV in table layout");
  c->add_option("--stats", cmp.stats, "Per-option statistics CSV");
  c->add_option("--violin", cmp.violin, "Raw scores per option CSV");

  UnitsArgs units;
  auto* u = app.add_subcommand("analyze-units", "Quadratic fit of score over recurrent units");
  u->add_option("--results", units.results, "Results CSV")->required();
  u->add_option("--layers", units.layers, "Use runs with this many BiLSTM layers")->required();
  u->add_option("--out", units.out, "Also write the JSON here");

  ConvertArgs conv;
  auto* v = app.add_subcommand("convert", "Convert the tag scheme of a column file");
  v->add_option("--in", conv.in, "Input column file")->required();
  v->add_option("--out", conv.out, "Output file")->required();
  v->add_option("--from", conv.from, "Input scheme");
  v->add_option("--to", conv.to, "Output scheme");
  v->add_option("--token-column", conv.token_column, "0-based token column");
  v->add_option("--label-column", conv.label_column, "0-based label column");
  v->add_option("--repair", conv.repair, "Repair invalid input tags first (to_outside or to_begin)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex, out, err);
    return code == 0 ? kExitOk : kExitError;
  }

  try {
    if (t->parsed()) return cmd_train(train, out, err);
    if (e->parsed()) return cmd_eval(eval, out);
    if (s->parsed()) return cmd_sweep(sweep, out, err);
    if (c->parsed()) return cmd_compare(cmp, out, err);
    if (u->parsed()) return cmd_analyze_units(units, out);
    if (v->parsed()) return cmd_convert(conv, err);
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitError;
  }
  return kExitError;
}

}  // namespace seqtag
