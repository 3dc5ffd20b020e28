// Writes a synthetic task directory (train.txt, dev.txt, test.txt).
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "seqtag/synthetic.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Generate a synthetic tagging corpus", "seqtag-synth"};
  std::string kind = "segment", out;
  std::size_t sentences = 200;
  std::uint64_t seed = 1;
  app.add_option("--kind", kind, "segment (BIO mentions) or surface (one fixed tag per word)")
      ->check(CLI::IsMember({"segment", "surface"}));
  app.add_option("--sentences", sentences, "Sentences (segment: total, surface: training)");
  app.add_option("--seed", seed, "Generator seed");
  app.add_option("--out", out, "Output directory")->required();
  CLI11_PARSE(app, argc, argv);

  const auto splits = kind == "segment" ? seqtag::segment_corpus(sentences, seed)
                                        : seqtag::surface_function_corpus(sentences, seed);
  std::filesystem::create_directories(out);
  const std::pair<const char*, const std::vector<seqtag::RawSentence>*> files[] = {
      {"train.txt", &splits.train}, {"dev.txt", &splits.dev}, {"test.txt", &splits.test}};
  for (const auto& [name, data] : files) {
    std::ofstream f(std::filesystem::path(out) / name);
    if (!f) {
      std::cerr << "cannot write " << out << '/' << name << '\n';
      return 1;
    }
    seqtag::write_conll(f, *data);
  }
  return 0;
}
