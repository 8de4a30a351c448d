// Writes the bundled 300-d word-vector table used by the "table" provider.

#include "tgeat/envtext.hpp"
#include "tgeat/error.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"Generate the word-vector fixture table"};
  std::string out = "data/word_vectors_300d.jsonl";
  int dim = 300;
  std::uint64_t seed = 300;
  app.add_option("-o,--out", out, "Output JSONL path");
  app.add_option("--dim", dim, "Vector dimension");
  app.add_option("--seed", seed, "Generator seed");
  CLI11_PARSE(app, argc, argv);
  try {
    const auto table = tgeat::make_word_vector_fixture(tgeat::default_catalog(), dim, seed);
    tgeat::write_embedding_table(out, table);
    std::cout << "wrote " << table.vectors.size() << " vectors of dim " << table.dim << " to " << out << '\n';
  } catch (const tgeat::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return tgeat::exit_code_for(e.kind());
  }
  return 0;
}
