// tgeat: corpus synthesis, contamination, training, evaluation and reporting.

#include "tgeat/pipeline.hpp"

#include <CLI11.hpp>

#include <iomanip>
#include <iostream>

namespace {

using namespace tgeat;

struct Args {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  bool force = false;
  bool verify = false;
  bool resume = false;
  bool no_wav = false;
  bool all_layers = false;
  bool quiet = false;
  std::vector<std::string> models;
  std::string provider;
  std::string envtext_out;
};

ExperimentConfig load(const Args& a) {
  ExperimentConfig c = load_experiment_config(a.config, a.seed);
  if (!a.out.empty()) c.output_dir = std::filesystem::absolute(a.out);
  return c;
}

CommandOptions options(const Args& a) {
  CommandOptions o;
  o.force = a.force;
  o.resume = a.resume;
  o.write_wavs = !a.no_wav;
  o.all_layers = a.all_layers;
  o.jobs = a.jobs;
  o.models = a.models;
  o.log = a.quiet ? nullptr : &std::cerr;
  return o;
}

int envtext_dump(const Args& a) {
  const ExperimentConfig c = load(a);
  const SynthCorpus corpus = load_experiment_corpus(c);
  const auto provider = make_provider(c.find_provider(a.provider), corpus);
  const auto e = export_embeddings_2d(*provider, corpus.catalog);
  if (!a.envtext_out.empty()) {
    const std::filesystem::path base = a.envtext_out;
    write_embeddings_csv(base.string() + ".csv", e);
    write_embeddings_jsonl(base.string() + ".jsonl", e);
  }
  std::cout << "environment,group,x,y\n" << std::setprecision(6);
  for (std::size_t i = 0; i < e.environments.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    std::cout << e.environments[i] << ',' << to_string(corpus.catalog.group(e.environments[i])) << ','
              << e.coords(r, 0) << ',' << e.coords(r, 1) << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Text-guided environment-aware training for speech emotion recognition"};
  app.require_subcommand(1);
  Args a;

  auto common = [&a](CLI::App* sub) {
    sub->add_option("-c,--config", a.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("-o,--out", a.out, "Output directory (overrides the config)");
    sub->add_option("--seed", a.seed, "Override the experiment seed");
    sub->add_flag("-q,--quiet", a.quiet, "Suppress progress messages");
  };
  auto selection = [&a](CLI::App* sub) { sub->add_option("-m,--model", a.models, "Restrict to these model ids"); };

  auto* synth = app.add_subcommand("synth", "Synthesize the speech and noise corpus");
  common(synth);
  synth->add_flag("--force", a.force, "Replace an existing corpus");

  auto* mix = app.add_subcommand("mix", "Build the replicated noisy evaluation sets");
  common(mix);
  mix->add_option("-j,--jobs", a.jobs, "Worker threads")->check(CLI::PositiveNumber);
  mix->add_flag("--verify", a.verify, "Recompute achieved SNRs of existing sets and report the max deviation");
  mix->add_flag("--no-wav", a.no_wav, "Write spec files only");

  auto* train = app.add_subcommand("train", "Run the training stages");
  common(train);
  selection(train);
  train->add_flag("--resume", a.resume, "Skip models whose checkpoint matches the config");

  auto* eval = app.add_subcommand("eval", "Evaluate checkpoints on the evaluation sets");
  common(eval);
  selection(eval);
  eval->add_option("-j,--jobs", a.jobs, "Worker threads")->check(CLI::PositiveNumber);

  auto* analyze = app.add_subcommand("analyze", "Embedding differences and text-embedding export");
  common(analyze);
  selection(analyze);
  analyze->add_flag("--all-layers", a.all_layers, "Also report every intermediate transformer layer");

  auto* report = app.add_subcommand("report", "Render the comparison table");
  common(report);
  selection(report);

  auto* envtext = app.add_subcommand("envtext", "Inspect environment text embeddings");
  envtext->require_subcommand(1);
  auto* dump = envtext->add_subcommand("dump", "Print 2D coordinates of every environment embedding");
  common(dump);
  dump->add_option("-p,--provider", a.provider, "Provider name from the config")->required();
  dump->add_option("--save", a.envtext_out, "Also write <prefix>.csv and <prefix>.jsonl");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : exit_code_for(ErrorKind::config);
  }

  try {
    if (*synth) {
      cmd_synth(load(a), options(a));
    } else if (*mix) {
      const ExperimentConfig c = load(a);
      if (a.verify) {
        const MixVerification v = verify_mix(c, options(a));
        std::cout << "verified " << v.samples << " mixtures, max |achieved - target| = " << std::scientific
                  << std::setprecision(3) << v.max_deviation_db << " dB\n";
        return v.max_deviation_db <= 0.01 ? 0 : exit_code_for(ErrorKind::numeric);
      }
      cmd_mix(c, options(a));
    } else if (*train) {
      cmd_train(load(a), options(a));
    } else if (*eval) {
      cmd_eval(load(a), options(a));
    } else if (*analyze) {
      cmd_analyze(load(a), options(a));
    } else if (*report) {
      CommandOptions o = options(a);
      o.log = nullptr;
      std::cout << cmd_report(load(a), o);
    } else if (*envtext) {
      return envtext_dump(a);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(ErrorKind::io);
  }
  return 0;
}
