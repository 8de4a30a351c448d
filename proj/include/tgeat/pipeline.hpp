#pragma once

// Experiment configuration and the commands behind the `tgeat` tool.

#include "tgeat/checkpoint.hpp"
#include "tgeat/eval.hpp"
#include "tgeat/training.hpp"

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace tgeat {

inline constexpr std::string_view kCodeVersion = "tgeat 0.1.0";
inline constexpr const char* kOutputRootEnv = "TGEAT_OUTPUT_ROOT";

struct ProviderSpec {
  std::string name;
  // semantic | semantic_ungrouped | audio | onehot | table | precomputed
  std::string kind = "semantic";
  int dim = 300;
  std::uint64_t seed = 0;
  std::filesystem::path path;  // table / precomputed
};

struct ModelSpec {
  std::string id;
  StageConfig stage;
  std::string provider;  // tgeat only
};

struct EvalConfig {
  std::uint64_t seed = 0;
  std::vector<double> snrs_db{kEvalSnrsDb.begin(), kEvalSnrsDb.end()};
  int replications = kEvalReplications;
  // test = unseen environments; adapt = the seen-environment protocol.
  NoiseSplit noise = NoiseSplit::test;
};

struct AnalysisConfig {
  std::uint64_t seed = 0;
  double snr_db = -5.0;
};

struct ExperimentConfig {
  std::filesystem::path output_dir;
  std::uint64_t seed = 1;
  SynthConfig synth;
  nn::ModelConfig model;
  std::vector<ProviderSpec> providers;
  std::vector<ModelSpec> models;  // the clean_finetune model comes first
  EvalConfig eval;
  AnalysisConfig analysis;

  void validate() const;
  const ModelSpec& clean_model() const;
  const ModelSpec& find_model(const std::string& id) const;
  const ProviderSpec& find_provider(const std::string& name) const;
};

// Seeds left out of the JSON are derived from the experiment seed. Relative
// paths resolve against `base_dir`; a relative output_dir resolves against
// the output root ($TGEAT_OUTPUT_ROOT, else the working directory).
ExperimentConfig experiment_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir,
                                             std::optional<std::uint64_t> seed_override = std::nullopt);
ExperimentConfig load_experiment_config(const std::filesystem::path& path,
                                        std::optional<std::uint64_t> seed_override = std::nullopt);
// Fully resolved form (every seed explicit); the basis of config hashes.
nlohmann::json to_json(const ExperimentConfig& config);
std::string config_hash(const ExperimentConfig& config);

std::filesystem::path default_output_root();

// Output layout under ExperimentConfig::output_dir.
struct Layout {
  std::filesystem::path root;

  std::filesystem::path corpus() const { return root / "corpus"; }
  std::filesystem::path evalsets() const { return root / "evalsets"; }
  std::filesystem::path mixed() const { return root / "mixed"; }
  std::filesystem::path model_dir(const std::string& id) const { return root / "models" / id; }
  std::filesystem::path checkpoint(const std::string& id) const { return model_dir(id) / "checkpoint.bin"; }
  std::filesystem::path train_log(const std::string& id) const { return model_dir(id) / "train_log.json"; }
  std::filesystem::path eval_report(const std::string& id) const { return root / "eval" / (id + ".json"); }
  std::filesystem::path analysis() const { return root / "analysis"; }
  std::filesystem::path report() const { return root / "report"; }
};

std::unique_ptr<EncoderProvider> make_provider(const ProviderSpec& spec, const SynthCorpus& corpus);

struct CommandOptions {
  bool force = false;
  bool resume = false;
  bool write_wavs = true;
  bool all_layers = false;  // analyze: every transformer layer, not just first/last
  int jobs = 1;
  std::vector<std::string> models;  // empty = all
  std::ostream* log = nullptr;
};

// Writes <dir>/run.json: command, config hash, seed, code version.
void write_run_metadata(const std::filesystem::path& dir, const std::string& command, const ExperimentConfig& config,
                        const nlohmann::json& extra = nlohmann::json::object());

void cmd_synth(const ExperimentConfig& config, const CommandOptions& options);

struct MixVerification {
  std::size_t samples = 0;
  double max_deviation_db = 0.0;
};

void cmd_mix(const ExperimentConfig& config, const CommandOptions& options);
MixVerification verify_mix(const ExperimentConfig& config, const CommandOptions& options);

void cmd_train(const ExperimentConfig& config, const CommandOptions& options);
void cmd_eval(const ExperimentConfig& config, const CommandOptions& options);
void cmd_analyze(const ExperimentConfig& config, const CommandOptions& options);
// Renders the comparison table, writes report/table.{txt,csv} and returns the text.
std::string cmd_report(const ExperimentConfig& config, const CommandOptions& options);

// Loaders for upstream artifacts; missing artifacts raise dependency errors.
SynthCorpus load_experiment_corpus(const ExperimentConfig& config);
std::vector<EvalSetSpec> load_eval_sets(const ExperimentConfig& config);

}  // namespace tgeat
