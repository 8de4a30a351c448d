#include "helpers.hpp"

#include "tgeat/pipeline.hpp"

#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

using namespace tgeat;
using testing::error_kind;
using json = nlohmann::json;

namespace {

json smoke_json() {
  std::ifstream in(TGEAT_CONFIG_DIR "/smoke.json");
  return json::parse(in);
}

ExperimentConfig smoke_config(const std::filesystem::path& out, json j = smoke_json()) {
  j["output_dir"] = out.string();
  return experiment_config_from_json(j, TGEAT_CONFIG_DIR);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(TGEAT_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("config parsing and validation") {
  testing::TempDir dir("cfg");
  const auto c = smoke_config(dir / "run");
  CHECK(c.models.size() == 4);
  CHECK(c.clean_model().id == "Original");
  CHECK(c.find_provider("glove").path.is_absolute());
  // Omitted seeds derive from the experiment seed.
  CHECK(c.eval.seed == tagged_seed(7, "eval"));
  CHECK(c.find_model("RT").stage.seed == tagged_seed(7, "stage:RT"));
  CHECK(experiment_config_from_json(smoke_json(), TGEAT_CONFIG_DIR, 99).seed == 99);

  // The resolved form parses back to the same config.
  const auto again = experiment_config_from_json(to_json(c), TGEAT_CONFIG_DIR);
  CHECK(to_json(again) == to_json(c));
  CHECK(config_hash(again) == config_hash(c));

  auto broken = [&](auto edit) {
    json j = smoke_json();
    j["output_dir"] = (dir / "run").string();
    edit(j);
    return error_kind([&] { experiment_config_from_json(j, TGEAT_CONFIG_DIR); });
  };
  CHECK(broken([](json& j) { j["models"][0]["stage"] = "rt"; }) == ErrorKind::config);
  CHECK(broken([](json& j) { j["models"][3].erase("provider"); }) == ErrorKind::config);
  CHECK(broken([](json& j) { j["models"][3]["provider"] = "nope"; }) == ErrorKind::config);
  CHECK(broken([](json& j) { j["models"][1]["id"] = "Original"; }) == ErrorKind::config);
  CHECK(broken([](json& j) { j["models"][1]["batch_size"] = 1; }) == ErrorKind::config);
  CHECK(broken([](json& j) { j["models"][1]["epochs"] = "many"; }) == ErrorKind::config);
  CHECK(broken([](json& j) { j["model"]["n_heads"] = 3; }) == ErrorKind::config);
  CHECK(broken([](json& j) { j["providers"][0]["kind"] = "bert"; }) == ErrorKind::config);
  CHECK(broken([](json& j) { j.erase("models"); }) == ErrorKind::config);

  CHECK(error_kind([&] { load_experiment_config(dir / "absent.json"); }) == ErrorKind::config);
}

TEST_CASE("commands report missing upstream artifacts") {
  testing::TempDir dir("deps");
  const auto c = smoke_config(dir / "run");
  CommandOptions o;
  CHECK(error_kind([&] { cmd_mix(c, o); }) == ErrorKind::dependency);
  cmd_synth(c, o);
  CHECK(error_kind([&] { cmd_synth(c, o); }) == ErrorKind::config);
  o.force = true;
  CHECK_NOTHROW(cmd_synth(c, o));
  o.force = false;
  CHECK(error_kind([&] { cmd_eval(c, o); }) == ErrorKind::dependency);
  o.write_wavs = false;
  cmd_mix(c, o);
  try {
    cmd_eval(c, o);
    FAIL("expected a dependency error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::dependency);
    CHECK(std::string(e.what()).find("no trained checkpoint for stage 'clean_finetune'") != std::string::npos);
  }
  o.models = {"RT"};
  CHECK(error_kind([&] { cmd_train(c, o); }) == ErrorKind::dependency);
  CHECK(error_kind([&] { cmd_report(c, o); }) == ErrorKind::dependency);

  const auto orphan = smoke_config(dir / "missing" / "run");
  CHECK(error_kind([&] { cmd_synth(orphan, {}); }) == ErrorKind::io);
}

TEST_CASE("smoke pipeline") {
  testing::TempDir dir("smoke");
  const auto c = smoke_config(dir / "run");
  const Layout layout{c.output_dir};
  CommandOptions o;
  o.write_wavs = false;
  cmd_synth(c, o);
  cmd_mix(c, o);
  CHECK(verify_mix(c, o).max_deviation_db < 0.01);
  cmd_train(c, o);
  for (const auto& m : c.models) {
    CHECK(std::filesystem::exists(layout.checkpoint(m.id)));
    CHECK(std::filesystem::exists(layout.train_log(m.id)));
    const json run = json::parse(slurp(layout.model_dir(m.id) / "run.json"));
    CHECK(run.at("command") == "train");
    CHECK(run.at("config_hash") == config_hash(c));
    CHECK(run.at("code_version") == std::string(kCodeVersion));
  }
  const Checkpoint tg = load_checkpoint(layout.checkpoint("TG-EAT"));
  CHECK(tg.stage == "tgeat");
  CHECK(tg.model.config().fusion == nn::Fusion::text);

  cmd_eval(c, o);
  for (const auto& m : c.models) {
    const EvalReport r = eval_report_from_json(json::parse(slurp(layout.eval_report(m.id))));
    CHECK_NOTHROW(r.validate(10));
    CHECK(r.snrs() == std::vector<double>{5.0, 0.0, -5.0});
  }

  cmd_analyze(c, o);
  const json diffs = json::parse(slurp(layout.analysis() / "embedding_differences.json"));
  CHECK(diffs.at("models").size() == 4);
  CHECK(std::filesystem::exists(layout.analysis() / "embeddings_semantic.csv"));

  const std::string table = cmd_report(c, o);
  CHECK(table.find("TG-EAT") != std::string::npos);
  CHECK(table.find("-5.0") != std::string::npos);
  CHECK(std::filesystem::exists(layout.report() / "table.csv"));

  SUBCASE("resume skips matching checkpoints and rejects changed ones") {
    const auto before = slurp(layout.checkpoint("RT"));
    o.resume = true;
    cmd_train(c, o);
    CHECK(slurp(layout.checkpoint("RT")) == before);

    json j = smoke_json();
    j["models"][1]["lr_peak"] = 5e-4;
    const auto changed = smoke_config(dir / "run", j);
    try {
      cmd_train(changed, o);
      FAIL("expected a mismatch");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("checksum mismatch on resume") != std::string::npos);
    }
  }
}

TEST_CASE("command-line exit codes") {
  testing::TempDir dir("cli");
  json j = smoke_json();
  j["output_dir"] = (dir / "run").string();
  j["providers"][2]["path"] = std::string(TGEAT_CONFIG_DIR) + "/../data/word_vectors_300d.jsonl";
  {
    std::ofstream(dir / "ok.json") << j.dump();
    json bad = j;
    bad["models"][0]["stage"] = "dat";
    std::ofstream(dir / "bad.json") << bad.dump();
  }
  const std::string ok = "-c " + (dir / "ok.json").string();
  CHECK(run_cli("--help") == 0);
  CHECK(run_cli("") == 2);
  CHECK(run_cli("train -c " + (dir / "bad.json").string()) == 2);
  CHECK(run_cli("train -c " + (dir / "absent.json").string()) == 2);
  CHECK(run_cli("mix " + ok) == 3);
  CHECK(run_cli("synth -q " + ok) == 0);
  CHECK(run_cli("synth -q " + ok) == 2);
  CHECK(run_cli("eval -q " + ok) == 3);
  CHECK(run_cli("envtext dump -p semantic " + ok) == 0);
  CHECK(run_cli("envtext dump -p nope " + ok) == 2);
}
